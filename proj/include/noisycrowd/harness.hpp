#pragma once

// End-to-end streaming experiment: subsample a stream, synthesize crowd
// labels, aggregate batch by batch, optionally cleanse with an oracle, train
// the classifier incrementally and evaluate it on the held-out test split.

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "noisycrowd/active.hpp"
#include "noisycrowd/classifier.hpp"
#include "noisycrowd/core.hpp"
#include "noisycrowd/crowdsim.hpp"
#include "noisycrowd/nnmc.hpp"

namespace noisycrowd {

enum class AggregationMethod { kMajority, kMapTrue, kNnmcOnline, kNnmcOffline };

std::string_view to_string(AggregationMethod method);
AggregationMethod parse_aggregation_method(std::string_view name);

// Labels used to train the classifier on the initial set.
enum class InitLabels { kClean, kNoisyAggregated };

std::string_view to_string(InitLabels labels);
InitLabels parse_init_labels(std::string_view name);

struct ExperimentConfig {
  std::string name;
  std::filesystem::path dataset;
  std::filesystem::path test;
  std::optional<int> classes;
  bool header = false;
  bool normalize = false;

  int workers = 6;
  double empty = 0.1;
  double noise = 0.6;
  CrowdPattern pattern = CrowdPattern::kBimodal;

  std::size_t init_size = 50;
  std::size_t total = 1050;
  std::size_t batch = 50;

  AggregationMethod aggregation = AggregationMethod::kNnmcOnline;
  std::optional<Informativeness> active = Informativeness::kBvsb;
  std::size_t budget = 5;
  bool keep_unrelabeled = false;
  InitLabels init_labels = InitLabels::kClean;

  ClassifierHyper classifier;
  NnmcHyper nnmc;

  int reps = 50;
  std::uint64_t seed = 0;
  // Record per-batch test accuracy (one extra evaluation per batch).
  bool trace_accuracy = false;
  // Include wall-clock seconds in the JSON report (breaks byte-identity).
  bool timing = false;
  // Worker threads for repetitions; 0 = hardware concurrency.
  unsigned threads = 0;

  void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
// Sets one field from its CLI/sweep spelling, e.g. ("workers", "8").
void apply_override(ExperimentConfig& cfg, std::string_view key, std::string_view value);

struct RepetitionResult {
  int rep = 0;
  bool ok = true;
  std::string error;
  std::vector<double> batch_label_error;
  std::vector<double> batch_accuracy;  // filled when trace_accuracy is set
  double label_error = 0.0;            // over all stream batches
  std::optional<double> final_accuracy;
  std::size_t oracle_queries = 0;
  std::size_t oracle_budget_bound = 0;  // sum over batches of min(r, |U|)
};

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for one value
  std::size_t count = 0;
};

Summary summarize(std::span<const double> values);

struct RunReport {
  ExperimentConfig config;
  std::vector<RepetitionResult> reps;
  Summary label_error;
  std::optional<Summary> final_accuracy;
  Summary oracle_queries;
  double wall_clock_seconds = 0.0;

  [[nodiscard]] std::size_t succeeded() const;
};

nlohmann::json report_to_json(const RunReport& report);
void write_report_table(std::ostream& out, std::span<const RunReport> reports);
void write_trace_csv(std::ostream& out, const RunReport& report);

double evaluate(const ProbClassifier& clf, const Dataset& test);

// One repetition on already-loaded data; throws on failure.
RepetitionResult run_repetition(const ExperimentConfig& cfg, const Dataset& train, const Dataset* test, int rep);

// Runs cfg.reps repetitions (in parallel) and aggregates them. A repetition
// that throws is recorded as failed; the run itself throws only if every
// repetition failed.
RunReport run_experiment(const ExperimentConfig& cfg, const Dataset& train, const Dataset* test);
// Loads cfg.dataset (and cfg.test when set) first.
RunReport run_experiment(const ExperimentConfig& cfg);

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

enum class SweepMode { kSingleAxis, kCartesian };

struct SweepPoint {
  std::vector<std::pair<std::string, std::string>> overrides;
  RunReport report;
};

std::vector<SweepPoint> sweep(const ExperimentConfig& base, std::span<const SweepAxis> axes, SweepMode mode,
                              const Dataset& train, const Dataset* test);
std::vector<SweepPoint> sweep(const ExperimentConfig& base, std::span<const SweepAxis> axes, SweepMode mode);

nlohmann::json sweep_to_json(std::span<const SweepPoint> points);

}  // namespace noisycrowd
