#pragma once

// Active label cleansing of aggregated labels: keep samples on which the
// classifier agrees with the aggregated label, send the most uncertain of
// the rest to an expert oracle, drop the remainder and retrain.

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "noisycrowd/classifier.hpp"
#include "noisycrowd/core.hpp"

namespace noisycrowd {

// Simulated expert that knows the true label of every stream instance.
class Oracle {
 public:
  explicit Oracle(std::vector<int> truth) : truth_(std::move(truth)) {}

  int query(std::size_t instance);
  [[nodiscard]] std::size_t queries() const { return queries_; }

 private:
  std::vector<int> truth_;
  std::size_t queries_ = 0;
};

enum class Informativeness { kLc, kBvsb };

std::string_view to_string(Informativeness method);
// Accepts "lc" and "bvsb"; "none" yields nullopt (no cleansing).
std::optional<Informativeness> parse_active_method(std::string_view name);

// lc: p_best. bvsb: p_best - p_second. Lower means more informative.
double informativeness(const Posterior& p, Informativeness method);
double informativeness(const ProbClassifier& clf, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                       Informativeness method);

struct FilterResult {
  std::vector<std::size_t> clean;       // batch positions
  std::vector<std::size_t> suspicious;  // batch positions
};

FilterResult filter_batch(const FeatureMatrix& features, std::span<const int> aggregated,
                          const ProbClassifier& clf);

// Positions into `scores` ordered by ascending score; ties keep input order.
std::vector<std::size_t> rank_by_informativeness(std::span<const double> scores);

struct Relabel {
  std::size_t position;  // batch position
  int label;             // oracle answer
};

struct CleanseOutcome {
  std::vector<std::size_t> clean;
  std::vector<Relabel> relabeled;
  std::vector<std::size_t> discarded;
  std::vector<double> scores;  // parallel to the suspicious set, in filter order
};

// Scores the suspicious samples, queries the oracle for the min(r, |U|) most
// informative and discards the rest. `instance_ids` maps batch positions to
// oracle instance ids.
CleanseOutcome select_and_relabel(const FeatureMatrix& features, std::span<const std::size_t> suspicious,
                                  std::span<const std::size_t> instance_ids, const ProbClassifier& clf,
                                  Informativeness method, std::size_t budget, Oracle& oracle);

struct CleanseOptions {
  Informativeness method = Informativeness::kBvsb;
  std::size_t budget = 5;
  // Ablation: train on suspicious-but-unqueried samples with their aggregated labels.
  bool keep_unrelabeled = false;
  int epochs = 100;
};

// filter -> select_and_relabel -> fit_batch on clean + relabeled samples.
// The classifier used for filtering is the one passed in (trained through the
// previous batch); it is retrained in place.
CleanseOutcome cleanse_batch(const FeatureMatrix& features, std::span<const int> aggregated,
                             std::span<const std::size_t> instance_ids, ProbClassifier& clf,
                             const CleanseOptions& options, Oracle& oracle, RngStream& rng);

}  // namespace noisycrowd
