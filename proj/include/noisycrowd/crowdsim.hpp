#pragma once

// Synthetic annotator noise: confusion matrices for the four noise patterns,
// per-worker noise rates around a crowd mean, and noisy label synthesis with
// missing entries.

#include <Eigen/Dense>
#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noisycrowd/core.hpp"

namespace noisycrowd {

// Row-stochastic C x C matrix; entry (i, j) is the probability of answering j
// when the truth is i.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(Eigen::MatrixXd rows);
  static ConfusionMatrix identity(int num_classes);

  [[nodiscard]] int num_classes() const { return static_cast<int>(rows_.rows()); }
  [[nodiscard]] double operator()(int truth, int answer) const { return rows_(truth, answer); }
  [[nodiscard]] const Eigen::MatrixXd& matrix() const { return rows_; }

 private:
  Eigen::MatrixXd rows_;
};

double max_abs_difference(const ConfusionMatrix& a, const ConfusionMatrix& b);

enum class NoisePattern { kTruncnorm, kBimodal, kFlip, kUniform };

std::string_view to_string(NoisePattern pattern);
NoisePattern parse_noise_pattern(std::string_view name);

struct NoiseSpec {
  NoisePattern pattern = NoisePattern::kUniform;
  double rate = 0.0;
  double mu = 3.0;
  double sigma = 1.0;
  double mu1 = 3.0;
  double sigma1 = 1.0;
  double mu2 = 7.0;
  double sigma2 = 0.5;
  // Empty: {2, 3, 4, 5, 9} restricted to classes below C.
  std::vector<int> flip_set;
  // Empty: class c flips to (c + 1) mod C. Otherwise parallel to flip_set.
  std::vector<int> flip_targets;
};

// Density of N(mu, sigma) truncated to [lo, hi], evaluated at x.
double truncated_normal_pdf(double x, double mu, double sigma, double lo, double hi);

ConfusionMatrix build_confusion(const NoiseSpec& spec, int num_classes);

// K rates in [0.1, 0.9] whose arithmetic mean equals `mean`.
std::vector<double> sample_worker_rates(int num_workers, double mean, RngStream& rng);

// Prefix of the ten-worker mixed pattern sequence.
std::vector<NoisePattern> mixed_pattern_sequence(int num_workers);
std::vector<NoiseSpec> mixed_pattern_specs(int num_workers, double mean_rate);

enum class CrowdPattern { kTruncnorm, kBimodal, kFlip, kUniform, kMixed };

std::string_view to_string(CrowdPattern pattern);
CrowdPattern parse_crowd_pattern(std::string_view name);

struct CrowdSpec {
  int num_workers = 0;
  double mean_rate = 0.0;
  double empty_proportion = 0.0;
  std::vector<NoiseSpec> workers;
};

// Samples per-worker rates around mean_rate and assigns patterns.
CrowdSpec make_crowd(int num_workers, double mean_rate, double empty_proportion,
                     CrowdPattern pattern, RngStream rng);

// Crowd where every worker has exactly `rate` (no rate sampling).
CrowdSpec make_fixed_crowd(int num_workers, double rate, double empty_proportion,
                           NoisePattern pattern);

std::vector<ConfusionMatrix> build_confusions(const CrowdSpec& crowd, int num_classes);

// Each worker independently leaves round(e * N) uniformly chosen instances
// blank and answers the rest by sampling row truth[j] of its matrix. Rows
// left fully blank get one uniformly chosen worker's answer restored.
LabelMatrix annotate(std::span<const int> truth, std::span<const ConfusionMatrix> matrices,
                     double empty_proportion, RngStream rng);
LabelMatrix annotate(const Dataset& ds, const CrowdSpec& crowd, RngStream rng);

nlohmann::json crowd_to_json(const CrowdSpec& crowd);

}  // namespace noisycrowd
