#pragma once

#include <span>
#include <vector>

#include "noisycrowd/core.hpp"
#include "noisycrowd/crowdsim.hpp"

namespace noisycrowd {

// Most frequent observed label; lowest class index on ties.
int majority_vote(std::span<const NoisyLabel> row, int num_classes);

// Posterior over the true label under independent workers with the given
// confusion matrices: prior[t] * prod_k C_k[t, y_k], normalized. Missing
// answers contribute a factor of one. Computed in the log domain.
Posterior exact_posterior(std::span<const NoisyLabel> row, std::span<const ConfusionMatrix> matrices,
                          std::span<const double> prior);

// Same, but with log-probability inputs: log_matrices[k](t, y) and log_prior[t].
// Entries may be -inf.
Posterior exact_posterior_log(std::span<const NoisyLabel> row,
                              std::span<const Eigen::MatrixXd> log_matrices,
                              const Eigen::VectorXd& log_prior);

// log p(row) = log sum_t prior[t] prod_k C_k[t, y_k].
double log_marginal_likelihood(std::span<const NoisyLabel> row,
                               std::span<const ConfusionMatrix> matrices,
                               std::span<const double> prior);

int aggregate_map(std::span<const NoisyLabel> row, std::span<const ConfusionMatrix> matrices,
                  std::span<const double> prior);

std::vector<Posterior> exact_posteriors(const LabelMatrix& labels,
                                       std::span<const ConfusionMatrix> matrices,
                                       std::span<const double> prior);

std::vector<int> majority_vote_all(const LabelMatrix& labels);
std::vector<int> aggregate_map_all(const LabelMatrix& labels, std::span<const ConfusionMatrix> matrices,
                                   std::span<const double> prior);

// Fraction of positions where predicted differs from truth.
double label_error_rate(std::span<const int> predicted, std::span<const int> truth);

}  // namespace noisycrowd
