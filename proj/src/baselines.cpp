#include "noisycrowd/baselines.hpp"

#include <cmath>
#include <limits>

namespace noisycrowd {
namespace {

void check_shapes(std::span<const NoisyLabel> row, std::size_t workers, std::size_t classes,
                  std::size_t prior_size) {
  if (row.size() != workers) throw InvalidArgument("row length does not match worker count");
  if (prior_size != classes) throw InvalidArgument("prior length does not match class count");
}

Eigen::VectorXd log_joint(std::span<const NoisyLabel> row, std::span<const Eigen::MatrixXd> log_matrices,
                          const Eigen::VectorXd& log_prior) {
  Eigen::VectorXd a = log_prior;
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (!row[k]) continue;
    a += log_matrices[k].col(*row[k]);
  }
  return a;
}

std::vector<Eigen::MatrixXd> to_log(std::span<const ConfusionMatrix> matrices) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(matrices.size());
  for (const auto& m : matrices) out.push_back(m.matrix().array().log().matrix());
  return out;
}

Eigen::VectorXd to_log(std::span<const double> prior) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(prior.size()));
  for (std::size_t t = 0; t < prior.size(); ++t) out(static_cast<Eigen::Index>(t)) = std::log(prior[t]);
  return out;
}

}  // namespace

int majority_vote(std::span<const NoisyLabel> row, int num_classes) {
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  bool any = false;
  for (const auto& y : row) {
    if (!y) continue;
    if (*y < 0 || *y >= num_classes) throw RangeError("label outside [0, C)");
    ++counts[static_cast<std::size_t>(*y)];
    any = true;
  }
  if (!any) throw InvalidArgument("majority vote over a row with no observed labels");
  int best = 0;
  for (int c = 1; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

Posterior exact_posterior_log(std::span<const NoisyLabel> row,
                              std::span<const Eigen::MatrixXd> log_matrices,
                              const Eigen::VectorXd& log_prior) {
  check_shapes(row, log_matrices.size(), static_cast<std::size_t>(log_prior.size()),
               static_cast<std::size_t>(log_prior.size()));
  const Eigen::VectorXd a = log_joint(row, log_matrices, log_prior);
  const double top = a.maxCoeff();
  if (!std::isfinite(top)) {
    throw DegenerateLikelihood("every true class has zero likelihood for this row");
  }
  std::vector<double> w(static_cast<std::size_t>(a.size()));
  for (Eigen::Index t = 0; t < a.size(); ++t) w[static_cast<std::size_t>(t)] = std::exp(a(t) - top);
  return Posterior::normalized(std::move(w));
}

Posterior exact_posterior(std::span<const NoisyLabel> row, std::span<const ConfusionMatrix> matrices,
                          std::span<const double> prior) {
  if (matrices.empty()) throw InvalidArgument("need at least one confusion matrix");
  check_shapes(row, matrices.size(), static_cast<std::size_t>(matrices.front().num_classes()),
               prior.size());
  const auto logs = to_log(matrices);
  return exact_posterior_log(row, logs, to_log(prior));
}

double log_marginal_likelihood(std::span<const NoisyLabel> row,
                               std::span<const ConfusionMatrix> matrices,
                               std::span<const double> prior) {
  if (matrices.empty()) throw InvalidArgument("need at least one confusion matrix");
  check_shapes(row, matrices.size(), static_cast<std::size_t>(matrices.front().num_classes()),
               prior.size());
  const auto logs = to_log(matrices);
  const Eigen::VectorXd a = log_joint(row, logs, to_log(prior));
  const double top = a.maxCoeff();
  if (!std::isfinite(top)) return -std::numeric_limits<double>::infinity();
  return top + std::log((a.array() - top).exp().sum());
}

int aggregate_map(std::span<const NoisyLabel> row, std::span<const ConfusionMatrix> matrices,
                  std::span<const double> prior) {
  return exact_posterior(row, matrices, prior).argmax();
}

std::vector<int> majority_vote_all(const LabelMatrix& labels) {
  std::vector<int> out(labels.rows());
  for (std::size_t i = 0; i < labels.rows(); ++i) out[i] = majority_vote(labels.row(i), labels.num_classes());
  return out;
}

std::vector<Posterior> exact_posteriors(const LabelMatrix& labels,
                                       std::span<const ConfusionMatrix> matrices,
                                       std::span<const double> prior) {
  if (matrices.size() != static_cast<std::size_t>(labels.num_workers())) {
    throw InvalidArgument("one confusion matrix per worker required");
  }
  const auto logs = to_log(matrices);
  const Eigen::VectorXd log_prior = to_log(prior);
  std::vector<Posterior> out;
  out.reserve(labels.rows());
  for (std::size_t i = 0; i < labels.rows(); ++i) {
    out.push_back(exact_posterior_log(labels.row(i), logs, log_prior));
  }
  return out;
}

std::vector<int> aggregate_map_all(const LabelMatrix& labels, std::span<const ConfusionMatrix> matrices,
                                   std::span<const double> prior) {
  std::vector<int> out;
  out.reserve(labels.rows());
  for (const auto& p : exact_posteriors(labels, matrices, prior)) out.push_back(p.argmax());
  return out;
}

double label_error_rate(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw InvalidArgument("label vectors differ in length");
  if (truth.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) wrong += predicted[i] != truth[i] ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

}  // namespace noisycrowd
