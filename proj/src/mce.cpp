#include "noisycrowd/mce.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace noisycrowd {

TrustedSet::TrustedSet(FeatureMatrix features, std::vector<int> labels, int num_classes)
    : features_(std::move(features)), labels_(std::move(labels)), num_classes_(num_classes),
      by_class_(static_cast<std::size_t>(num_classes)) {
  if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
    throw InvalidArgument("trusted features do not match label count");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || labels_[i] >= num_classes_) throw RangeError("trusted label outside [0, C)");
    by_class_[static_cast<std::size_t>(labels_[i])].push_back(i);
  }
}

TrustedSplit draw_trusted_set(const Dataset& ds, std::size_t per_class, RngStream rng) {
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::size_t> taken_per_class(static_cast<std::size_t>(ds.num_classes()), 0);
  std::vector<std::size_t> trusted, remaining;
  for (std::size_t i : order) {
    auto& taken = taken_per_class[static_cast<std::size_t>(ds.labels()[i])];
    if (taken < per_class) {
      trusted.push_back(i);
      ++taken;
    } else {
      remaining.push_back(i);
    }
  }
  std::sort(trusted.begin(), trusted.end());
  std::sort(remaining.begin(), remaining.end());
  const Dataset sub = ds.subset(trusted);
  return TrustedSplit{TrustedSet(sub.features(), std::vector<int>(sub.labels().begin(), sub.labels().end()),
                                 ds.num_classes()),
                      std::move(trusted), std::move(remaining)};
}

ConfusionMatrix estimate_confusion(const ProbClassifier& clf, const TrustedSet& trusted) {
  const int c = trusted.num_classes();
  if (clf.num_classes() != c) throw InvalidArgument("classifier and trusted set disagree on class count");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(c, c);
  for (int i = 0; i < c; ++i) {
    const auto members = trusted.members(i);
    if (members.empty()) {
      throw InvalidArgument("trusted set has no samples of class " + std::to_string(i));
    }
    for (std::size_t idx : members) {
      const auto p = clf.predict_proba(trusted.features().row(static_cast<Eigen::Index>(idx)));
      for (int j = 0; j < c; ++j) m(i, j) += p[static_cast<std::size_t>(j)];
    }
    m.row(i) /= static_cast<double>(members.size());
    // Renormalize away accumulated rounding so the row sums to 1 within 1e-9.
    m.row(i) /= m.row(i).sum();
  }
  return ConfusionMatrix(std::move(m));
}

std::vector<double> trace_set(std::span<const ConfusionMatrix> matrices) {
  std::vector<double> out;
  out.reserve(matrices.size());
  for (const auto& m : matrices) out.push_back(m.matrix().trace() / static_cast<double>(m.num_classes()));
  return out;
}

std::size_t select_annotator(std::span<const double> traces) {
  if (traces.empty()) throw InvalidArgument("no annotators to select from");
  std::size_t best = 0;
  for (std::size_t k = 1; k < traces.size(); ++k) {
    if (traces[k] > traces[best]) best = k;
  }
  return best;
}

MceResult mce_pipeline(const FeatureMatrix& features, const LabelMatrix& labels, const TrustedSet& trusted,
                       const ClassifierHyper& hyper, int epochs, RngStream rng) {
  if (static_cast<std::size_t>(features.rows()) != labels.rows()) {
    throw InvalidArgument("features and label matrix differ in row count");
  }
  MceResult result;
  std::vector<std::vector<std::size_t>> answered(static_cast<std::size_t>(labels.num_workers()));
  std::vector<std::vector<int>> answers(answered.size());
  for (int k = 0; k < labels.num_workers(); ++k) {
    for (std::size_t i = 0; i < labels.rows(); ++i) {
      if (const auto& y = labels.at(i, k)) {
        answered[static_cast<std::size_t>(k)].push_back(i);
        answers[static_cast<std::size_t>(k)].push_back(*y);
      }
    }
    const auto& idx = answered[static_cast<std::size_t>(k)];
    if (idx.empty()) throw InvalidArgument("worker " + std::to_string(k) + " answered nothing");
    FeatureMatrix x(static_cast<Eigen::Index>(idx.size()), features.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(idx[i]));
    }
    ProbClassifier clf(features.cols(), labels.num_classes(), hyper);
    RngStream worker_rng = rng.derive(static_cast<std::uint64_t>(k));
    clf.fit_batch(x, answers[static_cast<std::size_t>(k)], epochs, worker_rng);
    result.matrices.push_back(estimate_confusion(clf, trusted));
  }
  result.traces = trace_set(result.matrices);
  result.selected = select_annotator(result.traces);
  result.selected_instances = std::move(answered[result.selected]);
  result.selected_labels = std::move(answers[result.selected]);
  return result;
}

}  // namespace noisycrowd
