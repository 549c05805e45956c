#include "noisycrowd/active.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace noisycrowd {

int Oracle::query(std::size_t instance) {
  if (instance >= truth_.size()) throw RangeError("oracle queried for unknown instance");
  ++queries_;
  return truth_[instance];
}

std::string_view to_string(Informativeness method) {
  return method == Informativeness::kLc ? "lc" : "bvsb";
}

std::optional<Informativeness> parse_active_method(std::string_view name) {
  if (name == "lc") return Informativeness::kLc;
  if (name == "bvsb") return Informativeness::kBvsb;
  if (name == "none") return std::nullopt;
  throw InvalidArgument("unknown active learning method '" + std::string(name) + "'");
}

double informativeness(const Posterior& p, Informativeness method) {
  const auto probs = p.probs();
  if (method == Informativeness::kLc) return *std::max_element(probs.begin(), probs.end());
  if (probs.size() < 2) throw InvalidArgument("bvsb needs at least 2 classes");
  double best = -1.0, second = -1.0;
  for (double v : probs) {
    if (v > best) {
      second = best;
      best = v;
    } else if (v > second) {
      second = v;
    }
  }
  return best - second;
}

double informativeness(const ProbClassifier& clf, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                       Informativeness method) {
  return informativeness(clf.predict_proba(x), method);
}

FilterResult filter_batch(const FeatureMatrix& features, std::span<const int> aggregated,
                          const ProbClassifier& clf) {
  if (static_cast<std::size_t>(features.rows()) != aggregated.size()) {
    throw InvalidArgument("features and aggregated labels differ in length");
  }
  FilterResult out;
  for (std::size_t i = 0; i < aggregated.size(); ++i) {
    if (clf.predict(features.row(static_cast<Eigen::Index>(i))) == aggregated[i]) {
      out.clean.push_back(i);
    } else {
      out.suspicious.push_back(i);
    }
  }
  return out;
}

std::vector<std::size_t> rank_by_informativeness(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

CleanseOutcome select_and_relabel(const FeatureMatrix& features, std::span<const std::size_t> suspicious,
                                  std::span<const std::size_t> instance_ids, const ProbClassifier& clf,
                                  Informativeness method, std::size_t budget, Oracle& oracle) {
  if (instance_ids.size() != static_cast<std::size_t>(features.rows())) {
    throw InvalidArgument("one instance id per batch row required");
  }
  CleanseOutcome out;
  out.scores.reserve(suspicious.size());
  for (std::size_t pos : suspicious) {
    out.scores.push_back(informativeness(clf, features.row(static_cast<Eigen::Index>(pos)), method));
  }
  const auto order = rank_by_informativeness(out.scores);
  const std::size_t take = std::min(budget, suspicious.size());
  std::vector<bool> chosen(suspicious.size(), false);
  for (std::size_t n = 0; n < take; ++n) {
    const std::size_t pos = suspicious[order[n]];
    out.relabeled.push_back(Relabel{pos, oracle.query(instance_ids[pos])});
    chosen[order[n]] = true;
  }
  for (std::size_t n = 0; n < suspicious.size(); ++n) {
    if (!chosen[n]) out.discarded.push_back(suspicious[n]);
  }
  return out;
}

CleanseOutcome cleanse_batch(const FeatureMatrix& features, std::span<const int> aggregated,
                             std::span<const std::size_t> instance_ids, ProbClassifier& clf,
                             const CleanseOptions& options, Oracle& oracle, RngStream& rng) {
  auto filtered = filter_batch(features, aggregated, clf);
  CleanseOutcome out = select_and_relabel(features, filtered.suspicious, instance_ids, clf, options.method,
                                          options.budget, oracle);
  out.clean = std::move(filtered.clean);

  std::vector<std::size_t> rows(out.clean);
  std::vector<int> labels;
  labels.reserve(rows.size() + out.relabeled.size());
  for (std::size_t pos : out.clean) labels.push_back(aggregated[pos]);
  for (const auto& r : out.relabeled) {
    rows.push_back(r.position);
    labels.push_back(r.label);
  }
  if (options.keep_unrelabeled) {
    for (std::size_t pos : out.discarded) {
      rows.push_back(pos);
      labels.push_back(aggregated[pos]);
    }
  }
  if (!rows.empty()) {
    FeatureMatrix x(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    }
    clf.fit_batch(x, labels, options.epochs, rng);
  }
  return out;
}

}  // namespace noisycrowd
