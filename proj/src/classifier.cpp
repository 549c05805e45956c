#include "noisycrowd/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace noisycrowd {
namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& s) {
  const Eigen::VectorXd e = (s.array() - s.maxCoeff()).exp().matrix();
  return e / e.sum();
}

}  // namespace

std::string_view to_string(ClassifierKind kind) {
  return kind == ClassifierKind::kSoftmax ? "softmax" : "linsvm";
}

ClassifierKind parse_classifier_kind(std::string_view name) {
  if (name == "softmax") return ClassifierKind::kSoftmax;
  if (name == "linsvm" || name == "linear-svm-ovr") return ClassifierKind::kLinearSvmOvr;
  throw InvalidArgument("unknown classifier '" + std::string(name) + "'");
}

ProbClassifier::ProbClassifier(Eigen::Index dim, int num_classes, ClassifierHyper hyper)
    : hyper_(hyper), weights_(Eigen::MatrixXd::Zero(num_classes, dim)),
      bias_(Eigen::VectorXd::Zero(num_classes)) {
  if (dim < 1) throw InvalidArgument("classifier needs at least one feature");
  if (num_classes < 2) throw InvalidArgument("classifier needs at least 2 classes");
}

void ProbClassifier::check_batch(const FeatureMatrix& features, std::span<const int> labels) const {
  if (features.cols() != dim()) {
    throw InvalidArgument("feature dimension " + std::to_string(features.cols()) +
                          " does not match classifier dimension " + std::to_string(dim()));
  }
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw InvalidArgument("feature rows do not match label count");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes()) throw RangeError("training label outside [0, C)");
  }
}

void ProbClassifier::fit_batch(const FeatureMatrix& features, std::span<const int> labels, int epochs,
                               RngStream& rng) {
  check_batch(features, labels);
  if (labels.empty()) throw InvalidArgument("empty training batch");
  if (epochs < 0) throw InvalidArgument("epochs must be nonnegative");
  const double lr = hyper_.learning_rate;
  const double decay = 1.0 - lr * hyper_.l2;
  const int c = num_classes();
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::VectorXd g(c);

  // Keep the best epoch so that a call never ends above where it started.
  double best = epochs > 0 ? training_objective(features, labels) : 0.0;
  Eigen::MatrixXd best_w = weights_;
  Eigen::VectorXd best_b = bias_;
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      const auto x = features.row(static_cast<Eigen::Index>(i));
      const int y = labels[i];
      const Eigen::VectorXd s = weights_ * x.transpose() + bias_;
      if (hyper_.kind == ClassifierKind::kSoftmax) {
        g = softmax(s);
        g(y) -= 1.0;
      } else {
        for (int k = 0; k < c; ++k) {
          const double target = k == y ? 1.0 : -1.0;
          g(k) = target * s(k) < 1.0 ? -target : 0.0;
        }
      }
      weights_ *= decay;
      weights_.noalias() -= lr * g * x;
      bias_ -= lr * g;
    }
    const double obj = training_objective(features, labels);
    if (obj <= best) {
      best = obj;
      best_w = weights_;
      best_b = bias_;
    }
  }
  weights_ = std::move(best_w);
  bias_ = std::move(best_b);
}

Eigen::VectorXd ProbClassifier::scores(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (x.size() != dim()) throw InvalidArgument("feature dimension mismatch");
  return weights_ * x.transpose() + bias_;
}

Posterior ProbClassifier::predict_proba(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const Eigen::VectorXd p = softmax(scores(x));
  return Posterior::normalized(std::vector<double>(p.begin(), p.end()));
}

int ProbClassifier::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const Eigen::VectorXd s = scores(x);
  return argmax(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())));
}

std::vector<int> ProbClassifier::predict_all(const FeatureMatrix& features) const {
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) out[static_cast<std::size_t>(i)] = predict(features.row(i));
  return out;
}

double ProbClassifier::mean_cross_entropy(const FeatureMatrix& features, std::span<const int> labels) const {
  check_batch(features, labels);
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Eigen::VectorXd s = scores(features.row(i));
    const double top = s.maxCoeff();
    const double lse = top + std::log((s.array() - top).exp().sum());
    total += lse - s(labels[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(labels.size());
}

double ProbClassifier::training_objective(const FeatureMatrix& features, std::span<const int> labels) const {
  const double reg = 0.5 * hyper_.l2 * weights_.squaredNorm();
  if (hyper_.kind == ClassifierKind::kSoftmax) return mean_cross_entropy(features, labels) + reg;
  check_batch(features, labels);
  double total = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Eigen::VectorXd s = scores(features.row(i));
    for (int k = 0; k < num_classes(); ++k) {
      const double target = k == labels[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
      total += std::max(0.0, 1.0 - target * s(k));
    }
  }
  return total / static_cast<double>(std::max<std::size_t>(1, labels.size())) + reg;
}

double softmax_objective_gradient(const ProbClassifier& clf, const FeatureMatrix& features,
                                  std::span<const int> labels, Eigen::MatrixXd& grad_w,
                                  Eigen::VectorXd& grad_b) {
  grad_w = clf.hyper().l2 * clf.weights();
  grad_b = Eigen::VectorXd::Zero(clf.num_classes());
  const double n = static_cast<double>(labels.size());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    Eigen::VectorXd g = softmax(clf.scores(features.row(i)));
    g(labels[static_cast<std::size_t>(i)]) -= 1.0;
    grad_w.noalias() += (g / n) * features.row(i);
    grad_b += g / n;
  }
  return clf.training_objective(features, labels);
}

}  // namespace noisycrowd
