#pragma once

#include <Eigen/Dense>

#include <span>
#include <string_view>
#include <vector>

#include "noisycrowd/core.hpp"

namespace noisycrowd {

enum class ClassifierKind { kSoftmax, kLinearSvmOvr };

std::string_view to_string(ClassifierKind kind);
ClassifierKind parse_classifier_kind(std::string_view name);

struct ClassifierHyper {
  ClassifierKind kind = ClassifierKind::kSoftmax;
  double learning_rate = 0.05;
  int epochs = 100;
  double l2 = 1e-4;
};

// Linear multi-class model trained incrementally by per-sample SGD.
// softmax: multinomial logistic regression (cross-entropy).
// linear-svm-ovr: one hinge-loss binary model per class; probabilities are a
// softmax over the per-class margins.
class ProbClassifier {
 public:
  ProbClassifier(Eigen::Index dim, int num_classes, ClassifierHyper hyper = {});

  [[nodiscard]] Eigen::Index dim() const { return weights_.cols(); }
  [[nodiscard]] int num_classes() const { return static_cast<int>(weights_.rows()); }
  [[nodiscard]] const ClassifierHyper& hyper() const { return hyper_; }
  [[nodiscard]] const Eigen::MatrixXd& weights() const { return weights_; }
  [[nodiscard]] const Eigen::VectorXd& bias() const { return bias_; }
  Eigen::MatrixXd& mutable_weights() { return weights_; }
  Eigen::VectorXd& mutable_bias() { return bias_; }

  // `epochs` shuffled passes over the batch, ending on the pass with the lowest
  // training objective (never worse than the starting point). Parameters carry
  // over between calls; nothing is reset.
  void fit_batch(const FeatureMatrix& features, std::span<const int> labels, int epochs, RngStream& rng);
  void fit_batch(const FeatureMatrix& features, std::span<const int> labels, RngStream& rng) {
    fit_batch(features, labels, hyper_.epochs, rng);
  }

  [[nodiscard]] Eigen::VectorXd scores(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  [[nodiscard]] Posterior predict_proba(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  [[nodiscard]] int predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  [[nodiscard]] std::vector<int> predict_all(const FeatureMatrix& features) const;

  // Mean cross-entropy of predict_proba against the labels.
  [[nodiscard]] double mean_cross_entropy(const FeatureMatrix& features, std::span<const int> labels) const;
  // The objective SGD descends: mean per-sample loss plus (l2 / 2) * ||W||^2.
  [[nodiscard]] double training_objective(const FeatureMatrix& features, std::span<const int> labels) const;

 private:
  void check_batch(const FeatureMatrix& features, std::span<const int> labels) const;

  ClassifierHyper hyper_;
  Eigen::MatrixXd weights_;  // C x d
  Eigen::VectorXd bias_;
};

// Gradient of the softmax training objective with respect to weights and bias.
double softmax_objective_gradient(const ProbClassifier& clf, const FeatureMatrix& features,
                                  std::span<const int> labels, Eigen::MatrixXd& grad_w,
                                  Eigen::VectorXd& grad_b);

}  // namespace noisycrowd
