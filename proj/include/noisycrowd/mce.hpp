#pragma once

// Trusted-set confusion-matrix estimation for multiple annotators.
//
// One classifier is trained per worker on that worker's answers. Averaging its
// predicted class probabilities over trusted samples of true class i gives
// row i of the worker's estimated confusion matrix. Workers are ranked by the
// mean diagonal (trace / C) of their estimate.

#include <span>
#include <vector>

#include "noisycrowd/classifier.hpp"
#include "noisycrowd/core.hpp"
#include "noisycrowd/crowdsim.hpp"

namespace noisycrowd {

class TrustedSet {
 public:
  TrustedSet(FeatureMatrix features, std::vector<int> labels, int num_classes);

  [[nodiscard]] const FeatureMatrix& features() const { return features_; }
  [[nodiscard]] std::span<const int> labels() const { return labels_; }
  [[nodiscard]] int num_classes() const { return num_classes_; }
  // Indices of trusted samples whose true label is `c`.
  [[nodiscard]] std::span<const std::size_t> members(int c) const { return by_class_[static_cast<std::size_t>(c)]; }

 private:
  FeatureMatrix features_;
  std::vector<int> labels_;
  int num_classes_;
  std::vector<std::vector<std::size_t>> by_class_;
};

struct TrustedSplit {
  TrustedSet trusted;
  std::vector<std::size_t> trusted_indices;
  std::vector<std::size_t> remaining_indices;
};

// Up to `per_class` samples of each class, drawn uniformly from the dataset
// before any noise is applied.
TrustedSplit draw_trusted_set(const Dataset& ds, std::size_t per_class, RngStream rng);

// Row i = mean of predict_proba over trusted samples of class i.
// Throws InvalidArgument naming any class with no trusted samples.
ConfusionMatrix estimate_confusion(const ProbClassifier& clf, const TrustedSet& trusted);

// trace(C_k) / C for every worker.
std::vector<double> trace_set(std::span<const ConfusionMatrix> matrices);

// Index of the largest average trace (the most accurate worker); lowest index
// on ties.
std::size_t select_annotator(std::span<const double> traces);

struct MceResult {
  std::vector<ConfusionMatrix> matrices;
  std::vector<double> traces;
  std::size_t selected = 0;
  // Instances the selected worker answered, with its answers.
  std::vector<std::size_t> selected_instances;
  std::vector<int> selected_labels;
};

// Trains one classifier per worker on the instances it answered, estimates
// every confusion matrix on the trusted set and picks the best worker.
MceResult mce_pipeline(const FeatureMatrix& features, const LabelMatrix& labels, const TrustedSet& trusted,
                       const ClassifierHyper& hyper, int epochs, RngStream rng);

}  // namespace noisycrowd
