#pragma once

// Domain types shared across the library: datasets, crowd label matrices,
// posteriors over true labels, and the streaming subsample plan.

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "noisycrowd/error.hpp"
#include "noisycrowd/rng.hpp"

namespace noisycrowd {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One worker's answer for one instance; nullopt when the worker left it blank.
using NoisyLabel = std::optional<int>;

// Sentinel used for missing labels in every file format.
inline constexpr int kMissingLabel = -1;

enum class Split { kTrain, kTest };

class Dataset {
 public:
  Dataset(FeatureMatrix features, std::vector<int> labels, int num_classes,
          Split split = Split::kTrain);

  [[nodiscard]] const FeatureMatrix& features() const { return features_; }
  [[nodiscard]] std::span<const int> labels() const { return labels_; }
  [[nodiscard]] int num_classes() const { return num_classes_; }
  [[nodiscard]] std::size_t size() const { return labels_.size(); }
  [[nodiscard]] Eigen::Index dim() const { return features_.cols(); }
  [[nodiscard]] Split split() const { return split_; }

  [[nodiscard]] Dataset subset(std::span<const std::size_t> indices) const;

 private:
  FeatureMatrix features_;
  std::vector<int> labels_;
  int num_classes_;
  Split split_;
};

struct LoadOptions {
  bool header = false;
  std::optional<int> num_classes;
  char delimiter = ',';
  Split split = Split::kTrain;
};

// Plain CSV: d numeric columns followed by one integer label column.
Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& options = {});
Dataset parse_dataset(std::istream& in, const LoadOptions& options = {});

// Per-feature min-max scaling to [0, 1]; constant columns map to 0.
class MinMaxScaler {
 public:
  static MinMaxScaler fit(const FeatureMatrix& features);
  [[nodiscard]] FeatureMatrix transform(const FeatureMatrix& features) const;
  [[nodiscard]] Dataset transform(const Dataset& ds) const;

 private:
  Eigen::RowVectorXd min_;
  Eigen::RowVectorXd range_;
};

// Isotropic Gaussian clusters, one per class, with class centers drawn
// uniformly in [0, separation]^d. Balanced classes (round-robin).
Dataset make_gaussian_blobs(std::size_t n, Eigen::Index d, int num_classes, double separation,
                            RngStream rng, Split split = Split::kTrain);

class Posterior {
 public:
  // probs must be nonnegative and sum to 1 within 1e-9.
  explicit Posterior(std::vector<double> probs);
  static Posterior normalized(std::vector<double> weights);
  static Posterior uniform(int num_classes);

  [[nodiscard]] std::span<const double> probs() const { return probs_; }
  [[nodiscard]] double operator[](std::size_t c) const { return probs_[c]; }
  [[nodiscard]] int num_classes() const { return static_cast<int>(probs_.size()); }
  // Lowest index wins ties.
  [[nodiscard]] int argmax() const;

 private:
  std::vector<double> probs_;
};

// Lowest-index argmax over an arbitrary score vector.
int argmax(std::span<const double> values);

class LabelMatrix {
 public:
  // entries are row-major, rows x num_workers. Every row needs at least one
  // observed label.
  LabelMatrix(std::size_t rows, int num_workers, int num_classes, std::vector<NoisyLabel> entries);

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] int num_workers() const { return num_workers_; }
  [[nodiscard]] int num_classes() const { return num_classes_; }
  [[nodiscard]] std::span<const NoisyLabel> row(std::size_t i) const {
    return {entries_.data() + i * static_cast<std::size_t>(num_workers_),
            static_cast<std::size_t>(num_workers_)};
  }
  [[nodiscard]] const NoisyLabel& at(std::size_t i, int k) const {
    return entries_[i * static_cast<std::size_t>(num_workers_) + static_cast<std::size_t>(k)];
  }
  [[nodiscard]] std::size_t missing_count(int worker) const;

  [[nodiscard]] LabelMatrix subset(std::span<const std::size_t> indices) const;

 private:
  std::size_t rows_;
  int num_workers_;
  int num_classes_;
  std::vector<NoisyLabel> entries_;
};

struct LabelMatrixFile {
  std::vector<std::size_t> instance_ids;
  LabelMatrix labels;
};

// Header `instance_id,w0,...,w{K-1}`; missing labels written as -1.
void write_label_matrix_csv(std::ostream& out, const LabelMatrix& labels,
                            std::span<const std::size_t> instance_ids = {});
// num_classes defaults to max observed label + 1 (at least 2).
LabelMatrixFile read_label_matrix_csv(std::istream& in, std::optional<int> num_classes = {});

struct StreamPlan {
  std::vector<std::size_t> initial;
  std::vector<std::vector<std::size_t>> batches;

  [[nodiscard]] std::vector<std::size_t> all() const;
};

// Draws `total` distinct instances uniformly without replacement; the first
// `init_size` form the initial set and the rest arrive in consecutive batches
// of `batch` (the last one may be short).
StreamPlan subsample_stream(std::size_t dataset_size, std::size_t init_size, std::size_t total,
                            std::size_t batch, RngStream rng);

}  // namespace noisycrowd
