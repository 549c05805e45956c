#pragma once

// On-line variational label aggregation.
//
// The generative side p is a class prior pi plus one row-stochastic confusion
// matrix per worker, both parameterized by row-softmax logits. The inference
// side q is a tanh MLP mapping a row of crowd answers to a distribution over
// the true label. Training maximizes the evidence lower bound
//
//   E_q[log pi_t + sum_k log C_k[t, y_k]] + H(q)
//
// where the expectation over the discrete true label is summed exactly.
// Aggregated labels come from the exact posterior under p; q is only a
// training device.

#include <Eigen/Dense>
#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noisycrowd/core.hpp"
#include "noisycrowd/crowdsim.hpp"

namespace noisycrowd {

enum class Optimizer { kSgd, kRmsprop };

std::string_view to_string(Optimizer opt);
Optimizer parse_optimizer(std::string_view name);

struct NnmcHyper {
  double learning_rate = 0.004;
  // Step t uses learning_rate / (1 + t / lr_decay_steps); 0 keeps it constant.
  double lr_decay_steps = 500.0;
  int epochs_init = 50;
  int epochs_batch = 50;
  int epochs_offline = 50;
  std::size_t offline_batch = 50;
  Optimizer optimizer = Optimizer::kRmsprop;
  double rms_decay = 0.9;
  double rms_epsilon = 1e-8;
  std::vector<int> hidden{64, 32};
};

struct ParameterBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  [[nodiscard]] Eigen::Index size() const { return rows * cols; }
};

struct ElboReport {
  double elbo = 0.0;
  double reconstruction = 0.0;
  double entropy = 0.0;
};

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class NnmcModel {
 public:
  // All parameters zero; use init_model for a trainable starting point.
  NnmcModel(int num_workers, int num_classes, NnmcHyper hyper = {});

  [[nodiscard]] int num_workers() const { return num_workers_; }
  [[nodiscard]] int num_classes() const { return num_classes_; }
  [[nodiscard]] int input_size() const { return num_workers_ * (num_classes_ + 1); }
  [[nodiscard]] const NnmcHyper& hyper() const { return hyper_; }
  NnmcHyper& mutable_hyper() { return hyper_; }

  [[nodiscard]] const std::vector<ParameterBlock>& blocks() const { return blocks_; }
  [[nodiscard]] const ParameterBlock& block(std::string_view name) const;
  [[nodiscard]] std::size_t num_q_layers() const { return hyper_.hidden.size() + 1; }

  [[nodiscard]] const Eigen::VectorXd& parameters() const { return params_; }
  // Any write through this handle invalidates pinned matrices.
  Eigen::VectorXd& mutable_parameters();

  [[nodiscard]] Eigen::Map<const RowMajorMatrix> view(const ParameterBlock& b) const {
    return {params_.data() + b.offset, b.rows, b.cols};
  }
  Eigen::Map<RowMajorMatrix> mutable_view(const ParameterBlock& b) {
    pinned_.reset();
    return {params_.data() + b.offset, b.rows, b.cols};
  }

  // C x C logits of worker k (row t = true class t).
  [[nodiscard]] Eigen::Map<const RowMajorMatrix> worker_logits(int k) const;
  [[nodiscard]] Eigen::Map<const Eigen::VectorXd> prior_logits() const;

  // Row-softmax of the logits unless matrices were pinned by set_confusions
  // and no update has happened since.
  [[nodiscard]] std::vector<ConfusionMatrix> confusions() const;
  [[nodiscard]] std::vector<double> prior() const;

  [[nodiscard]] const Eigen::VectorXd& optimizer_state() const { return second_moment_; }
  Eigen::VectorXd& mutable_optimizer_state() { return second_moment_; }
  [[nodiscard]] long steps() const { return steps_; }
  void set_steps(long steps) { steps_ = steps; }

  void apply_gradient(const Eigen::VectorXd& grad);
  void pin_confusions(std::vector<ConfusionMatrix> matrices);

 private:
  int num_workers_;
  int num_classes_;
  NnmcHyper hyper_;
  std::vector<ParameterBlock> blocks_;
  Eigen::VectorXd params_;
  Eigen::VectorXd second_moment_;
  long steps_ = 0;
  std::optional<std::vector<ConfusionMatrix>> pinned_;
};

// Confusion logits +2 on the diagonal, uniform prior, q weights uniform in
// +-1/sqrt(fan_in), zero biases, zero optimizer state.
NnmcModel init_model(int num_workers, int num_classes, const NnmcHyper& hyper, RngStream rng);

// Per worker: one-hot over C classes plus a trailing missing slot.
Eigen::VectorXd encode_row(std::span<const NoisyLabel> row, int num_classes);
RowMajorMatrix encode_rows(const LabelMatrix& batch);

// q(. | row) for every row of the batch.
std::vector<Posterior> q_posteriors(const NnmcModel& model, const LabelMatrix& batch);

ElboReport elbo(const NnmcModel& model, const LabelMatrix& batch);
// ELBO with an externally supplied variational distribution.
ElboReport elbo_with_q(const NnmcModel& model, const LabelMatrix& batch, std::span<const Posterior> q);

// Returns the ELBO report at the current parameters and writes the gradient of
// the mean negative ELBO into grad (resized to the parameter count).
ElboReport negative_elbo_gradient(const NnmcModel& model, const LabelMatrix& batch, Eigen::VectorXd& grad);

// `epochs` full-batch optimizer steps. Returns the ELBO after the last step.
// Throws NonFiniteLoss naming the first parameter block with a non-finite
// gradient.
ElboReport update_batch(NnmcModel& model, const LabelMatrix& batch, int epochs);

struct AggregatedLabel {
  int label;
  Posterior posterior;
};

std::vector<AggregatedLabel> aggregate_batch(const NnmcModel& model, const LabelMatrix& batch);
std::vector<int> aggregate_labels(const NnmcModel& model, const LabelMatrix& batch);

struct OnlineResult {
  std::vector<std::vector<int>> labels;  // one vector per batch
  std::vector<int> initial_labels;       // initial set, aggregated right after initialization
  ElboReport init_report;
};

// Initializes on the initial set for epochs_init, then per batch: update for
// epochs_batch and aggregate. Earlier batches are never revisited.
OnlineResult run_online(NnmcModel& model, const LabelMatrix& initial, std::span<const LabelMatrix> batches);

// Shuffled mini-batch passes over all rows, then aggregation of every row.
std::vector<int> run_offline(NnmcModel& model, const LabelMatrix& rows, int epochs, RngStream rng);

// Replaces the confusion logits by log(max(C, 1e-12)) and pins the matrices so
// that aggregation uses them verbatim until the next update.
void set_confusions(NnmcModel& model, std::span<const ConfusionMatrix> matrices);

nlohmann::json model_to_json(const NnmcModel& model);
NnmcModel model_from_json(const nlohmann::json& j);

}  // namespace noisycrowd
