#include "noisycrowd/nnmc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "noisycrowd/baselines.hpp"

namespace noisycrowd {
namespace {

// log(1e-12): every log-probability is clamped from below at this value.
const double kLogFloor = std::log(1e-12);

std::string weight_name(std::size_t layer) { return "q.w" + std::to_string(layer); }
std::string bias_name(std::size_t layer) { return "q.b" + std::to_string(layer); }

struct LogSoftmaxRow {
  Eigen::VectorXd log_prob;  // clamped
  Eigen::VectorXd prob;      // unclamped softmax
  Eigen::VectorXd live;      // 1 where the clamp is inactive
};

template <typename Row>
LogSoftmaxRow log_softmax(const Row& logits) {
  const double top = logits.maxCoeff();
  const Eigen::VectorXd shifted = (logits.array() - top).matrix().transpose().eval();
  const double lse = std::log(shifted.array().exp().sum());
  LogSoftmaxRow out;
  const Eigen::VectorXd raw = (shifted.array() - lse).matrix();
  out.prob = raw.array().exp().matrix();
  out.log_prob = raw.cwiseMax(kLogFloor);
  out.live = (raw.array() >= kLogFloor).cast<double>().matrix();
  return out;
}

// Model-side quantities shared by the ELBO and its gradient.
struct PSide {
  LogSoftmaxRow prior;
  std::vector<RowMajorMatrix> log_c;   // clamped log C_k
  std::vector<RowMajorMatrix> c;       // C_k
  std::vector<RowMajorMatrix> live_c;  // clamp masks
};

PSide evaluate_p(const NnmcModel& model) {
  PSide p;
  p.prior = log_softmax(model.prior_logits().transpose());
  const int cls = model.num_classes();
  for (int k = 0; k < model.num_workers(); ++k) {
    const auto w = model.worker_logits(k);
    RowMajorMatrix lc(cls, cls), c(cls, cls), live(cls, cls);
    for (int t = 0; t < cls; ++t) {
      auto r = log_softmax(w.row(t));
      lc.row(t) = r.log_prob.transpose();
      c.row(t) = r.prob.transpose();
      live.row(t) = r.live.transpose();
    }
    p.log_c.push_back(std::move(lc));
    p.c.push_back(std::move(c));
    p.live_c.push_back(std::move(live));
  }
  return p;
}

// a(j, t) = log pi_t + sum_k log C_k[t, y_jk]
RowMajorMatrix expected_log_joint_terms(const PSide& p, const LabelMatrix& batch) {
  const auto cls = static_cast<Eigen::Index>(batch.num_classes());
  RowMajorMatrix a(static_cast<Eigen::Index>(batch.rows()), cls);
  for (std::size_t j = 0; j < batch.rows(); ++j) {
    Eigen::VectorXd acc = p.prior.log_prob;
    const auto row = batch.row(j);
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k]) acc += p.log_c[k].col(*row[k]);
    }
    a.row(static_cast<Eigen::Index>(j)) = acc.transpose();
  }
  return a;
}

struct QForward {
  std::vector<RowMajorMatrix> activations;  // input, then each hidden layer
  RowMajorMatrix log_q;                     // clamped
  RowMajorMatrix q;
  RowMajorMatrix live;
};

QForward forward_q(const NnmcModel& model, const RowMajorMatrix& inputs) {
  QForward f;
  f.activations.push_back(inputs);
  const std::size_t layers = model.num_q_layers();
  RowMajorMatrix z;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto w = model.view(model.block(weight_name(l)));
    const auto b = model.view(model.block(bias_name(l)));
    z = f.activations.back() * w.transpose();
    z.rowwise() += b.col(0).transpose();
    if (l + 1 < layers) f.activations.push_back(z.array().tanh().matrix());
  }
  const Eigen::Index rows = z.rows();
  f.log_q.resize(rows, z.cols());
  f.q.resize(rows, z.cols());
  f.live.resize(rows, z.cols());
  for (Eigen::Index j = 0; j < rows; ++j) {
    auto r = log_softmax(z.row(j));
    f.log_q.row(j) = r.log_prob.transpose();
    f.q.row(j) = r.prob.transpose();
    f.live.row(j) = r.live.transpose();
  }
  return f;
}

ElboReport report_from(const RowMajorMatrix& q, const RowMajorMatrix& log_q, const RowMajorMatrix& a) {
  const auto n = static_cast<double>(q.rows());
  ElboReport r;
  r.reconstruction = (q.array() * a.array()).sum() / n;
  r.entropy = -(q.array() * log_q.array()).sum() / n;
  r.elbo = r.reconstruction + r.entropy;
  return r;
}

// A bad parameter block is blamed before the gradient blocks it contaminated.
void check_finite(const NnmcModel& model, double loss, const Eigen::VectorXd& grad) {
  if (std::isfinite(loss) && grad.allFinite()) return;
  for (const auto& b : model.blocks()) {
    if (!model.parameters().segment(b.offset, b.size()).allFinite()) throw NonFiniteLoss(b.name);
  }
  for (const auto& b : model.blocks()) {
    if (!grad.segment(b.offset, b.size()).allFinite()) throw NonFiniteLoss(b.name);
  }
  throw NonFiniteLoss("elbo");
}

}  // namespace

std::string_view to_string(Optimizer opt) {
  return opt == Optimizer::kSgd ? "sgd" : "rmsprop";
}

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::kSgd;
  if (name == "rmsprop") return Optimizer::kRmsprop;
  throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

NnmcModel::NnmcModel(int num_workers, int num_classes, NnmcHyper hyper)
    : num_workers_(num_workers), num_classes_(num_classes), hyper_(std::move(hyper)) {
  if (num_workers_ < 1) throw InvalidArgument("NN-MC needs at least one worker");
  if (num_classes_ < 2) throw InvalidArgument("NN-MC needs at least 2 classes");
  for (int h : hyper_.hidden) {
    if (h < 1) throw InvalidArgument("hidden layer widths must be positive");
  }
  Eigen::Index offset = 0;
  auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
    blocks_.push_back(ParameterBlock{std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  add("worker_logits", static_cast<Eigen::Index>(num_workers_) * num_classes_, num_classes_);
  add("prior_logits", num_classes_, 1);
  Eigen::Index fan_in = input_size();
  for (std::size_t l = 0; l < hyper_.hidden.size(); ++l) {
    add(weight_name(l), hyper_.hidden[l], fan_in);
    add(bias_name(l), hyper_.hidden[l], 1);
    fan_in = hyper_.hidden[l];
  }
  add(weight_name(hyper_.hidden.size()), num_classes_, fan_in);
  add(bias_name(hyper_.hidden.size()), num_classes_, 1);
  params_ = Eigen::VectorXd::Zero(offset);
  second_moment_ = Eigen::VectorXd::Zero(offset);
}

const ParameterBlock& NnmcModel::block(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw InvalidArgument("no parameter block named '" + std::string(name) + "'");
}

Eigen::VectorXd& NnmcModel::mutable_parameters() {
  pinned_.reset();
  return params_;
}

Eigen::Map<const RowMajorMatrix> NnmcModel::worker_logits(int k) const {
  const auto& b = blocks_[0];
  return {params_.data() + b.offset + static_cast<Eigen::Index>(k) * num_classes_ * num_classes_,
          num_classes_, num_classes_};
}

Eigen::Map<const Eigen::VectorXd> NnmcModel::prior_logits() const {
  return {params_.data() + blocks_[1].offset, num_classes_};
}

std::vector<ConfusionMatrix> NnmcModel::confusions() const {
  if (pinned_) return *pinned_;
  std::vector<ConfusionMatrix> out;
  out.reserve(static_cast<std::size_t>(num_workers_));
  for (int k = 0; k < num_workers_; ++k) {
    const auto w = worker_logits(k);
    Eigen::MatrixXd m(num_classes_, num_classes_);
    for (int t = 0; t < num_classes_; ++t) {
      const Eigen::RowVectorXd e = (w.row(t).array() - w.row(t).maxCoeff()).exp().matrix();
      m.row(t) = e / e.sum();
    }
    out.emplace_back(std::move(m));
  }
  return out;
}

std::vector<double> NnmcModel::prior() const {
  const auto rho = prior_logits();
  const double top = rho.maxCoeff();
  std::vector<double> e(static_cast<std::size_t>(num_classes_));
  double sum = 0.0;
  for (int t = 0; t < num_classes_; ++t) {
    e[static_cast<std::size_t>(t)] = std::exp(rho(t) - top);
    sum += e[static_cast<std::size_t>(t)];
  }
  for (double& v : e) v /= sum;
  return e;
}

void NnmcModel::apply_gradient(const Eigen::VectorXd& grad) {
  pinned_.reset();
  double lr = hyper_.learning_rate;
  if (hyper_.lr_decay_steps > 0.0) lr /= 1.0 + static_cast<double>(steps_) / hyper_.lr_decay_steps;
  if (hyper_.optimizer == Optimizer::kSgd) {
    params_ -= lr * grad;
  } else {
    const double d = hyper_.rms_decay;
    second_moment_ = d * second_moment_ + (1.0 - d) * grad.cwiseAbs2();
    params_.array() -= lr * grad.array() / (second_moment_.array().sqrt() + hyper_.rms_epsilon);
  }
  ++steps_;
}

void NnmcModel::pin_confusions(std::vector<ConfusionMatrix> matrices) { pinned_ = std::move(matrices); }

NnmcModel init_model(int num_workers, int num_classes, const NnmcHyper& hyper, RngStream rng) {
  NnmcModel model(num_workers, num_classes, hyper);
  Eigen::VectorXd& p = model.mutable_parameters();
  const auto& wb = model.block("worker_logits");
  for (int k = 0; k < num_workers; ++k) {
    for (int t = 0; t < num_classes; ++t) {
      p(wb.offset + (static_cast<Eigen::Index>(k) * num_classes + t) * num_classes + t) = 2.0;
    }
  }
  for (std::size_t l = 0; l < model.num_q_layers(); ++l) {
    const auto& b = model.block(weight_name(l));
    const double bound = 1.0 / std::sqrt(static_cast<double>(b.cols));
    for (Eigen::Index i = 0; i < b.size(); ++i) p(b.offset + i) = rng.uniform(-bound, bound);
  }
  return model;
}

Eigen::VectorXd encode_row(std::span<const NoisyLabel> row, int num_classes) {
  const int width = num_classes + 1;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(row.size()) * width);
  for (std::size_t k = 0; k < row.size(); ++k) {
    const int slot = row[k] ? *row[k] : num_classes;
    x(static_cast<Eigen::Index>(k) * width + slot) = 1.0;
  }
  return x;
}

RowMajorMatrix encode_rows(const LabelMatrix& batch) {
  const int width = batch.num_classes() + 1;
  RowMajorMatrix x = RowMajorMatrix::Zero(static_cast<Eigen::Index>(batch.rows()),
                                          static_cast<Eigen::Index>(batch.num_workers()) * width);
  for (std::size_t j = 0; j < batch.rows(); ++j) {
    const auto row = batch.row(j);
    for (std::size_t k = 0; k < row.size(); ++k) {
      const int slot = row[k] ? *row[k] : batch.num_classes();
      x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k) * width + slot) = 1.0;
    }
  }
  return x;
}

namespace {
void check_batch(const NnmcModel& model, const LabelMatrix& batch) {
  if (batch.rows() == 0) throw InvalidArgument("empty batch");
  if (batch.num_workers() != model.num_workers() || batch.num_classes() != model.num_classes()) {
    throw InvalidArgument("batch shape does not match the model");
  }
}
}  // namespace

std::vector<Posterior> q_posteriors(const NnmcModel& model, const LabelMatrix& batch) {
  check_batch(model, batch);
  const auto f = forward_q(model, encode_rows(batch));
  std::vector<Posterior> out;
  out.reserve(batch.rows());
  for (Eigen::Index j = 0; j < f.q.rows(); ++j) {
    out.push_back(Posterior::normalized(std::vector<double>(f.q.row(j).begin(), f.q.row(j).end())));
  }
  return out;
}

ElboReport elbo(const NnmcModel& model, const LabelMatrix& batch) {
  check_batch(model, batch);
  const auto p = evaluate_p(model);
  const auto f = forward_q(model, encode_rows(batch));
  return report_from(f.q, f.log_q, expected_log_joint_terms(p, batch));
}

ElboReport elbo_with_q(const NnmcModel& model, const LabelMatrix& batch, std::span<const Posterior> q) {
  check_batch(model, batch);
  if (q.size() != batch.rows()) throw InvalidArgument("one q distribution per row required");
  const auto p = evaluate_p(model);
  const auto cls = static_cast<Eigen::Index>(model.num_classes());
  RowMajorMatrix qm(static_cast<Eigen::Index>(q.size()), cls), lq(qm.rows(), cls);
  for (std::size_t j = 0; j < q.size(); ++j) {
    for (Eigen::Index t = 0; t < cls; ++t) {
      const double v = q[j][static_cast<std::size_t>(t)];
      qm(static_cast<Eigen::Index>(j), t) = v;
      lq(static_cast<Eigen::Index>(j), t) = std::max(std::log(v), kLogFloor);
    }
  }
  return report_from(qm, lq, expected_log_joint_terms(p, batch));
}

ElboReport negative_elbo_gradient(const NnmcModel& model, const LabelMatrix& batch, Eigen::VectorXd& grad) {
  check_batch(model, batch);
  const auto p = evaluate_p(model);
  const auto f = forward_q(model, encode_rows(batch));
  const RowMajorMatrix a = expected_log_joint_terms(p, batch);
  const ElboReport report = report_from(f.q, f.log_q, a);

  const Eigen::Index n = f.q.rows();
  const auto cls = static_cast<Eigen::Index>(model.num_classes());
  const double scale = -1.0 / static_cast<double>(n);
  grad = Eigen::VectorXd::Zero(model.parameters().size());

  // p side: d elbo_j / d a_jt = q_jt.
  const auto& wb = model.block("worker_logits");
  const auto& pb = model.block("prior_logits");
  std::vector<RowMajorMatrix> soft_counts(static_cast<std::size_t>(model.num_workers()),
                                          RowMajorMatrix::Zero(cls, cls));
  const Eigen::VectorXd q_mass = f.q.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto row = batch.row(static_cast<std::size_t>(j));
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (!row[k]) continue;
      soft_counts[k].col(*row[k]) +=
          f.q.row(j).transpose().cwiseProduct(p.live_c[k].col(*row[k]));
    }
  }
  for (std::size_t k = 0; k < soft_counts.size(); ++k) {
    const Eigen::VectorXd row_mass = soft_counts[k].rowwise().sum();
    const RowMajorMatrix g = soft_counts[k] - (p.c[k].array().colwise() * row_mass.array()).matrix();
    const Eigen::Index off = wb.offset + static_cast<Eigen::Index>(k) * cls * cls;
    Eigen::Map<RowMajorMatrix>(grad.data() + off, cls, cls) = scale * g;
  }
  {
    const Eigen::VectorXd live_mass = q_mass.cwiseProduct(p.prior.live);
    grad.segment(pb.offset, cls) = scale * (live_mass - p.prior.prob * live_mass.sum());
  }

  // q side: softmax backprop of sum_t q_t (a_t - log q_t).
  RowMajorMatrix g = a - f.log_q - f.live;
  const Eigen::VectorXd mean_g = (f.q.array() * g.array()).rowwise().sum().matrix();
  RowMajorMatrix delta = (f.q.array() * (g.colwise() - mean_g).array()).matrix() * scale;

  for (std::size_t l = model.num_q_layers(); l-- > 0;) {
    const auto& w_block = model.block(weight_name(l));
    const auto& b_block = model.block(bias_name(l));
    const RowMajorMatrix& input = f.activations[l];
    Eigen::Map<RowMajorMatrix>(grad.data() + w_block.offset, w_block.rows, w_block.cols) =
        delta.transpose() * input;
    grad.segment(b_block.offset, b_block.rows) = delta.colwise().sum().transpose();
    if (l == 0) break;
    const auto w = model.view(w_block);
    delta = ((delta * w).array() * (1.0 - input.array().square())).matrix();
  }
  return report;
}

ElboReport update_batch(NnmcModel& model, const LabelMatrix& batch, int epochs) {
  if (epochs < 0) throw InvalidArgument("epochs must be nonnegative");
  Eigen::VectorXd grad;
  for (int e = 0; e < epochs; ++e) {
    const auto r = negative_elbo_gradient(model, batch, grad);
    check_finite(model, r.elbo, grad);
    model.apply_gradient(grad);
  }
  const auto r = elbo(model, batch);
  if (!std::isfinite(r.elbo)) check_finite(model, r.elbo, Eigen::VectorXd::Zero(model.parameters().size()));
  return r;
}

std::vector<AggregatedLabel> aggregate_batch(const NnmcModel& model, const LabelMatrix& batch) {
  check_batch(model, batch);
  const auto matrices = model.confusions();
  const auto prior = model.prior();
  auto posteriors = exact_posteriors(batch, matrices, prior);
  std::vector<AggregatedLabel> out;
  out.reserve(posteriors.size());
  for (auto& p : posteriors) {
    const int label = p.argmax();
    out.push_back(AggregatedLabel{label, std::move(p)});
  }
  return out;
}

std::vector<int> aggregate_labels(const NnmcModel& model, const LabelMatrix& batch) {
  check_batch(model, batch);
  return aggregate_map_all(batch, model.confusions(), model.prior());
}

OnlineResult run_online(NnmcModel& model, const LabelMatrix& initial, std::span<const LabelMatrix> batches) {
  if (initial.rows() == 0) throw InvalidArgument("initial set is empty");
  OnlineResult result;
  result.init_report = update_batch(model, initial, model.hyper().epochs_init);
  result.initial_labels = aggregate_labels(model, initial);
  result.labels.reserve(batches.size());
  for (const auto& b : batches) {
    update_batch(model, b, model.hyper().epochs_batch);
    result.labels.push_back(aggregate_labels(model, b));
  }
  return result;
}

std::vector<int> run_offline(NnmcModel& model, const LabelMatrix& rows, int epochs, RngStream rng) {
  if (rows.rows() == 0) throw InvalidArgument("no rows to aggregate");
  if (epochs < 0) throw InvalidArgument("epochs must be nonnegative");
  const std::size_t mb = std::max<std::size_t>(1, model.hyper().offline_batch);
  std::vector<std::size_t> order(rows.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::VectorXd grad;
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t end = std::min(order.size(), start + mb);
      const auto chunk = rows.subset(std::span<const std::size_t>(order).subspan(start, end - start));
      const auto r = negative_elbo_gradient(model, chunk, grad);
      check_finite(model, r.elbo, grad);
      model.apply_gradient(grad);
    }
  }
  return aggregate_labels(model, rows);
}

void set_confusions(NnmcModel& model, std::span<const ConfusionMatrix> matrices) {
  if (matrices.size() != static_cast<std::size_t>(model.num_workers())) {
    throw InvalidArgument("expected " + std::to_string(model.num_workers()) + " confusion matrices, got " +
                          std::to_string(matrices.size()));
  }
  const int cls = model.num_classes();
  for (const auto& m : matrices) {
    if (m.num_classes() != cls) throw InvalidArgument("confusion matrix size does not match the model");
  }
  auto w = model.mutable_view(model.block("worker_logits"));
  for (int k = 0; k < model.num_workers(); ++k) {
    for (int t = 0; t < cls; ++t) {
      for (int c = 0; c < cls; ++c) {
        w(static_cast<Eigen::Index>(k) * cls + t, c) = std::log(std::max(matrices[static_cast<std::size_t>(k)](t, c), 1e-12));
      }
    }
  }
  model.pin_confusions(std::vector<ConfusionMatrix>(matrices.begin(), matrices.end()));
}

nlohmann::json model_to_json(const NnmcModel& model) {
  const auto& h = model.hyper();
  nlohmann::json blocks = nlohmann::json::object();
  for (const auto& b : model.blocks()) {
    const auto seg = model.parameters().segment(b.offset, b.size());
    blocks[b.name] = std::vector<double>(seg.begin(), seg.end());
  }
  const auto& v = model.optimizer_state();
  return {{"format", "noisycrowd.nnmc.v1"},
          {"num_workers", model.num_workers()},
          {"num_classes", model.num_classes()},
          {"hyper",
           {{"learning_rate", h.learning_rate},
            {"epochs_init", h.epochs_init},
            {"epochs_batch", h.epochs_batch},
            {"epochs_offline", h.epochs_offline},
            {"offline_batch", h.offline_batch},
            {"optimizer", std::string(to_string(h.optimizer))},
            {"lr_decay_steps", h.lr_decay_steps},
            {"rms_decay", h.rms_decay},
            {"rms_epsilon", h.rms_epsilon},
            {"hidden", h.hidden}}},
          {"steps", model.steps()},
          {"blocks", std::move(blocks)},
          {"optimizer_state", std::vector<double>(v.begin(), v.end())}};
}

NnmcModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "noisycrowd.nnmc.v1") throw InvalidArgument("not an NN-MC checkpoint");
  const auto& jh = j.at("hyper");
  NnmcHyper h;
  h.learning_rate = jh.at("learning_rate").get<double>();
  h.epochs_init = jh.at("epochs_init").get<int>();
  h.epochs_batch = jh.at("epochs_batch").get<int>();
  h.epochs_offline = jh.at("epochs_offline").get<int>();
  h.offline_batch = jh.at("offline_batch").get<std::size_t>();
  h.optimizer = parse_optimizer(jh.at("optimizer").get<std::string>());
  h.lr_decay_steps = jh.value("lr_decay_steps", 0.0);
  h.rms_decay = jh.at("rms_decay").get<double>();
  h.rms_epsilon = jh.at("rms_epsilon").get<double>();
  h.hidden = jh.at("hidden").get<std::vector<int>>();
  NnmcModel model(j.at("num_workers").get<int>(), j.at("num_classes").get<int>(), h);
  Eigen::VectorXd& p = model.mutable_parameters();
  for (const auto& b : model.blocks()) {
    const auto values = j.at("blocks").at(b.name).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(values.size()) != b.size()) {
      throw InvalidArgument("checkpoint block '" + b.name + "' has the wrong size");
    }
    p.segment(b.offset, b.size()) = Eigen::Map<const Eigen::VectorXd>(values.data(), b.size());
  }
  const auto state = j.at("optimizer_state").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(state.size()) != p.size()) {
    throw InvalidArgument("checkpoint optimizer state has the wrong size");
  }
  model.mutable_optimizer_state() = Eigen::Map<const Eigen::VectorXd>(state.data(), p.size());
  model.set_steps(j.value("steps", 0L));
  return model;
}

}  // namespace noisycrowd
