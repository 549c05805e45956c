#include <doctest.h>

#include <cmath>

#include "noisycrowd/baselines.hpp"
#include "noisycrowd/error.hpp"
#include "noisycrowd/nnmc.hpp"

using namespace noisycrowd;

namespace {

NnmcHyper tiny_hyper() {
  NnmcHyper h;
  h.hidden = {4, 3};
  return h;
}

LabelMatrix random_labels(std::size_t n, int k, int c, RngStream& r, double missing = 0.2) {
  std::vector<NoisyLabel> e(n * static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (int w = 0; w < k; ++w) {
      auto& y = e[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(w)];
      if (r.uniform() >= missing) {
        y = static_cast<int>(r.uniform_index(static_cast<std::size_t>(c)));
        any = true;
      }
    }
    if (!any) e[i * static_cast<std::size_t>(k)] = 0;
  }
  return LabelMatrix(n, k, c, std::move(e));
}

void randomize(NnmcModel& m, RngStream& r, double scale = 1.0) {
  auto& p = m.mutable_parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = scale * r.normal();
}

// Mean log p(Y) by exact enumeration over the true label.
double mean_log_likelihood(const NnmcModel& m, const LabelMatrix& y) {
  const auto ms = m.confusions();
  const auto prior = m.prior();
  double s = 0;
  for (std::size_t i = 0; i < y.rows(); ++i) s += log_marginal_likelihood(y.row(i), ms, prior);
  return s / static_cast<double>(y.rows());
}

// Per-block relative error of the analytic gradient against central
// differences of -ELBO.
double worst_gradient_error(NnmcModel& m, const LabelMatrix& y, double h = 1e-5) {
  Eigen::VectorXd g;
  negative_elbo_gradient(m, y, g);
  Eigen::VectorXd fd(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double keep = m.parameters()(i);
    m.mutable_parameters()(i) = keep + h;
    const double up = -elbo(m, y).elbo;
    m.mutable_parameters()(i) = keep - h;
    const double down = -elbo(m, y).elbo;
    m.mutable_parameters()(i) = keep;
    fd(i) = (up - down) / (2 * h);
  }
  double worst = 0;
  for (const auto& b : m.blocks()) {
    const auto a = g.segment(b.offset, b.size());
    const auto n = fd.segment(b.offset, b.size());
    const double scale = std::max({a.norm(), n.norm(), 1e-8});
    worst = std::max(worst, (a - n).norm() / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("initial confusion diagonal and prior") {
  const auto m = init_model(6, 10, NnmcHyper{}, RngStream(0, 3));
  const double diag = std::exp(2.0) / (std::exp(2.0) + 9.0);
  for (const auto& c : m.confusions()) {
    for (int i = 0; i < 10; ++i) CHECK(c(i, i) == doctest::Approx(diag).epsilon(1e-12));
  }
  CHECK(diag == doctest::Approx(0.4508).epsilon(1e-4));
  for (double p : m.prior()) CHECK(p == 0.1);
}

TEST_CASE("init is deterministic and respects the fan-in bound") {
  const auto a = init_model(3, 4, NnmcHyper{}, RngStream(5, 3));
  const auto b = init_model(3, 4, NnmcHyper{}, RngStream(5, 3));
  CHECK(a.parameters() == b.parameters());
  const auto& w0 = a.block("q.w0");
  const double bound = 1.0 / std::sqrt(static_cast<double>(a.input_size()));
  CHECK(a.view(w0).cwiseAbs().maxCoeff() <= bound);
  CHECK(a.view(a.block("q.b0")).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.optimizer_state().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("row encoding") {
  const std::vector<NoisyLabel> row{1, std::nullopt};
  const auto v = encode_row(row, 3);
  Eigen::VectorXd expect(8);
  expect << 0, 1, 0, 0, 0, 0, 0, 1;
  CHECK(v == expect);
  const std::vector<NoisyLabel> blank{std::nullopt, std::nullopt, std::nullopt};
  const auto e = encode_row(blank, 4);
  CHECK(e.size() == 15);
  CHECK(e.sum() == 3.0);
  CHECK(e(4) == 1.0);
  CHECK(e(9) == 1.0);
  CHECK(e(14) == 1.0);
}

TEST_CASE("q outputs valid posteriors") {
  RngStream r(1, 0);
  auto m = init_model(3, 4, tiny_hyper(), RngStream(1, 3));
  randomize(m, r, 3.0);
  const auto y = random_labels(30, 3, 4, r);
  for (const auto& p : q_posteriors(m, y)) {
    double s = 0;
    for (double v : p.probs()) {
      CHECK(v >= 0);
      s += v;
    }
    CHECK(std::abs(s - 1) < 1e-9);
  }
}

TEST_CASE("elbo with the exact posterior equals the log likelihood") {
  RngStream r(2, 0);
  auto m = init_model(4, 5, tiny_hyper(), RngStream(2, 3));
  randomize(m, r);
  const auto y = random_labels(40, 4, 5, r);
  const auto exact = exact_posteriors(y, m.confusions(), m.prior());
  const auto rep = elbo_with_q(m, y, exact);
  CHECK(rep.elbo == doctest::Approx(mean_log_likelihood(m, y)).epsilon(1e-9));
  CHECK(rep.elbo == doctest::Approx(rep.reconstruction + rep.entropy).epsilon(1e-12));
}

TEST_CASE("elbo never exceeds the log likelihood") {
  RngStream r(3, 0);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = init_model(3, 4, tiny_hyper(), RngStream(trial, 3));
    randomize(m, r, 2.0);
    const auto y = random_labels(15, 3, 4, r);
    CHECK(elbo(m, y).elbo <= mean_log_likelihood(m, y) + 1e-12);
  }
}

TEST_CASE("uniform everything gives -log 2") {
  auto m = init_model(1, 2, tiny_hyper(), RngStream(0, 3));
  const std::vector<ConfusionMatrix> half{ConfusionMatrix(Eigen::MatrixXd::Constant(2, 2, 0.5))};
  set_confusions(m, half);
  const LabelMatrix y(1, 1, 2, {1});
  const std::vector<Posterior> q{Posterior::uniform(2)};
  CHECK(elbo_with_q(m, y, q).elbo == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("near-identity worker with one-hot q leaves only the prior term") {
  auto m = init_model(1, 4, tiny_hyper(), RngStream(0, 3));
  const std::vector<ConfusionMatrix> id{ConfusionMatrix::identity(4)};
  set_confusions(m, id);
  const LabelMatrix y(1, 1, 4, {2});
  const std::vector<Posterior> q{Posterior({0, 0, 1, 0})};
  CHECK(elbo_with_q(m, y, q).elbo == doctest::Approx(std::log(0.25)).epsilon(1e-9));
}

TEST_CASE("analytic gradient matches finite differences") {
  RngStream r(4, 0);
  auto m = init_model(2, 3, tiny_hyper(), RngStream(4, 3));
  randomize(m, r);
  const auto y = random_labels(12, 2, 3, r);
  CHECK(worst_gradient_error(m, y) <= 1e-4);
}

TEST_CASE("gradient blocks cover the whole parameter vector") {
  const auto m = init_model(2, 3, tiny_hyper(), RngStream(0, 3));
  Eigen::Index total = 0;
  for (const auto& b : m.blocks()) {
    CHECK(b.offset == total);
    total += b.size();
  }
  CHECK(total == m.parameters().size());
  CHECK(m.block("worker_logits").size() == 2 * 3 * 3);
  CHECK(m.block("q.w0").cols == 8);
  CHECK(m.block("q.w2").rows == 3);
}

TEST_CASE("update_batch raises the elbo at the default learning rate") {
  RngStream r(5, 0);
  const auto crowd = make_fixed_crowd(6, 0.3, 0.1, NoisePattern::kUniform);
  std::vector<int> truth(200);
  for (auto& t : truth) t = static_cast<int>(r.uniform_index(5));
  const auto y = annotate(truth, build_confusions(crowd, 5), 0.1, RngStream(5, 2));
  auto m = init_model(6, 5, NnmcHyper{}, RngStream(5, 3));
  const double before = elbo(m, y).elbo;
  const auto after = update_batch(m, y, 50);
  CHECK(after.elbo >= before - 1e-6);
  CHECK(elbo(m, y).elbo == doctest::Approx(after.elbo).epsilon(1e-12));
  CHECK(m.steps() == 50);
}

TEST_CASE("zero epochs leave the model alone") {
  RngStream r(6, 0);
  auto m = init_model(2, 3, tiny_hyper(), RngStream(6, 3));
  const auto before = m.parameters();
  update_batch(m, random_labels(5, 2, 3, r), 0);
  CHECK(m.parameters() == before);
  CHECK(m.steps() == 0);
}

TEST_CASE("matrices stay row-stochastic through training") {
  RngStream r(7, 0);
  auto m = init_model(3, 4, tiny_hyper(), RngStream(7, 3));
  const auto y = random_labels(20, 3, 4, r);
  for (int i = 0; i < 5; ++i) {
    update_batch(m, y, 20);
    for (const auto& c : m.confusions()) {
      for (int t = 0; t < 4; ++t) CHECK(std::abs(c.matrix().row(t).sum() - 1) < 1e-9);
    }
    double s = 0;
    for (double p : m.prior()) s += p;
    CHECK(std::abs(s - 1) < 1e-9);
  }
}

TEST_CASE("frozen true matrices aggregate like the exact oracle") {
  RngStream r(8, 0);
  std::vector<ConfusionMatrix> truth_m;
  for (int k = 0; k < 5; ++k) {
    NoiseSpec s;
    s.pattern = k % 2 ? NoisePattern::kBimodal : NoisePattern::kUniform;
    s.rate = 0.2 + 0.1 * k;
    truth_m.push_back(build_confusion(s, 10));
  }
  auto m = init_model(5, 10, NnmcHyper{}, RngStream(8, 3));
  set_confusions(m, truth_m);
  const auto y = random_labels(300, 5, 10, r);
  const auto got = aggregate_labels(m, y);
  const std::vector<double> uniform(10, 0.1);
  CHECK(got == aggregate_map_all(y, truth_m, uniform));
  const auto back = m.confusions();
  for (int k = 0; k < 5; ++k) CHECK(max_abs_difference(back[k], truth_m[k]) <= 1e-9);
}

TEST_CASE("an update clears pinned matrices") {
  RngStream r(9, 0);
  auto m = init_model(2, 3, tiny_hyper(), RngStream(9, 3));
  const std::vector<ConfusionMatrix> id(2, ConfusionMatrix::identity(3));
  set_confusions(m, id);
  CHECK(m.confusions()[0](0, 0) == 1.0);
  update_batch(m, random_labels(10, 2, 3, r), 1);
  CHECK(m.confusions()[0](0, 0) < 1.0);
}

TEST_CASE("on-line run with no batches only initializes") {
  RngStream r(10, 0);
  auto m = init_model(2, 3, tiny_hyper(), RngStream(10, 3));
  const auto init = random_labels(10, 2, 3, r);
  const auto res = run_online(m, init, {});
  CHECK(res.labels.empty());
  CHECK(res.initial_labels.size() == 10);
  CHECK(m.steps() == m.hyper().epochs_init);
}

TEST_CASE("off-line single row with one worker keeps its answer") {
  auto m = init_model(1, 4, NnmcHyper{}, RngStream(11, 3));
  const LabelMatrix y(1, 1, 4, {3});
  CHECK(run_offline(m, y, 5, RngStream(11, 6)) == std::vector<int>{3});
}

TEST_CASE("non-finite parameters are reported by block") {
  RngStream r(12, 0);
  auto m = init_model(2, 3, tiny_hyper(), RngStream(12, 3));
  m.mutable_view(m.block("q.w1"))(0, 0) = std::nan("");
  try {
    update_batch(m, random_labels(5, 2, 3, r), 1);
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& e) {
    CHECK(std::string(e.what()).find("q.w1") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip") {
  RngStream r(13, 0);
  auto m = init_model(3, 4, tiny_hyper(), RngStream(13, 3));
  update_batch(m, random_labels(20, 3, 4, r), 3);
  const auto j = model_to_json(m);
  const auto back = model_from_json(nlohmann::json::parse(j.dump()));
  CHECK((back.parameters() - m.parameters()).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((back.optimizer_state() - m.optimizer_state()).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(back.steps() == m.steps());
  CHECK_THROWS(model_from_json(nlohmann::json{{"format", "other"}}));
}

TEST_CASE("off-line aggregation on a CIFAR-sized synthetic label set") {
  // 10 classes, six uniform eps = 0.4 workers; error should land in single digits.
  RngStream r(14, 0);
  const std::size_t n = 10000;
  std::vector<int> truth(n);
  for (std::size_t i = 0; i < n; ++i) truth[i] = static_cast<int>(i % 10);
  const auto crowd = make_fixed_crowd(6, 0.4, 0.0, NoisePattern::kUniform);
  const auto y = annotate(truth, build_confusions(crowd, 10), 0.0, RngStream(14, 2));
  auto m = init_model(6, 10, NnmcHyper{}, RngStream(14, 3));
  const auto got = run_offline(m, y, 5, RngStream(14, 6));
  const double err = label_error_rate(got, truth);
  CHECK(err < 0.1147);
  CHECK(err > 0.0347);
}
