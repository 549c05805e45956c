// Acceptance checks. Usage: acceptance [criterion...]; no arguments runs all.
// Prints one line per criterion. Exit status: 0 all passed, 1 any failed,
// 77 nothing failed but something could not be evaluated.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "noisycrowd/baselines.hpp"
#include "noisycrowd/error.hpp"
#include "noisycrowd/harness.hpp"
#include "noisycrowd/mce.hpp"

using namespace noisycrowd;
namespace fs = std::filesystem;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string pct(double v) { return fmt("%.2f", 100.0 * v); }

fs::path data_dir() {
  if (const char* env = std::getenv("NOISYCROWD_DATA_DIR")) return env;
  return NOISYCROWD_DATA_DIR;
}

LabelMatrix random_labels(std::size_t n, int k, int c, RngStream& r) {
  std::vector<NoisyLabel> e(n * static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (int w = 0; w < k; ++w) {
      if (r.uniform() < 0.85) {
        e[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(w)] =
            static_cast<int>(r.uniform_index(static_cast<std::size_t>(c)));
        any = true;
      }
    }
    if (!any) e[i * static_cast<std::size_t>(k)] = 0;
  }
  return LabelMatrix(n, k, c, std::move(e));
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  RngStream r(101, 0);
  double worst = 0;
  for (int m = 0; m < 20; ++m) {
    const int k = 1 + static_cast<int>(r.uniform_index(3));
    const int c = 2 + static_cast<int>(r.uniform_index(3));
    NnmcHyper h;
    h.hidden = {4, 3};
    auto model = init_model(k, c, h, RngStream(m, 3));
    auto& p = model.mutable_parameters();
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = r.normal();
    const auto y = random_labels(10, k, c, r);
    Eigen::VectorXd g;
    negative_elbo_gradient(model, y, g);
    Eigen::VectorXd fd(g.size());
    const double step = 1e-5;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double keep = model.parameters()(i);
      model.mutable_parameters()(i) = keep + step;
      const double up = -elbo(model, y).elbo;
      model.mutable_parameters()(i) = keep - step;
      const double down = -elbo(model, y).elbo;
      model.mutable_parameters()(i) = keep;
      fd(i) = (up - down) / (2 * step);
    }
    for (const auto& b : model.blocks()) {
      const auto a = g.segment(b.offset, b.size());
      const auto n = fd.segment(b.offset, b.size());
      worst = std::max(worst, (a - n).norm() / std::max({a.norm(), n.norm(), 1e-8}));
    }
  }
  return {worst <= 1e-4 ? Status::kPass : Status::kFail,
          "20 models, worst per-block relative error " + fmt("%.2e", worst) + " (limit 1e-4)"};
}

Outcome oracle_equivalence() {
  RngStream r(202, 0);
  std::size_t rows = 0, mismatches = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const int k = 1 + static_cast<int>(r.uniform_index(10));
    const int c = 2 + static_cast<int>(r.uniform_index(25));
    std::vector<ConfusionMatrix> ms;
    for (int w = 0; w < k; ++w) {
      NoiseSpec s;
      s.pattern = static_cast<NoisePattern>(r.uniform_index(4));
      s.rate = r.uniform(0.1, 0.9);
      ms.push_back(build_confusion(s, c));
    }
    // Workers draw from their own matrices so rows have nonzero likelihood.
    std::vector<int> truth(100);
    for (auto& t : truth) t = static_cast<int>(r.uniform_index(static_cast<std::size_t>(c)));
    const auto y = annotate(truth, ms, 0.2, r.derive(static_cast<std::uint64_t>(trial)));
    auto model = init_model(k, c, NnmcHyper{}, RngStream(trial, 3));
    set_confusions(model, ms);
    const std::vector<double> uniform(static_cast<std::size_t>(c), 1.0 / c);
    const auto got = aggregate_labels(model, y);
    const auto expect = aggregate_map_all(y, ms, uniform);
    for (std::size_t i = 0; i < got.size(); ++i) mismatches += got[i] != expect[i];
    rows += got.size();
  }
  return {mismatches == 0 ? Status::kPass : Status::kFail,
          std::to_string(rows) + " rows, " + std::to_string(mismatches) + " mismatches"};
}

Outcome simulator_fidelity() {
  const int c = 10;
  const int per_class = 200000;
  std::vector<int> truth(static_cast<std::size_t>(c) * per_class);
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(i % c);
  double worst = 0;
  std::string worst_name;
  int n = 0;
  for (auto p : {NoisePattern::kTruncnorm, NoisePattern::kBimodal, NoisePattern::kFlip, NoisePattern::kUniform}) {
    for (double eps : {0.4, 0.6, 0.8}) {
      NoiseSpec s;
      s.pattern = p;
      s.rate = eps;
      const auto m = build_confusion(s, c);
      const auto y = annotate(truth, std::vector<ConfusionMatrix>{m}, 0.0, RngStream(303, n++));
      Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(c, c);
      for (std::size_t i = 0; i < truth.size(); ++i) counts(truth[i], *y.at(i, 0)) += 1;
      counts /= per_class;
      const double d = (counts - m.matrix()).cwiseAbs().maxCoeff();
      if (d > worst) {
        worst = d;
        worst_name = std::string(to_string(p)) + " eps=" + fmt("%.1f", eps);
      }
    }
  }
  NoiseSpec u;
  u.pattern = NoisePattern::kUniform;
  u.rate = 0.6;
  const auto m = build_confusion(u, c);
  bool exact = true;
  for (int i = 0; i < c; ++i) exact = exact && m(i, i) == 1.0 - 0.6;
  const bool ok = worst <= 0.01 && exact;
  return {ok ? Status::kPass : Status::kFail,
          "12 pattern/eps cells, worst max-abs " + fmt("%.4f", worst) + " (" + worst_name +
              ", limit 0.01); uniform 0.6 diagonal exact: " + (exact ? "yes" : "no")};
}

Outcome parameter_recovery() {
  const int k = 6, c = 5;
  const std::size_t n = 2000, init = 50, batch = 50;
  double sum_max = 0, sum_err = 0, sum_oracle = 0, seed_worst = 0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    const RngStream rng(seed, 0);
    RngStream t = rng.derive(StreamPurpose::kSubsample);
    std::vector<int> truth(n);
    for (auto& v : truth) v = static_cast<int>(t.uniform_index(c));
    const auto ms = build_confusions(make_fixed_crowd(k, 0.3, 0.0, NoisePattern::kUniform), c);
    const auto y = annotate(truth, ms, 0.0, rng.derive(StreamPurpose::kNoise));
    std::vector<std::size_t> first(init);
    for (std::size_t i = 0; i < init; ++i) first[i] = i;
    std::vector<LabelMatrix> batches;
    for (std::size_t s = init; s < n; s += batch) {
      std::vector<std::size_t> idx;
      for (std::size_t i = s; i < std::min(n, s + batch); ++i) idx.push_back(i);
      batches.push_back(y.subset(idx));
    }
    auto model = init_model(k, c, NnmcHyper{}, rng.derive(StreamPurpose::kInitWeights));
    const auto res = run_online(model, y.subset(first), batches);
    const auto est = model.confusions();
    double mx = 0;
    for (int w = 0; w < k; ++w) mx = std::max(mx, max_abs_difference(est[w], ms[w]));
    std::vector<int> got, stream_truth;
    for (const auto& b : res.labels) got.insert(got.end(), b.begin(), b.end());
    stream_truth.assign(truth.begin() + static_cast<std::ptrdiff_t>(init), truth.end());
    const std::vector<double> uniform(c, 1.0 / c);
    std::vector<std::size_t> rest;
    for (std::size_t i = init; i < n; ++i) rest.push_back(i);
    const auto oracle = aggregate_map_all(y.subset(rest), ms, uniform);
    sum_max += mx;
    seed_worst = std::max(seed_worst, mx);
    sum_err += label_error_rate(got, stream_truth);
    sum_oracle += label_error_rate(oracle, stream_truth);
  }
  const double mean_max = sum_max / seeds, err = sum_err / seeds, oracle = sum_oracle / seeds;
  const bool ok = mean_max <= 0.1 && err <= oracle + 0.02;
  return {ok ? Status::kPass : Status::kFail,
          "mean over 10 seeds of worst max-abs " + fmt("%.3f", mean_max) + " (limit 0.1, single worst seed " +
              fmt("%.3f", seed_worst) + "); label error " + pct(err) + "% vs oracle " + pct(oracle) +
              "% (+2 allowed)"};
}

// ---------------------------------------------------------------------------
// UCI runs.

struct UciDataset {
  std::string name;
  double reference_error;     // percent
  double reference_accuracy;  // percent
  std::size_t init_size;
  std::size_t total;
};

const std::vector<UciDataset> kUci = {
    {"usps", 29.04, 96.12, 50, 1050},
    {"optdigits", 28.34, 92.36, 50, 1050},
    {"pendigits", 28.85, 91.62, 50, 1050},
    {"letters", 23.51, 88.24, 150, 8000},
};

struct LoadedUci {
  Dataset train;
  Dataset test;
  std::string source;
};

std::optional<LoadedUci> load_uci(const std::string& name) {
  const auto dir = data_dir();
  std::vector<std::string> stems{name};
  // Only the UCI optdigits test file ships with common tooling; a stratified
  // split of it stands in when the published train/test files are absent.
  if (name == "optdigits") stems.push_back("optdigits-tes-split");
  for (const auto& stem : stems) {
    const auto tr = dir / (stem + ".train.csv");
    const auto te = dir / (stem + ".test.csv");
    if (!fs::exists(tr) || !fs::exists(te)) continue;
    LoadOptions o;
    auto train = load_dataset(tr, o);
    o.split = Split::kTest;
    o.num_classes = train.num_classes();
    auto test = load_dataset(te, o);
    return LoadedUci{std::move(train), std::move(test), stem};
  }
  return std::nullopt;
}

ExperimentConfig table3_config(const UciDataset& d, int reps) {
  ExperimentConfig cfg;
  cfg.name = d.name;
  cfg.workers = 6;
  cfg.empty = 0.1;
  cfg.noise = 0.6;
  cfg.pattern = CrowdPattern::kBimodal;
  cfg.init_size = d.init_size;
  cfg.total = d.total;
  cfg.batch = 50;
  cfg.budget = 5;
  cfg.reps = reps;
  cfg.normalize = true;
  return cfg;
}

struct UciRuns {
  std::optional<RunReport> bvsb, lc, none;
};

std::map<std::string, UciRuns>& uci_cache() {
  static std::map<std::string, UciRuns> cache;
  return cache;
}

const RunReport& uci_run(const UciDataset& d, const LoadedUci& data, std::optional<Informativeness> al) {
  auto& runs = uci_cache()[d.name];
  auto& slot = !al ? runs.none : *al == Informativeness::kBvsb ? runs.bvsb : runs.lc;
  if (!slot) {
    auto cfg = table3_config(d, 50);
    cfg.active = al;
    slot = run_experiment(cfg, data.train, &data.test);
  }
  return *slot;
}

Outcome table3() {
  std::ostringstream detail;
  bool failed = false, missing = false;
  for (const auto& d : kUci) {
    const auto data = load_uci(d.name);
    if (!data) {
      detail << d.name << ": unavailable; ";
      missing = true;
      continue;
    }
    const auto& bvsb = uci_run(d, *data, Informativeness::kBvsb);
    const auto& none = uci_run(d, *data, std::nullopt);
    const double err = 100 * bvsb.label_error.mean;
    const double acc = 100 * bvsb.final_accuracy->mean;
    const double base = 100 * none.final_accuracy->mean;
    const bool ok = std::abs(err - d.reference_error) <= 6 && std::abs(acc - d.reference_accuracy) <= 6 && acc >= base + 3;
    failed = failed || !ok;
    detail << d.name << (data->source != d.name ? " [" + data->source + "]" : "") << ": error "
           << fmt("%.2f", err) << " (reference " << fmt("%.2f", d.reference_error) << "), bvsb acc " << fmt("%.2f", acc)
           << " (reference " << fmt("%.2f", d.reference_accuracy) << "), no-relabel acc " << fmt("%.2f", base) << " -> "
           << (ok ? "ok" : "FAIL") << "; ";
  }
  return {failed ? Status::kFail : missing ? Status::kSkip : Status::kPass, detail.str()};
}

Outcome bvsb_vs_lc() {
  std::ostringstream detail;
  bool failed = false, missing = false;
  for (const auto& d : kUci) {
    const auto data = load_uci(d.name);
    if (!data) {
      detail << d.name << ": unavailable; ";
      missing = true;
      continue;
    }
    const double b = 100 * uci_run(d, *data, Informativeness::kBvsb).final_accuracy->mean;
    const double l = 100 * uci_run(d, *data, Informativeness::kLc).final_accuracy->mean;
    const bool ok = b >= l;
    failed = failed || !ok;
    detail << d.name << (data->source != d.name ? " [" + data->source + "]" : "") << ": bvsb " << fmt("%.2f", b)
           << " vs lc " << fmt("%.2f", l) << " -> " << (ok ? "ok" : "FAIL") << "; ";
  }
  return {failed ? Status::kFail : missing ? Status::kSkip : Status::kPass, detail.str()};
}

// ---------------------------------------------------------------------------

Outcome ordering() {
  // Aggregation error depends only on the true labels, so a synthetic
  // 10-class dataset stands in for the feature data; the classifier is
  // irrelevant here and trained minimally.
  const auto train = make_gaussian_blobs(3000, 8, 10, 6.0, RngStream(606, 0));
  ExperimentConfig base;
  base.active = std::nullopt;
  base.classifier.epochs = 1;
  base.reps = 30;
  auto error = [&](const std::string& key, const std::string& value) {
    auto cfg = base;
    if (!key.empty()) apply_override(cfg, key, value);
    return run_experiment(cfg, train, nullptr).label_error.mean;
  };
  std::ostringstream detail;
  bool ok = true;
  auto series = [&](const std::string& key, const std::vector<std::string>& values, bool increasing) {
    std::vector<double> e;
    for (const auto& v : values) e.push_back(error(key, v));
    bool good = true;
    for (std::size_t i = 1; i < e.size(); ++i) good = good && (increasing ? e[i] >= e[i - 1] : e[i] <= e[i - 1]);
    detail << key << " {";
    for (std::size_t i = 0; i < e.size(); ++i) detail << (i ? ", " : "") << values[i] << ": " << pct(e[i]);
    detail << "} " << (good ? "ok" : "FAIL") << "; ";
    ok = ok && good;
  };
  series("workers", {"6", "8", "10"}, false);
  series("empty", {"0.1", "0.2", "0.3"}, true);
  series("noise", {"0.4", "0.6", "0.8"}, true);

  std::vector<std::pair<std::string, double>> patterns;
  for (std::string p : {"truncnorm", "bimodal", "flip", "uniform"}) patterns.emplace_back(p, error("pattern", p));
  const auto worst = std::max_element(patterns.begin(), patterns.end(),
                                      [](const auto& a, const auto& b) { return a.second < b.second; });
  const bool flip_worst = worst->first == "flip";
  detail << "pattern {";
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    detail << (i ? ", " : "") << patterns[i].first << ": " << pct(patterns[i].second);
  }
  detail << "} " << (flip_worst ? "ok" : "FAIL") << "; ";

  const double online = patterns[1].second;  // bimodal is the default config
  const double offline = error("method", "nnmc-offline");
  const double mv = error("method", "mv");
  const bool off_ok = offline <= online, mv_ok = online <= mv;
  detail << "offline " << pct(offline) << " vs online " << pct(online) << (off_ok ? " ok" : " FAIL") << "; mv "
         << pct(mv) << (mv_ok ? " ok" : " FAIL");
  ok = ok && flip_worst && off_ok && mv_ok;
  return {ok ? Status::kPass : Status::kFail, detail.str()};
}

// ---------------------------------------------------------------------------

struct McsSetup {
  Dataset pool;
  TrustedSet trusted;
};

McsSetup mce_data(std::uint64_t seed, std::size_t n) {
  const auto raw = make_gaussian_blobs(n + 500, 10, 10, 8.0, RngStream(seed, 0));
  const auto ds = MinMaxScaler::fit(raw.features()).transform(raw);
  const auto split = draw_trusted_set(ds, 50, RngStream(seed, 5));
  return {ds.subset(split.remaining_indices), split.trusted};
}

Outcome mce_checks() {
  std::ostringstream detail;
  bool ok = true;
  ClassifierHyper hyper;

  // (a) diagonal of each estimate near 1 - eps, entries averaged over seeds.
  {
    const int seeds = 10;
    Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(6, 10);
    double single_worst = 0;
    for (int seed = 0; seed < seeds; ++seed) {
      auto setup = mce_data(801 + seed, 3000);
      const auto ms = build_confusions(make_fixed_crowd(6, 0.4, 0.0, NoisePattern::kUniform), 10);
      const auto y = annotate(setup.pool.labels(), ms, 0.0, RngStream(801 + seed, 2));
      const auto res =
          mce_pipeline(setup.pool.features(), y, setup.trusted, hyper, hyper.epochs, RngStream(801 + seed, 4));
      for (int w = 0; w < 6; ++w) {
        for (int i = 0; i < 10; ++i) {
          diag(w, i) += res.matrices[w](i, i) / seeds;
          single_worst = std::max(single_worst, std::abs(res.matrices[w](i, i) - 0.6));
        }
      }
    }
    const double worst = (diag.array() - 0.6).abs().maxCoeff();
    const bool a = worst <= 0.1;
    ok = ok && a;
    detail << "(a) worst |mean diag - 0.6| over 10 seeds " << fmt("%.3f", worst) << " (single seed worst "
           << fmt("%.3f", single_worst) << ")" << (a ? " ok" : " FAIL") << "; ";
  }

  // (b) the most accurate worker is selected.
  {
    int hits = 0;
    for (int seed = 0; seed < 50; ++seed) {
      auto setup = mce_data(900 + seed, 1000);
      std::vector<NoiseSpec> workers;
      std::vector<double> rates{0.7, 0.5, 0.3, 0.6, 0.4, 0.2};
      RngStream r(900 + seed, 7);
      r.shuffle(std::span<double>(rates));
      CrowdSpec crowd{6, 0.45, 0.0, {}};
      for (double e : rates) crowd.workers.push_back(NoiseSpec{NoisePattern::kUniform, e});
      const auto y = annotate(setup.pool.labels(), build_confusions(crowd, 10), 0.0, RngStream(900 + seed, 2));
      const auto res = mce_pipeline(setup.pool.features(), y, setup.trusted, hyper, 30, RngStream(900 + seed, 4));
      const auto best = static_cast<std::size_t>(std::min_element(rates.begin(), rates.end()) - rates.begin());
      hits += res.selected == best;
    }
    const bool b = hits >= 45;
    ok = ok && b;
    detail << "(b) best worker selected in " << hits << "/50" << (b ? " ok" : " FAIL") << "; ";
  }

  // (c) aggregation with estimated matrices versus the true ones.
  {
    auto setup = mce_data(1001, 5000);
    const auto ms = build_confusions(make_fixed_crowd(6, 0.4, 0.0, NoisePattern::kUniform), 10);
    const auto y = annotate(setup.pool.labels(), ms, 0.0, RngStream(1001, 2));
    const auto res = mce_pipeline(setup.pool.features(), y, setup.trusted, hyper, hyper.epochs, RngStream(1001, 4));
    auto model = init_model(6, 10, NnmcHyper{}, RngStream(1001, 3));
    set_confusions(model, res.matrices);
    const auto est = aggregate_labels(model, y);
    const std::vector<double> uniform(10, 0.1);
    const auto oracle = aggregate_map_all(y, ms, uniform);
    const double e1 = label_error_rate(est, setup.pool.labels());
    const double e0 = label_error_rate(oracle, setup.pool.labels());
    const bool c = e1 <= e0 + 0.02;
    ok = ok && c;
    detail << "(c) error with estimates " << pct(e1) << "% vs true matrices " << pct(e0) << "%" << (c ? " ok" : " FAIL");
  }
  return {ok ? Status::kPass : Status::kFail, detail.str()};
}

// ---------------------------------------------------------------------------

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "noisycrowd_acceptance";
  fs::create_directories(dir);
  const auto train = make_gaussian_blobs(1200, 8, 5, 5.0, RngStream(909, 0));
  const auto test = make_gaussian_blobs(300, 8, 5, 5.0, RngStream(909, 1), Split::kTest);
  auto write = [](const fs::path& p, const Dataset& ds) {
    std::ofstream out(p);
    out.precision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      for (Eigen::Index j = 0; j < ds.dim(); ++j) out << ds.features()(static_cast<Eigen::Index>(i), j) << ',';
      out << ds.labels()[i] << '\n';
    }
  };
  write(dir / "train.csv", train);
  write(dir / "test.csv", test);
  const std::string base = std::string(NOISYCROWD_CLI) + " run --dataset " + (dir / "train.csv").string() +
                           " --test " + (dir / "test.csv").string() + " --reps 4 --seed 17 --out ";
  std::string outputs[2];
  for (int i = 0; i < 2; ++i) {
    const auto out = dir / ("report" + std::to_string(i) + ".json");
    // A different thread count on the second run must not matter either.
    const std::string cmd = base + out.string() + " --threads " + std::to_string(i + 1) + " > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {Status::kFail, "run exited nonzero"};
    std::ifstream in(out, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    outputs[i] = s.str();
  }
  const bool same = !outputs[0].empty() && outputs[0] == outputs[1];
  return {same ? Status::kPass : Status::kFail,
          "two runs, " + std::to_string(outputs[0].size()) + " bytes, " + (same ? "byte-identical" : "DIFFERENT")};
}

struct Criterion {
  int id;
  const char* title;
  double time_limit;  // seconds
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "gradient correctness", 10, gradient_check},
      {2, "oracle equivalence", 5, oracle_equivalence},
      {3, "noise-simulator fidelity", 30, simulator_fidelity},
      {4, "parameter recovery", 120, parameter_recovery},
      {5, "benchmark reproduction", 1800, table3},
      {6, "ordering properties", 1200, ordering},
      {7, "BvSB >= LC", 1800, bvsb_vs_lc},
      {8, "MCE properties", 300, mce_checks},
      {9, "determinism", 600, determinism},
  };
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  bool failed = false, skipped = false;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.status != Status::kSkip && secs > c.time_limit) {
      o.status = Status::kFail;
      o.detail += " [over time limit " + fmt("%.0f", c.time_limit) + "s]";
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    std::cout << "criterion " << c.id << " [" << c.title << "]: " << tag << " - " << o.detail << " ("
              << fmt("%.1f", secs) << "s)" << std::endl;
    failed = failed || o.status == Status::kFail;
    skipped = skipped || o.status == Status::kSkip;
  }
  return failed ? 1 : skipped ? 77 : 0;
}
