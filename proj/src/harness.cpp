#include "noisycrowd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "noisycrowd/baselines.hpp"

namespace noisycrowd {
namespace {

template <typename T>
T parse_value(std::string_view key, std::string_view text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw InvalidArgument("bad value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "1" || text == "true" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "no") return false;
  throw InvalidArgument("bad boolean '" + std::string(text) + "' for " + std::string(key));
}

std::vector<std::size_t> iota_range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> out(end - begin);
  std::iota(out.begin(), out.end(), begin);
  return out;
}

FeatureMatrix gather_rows(const FeatureMatrix& features, std::span<const std::size_t> rows) {
  FeatureMatrix out(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

nlohmann::json summary_json(const Summary& s) {
  return {{"mean", s.mean}, {"stddev", s.stddev}, {"count", s.count}};
}

std::string percent(const Summary& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%6.2f +- %5.2f", 100.0 * s.mean, 100.0 * s.stddev);
  return buf;
}

}  // namespace

std::string_view to_string(AggregationMethod method) {
  switch (method) {
    case AggregationMethod::kMajority: return "mv";
    case AggregationMethod::kMapTrue: return "map";
    case AggregationMethod::kNnmcOnline: return "nnmc-online";
    case AggregationMethod::kNnmcOffline: return "nnmc-offline";
  }
  return "unknown";
}

AggregationMethod parse_aggregation_method(std::string_view name) {
  if (name == "mv") return AggregationMethod::kMajority;
  if (name == "map") return AggregationMethod::kMapTrue;
  if (name == "nnmc-online") return AggregationMethod::kNnmcOnline;
  if (name == "nnmc-offline") return AggregationMethod::kNnmcOffline;
  throw InvalidArgument("unknown aggregation method '" + std::string(name) + "'");
}

std::string_view to_string(InitLabels labels) {
  return labels == InitLabels::kClean ? "clean" : "noisy-aggregated";
}

InitLabels parse_init_labels(std::string_view name) {
  if (name == "clean") return InitLabels::kClean;
  if (name == "noisy-aggregated") return InitLabels::kNoisyAggregated;
  throw InvalidArgument("unknown init-labels mode '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  if (workers < 1) throw InvalidArgument("workers must be at least 1");
  if (!(empty >= 0.0 && empty < 1.0)) throw InvalidArgument("empty proportion must lie in [0, 1)");
  if (!(noise >= 0.0 && noise <= 0.9)) throw InvalidArgument("noise rate must lie in [0, 0.9]");
  if (noise > 0.0 && noise < 0.1) throw InvalidArgument("a nonzero mean noise rate must lie in [0.1, 0.9]");
  if (pattern == CrowdPattern::kMixed && workers > 10) {
    throw InvalidArgument("mixed pattern supports at most 10 workers");
  }
  if (init_size < 1) throw InvalidArgument("initial set must be non-empty");
  if (batch < 1) throw InvalidArgument("batch size must be positive");
  if (total < init_size + 1) throw InvalidArgument("total must exceed the initial set size");
  if (reps < 1) throw InvalidArgument("reps must be at least 1");
  if (classifier.epochs < 0 || nnmc.epochs_init < 0 || nnmc.epochs_batch < 0 || nnmc.epochs_offline < 0) {
    throw InvalidArgument("epoch counts must be nonnegative");
  }
  if (!(classifier.learning_rate > 0.0) || !(nnmc.learning_rate > 0.0)) {
    throw InvalidArgument("learning rates must be positive");
  }
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j{
      {"name", cfg.name},
      {"dataset", cfg.dataset.generic_string()},
      {"test", cfg.test.generic_string()},
      {"classes", cfg.classes ? nlohmann::json(*cfg.classes) : nlohmann::json(nullptr)},
      {"header", cfg.header},
      {"normalize", cfg.normalize},
      {"workers", cfg.workers},
      {"empty", cfg.empty},
      {"noise", cfg.noise},
      {"pattern", std::string(to_string(cfg.pattern))},
      {"init_size", cfg.init_size},
      {"total", cfg.total},
      {"batch", cfg.batch},
      {"method", std::string(to_string(cfg.aggregation))},
      {"al", cfg.active ? std::string(to_string(*cfg.active)) : std::string("none")},
      {"budget", cfg.budget},
      {"keep_unrelabeled", cfg.keep_unrelabeled},
      {"init_labels", std::string(to_string(cfg.init_labels))},
      {"classifier",
       {{"kind", std::string(to_string(cfg.classifier.kind))},
        {"learning_rate", cfg.classifier.learning_rate},
        {"epochs", cfg.classifier.epochs},
        {"l2", cfg.classifier.l2}}},
      {"nnmc",
       {{"learning_rate", cfg.nnmc.learning_rate},
        {"epochs_init", cfg.nnmc.epochs_init},
        {"epochs_batch", cfg.nnmc.epochs_batch},
        {"epochs_offline", cfg.nnmc.epochs_offline},
        {"offline_batch", cfg.nnmc.offline_batch},
        {"lr_decay_steps", cfg.nnmc.lr_decay_steps},
        {"optimizer", std::string(to_string(cfg.nnmc.optimizer))},
        {"hidden", cfg.nnmc.hidden}}},
      {"reps", cfg.reps},
      {"seed", cfg.seed},
  };
  return j;
}

void apply_override(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "name") cfg.name = value;
  else if (key == "dataset") cfg.dataset = std::string(value);
  else if (key == "test") cfg.test = std::string(value);
  else if (key == "classes") cfg.classes = parse_value<int>(key, value);
  else if (key == "header") cfg.header = parse_bool(key, value);
  else if (key == "normalize") cfg.normalize = parse_bool(key, value);
  else if (key == "workers") cfg.workers = parse_value<int>(key, value);
  else if (key == "empty") cfg.empty = parse_value<double>(key, value);
  else if (key == "noise") cfg.noise = parse_value<double>(key, value);
  else if (key == "pattern") cfg.pattern = parse_crowd_pattern(value);
  else if (key == "init-size") cfg.init_size = parse_value<std::size_t>(key, value);
  else if (key == "total") cfg.total = parse_value<std::size_t>(key, value);
  else if (key == "batch") cfg.batch = parse_value<std::size_t>(key, value);
  else if (key == "method") cfg.aggregation = parse_aggregation_method(value);
  else if (key == "al") cfg.active = parse_active_method(value);
  else if (key == "budget") cfg.budget = parse_value<std::size_t>(key, value);
  else if (key == "keep-unrelabeled") cfg.keep_unrelabeled = parse_bool(key, value);
  else if (key == "init-labels") cfg.init_labels = parse_init_labels(value);
  else if (key == "clf") cfg.classifier.kind = parse_classifier_kind(value);
  else if (key == "clf-lr") cfg.classifier.learning_rate = parse_value<double>(key, value);
  else if (key == "clf-epochs") cfg.classifier.epochs = parse_value<int>(key, value);
  else if (key == "clf-l2") cfg.classifier.l2 = parse_value<double>(key, value);
  else if (key == "lr") cfg.nnmc.learning_rate = parse_value<double>(key, value);
  else if (key == "lr-decay") cfg.nnmc.lr_decay_steps = parse_value<double>(key, value);
  else if (key == "epochs-init") cfg.nnmc.epochs_init = parse_value<int>(key, value);
  else if (key == "epochs-batch") cfg.nnmc.epochs_batch = parse_value<int>(key, value);
  else if (key == "epochs-offline") cfg.nnmc.epochs_offline = parse_value<int>(key, value);
  else if (key == "optimizer") cfg.nnmc.optimizer = parse_optimizer(value);
  else if (key == "reps") cfg.reps = parse_value<int>(key, value);
  else if (key == "seed") cfg.seed = parse_value<std::uint64_t>(key, value);
  else throw InvalidArgument("unknown config key '" + std::string(key) + "'");
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::size_t RunReport::succeeded() const {
  return static_cast<std::size_t>(std::count_if(reps.begin(), reps.end(), [](const auto& r) { return r.ok; }));
}

double evaluate(const ProbClassifier& clf, const Dataset& test) {
  if (test.dim() != clf.dim() || test.num_classes() != clf.num_classes()) {
    throw InvalidArgument("test split does not match the classifier shape");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    correct += clf.predict(test.features().row(static_cast<Eigen::Index>(i))) == test.labels()[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

RepetitionResult run_repetition(const ExperimentConfig& cfg, const Dataset& train, const Dataset* test, int rep) {
  cfg.validate();
  const RngStream rng(cfg.seed, static_cast<std::uint64_t>(rep));
  const int num_classes = train.num_classes();

  const StreamPlan plan = subsample_stream(train.size(), cfg.init_size, cfg.total, cfg.batch,
                                           rng.derive(StreamPurpose::kSubsample));
  const Dataset stream = train.subset(plan.all());
  const std::span<const int> truth = stream.labels();

  const CrowdSpec crowd = make_crowd(cfg.workers, cfg.noise, cfg.empty, cfg.pattern, rng.derive(StreamPurpose::kRates));
  const auto matrices = build_confusions(crowd, num_classes);
  const LabelMatrix labels = annotate(truth, matrices, cfg.empty, rng.derive(StreamPurpose::kNoise));

  // Stream positions: [0, init) is the initial set, then consecutive batches.
  const auto initial_pos = iota_range(0, cfg.init_size);
  std::vector<std::vector<std::size_t>> batch_pos;
  std::size_t start = cfg.init_size;
  for (const auto& b : plan.batches) {
    batch_pos.push_back(iota_range(start, start + b.size()));
    start += b.size();
  }
  const LabelMatrix initial_labels = labels.subset(initial_pos);
  std::vector<LabelMatrix> batch_labels;
  batch_labels.reserve(batch_pos.size());
  for (const auto& p : batch_pos) batch_labels.push_back(labels.subset(p));

  std::vector<std::vector<int>> aggregated;
  std::vector<int> initial_aggregated;
  switch (cfg.aggregation) {
    case AggregationMethod::kMajority:
      initial_aggregated = majority_vote_all(initial_labels);
      for (const auto& b : batch_labels) aggregated.push_back(majority_vote_all(b));
      break;
    case AggregationMethod::kMapTrue: {
      const std::vector<double> uniform(static_cast<std::size_t>(num_classes), 1.0 / num_classes);
      initial_aggregated = aggregate_map_all(initial_labels, matrices, uniform);
      for (const auto& b : batch_labels) aggregated.push_back(aggregate_map_all(b, matrices, uniform));
      break;
    }
    case AggregationMethod::kNnmcOnline: {
      NnmcModel model = init_model(cfg.workers, num_classes, cfg.nnmc, rng.derive(StreamPurpose::kInitWeights));
      auto result = run_online(model, initial_labels, batch_labels);
      aggregated = std::move(result.labels);
      initial_aggregated = std::move(result.initial_labels);
      break;
    }
    case AggregationMethod::kNnmcOffline: {
      NnmcModel model = init_model(cfg.workers, num_classes, cfg.nnmc, rng.derive(StreamPurpose::kInitWeights));
      const auto all = run_offline(model, labels, cfg.nnmc.epochs_offline, rng.derive(StreamPurpose::kOffline));
      initial_aggregated.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cfg.init_size));
      for (const auto& p : batch_pos) {
        std::vector<int> v;
        for (std::size_t i : p) v.push_back(all[i]);
        aggregated.push_back(std::move(v));
      }
      break;
    }
  }

  RepetitionResult out;
  out.rep = rep;
  std::size_t wrong = 0, seen = 0;
  for (std::size_t b = 0; b < batch_pos.size(); ++b) {
    std::vector<int> t;
    for (std::size_t i : batch_pos[b]) t.push_back(truth[i]);
    const double err = label_error_rate(aggregated[b], t);
    out.batch_label_error.push_back(err);
    wrong += static_cast<std::size_t>(std::llround(err * static_cast<double>(t.size())));
    seen += t.size();
  }
  out.label_error = static_cast<double>(wrong) / static_cast<double>(seen);

  ProbClassifier clf(train.dim(), num_classes, cfg.classifier);
  RngStream clf_rng = rng.derive(StreamPurpose::kClassifier);
  {
    const FeatureMatrix x = gather_rows(stream.features(), initial_pos);
    if (cfg.init_labels == InitLabels::kClean) {
      const std::vector<int> y(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(cfg.init_size));
      clf.fit_batch(x, y, clf_rng);
    } else {
      clf.fit_batch(x, initial_aggregated, clf_rng);
    }
  }

  Oracle oracle(std::vector<int>(truth.begin(), truth.end()));
  CleanseOptions options;
  if (cfg.active) options.method = *cfg.active;
  options.budget = cfg.budget;
  options.keep_unrelabeled = cfg.keep_unrelabeled;
  options.epochs = cfg.classifier.epochs;

  for (std::size_t b = 0; b < batch_pos.size(); ++b) {
    const FeatureMatrix x = gather_rows(stream.features(), batch_pos[b]);
    if (cfg.active) {
      const auto outcome = cleanse_batch(x, aggregated[b], batch_pos[b], clf, options, oracle, clf_rng);
      out.oracle_budget_bound += std::min(cfg.budget, outcome.relabeled.size() + outcome.discarded.size());
    } else {
      clf.fit_batch(x, aggregated[b], clf_rng);
    }
    if (cfg.trace_accuracy && test != nullptr) out.batch_accuracy.push_back(evaluate(clf, *test));
  }
  out.oracle_queries = oracle.queries();
  if (test != nullptr) out.final_accuracy = evaluate(clf, *test);
  return out;
}

RunReport run_experiment(const ExperimentConfig& cfg, const Dataset& train, const Dataset* test) {
  cfg.validate();
  if (cfg.total > train.size()) {
    throw InvalidArgument("stream total " + std::to_string(cfg.total) + " exceeds training set size " +
                          std::to_string(train.size()));
  }
  if (test != nullptr && (test->dim() != train.dim() || test->num_classes() != train.num_classes())) {
    throw InvalidArgument("test split shape does not match the training split");
  }
  const auto started = std::chrono::steady_clock::now();

  std::optional<Dataset> scaled_train, scaled_test;
  if (cfg.normalize) {
    const auto scaler = MinMaxScaler::fit(train.features());
    scaled_train = scaler.transform(train);
    if (test != nullptr) scaled_test = scaler.transform(*test);
  }
  const Dataset& tr = scaled_train ? *scaled_train : train;
  const Dataset* te = scaled_test ? &*scaled_test : test;

  RunReport report;
  report.config = cfg;
  report.reps.resize(static_cast<std::size_t>(cfg.reps));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int rep = next++; rep < cfg.reps; rep = next++) {
      auto& slot = report.reps[static_cast<std::size_t>(rep)];
      try {
        slot = run_repetition(cfg, tr, te, rep);
      } catch (const std::exception& e) {
        slot = RepetitionResult{};
        slot.rep = rep;
        slot.ok = false;
        slot.error = e.what();
      }
    }
  };
  unsigned threads = cfg.threads != 0 ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(cfg.reps));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  std::vector<double> errors, accuracies, queries;
  for (const auto& r : report.reps) {
    if (!r.ok) continue;
    errors.push_back(r.label_error);
    if (r.final_accuracy) accuracies.push_back(*r.final_accuracy);
    queries.push_back(static_cast<double>(r.oracle_queries));
  }
  if (errors.empty()) {
    throw Error("every repetition failed; first error: " + report.reps.front().error);
  }
  report.label_error = summarize(errors);
  if (!accuracies.empty()) report.final_accuracy = summarize(accuracies);
  report.oracle_queries = summarize(queries);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

namespace {
struct LoadedData {
  Dataset train;
  std::optional<Dataset> test;
};

LoadedData load_config_data(const ExperimentConfig& cfg) {
  if (cfg.dataset.empty()) throw InvalidArgument("no dataset given");
  LoadOptions opts;
  opts.header = cfg.header;
  opts.num_classes = cfg.classes;
  Dataset train = load_dataset(cfg.dataset, opts);
  std::optional<Dataset> test;
  if (!cfg.test.empty()) {
    opts.split = Split::kTest;
    opts.num_classes = train.num_classes();
    test = load_dataset(cfg.test, opts);
  }
  return {std::move(train), std::move(test)};
}
}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg) {
  const auto data = load_config_data(cfg);
  return run_experiment(cfg, data.train, data.test ? &*data.test : nullptr);
}

nlohmann::json report_to_json(const RunReport& report) {
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : report.reps) {
    nlohmann::json j{{"rep", r.rep}, {"ok", r.ok}};
    if (!r.ok) {
      j["error"] = r.error;
    } else {
      j["label_error"] = r.label_error;
      j["final_accuracy"] = r.final_accuracy ? nlohmann::json(*r.final_accuracy) : nlohmann::json(nullptr);
      j["oracle_queries"] = r.oracle_queries;
      j["batch_label_error"] = r.batch_label_error;
      if (!r.batch_accuracy.empty()) j["batch_accuracy"] = r.batch_accuracy;
    }
    reps.push_back(std::move(j));
  }
  nlohmann::json j{
      {"config", config_to_json(report.config)},
      {"succeeded", report.succeeded()},
      {"summary",
       {{"label_error", summary_json(report.label_error)},
        {"final_accuracy",
         report.final_accuracy ? summary_json(*report.final_accuracy) : nlohmann::json(nullptr)},
        {"oracle_queries", summary_json(report.oracle_queries)}}},
      {"repetitions", std::move(reps)},
  };
  if (report.config.timing) j["wall_clock_seconds"] = report.wall_clock_seconds;
  return j;
}

void write_report_table(std::ostream& out, std::span<const RunReport> reports) {
  out << std::left << std::setw(18) << "name" << std::setw(14) << "method" << std::setw(6) << "al"
      << std::setw(4) << "K" << std::setw(6) << "e" << std::setw(6) << "eps" << std::setw(11) << "pattern"
      << std::setw(8) << "reps" << std::setw(20) << "label error %" << std::setw(20) << "accuracy %"
      << std::setw(10) << "queries" << "seconds\n";
  for (const auto& r : reports) {
    const auto& c = r.config;
    std::ostringstream e, n, q, t;
    e << c.empty;
    n << c.noise;
    q << std::fixed << std::setprecision(1) << r.oracle_queries.mean;
    t << std::fixed << std::setprecision(1) << r.wall_clock_seconds;
    out << std::left << std::setw(18) << (c.name.empty() ? c.dataset.stem().string() : c.name)
        << std::setw(14) << to_string(c.aggregation) << std::setw(6)
        << (c.active ? std::string(to_string(*c.active)) : std::string("none")) << std::setw(4) << c.workers
        << std::setw(6) << e.str() << std::setw(6) << n.str() << std::setw(11) << to_string(c.pattern)
        << std::setw(8) << (std::to_string(r.succeeded()) + "/" + std::to_string(r.reps.size()))
        << std::setw(20) << percent(r.label_error) << std::setw(20)
        << (r.final_accuracy ? percent(*r.final_accuracy) : std::string("-")) << std::setw(10) << q.str()
        << t.str() << '\n';
  }
}

void write_trace_csv(std::ostream& out, const RunReport& report) {
  out << "rep,batch,label_error,accuracy\n";
  for (const auto& r : report.reps) {
    if (!r.ok) continue;
    for (std::size_t b = 0; b < r.batch_label_error.size(); ++b) {
      out << r.rep << ',' << b << ',' << r.batch_label_error[b] << ',';
      if (b < r.batch_accuracy.size()) out << r.batch_accuracy[b];
      out << '\n';
    }
  }
}

std::vector<SweepPoint> sweep(const ExperimentConfig& base, std::span<const SweepAxis> axes, SweepMode mode,
                              const Dataset& train, const Dataset* test) {
  if (axes.empty()) throw InvalidArgument("sweep needs at least one axis");
  for (const auto& a : axes) {
    if (a.values.empty()) throw InvalidArgument("sweep axis '" + a.key + "' has no values");
  }
  std::vector<std::vector<std::pair<std::string, std::string>>> grid;
  if (mode == SweepMode::kSingleAxis) {
    for (const auto& a : axes) {
      for (const auto& v : a.values) grid.push_back({{a.key, v}});
    }
  } else {
    grid.emplace_back();
    for (const auto& a : axes) {
      std::vector<std::vector<std::pair<std::string, std::string>>> next;
      for (const auto& partial : grid) {
        for (const auto& v : a.values) {
          auto p = partial;
          p.emplace_back(a.key, v);
          next.push_back(std::move(p));
        }
      }
      grid = std::move(next);
    }
  }
  std::vector<SweepPoint> out;
  for (auto& overrides : grid) {
    ExperimentConfig cfg = base;
    std::string label;
    for (const auto& [k, v] : overrides) {
      apply_override(cfg, k, v);
      label += (label.empty() ? "" : ",") + k + "=" + v;
    }
    if (cfg.name.empty() || cfg.name == base.name) cfg.name = label;
    out.push_back(SweepPoint{std::move(overrides), run_experiment(cfg, train, test)});
  }
  return out;
}

std::vector<SweepPoint> sweep(const ExperimentConfig& base, std::span<const SweepAxis> axes, SweepMode mode) {
  const auto data = load_config_data(base);
  return sweep(base, axes, mode, data.train, data.test ? &*data.test : nullptr);
}

nlohmann::json sweep_to_json(std::span<const SweepPoint> points) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : points) {
    nlohmann::json ov = nlohmann::json::object();
    for (const auto& [k, v] : p.overrides) ov[k] = v;
    arr.push_back({{"overrides", std::move(ov)}, {"report", report_to_json(p.report)}});
  }
  return {{"points", std::move(arr)}};
}

}  // namespace noisycrowd
