// noisycrowd command line: simulate | aggregate | estimate-cm | run | sweep

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "noisycrowd/baselines.hpp"
#include "noisycrowd/error.hpp"
#include "noisycrowd/harness.hpp"
#include "noisycrowd/mce.hpp"

namespace nc = noisycrowd;
using nlohmann::json;

namespace {

const std::vector<std::string> kConfigKeys = {
    "dataset", "test",      "classes",      "workers",     "empty",  "noise",     "pattern",
    "init-size", "total",   "batch",        "al",          "budget", "reps",      "seed",
    "lr", "lr-decay", "epochs-init", "epochs-batch", "epochs-offline", "optimizer", "clf", "clf-lr",
    "clf-epochs", "clf-l2", "init-labels"};

struct CommonFlags {
  std::map<std::string, std::string> values;
  bool header = false;
  bool normalize = false;
  bool keep_unrelabeled = false;
  bool timing = false;
  unsigned threads = 0;
  std::string out;

  void attach(CLI::App* app, std::initializer_list<std::string_view> keys) {
    for (auto key : keys) {
      std::string k(key);
      app->add_option("--" + k, values[k]);
    }
    app->add_flag("--header", header, "input CSVs start with a header row");
    app->add_option("--out", out, "output file (default stdout)");
  }

  void attach_all(CLI::App* app) {
    for (const auto& k : kConfigKeys) app->add_option("--" + k, values[k]);
    app->add_option("--method", values["method"], "mv|map|nnmc-online|nnmc-offline");
    app->add_flag("--header", header, "input CSVs start with a header row");
    app->add_flag("--normalize", normalize, "min-max scale features using the training split");
    app->add_flag("--keep-unrelabeled", keep_unrelabeled, "train on suspicious samples the oracle skipped");
    app->add_flag("--timing", timing, "include wall-clock seconds in the JSON report");
    app->add_option("--threads", threads, "repetition threads (0 = all cores)");
    app->add_option("--out", out, "JSON report path (default stdout)");
  }

  [[nodiscard]] bool has(const std::string& key) const {
    auto it = values.find(key);
    return it != values.end() && !it->second.empty();
  }
  [[nodiscard]] const std::string& get(const std::string& key) const { return values.at(key); }

  [[nodiscard]] nc::ExperimentConfig config() const {
    nc::ExperimentConfig cfg;
    for (const auto& [k, v] : values) {
      if (!v.empty()) nc::apply_override(cfg, k, v);
    }
    cfg.header = header;
    cfg.normalize = normalize;
    cfg.keep_unrelabeled = keep_unrelabeled;
    cfg.timing = timing;
    cfg.threads = threads;
    return cfg;
  }
};

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw nc::InvalidArgument("cannot open output file '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

nc::Dataset load(const CommonFlags& f, const std::string& key, std::optional<int> classes = {},
                 nc::Split split = nc::Split::kTrain) {
  if (!f.has(key)) throw nc::InvalidArgument("--" + key + " is required");
  nc::LoadOptions opts;
  opts.header = f.header;
  opts.split = split;
  opts.num_classes = classes;
  if (!classes && f.has("classes")) opts.num_classes = std::stoi(f.get("classes"));
  return nc::load_dataset(f.get(key), opts);
}

json matrix_json(const nc::ConfusionMatrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.matrix().rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.matrix().cols()));
    for (Eigen::Index j = 0; j < m.matrix().cols(); ++j) r[static_cast<std::size_t>(j)] = m.matrix()(i, j);
    rows.push_back(r);
  }
  return rows;
}

std::vector<nc::ConfusionMatrix> matrices_from_json(const json& j) {
  std::vector<nc::ConfusionMatrix> out;
  for (const auto& m : j) {
    const auto c = static_cast<Eigen::Index>(m.size());
    Eigen::MatrixXd rows(c, c);
    for (Eigen::Index i = 0; i < c; ++i) {
      for (Eigen::Index k = 0; k < c; ++k) rows(i, k) = m.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k));
    }
    out.emplace_back(std::move(rows));
  }
  return out;
}

nc::LabelMatrixFile read_labels(const std::string& path, std::optional<int> classes) {
  std::ifstream in(path);
  if (!in) throw nc::InvalidArgument("cannot open label file '" + path + "'");
  return nc::read_label_matrix_csv(in, classes);
}

// simulate: subsample (optional), draw a crowd, write the label matrix CSV and
// a JSON sidecar with the crowd and its true matrices.
int cmd_simulate(const CommonFlags& f) {
  const auto cfg = f.config();
  const nc::Dataset ds = load(f, "dataset");
  const nc::RngStream rng(cfg.seed, 0);
  std::vector<std::size_t> ids(ds.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  if (f.has("total")) {
    const auto plan = nc::subsample_stream(ds.size(), 0, cfg.total, cfg.total,
                                           rng.derive(nc::StreamPurpose::kSubsample));
    ids = plan.all();
  }
  const nc::Dataset stream = ds.subset(ids);
  const auto crowd = nc::make_crowd(cfg.workers, cfg.noise, cfg.empty, cfg.pattern,
                                    rng.derive(nc::StreamPurpose::kRates));
  const auto matrices = nc::build_confusions(crowd, ds.num_classes());
  const auto labels = nc::annotate(stream.labels(), matrices, cfg.empty, rng.derive(nc::StreamPurpose::kNoise));

  Output out(f.out);
  nc::write_label_matrix_csv(out.stream(), labels, ids);

  json sidecar{{"crowd", nc::crowd_to_json(crowd)}, {"num_classes", ds.num_classes()}, {"seed", cfg.seed}};
  json ms = json::array();
  for (const auto& m : matrices) ms.push_back(matrix_json(m));
  sidecar["matrices"] = std::move(ms);
  if (!f.out.empty()) {
    std::ofstream side(f.out + ".json");
    side << sidecar.dump(2) << '\n';
  } else {
    std::cerr << sidecar.dump() << '\n';
  }
  return 0;
}

// aggregate: label CSV in, one aggregated label per row out.
int cmd_aggregate(const CommonFlags& f, const std::string& labels_path, const std::string& crowd_path) {
  const auto cfg = f.config();
  std::optional<int> classes;
  if (f.has("classes")) classes = cfg.classes;
  const auto file = read_labels(labels_path, classes);
  const auto& lm = file.labels;
  const int c = lm.num_classes();
  const std::vector<double> uniform(static_cast<std::size_t>(c), 1.0 / c);

  std::vector<int> agg;
  json extra = json::object();
  switch (cfg.aggregation) {
    case nc::AggregationMethod::kMajority:
      agg = nc::majority_vote_all(lm);
      break;
    case nc::AggregationMethod::kMapTrue: {
      if (crowd_path.empty()) throw nc::InvalidArgument("map aggregation needs --crowd (the simulate sidecar)");
      std::ifstream in(crowd_path);
      if (!in) throw nc::InvalidArgument("cannot open crowd file '" + crowd_path + "'");
      const auto matrices = matrices_from_json(json::parse(in).at("matrices"));
      if (static_cast<int>(matrices.size()) != lm.num_workers()) {
        throw nc::InvalidArgument("crowd file worker count does not match the label file");
      }
      agg = nc::aggregate_map_all(lm, matrices, uniform);
      break;
    }
    case nc::AggregationMethod::kNnmcOnline: {
      if (cfg.init_size >= lm.rows()) throw nc::InvalidArgument("--init-size must be below the row count");
      std::vector<std::size_t> init(cfg.init_size);
      std::iota(init.begin(), init.end(), std::size_t{0});
      std::vector<nc::LabelMatrix> batches;
      for (std::size_t s = cfg.init_size; s < lm.rows(); s += cfg.batch) {
        std::vector<std::size_t> idx;
        for (std::size_t i = s; i < std::min(lm.rows(), s + cfg.batch); ++i) idx.push_back(i);
        batches.push_back(lm.subset(idx));
      }
      auto model = nc::init_model(lm.num_workers(), c, cfg.nnmc,
                                  nc::RngStream(cfg.seed, 0).derive(nc::StreamPurpose::kInitWeights));
      auto result = nc::run_online(model, lm.subset(init), batches);
      agg = result.initial_labels;
      for (const auto& b : result.labels) agg.insert(agg.end(), b.begin(), b.end());
      json ms = json::array();
      for (const auto& m : model.confusions()) ms.push_back(matrix_json(m));
      extra["matrices"] = std::move(ms);
      break;
    }
    case nc::AggregationMethod::kNnmcOffline: {
      const nc::RngStream rng(cfg.seed, 0);
      auto model = nc::init_model(lm.num_workers(), c, cfg.nnmc, rng.derive(nc::StreamPurpose::kInitWeights));
      agg = nc::run_offline(model, lm, cfg.nnmc.epochs_offline, rng.derive(nc::StreamPurpose::kOffline));
      json ms = json::array();
      for (const auto& m : model.confusions()) ms.push_back(matrix_json(m));
      extra["matrices"] = std::move(ms);
      break;
    }
  }

  json report{{"method", std::string(nc::to_string(cfg.aggregation))},
              {"rows", lm.rows()},
              {"instance_ids", file.instance_ids},
              {"labels", agg}};
  if (f.has("dataset")) {
    const nc::Dataset ds = load(f, "dataset", c);
    std::vector<int> truth;
    for (std::size_t id : file.instance_ids) {
      if (id >= ds.size()) throw nc::RangeError("instance id " + std::to_string(id) + " outside the dataset");
      truth.push_back(ds.labels()[id]);
    }
    report["label_error"] = nc::label_error_rate(agg, truth);
  }
  report.update(extra);
  Output out(f.out);
  out.stream() << report.dump(2) << '\n';
  return 0;
}

// estimate-cm: per-worker confusion estimation from a trusted subset of the
// dataset plus the crowd labels.
int cmd_estimate_cm(const CommonFlags& f, const std::string& labels_path, std::size_t per_class) {
  const auto cfg = f.config();
  const nc::Dataset raw = load(f, "dataset");
  const nc::Dataset ds = cfg.normalize ? nc::MinMaxScaler::fit(raw.features()).transform(raw) : raw;
  const auto file = read_labels(labels_path, ds.num_classes());
  const nc::RngStream rng(cfg.seed, 0);
  const auto split = nc::draw_trusted_set(ds, per_class, rng.derive(nc::StreamPurpose::kTrusted));

  nc::FeatureMatrix x(static_cast<Eigen::Index>(file.instance_ids.size()), ds.dim());
  for (std::size_t i = 0; i < file.instance_ids.size(); ++i) {
    const std::size_t id = file.instance_ids[i];
    if (id >= ds.size()) throw nc::RangeError("instance id " + std::to_string(id) + " outside the dataset");
    x.row(static_cast<Eigen::Index>(i)) = ds.features().row(static_cast<Eigen::Index>(id));
  }
  const auto result = nc::mce_pipeline(x, file.labels, split.trusted, cfg.classifier, cfg.classifier.epochs,
                                       rng.derive(nc::StreamPurpose::kClassifier));
  json ms = json::array();
  for (const auto& m : result.matrices) ms.push_back(matrix_json(m));
  json report{{"matrices", std::move(ms)},
              {"traces", result.traces},
              {"selected", result.selected},
              {"trusted_per_class", per_class},
              {"trusted_size", split.trusted_indices.size()}};
  Output out(f.out);
  out.stream() << report.dump(2) << '\n';
  return 0;
}

int cmd_run(const CommonFlags& f, const std::string& trace_path) {
  auto cfg = f.config();
  cfg.trace_accuracy = !trace_path.empty();
  const auto report = nc::run_experiment(cfg);
  {
    Output out(f.out);
    out.stream() << nc::report_to_json(report).dump(2) << '\n';
  }
  if (!trace_path.empty()) {
    std::ofstream trace(trace_path);
    if (!trace) throw nc::InvalidArgument("cannot open trace file '" + trace_path + "'");
    nc::write_trace_csv(trace, report);
  }
  std::ostream& table = f.out.empty() ? std::cerr : std::cout;
  nc::write_report_table(table, std::span(&report, 1));
  return 0;
}

int cmd_sweep(const CommonFlags& f, const std::vector<std::string>& axis_specs, bool cartesian) {
  const auto cfg = f.config();
  std::vector<nc::SweepAxis> axes;
  for (const auto& spec : axis_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw nc::InvalidArgument("axis must look like key=v1,v2: " + spec);
    nc::SweepAxis axis{spec.substr(0, eq), {}};
    std::stringstream values(spec.substr(eq + 1));
    for (std::string v; std::getline(values, v, ',');) {
      if (!v.empty()) axis.values.push_back(v);
    }
    axes.push_back(std::move(axis));
  }
  const auto points = nc::sweep(cfg, axes, cartesian ? nc::SweepMode::kCartesian : nc::SweepMode::kSingleAxis);
  {
    Output out(f.out);
    out.stream() << nc::sweep_to_json(points).dump(2) << '\n';
  }
  std::vector<nc::RunReport> reports;
  for (const auto& p : points) reports.push_back(p.report);
  nc::write_report_table(f.out.empty() ? std::cerr : std::cout, reports);
  return 0;
}

int emit_error(const char* kind, const std::string& message, int code, std::optional<std::size_t> line = {}) {
  json err{{"error", {{"kind", kind}, {"message", message}}}};
  if (line) err["error"]["line"] = *line;
  std::cerr << err.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming crowd-label aggregation experiments"};
  app.require_subcommand(1);

  CommonFlags sim_flags, agg_flags, cm_flags, run_flags, sweep_flags;
  std::string labels_path, crowd_path, cm_labels, trace_path;
  std::size_t trusted_per_class = 10;
  std::vector<std::string> axis_specs;
  bool cartesian = false;

  auto* sim = app.add_subcommand("simulate", "synthesize crowd labels for a dataset");
  sim_flags.attach(sim, {"dataset", "classes", "workers", "empty", "noise", "pattern", "total", "seed"});

  auto* agg = app.add_subcommand("aggregate", "aggregate a label matrix");
  agg_flags.attach(agg, {"dataset", "classes", "init-size", "batch", "seed", "lr", "lr-decay", "epochs-init", "epochs-batch",
                         "epochs-offline", "optimizer", "method"});
  agg->add_option("--labels", labels_path, "label matrix CSV from simulate")->required();
  agg->add_option("--crowd", crowd_path, "simulate sidecar with true matrices (for map)");

  auto* cm = app.add_subcommand("estimate-cm", "estimate worker confusion matrices from a trusted set");
  cm_flags.attach(cm, {"dataset", "classes", "seed", "clf", "clf-lr", "clf-epochs", "clf-l2"});
  cm->add_flag("--normalize", cm_flags.normalize, "min-max scale features");
  cm->add_option("--labels", cm_labels, "label matrix CSV from simulate")->required();
  cm->add_option("--trusted-per-class", trusted_per_class, "trusted samples per class");

  auto* run = app.add_subcommand("run", "end-to-end streaming experiment");
  run_flags.attach_all(run);
  run->add_option("--trace", trace_path, "per-batch trace CSV");

  auto* sw = app.add_subcommand("sweep", "run a grid of experiments");
  sweep_flags.attach_all(sw);
  sw->add_option("--axis", axis_specs, "key=v1,v2,... (repeatable)")->required();
  sw->add_flag("--cartesian", cartesian, "cartesian product instead of one axis at a time");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return emit_error("usage", e.what(), 2);
  }

  try {
    if (*sim) return cmd_simulate(sim_flags);
    if (*agg) return cmd_aggregate(agg_flags, labels_path, crowd_path);
    if (*cm) return cmd_estimate_cm(cm_flags, cm_labels, trusted_per_class);
    if (*run) return cmd_run(run_flags, trace_path);
    if (*sw) return cmd_sweep(sweep_flags, axis_specs, cartesian);
  } catch (const nc::ParseError& e) {
    return emit_error(e.kind(), e.what(), 1, e.line());
  } catch (const nc::Error& e) {
    return emit_error(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return emit_error("internal", e.what(), 1);
  }
  return 1;
}
