#include "noisycrowd/crowdsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace noisycrowd {
namespace {

constexpr double kMinRate = 0.1;
constexpr double kMaxRate = 0.9;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

std::vector<int> resolved_flip_set(const NoiseSpec& spec, int num_classes) {
  if (!spec.flip_set.empty()) return spec.flip_set;
  std::vector<int> out;
  for (int c : {2, 3, 4, 5, 9}) {
    if (c < num_classes) out.push_back(c);
  }
  return out;
}

void validate(const NoiseSpec& spec, int num_classes) {
  if (num_classes < 2) {
    if (spec.rate > 0.0) throw InvalidArgument("a noisy worker needs at least 2 classes");
    throw InvalidArgument("confusion matrix needs at least 2 classes");
  }
  if (!(spec.rate >= 0.0 && spec.rate <= 1.0)) throw InvalidArgument("noise rate outside [0, 1]");
  if (!(spec.sigma > 0.0 && spec.sigma1 > 0.0 && spec.sigma2 > 0.0)) {
    throw InvalidArgument("noise pattern widths must be positive");
  }
  if (spec.pattern == NoisePattern::kFlip) {
    if (!spec.flip_targets.empty() && spec.flip_targets.size() != spec.flip_set.size()) {
      throw InvalidArgument("flip_targets must parallel flip_set");
    }
    for (int c : resolved_flip_set(spec, num_classes)) {
      if (c < 0 || c >= num_classes) throw RangeError("flip-set class outside [0, C)");
    }
    for (int t : spec.flip_targets) {
      if (t < 0 || t >= num_classes) throw RangeError("flip target outside [0, C)");
    }
  }
}

// Wrong-class weight profile shared by every row of the truncnorm and bimodal
// patterns: the continuous density evaluated at integer classes.
std::vector<double> class_profile(const NoiseSpec& spec, int num_classes) {
  const double hi = static_cast<double>(num_classes - 1);
  std::vector<double> w(static_cast<std::size_t>(num_classes));
  for (int j = 0; j < num_classes; ++j) {
    const double x = static_cast<double>(j);
    if (spec.pattern == NoisePattern::kTruncnorm) {
      w[static_cast<std::size_t>(j)] = truncated_normal_pdf(x, spec.mu, spec.sigma, 0.0, hi);
    } else {
      w[static_cast<std::size_t>(j)] = 0.5 * truncated_normal_pdf(x, spec.mu1, spec.sigma1, 0.0, hi) +
                                       0.5 * truncated_normal_pdf(x, spec.mu2, spec.sigma2, 0.0, hi);
    }
  }
  return w;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(Eigen::MatrixXd rows) : rows_(std::move(rows)) {
  if (rows_.rows() != rows_.cols() || rows_.rows() < 1) {
    throw InvalidArgument("confusion matrix must be square and non-empty");
  }
  for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows_.cols(); ++j) {
      if (!(rows_(i, j) >= 0.0 && rows_(i, j) <= 1.0)) {
        throw InvalidArgument("confusion matrix entry outside [0, 1]");
      }
    }
    if (std::abs(rows_.row(i).sum() - 1.0) > 1e-9) {
      throw InvalidArgument("confusion matrix row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

ConfusionMatrix ConfusionMatrix::identity(int num_classes) {
  return ConfusionMatrix(Eigen::MatrixXd::Identity(num_classes, num_classes));
}

double max_abs_difference(const ConfusionMatrix& a, const ConfusionMatrix& b) {
  if (a.num_classes() != b.num_classes()) throw InvalidArgument("confusion matrix size mismatch");
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

std::string_view to_string(NoisePattern pattern) {
  switch (pattern) {
    case NoisePattern::kTruncnorm: return "truncnorm";
    case NoisePattern::kBimodal: return "bimodal";
    case NoisePattern::kFlip: return "flip";
    case NoisePattern::kUniform: return "uniform";
  }
  return "unknown";
}

NoisePattern parse_noise_pattern(std::string_view name) {
  if (name == "truncnorm") return NoisePattern::kTruncnorm;
  if (name == "bimodal") return NoisePattern::kBimodal;
  if (name == "flip") return NoisePattern::kFlip;
  if (name == "uniform") return NoisePattern::kUniform;
  throw InvalidArgument("unknown noise pattern '" + std::string(name) + "'");
}

std::string_view to_string(CrowdPattern pattern) {
  switch (pattern) {
    case CrowdPattern::kTruncnorm: return "truncnorm";
    case CrowdPattern::kBimodal: return "bimodal";
    case CrowdPattern::kFlip: return "flip";
    case CrowdPattern::kUniform: return "uniform";
    case CrowdPattern::kMixed: return "mixed";
  }
  return "unknown";
}

CrowdPattern parse_crowd_pattern(std::string_view name) {
  if (name == "mixed") return CrowdPattern::kMixed;
  switch (parse_noise_pattern(name)) {
    case NoisePattern::kTruncnorm: return CrowdPattern::kTruncnorm;
    case NoisePattern::kBimodal: return CrowdPattern::kBimodal;
    case NoisePattern::kFlip: return CrowdPattern::kFlip;
    case NoisePattern::kUniform: return CrowdPattern::kUniform;
  }
  return CrowdPattern::kUniform;
}

double truncated_normal_pdf(double x, double mu, double sigma, double lo, double hi) {
  if (x < lo || x > hi) return 0.0;
  const double z = (x - mu) / sigma;
  const double mass = normal_cdf((hi - mu) / sigma) - normal_cdf((lo - mu) / sigma);
  const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return phi / (sigma * mass);
}

ConfusionMatrix build_confusion(const NoiseSpec& spec, int num_classes) {
  validate(spec, num_classes);
  const int c = num_classes;
  const double eps = spec.rate;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(c, c);

  switch (spec.pattern) {
    case NoisePattern::kUniform:
      for (int i = 0; i < c; ++i) {
        for (int j = 0; j < c; ++j) m(i, j) = i == j ? 1.0 - eps : eps / static_cast<double>(c - 1);
      }
      break;
    case NoisePattern::kTruncnorm:
    case NoisePattern::kBimodal: {
      const auto w = class_profile(spec, c);
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      for (int i = 0; i < c; ++i) {
        const double others = total - w[static_cast<std::size_t>(i)];
        for (int j = 0; j < c; ++j) {
          m(i, j) = i == j ? 1.0 - eps : eps * w[static_cast<std::size_t>(j)] / others;
        }
      }
      break;
    }
    case NoisePattern::kFlip: {
      m.setIdentity();
      const auto set = resolved_flip_set(spec, c);
      for (std::size_t n = 0; n < set.size(); ++n) {
        const int src = set[n];
        const int dst = spec.flip_targets.empty() ? (src + 1) % c : spec.flip_targets[n];
        if (dst == src) throw InvalidArgument("flip target equals source class " + std::to_string(src));
        m(src, src) = 1.0 - eps;
        m(src, dst) = eps;
      }
      break;
    }
  }
  return ConfusionMatrix(std::move(m));
}

std::vector<double> sample_worker_rates(int num_workers, double mean, RngStream& rng) {
  if (num_workers < 1) throw InvalidArgument("need at least one worker");
  if (!(mean >= kMinRate - 1e-12 && mean <= kMaxRate + 1e-12)) {
    throw InvalidArgument("mean noise rate " + std::to_string(mean) + " outside [0.1, 0.9]");
  }
  const auto n = static_cast<std::size_t>(num_workers);
  std::vector<double> rates(n);
  for (double& r : rates) r = rng.uniform(kMinRate, kMaxRate);
  const double avg = std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(n);
  for (double& r : rates) r = std::clamp(r * mean / avg, kMinRate, kMaxRate);

  // Spread the residual over workers that still have room in its direction.
  for (int iter = 0; iter < 100; ++iter) {
    const double deficit = mean * static_cast<double>(n) - std::accumulate(rates.begin(), rates.end(), 0.0);
    if (std::abs(deficit) < 1e-13) break;
    std::vector<std::size_t> free;
    for (std::size_t k = 0; k < n; ++k) {
      if ((deficit > 0 && rates[k] < kMaxRate) || (deficit < 0 && rates[k] > kMinRate)) free.push_back(k);
    }
    if (free.empty()) break;
    const double share = deficit / static_cast<double>(free.size());
    for (std::size_t k : free) rates[k] = std::clamp(rates[k] + share, kMinRate, kMaxRate);
  }
  return rates;
}

std::vector<NoisePattern> mixed_pattern_sequence(int num_workers) {
  static constexpr NoisePattern kSequence[] = {
      NoisePattern::kBimodal, NoisePattern::kTruncnorm, NoisePattern::kFlip, NoisePattern::kUniform,
      NoisePattern::kBimodal, NoisePattern::kTruncnorm, NoisePattern::kFlip, NoisePattern::kUniform,
      NoisePattern::kBimodal, NoisePattern::kTruncnorm};
  if (num_workers < 1) throw InvalidArgument("need at least one worker");
  if (num_workers > 10) throw InvalidArgument("mixed pattern is defined for at most 10 workers");
  return {std::begin(kSequence), std::begin(kSequence) + num_workers};
}

std::vector<NoiseSpec> mixed_pattern_specs(int num_workers, double mean_rate) {
  std::vector<NoiseSpec> out;
  for (NoisePattern p : mixed_pattern_sequence(num_workers)) {
    NoiseSpec s;
    s.pattern = p;
    s.rate = mean_rate;
    out.push_back(s);
  }
  return out;
}

CrowdSpec make_crowd(int num_workers, double mean_rate, double empty_proportion,
                     CrowdPattern pattern, RngStream rng) {
  if (!(empty_proportion >= 0.0 && empty_proportion < 1.0)) {
    throw InvalidArgument("empty proportion outside [0, 1)");
  }
  CrowdSpec crowd;
  crowd.num_workers = num_workers;
  crowd.mean_rate = mean_rate;
  crowd.empty_proportion = empty_proportion;
  if (pattern == CrowdPattern::kMixed) {
    crowd.workers = mixed_pattern_specs(num_workers, mean_rate);
  } else {
    NoiseSpec base;
    base.pattern = parse_noise_pattern(to_string(pattern));
    crowd.workers.assign(static_cast<std::size_t>(num_workers), base);
  }
  // A zero-noise crowd is allowed as a degenerate case outside the sampled range.
  if (mean_rate == 0.0) return crowd;
  const auto rates = sample_worker_rates(num_workers, mean_rate, rng);
  for (std::size_t k = 0; k < rates.size(); ++k) crowd.workers[k].rate = rates[k];
  return crowd;
}

CrowdSpec make_fixed_crowd(int num_workers, double rate, double empty_proportion,
                           NoisePattern pattern) {
  CrowdSpec crowd;
  crowd.num_workers = num_workers;
  crowd.mean_rate = rate;
  crowd.empty_proportion = empty_proportion;
  NoiseSpec s;
  s.pattern = pattern;
  s.rate = rate;
  crowd.workers.assign(static_cast<std::size_t>(num_workers), s);
  return crowd;
}

std::vector<ConfusionMatrix> build_confusions(const CrowdSpec& crowd, int num_classes) {
  std::vector<ConfusionMatrix> out;
  out.reserve(crowd.workers.size());
  for (const auto& w : crowd.workers) out.push_back(build_confusion(w, num_classes));
  return out;
}

LabelMatrix annotate(std::span<const int> truth, std::span<const ConfusionMatrix> matrices,
                     double empty_proportion, RngStream rng) {
  if (matrices.empty()) throw InvalidArgument("need at least one worker");
  if (!(empty_proportion >= 0.0 && empty_proportion < 1.0)) {
    throw InvalidArgument("empty proportion outside [0, 1)");
  }
  const std::size_t n = truth.size();
  const auto workers = static_cast<int>(matrices.size());
  const int c = matrices.front().num_classes();
  const auto kw = static_cast<std::size_t>(workers);

  // Draw every answer first so that restoring a masked entry needs no extra draws.
  std::vector<int> answers(n * kw);
  for (int k = 0; k < workers; ++k) {
    const auto& m = matrices[static_cast<std::size_t>(k)];
    if (m.num_classes() != c) throw InvalidArgument("workers disagree on class count");
    for (std::size_t j = 0; j < n; ++j) {
      const double u = rng.uniform();
      double cum = 0.0;
      int answer = c - 1;
      for (int a = 0; a < c; ++a) {
        cum += m(truth[j], a);
        if (u < cum) {
          answer = a;
          break;
        }
      }
      // Guard against trailing zero-probability classes absorbing rounding slack.
      while (answer > 0 && m(truth[j], answer) == 0.0) --answer;
      answers[j * kw + static_cast<std::size_t>(k)] = answer;
    }
  }

  std::vector<NoisyLabel> entries(answers.begin(), answers.end());
  const auto blanks = static_cast<std::size_t>(std::llround(empty_proportion * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (int k = 0; k < workers; ++k) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < blanks; ++i) {
      std::swap(order[i], order[i + rng.uniform_index(n - i)]);
      entries[order[i] * kw + static_cast<std::size_t>(k)] = std::nullopt;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    bool any = false;
    for (std::size_t k = 0; k < kw; ++k) any = any || entries[j * kw + k].has_value();
    if (!any) {
      const std::size_t k = rng.uniform_index(kw);
      entries[j * kw + k] = answers[j * kw + k];
    }
  }
  return LabelMatrix(n, workers, c, std::move(entries));
}

LabelMatrix annotate(const Dataset& ds, const CrowdSpec& crowd, RngStream rng) {
  const auto matrices = build_confusions(crowd, ds.num_classes());
  return annotate(ds.labels(), matrices, crowd.empty_proportion, rng);
}

nlohmann::json crowd_to_json(const CrowdSpec& crowd) {
  nlohmann::json workers = nlohmann::json::array();
  for (const auto& w : crowd.workers) {
    nlohmann::json j{{"pattern", std::string(to_string(w.pattern))}, {"rate", w.rate}};
    switch (w.pattern) {
      case NoisePattern::kTruncnorm:
        j["mu"] = w.mu;
        j["sigma"] = w.sigma;
        break;
      case NoisePattern::kBimodal:
        j["mu1"] = w.mu1;
        j["sigma1"] = w.sigma1;
        j["mu2"] = w.mu2;
        j["sigma2"] = w.sigma2;
        break;
      case NoisePattern::kFlip:
        j["flip_set"] = w.flip_set;
        j["flip_targets"] = w.flip_targets;
        break;
      case NoisePattern::kUniform:
        break;
    }
    workers.push_back(std::move(j));
  }
  return {{"num_workers", crowd.num_workers},
          {"mean_rate", crowd.mean_rate},
          {"empty_proportion", crowd.empty_proportion},
          {"workers", std::move(workers)}};
}

}  // namespace noisycrowd
