#include "noisycrowd/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

namespace noisycrowd {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view field, T& value) {
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  return ec == std::errc() && ptr == field.data() + field.size();
}

}  // namespace

Dataset::Dataset(FeatureMatrix features, std::vector<int> labels, int num_classes, Split split)
    : features_(std::move(features)), labels_(std::move(labels)), num_classes_(num_classes),
      split_(split) {
  if (num_classes_ < 2) throw InvalidArgument("dataset needs at least 2 classes");
  if (labels_.empty()) throw InvalidArgument("dataset is empty");
  if (features_.cols() < 1) throw InvalidArgument("dataset needs at least one feature");
  if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
    throw InvalidArgument("feature row count does not match label count");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || labels_[i] >= num_classes_) {
      throw RangeError("label " + std::to_string(labels_[i]) + " at row " + std::to_string(i) +
                       " outside [0, " + std::to_string(num_classes_) + ")");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  FeatureMatrix f(static_cast<Eigen::Index>(indices.size()), features_.cols());
  std::vector<int> l(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    f.row(static_cast<Eigen::Index>(i)) = features_.row(static_cast<Eigen::Index>(indices[i]));
    l[i] = labels_[indices[i]];
  }
  return Dataset(std::move(f), std::move(l), num_classes_, split_);
}

Dataset parse_dataset(std::istream& in, const LoadOptions& options) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> values;
  std::vector<int> labels;
  std::ptrdiff_t dim = -1;

  if (options.header) {
    if (!std::getline(in, line)) throw ParseError("empty dataset file", 1);
    ++line_no;
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line, options.delimiter);
    if (fields.size() < 2) throw ParseError("expected at least one feature and a label", line_no);
    const auto d = static_cast<std::ptrdiff_t>(fields.size()) - 1;
    if (dim < 0) dim = d;
    if (d != dim) {
      throw ParseError("expected " + std::to_string(dim) + " features, got " + std::to_string(d),
                       line_no);
    }
    for (std::ptrdiff_t j = 0; j < d; ++j) {
      double v;
      if (!parse_number(fields[static_cast<std::size_t>(j)], v)) {
        throw ParseError("malformed numeric field '" +
                             std::string(fields[static_cast<std::size_t>(j)]) + "'",
                         line_no);
      }
      values.push_back(v);
    }
    int label;
    if (!parse_number(fields.back(), label)) {
      throw ParseError("malformed label field '" + std::string(fields.back()) + "'", line_no);
    }
    if (label < 0) throw ParseError("negative class label", line_no);
    if (options.num_classes && label >= *options.num_classes) {
      throw RangeError("label " + std::to_string(label) + " on line " + std::to_string(line_no) +
                       " not below declared class count " + std::to_string(*options.num_classes));
    }
    labels.push_back(label);
  }
  if (labels.empty()) throw ParseError("empty dataset file", line_no);

  FeatureMatrix features(static_cast<Eigen::Index>(labels.size()), dim);
  std::copy(values.begin(), values.end(), features.data());
  const int num_classes =
      options.num_classes.value_or(*std::max_element(labels.begin(), labels.end()) + 1);
  return Dataset(std::move(features), std::move(labels), std::max(num_classes, 2), options.split);
}

Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file " + path.string());
  return parse_dataset(in, options);
}

MinMaxScaler MinMaxScaler::fit(const FeatureMatrix& features) {
  MinMaxScaler s;
  s.min_ = features.colwise().minCoeff();
  s.range_ = features.colwise().maxCoeff() - s.min_;
  return s;
}

FeatureMatrix MinMaxScaler::transform(const FeatureMatrix& features) const {
  FeatureMatrix out(features.rows(), features.cols());
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const double r = range_(j);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      out(i, j) = r > 0.0 ? (features(i, j) - min_(j)) / r : 0.0;
    }
  }
  return out;
}

Dataset MinMaxScaler::transform(const Dataset& ds) const {
  return Dataset(transform(ds.features()), std::vector<int>(ds.labels().begin(), ds.labels().end()),
                 ds.num_classes(), ds.split());
}

Dataset make_gaussian_blobs(std::size_t n, Eigen::Index d, int num_classes, double separation,
                            RngStream rng, Split split) {
  Eigen::MatrixXd centers(num_classes, d);
  for (int c = 0; c < num_classes; ++c) {
    for (Eigen::Index j = 0; j < d; ++j) centers(c, j) = rng.uniform(0.0, separation);
  }
  FeatureMatrix f(static_cast<Eigen::Index>(n), d);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    labels[i] = c;
    for (Eigen::Index j = 0; j < d; ++j) {
      f(static_cast<Eigen::Index>(i), j) = centers(c, j) + rng.normal();
    }
  }
  return Dataset(std::move(f), std::move(labels), num_classes, split);
}

Posterior::Posterior(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw InvalidArgument("posterior over zero classes");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) throw InvalidArgument("posterior entries must be nonnegative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("posterior does not sum to 1");
}

Posterior Posterior::normalized(std::vector<double> weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw InvalidArgument("cannot normalize weights with sum " + std::to_string(sum));
  }
  for (double& w : weights) w /= sum;
  return Posterior(std::move(weights));
}

Posterior Posterior::uniform(int num_classes) {
  return Posterior(std::vector<double>(static_cast<std::size_t>(num_classes),
                                       1.0 / static_cast<double>(num_classes)));
}

int Posterior::argmax() const { return noisycrowd::argmax(probs_); }

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t c = 1; c < values.size(); ++c) {
    if (values[c] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  }
  return best;
}

LabelMatrix::LabelMatrix(std::size_t rows, int num_workers, int num_classes,
                         std::vector<NoisyLabel> entries)
    : rows_(rows), num_workers_(num_workers), num_classes_(num_classes),
      entries_(std::move(entries)) {
  if (num_workers_ < 1) throw InvalidArgument("label matrix needs at least one worker");
  if (num_classes_ < 2) throw InvalidArgument("label matrix needs at least 2 classes");
  if (entries_.size() != rows_ * static_cast<std::size_t>(num_workers_)) {
    throw InvalidArgument("label matrix entry count does not match rows x workers");
  }
  for (std::size_t i = 0; i < rows_; ++i) {
    bool any = false;
    for (const auto& e : row(i)) {
      if (!e) continue;
      if (*e < 0 || *e >= num_classes_) {
        throw RangeError("label " + std::to_string(*e) + " in row " + std::to_string(i) +
                         " outside [0, " + std::to_string(num_classes_) + ")");
      }
      any = true;
    }
    if (!any) throw InvalidArgument("row " + std::to_string(i) + " has no observed labels");
  }
}

std::size_t LabelMatrix::missing_count(int worker) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < rows_; ++i) n += at(i, worker).has_value() ? 0 : 1;
  return n;
}

LabelMatrix LabelMatrix::subset(std::span<const std::size_t> indices) const {
  std::vector<NoisyLabel> out;
  out.reserve(indices.size() * static_cast<std::size_t>(num_workers_));
  for (std::size_t i : indices) {
    auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return LabelMatrix(indices.size(), num_workers_, num_classes_, std::move(out));
}

void write_label_matrix_csv(std::ostream& out, const LabelMatrix& labels,
                            std::span<const std::size_t> instance_ids) {
  if (!instance_ids.empty() && instance_ids.size() != labels.rows()) {
    throw InvalidArgument("instance id count does not match label matrix rows");
  }
  out << "instance_id";
  for (int k = 0; k < labels.num_workers(); ++k) out << ",w" << k;
  out << '\n';
  for (std::size_t i = 0; i < labels.rows(); ++i) {
    out << (instance_ids.empty() ? i : instance_ids[i]);
    for (const auto& e : labels.row(i)) out << ',' << e.value_or(kMissingLabel);
    out << '\n';
  }
}

LabelMatrixFile read_label_matrix_csv(std::istream& in, std::optional<int> num_classes) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty label matrix file", 1);
  auto header = split_fields(line, ',');
  if (header.size() < 2 || header[0] != "instance_id") {
    throw ParseError("expected header 'instance_id,w0,...'", 1);
  }
  const int workers = static_cast<int>(header.size()) - 1;
  std::vector<std::size_t> ids;
  std::vector<NoisyLabel> entries;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line, ',');
    if (static_cast<int>(fields.size()) != workers + 1) {
      throw ParseError("expected " + std::to_string(workers + 1) + " fields", line_no);
    }
    std::size_t id;
    if (!parse_number(fields[0], id)) throw ParseError("malformed instance id", line_no);
    ids.push_back(id);
    for (int k = 0; k < workers; ++k) {
      int v;
      if (!parse_number(fields[static_cast<std::size_t>(k) + 1], v)) {
        throw ParseError("malformed label", line_no);
      }
      if (v == kMissingLabel) {
        entries.emplace_back(std::nullopt);
      } else if (v < 0) {
        throw ParseError("negative label other than the missing marker", line_no);
      } else {
        entries.emplace_back(v);
        max_label = std::max(max_label, v);
      }
    }
  }
  if (ids.empty()) throw ParseError("label matrix has no rows", line_no);
  const int c = num_classes.value_or(std::max(max_label + 1, 2));
  LabelMatrix labels(ids.size(), workers, c, std::move(entries));
  return LabelMatrixFile{std::move(ids), std::move(labels)};
}

std::vector<std::size_t> StreamPlan::all() const {
  std::vector<std::size_t> out(initial);
  for (const auto& b : batches) out.insert(out.end(), b.begin(), b.end());
  return out;
}

StreamPlan subsample_stream(std::size_t dataset_size, std::size_t init_size, std::size_t total,
                            std::size_t batch, RngStream rng) {
  if (batch == 0) throw InvalidArgument("batch size must be positive");
  if (total > dataset_size) {
    throw InvalidArgument("stream total " + std::to_string(total) + " exceeds dataset size " +
                          std::to_string(dataset_size));
  }
  if (total < init_size + 1) {
    throw InvalidArgument("stream total must leave room for at least one batch after the initial set");
  }
  std::vector<std::size_t> perm(dataset_size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  // Partial Fisher-Yates: only the first `total` positions are needed.
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t j = i + rng.uniform_index(dataset_size - i);
    std::swap(perm[i], perm[j]);
  }
  StreamPlan plan;
  plan.initial.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(init_size));
  for (std::size_t start = init_size; start < total; start += batch) {
    const std::size_t end = std::min(total, start + batch);
    plan.batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                              perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

}  // namespace noisycrowd
