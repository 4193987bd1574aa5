#include "gossipgrid/learning.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "gossipgrid/error.hpp"

namespace gossipgrid {

bool ModelVector::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void LabeledDataset::append(const LabeledDataset& other, std::size_t i) {
  const auto r = other.row(i);
  features.insert(features.end(), r.begin(), r.end());
  labels.push_back(other.labels[i]);
  if (!other.targets.empty()) targets.push_back(other.targets[i]);
}

void LabeledDataset::validate(std::size_t class_count) const {
  if (features.size() != labels.size() * feature_dim) {
    throw DimensionError("feature matrix has " + std::to_string(features.size()) +
                         " entries, expected " + std::to_string(labels.size() * feature_dim));
  }
  if (!targets.empty() && targets.size() != labels.size()) {
    throw DimensionError("target count differs from label count");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 ||
        (class_count > 0 && static_cast<std::size_t>(labels[i]) >= class_count)) {
      throw InvalidArgument("label " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " outside [0, " + std::to_string(class_count) +
                            ")");
    }
  }
}

std::size_t TaskSpec::model_dim() const {
  return kind == TaskKind::kLeastSquares ? feature_dim : feature_dim * class_count;
}

void TaskSpec::validate() const {
  if (feature_dim == 0) throw InvalidArgument("feature_dim must be positive");
  if (kind == TaskKind::kLogistic && class_count < 2) {
    throw InvalidArgument("logistic task needs at least 2 classes");
  }
  if (!(l2_regularization >= 0.0) || !std::isfinite(l2_regularization)) {
    throw InvalidArgument("l2_regularization must be a non-negative finite number");
  }
}

namespace {

void check_dims(const ModelVector& model, const LabeledDataset& data, const TaskSpec& task) {
  if (data.feature_dim != task.feature_dim) {
    throw DimensionError("dataset has " + std::to_string(data.feature_dim) +
                         " features, task expects " + std::to_string(task.feature_dim));
  }
  if (model.size() != task.model_dim()) {
    throw DimensionError("model has dimension " + std::to_string(model.size()) +
                         ", task expects " + std::to_string(task.model_dim()));
  }
}

double dot(std::span<const double> a, const double* b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void class_scores(const ModelVector& model, std::span<const double> sample, std::size_t classes,
                  std::vector<double>& scores) {
  const auto f = sample.size();
  scores.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) scores[c] = dot(sample, model.values.data() + c * f);
}

double l2_term(const ModelVector& model, double l2) {
  if (l2 == 0.0) return 0.0;
  double sq = 0.0;
  for (double v : model.values) sq += v * v;
  return 0.5 * l2 * sq;
}

}  // namespace

double loss(const ModelVector& model, const LabeledDataset& dataset, const TaskSpec& task) {
  check_dims(model, dataset, task);
  if (dataset.empty()) throw InvalidArgument("loss of an empty dataset");
  double total = 0.0;
  if (task.kind == TaskKind::kLeastSquares) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const double r = dot(dataset.row(i), model.values.data()) - dataset.target(i);
      total += 0.5 * r * r;
    }
  } else {
    std::vector<double> scores;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      class_scores(model, dataset.row(i), task.class_count, scores);
      const double peak = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (double s : scores) z += std::exp(s - peak);
      total += peak + std::log(z) - scores[static_cast<std::size_t>(dataset.labels[i])];
    }
  }
  return total / static_cast<double>(dataset.size()) + l2_term(model, task.l2_regularization);
}

void gradient_over(const ModelVector& model, const LabeledDataset& data,
                   std::span<const std::size_t> indices, const TaskSpec& task,
                   std::vector<double>& out) {
  if (indices.empty()) throw InvalidArgument("gradient of an empty batch");
  const auto f = task.feature_dim;
  out.assign(model.size(), 0.0);
  if (task.kind == TaskKind::kLeastSquares) {
    for (auto i : indices) {
      const auto a = data.row(i);
      const double r = dot(a, model.values.data()) - data.target(i);
      for (std::size_t k = 0; k < f; ++k) out[k] += r * a[k];
    }
  } else {
    std::vector<double> scores;
    for (auto i : indices) {
      const auto a = data.row(i);
      class_scores(model, a, task.class_count, scores);
      const double peak = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (auto& s : scores) {
        s = std::exp(s - peak);
        z += s;
      }
      const auto label = static_cast<std::size_t>(data.labels[i]);
      for (std::size_t c = 0; c < task.class_count; ++c) {
        const double coeff = scores[c] / z - (c == label ? 1.0 : 0.0);
        double* block = out.data() + c * f;
        for (std::size_t k = 0; k < f; ++k) block[k] += coeff * a[k];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = out[k] * inv + task.l2_regularization * model.values[k];
  }
}

ModelVector gradient(const ModelVector& model, const LabeledDataset& batch, const TaskSpec& task) {
  check_dims(model, batch, task);
  if (batch.empty()) throw InvalidArgument("gradient of an empty batch");
  std::vector<std::size_t> all(batch.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> out;
  gradient_over(model, batch, all, task, out);
  return ModelVector(std::move(out));
}

BatchSampler::BatchSampler(std::size_t dataset_size, std::uint64_t seed)
    : rng_(seed), order_(dataset_size) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchSampler::reshuffle() {
  shuffle(std::span<std::size_t>(order_), rng_);
  cursor_ = 0;
}

std::span<const std::size_t> BatchSampler::next(std::size_t batch_size) {
  const auto b = std::min(batch_size, order_.size());
  if (order_.size() - cursor_ < b) reshuffle();
  std::span<const std::size_t> batch(order_.data() + cursor_, b);
  cursor_ += b;
  return batch;
}

void sgd_local_update_inplace(ModelVector& model, const LabeledDataset& data, const TaskSpec& task,
                              double learning_rate, std::size_t local_steps,
                              std::size_t batch_size, BatchSampler& sampler,
                              std::vector<double>& scratch) {
  if (local_steps == 0) return;
  check_dims(model, data, task);
  if (data.empty()) throw InvalidArgument("local update on an empty dataset");
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (sampler.dataset_size() != data.size()) {
    throw DimensionError("sampler was built for a different dataset size");
  }
  for (std::size_t step = 0; step < local_steps; ++step) {
    gradient_over(model, data, sampler.next(batch_size), task, scratch);
    for (std::size_t k = 0; k < model.size(); ++k) model.values[k] -= learning_rate * scratch[k];
  }
}

ModelVector sgd_local_update(ModelVector model, const LabeledDataset& data, const TaskSpec& task,
                             double learning_rate, std::size_t local_steps, std::size_t batch_size,
                             BatchSampler& sampler) {
  std::vector<double> scratch;
  sgd_local_update_inplace(model, data, task, learning_rate, local_steps, batch_size, sampler,
                           scratch);
  return model;
}

int predict_class(const ModelVector& model, std::span<const double> sample, const TaskSpec& task) {
  const auto f = task.feature_dim;
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < task.class_count; ++c) {
    const double s = dot(sample, model.values.data() + c * f);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(c);
    }
  }
  return best;
}

double evaluate_accuracy(const ModelVector& model, const LabeledDataset& testset,
                         const TaskSpec& task) {
  if (task.kind != TaskKind::kLogistic) {
    throw InvalidArgument("accuracy is only defined for classification tasks");
  }
  check_dims(model, testset, task);
  if (testset.empty()) throw InvalidArgument("accuracy on an empty test set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < testset.size(); ++i) {
    if (predict_class(model, testset.row(i), task) == testset.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(testset.size());
}

std::vector<LabeledDataset> shard_partition(const LabeledDataset& dataset, std::size_t n,
                                            std::size_t shards_per_node, std::uint64_t seed) {
  if (n == 0 || shards_per_node == 0) {
    throw InvalidArgument("node count and shards per node must be positive");
  }
  const auto shard_count = n * shards_per_node;
  if (dataset.size() < shard_count) {
    throw InvalidArgument("dataset of " + std::to_string(dataset.size()) +
                          " samples cannot fill " + std::to_string(shard_count) + " shards");
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dataset.labels[a] < dataset.labels[b];
  });

  // The first `extra` shards carry one more sample.
  const auto base = dataset.size() / shard_count;
  const auto extra = dataset.size() % shard_count;
  std::vector<std::size_t> shard_begin(shard_count + 1, 0);
  for (std::size_t s = 0; s < shard_count; ++s) {
    shard_begin[s + 1] = shard_begin[s] + base + (s < extra ? 1 : 0);
  }

  std::vector<std::size_t> assignment(shard_count);
  std::iota(assignment.begin(), assignment.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0, 0, StreamPurpose::kPartition));
  shuffle(std::span<std::size_t>(assignment), rng);

  std::vector<LabeledDataset> parts(n);
  for (std::size_t node = 0; node < n; ++node) {
    auto& part = parts[node];
    part.feature_dim = dataset.feature_dim;
    for (std::size_t k = 0; k < shards_per_node; ++k) {
      const auto shard = assignment[node * shards_per_node + k];
      for (auto pos = shard_begin[shard]; pos < shard_begin[shard + 1]; ++pos) {
        part.append(dataset, order[pos]);
      }
    }
  }
  return parts;
}

namespace {

void fill_split(LabeledDataset& split, std::size_t count, const std::vector<double>& centers,
                std::size_t classes, std::size_t f, const std::vector<double>& noise, Rng& rng) {
  split.feature_dim = f;
  split.features.reserve(count * f);
  split.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto c = i % classes;
    for (std::size_t k = 0; k < f; ++k) {
      split.features.push_back(centers[c * f + k] + noise[k] * standard_normal(rng));
    }
    split.labels.push_back(static_cast<int>(c));
  }
}

}  // namespace

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.feature_dim == 0 || spec.class_count < 2) {
    throw InvalidArgument("synthetic data needs feature_dim > 0 and at least 2 classes");
  }
  if (!(spec.noise >= 0.0) || !(spec.separation >= 0.0)) {
    throw InvalidArgument("noise and separation must be non-negative");
  }
  if (!(spec.noise_spread >= 1.0) || !std::isfinite(spec.noise_spread)) {
    throw InvalidArgument("noise_spread must be finite and at least 1");
  }
  const auto f = spec.feature_dim;
  const auto classes = spec.class_count;
  Rng center_rng(derive_seed(spec.seed, 0, 0, StreamPurpose::kDataset));
  std::vector<double> centers(classes * f);
  for (auto& c : centers) c = spec.separation * standard_normal(center_rng);
  std::vector<double> noise(f, spec.noise);
  if (spec.noise_spread != 1.0 && f > 1) {
    for (std::size_t k = 0; k < f; ++k) {
      noise[k] = spec.noise * std::pow(spec.noise_spread, -static_cast<double>(k) /
                                                              static_cast<double>(f - 1));
    }
  }

  SyntheticData out;
  Rng train_rng(derive_seed(spec.seed, 1, 0, StreamPurpose::kDataset));
  Rng val_rng(derive_seed(spec.seed, 2, 0, StreamPurpose::kDataset));
  Rng test_rng(derive_seed(spec.seed, 3, 0, StreamPurpose::kDataset));
  fill_split(out.train, spec.train_samples, centers, classes, f, noise, train_rng);
  fill_split(out.validation, spec.eval_samples, centers, classes, f, noise, val_rng);
  fill_split(out.test, spec.eval_samples, centers, classes, f, noise, test_rng);
  return out;
}

LabeledDataset make_linear_regression(std::size_t samples, std::size_t feature_dim, double noise,
                                      std::uint64_t seed, ModelVector* true_model) {
  Rng rng(derive_seed(seed, 0, 0, StreamPurpose::kDataset));
  ModelVector truth(feature_dim);
  for (auto& v : truth.values) v = standard_normal(rng);
  LabeledDataset data;
  data.feature_dim = feature_dim;
  for (std::size_t i = 0; i < samples; ++i) {
    double y = 0.0;
    for (std::size_t k = 0; k < feature_dim; ++k) {
      const double a = standard_normal(rng);
      data.features.push_back(a);
      y += a * truth[k];
    }
    data.targets.push_back(y + noise * standard_normal(rng));
    data.labels.push_back(0);
  }
  if (true_model != nullptr) *true_model = std::move(truth);
  return data;
}

void write_dataset_csv(std::ostream& out, const LabeledDataset& dataset) {
  for (std::size_t k = 0; k < dataset.feature_dim; ++k) out << 'x' << k << ',';
  out << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (double v : dataset.row(i)) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    out << dataset.labels[i] << '\n';
  }
}

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& dataset) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_dataset_csv(out, dataset);
}

LabeledDataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty dataset file", 1);
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 2) throw ParseError("need at least one feature column and a label column", 1);
  LabeledDataset data;
  data.feature_dim = columns - 1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t start = 0;
    for (std::size_t col = 0; col < columns; ++col) {
      const auto end = col + 1 < columns ? line.find(',', start) : line.size();
      if (end == std::string::npos) {
        throw ParseError("expected " + std::to_string(columns) + " columns", line_no);
      }
      const char* first = line.data() + start;
      const char* last = line.data() + end;
      if (col + 1 < columns) {
        double v = 0.0;
        const auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc{} || res.ptr != last) {
          throw ParseError("bad feature value in column " + std::to_string(col + 1), line_no);
        }
        data.features.push_back(v);
      } else {
        int label = 0;
        const auto res = std::from_chars(first, last, label);
        if (res.ec != std::errc{} || res.ptr != last || label < 0) {
          throw ParseError("label must be a non-negative integer", line_no);
        }
        data.labels.push_back(label);
      }
      start = end + 1;
    }
  }
  return data;
}

LabeledDataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_dataset_csv(in);
}

}  // namespace gossipgrid
