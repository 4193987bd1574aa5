#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "gossipgrid/rng.hpp"

namespace gossipgrid {

/// Flat model parameters exchanged between nodes.
struct ModelVector {
  std::vector<double> values;

  ModelVector() = default;
  explicit ModelVector(std::size_t dim, double fill = 0.0) : values(dim, fill) {}
  explicit ModelVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  bool all_finite() const;

  friend bool operator==(const ModelVector&, const ModelVector&) = default;
};

/// Row-major feature matrix with one integer label per row.
///
/// `targets` holds real-valued regression targets for least-squares data.
/// When it is empty, least-squares uses the integer label as the target.
struct LabeledDataset {
  std::size_t feature_dim = 0;
  std::vector<double> features;
  std::vector<int> labels;
  std::vector<double> targets;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * feature_dim, feature_dim};
  }
  double target(std::size_t i) const {
    return targets.empty() ? static_cast<double>(labels[i]) : targets[i];
  }
  /// Appends sample `i` of `other` (same feature_dim).
  void append(const LabeledDataset& other, std::size_t i);
  /// Throws DimensionError on inconsistent sizes, InvalidArgument on a label
  /// outside [0, class_count) when class_count > 0.
  void validate(std::size_t class_count = 0) const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

enum class TaskKind { kLeastSquares, kLogistic };

struct TaskSpec {
  TaskKind kind = TaskKind::kLogistic;
  std::size_t feature_dim = 0;
  std::size_t class_count = 0;  // logistic only
  double l2_regularization = 0.0;

  /// f for least-squares, f*C for multinomial logistic (class-major blocks).
  std::size_t model_dim() const;
  void validate() const;
};

/// Mean per-sample loss plus (l2/2)*||x||^2.
///
/// Least-squares: 0.5*(a.x - y)^2. Logistic: softmax cross-entropy with
/// scores s_c = <x_c, a>.
double loss(const ModelVector& model, const LabeledDataset& dataset, const TaskSpec& task);

/// Gradient of the batch-mean loss. Throws InvalidArgument on an empty batch.
ModelVector gradient(const ModelVector& model, const LabeledDataset& batch, const TaskSpec& task);

/// Gradient over the rows `indices` of `data`, written into `out` (resized).
void gradient_over(const ModelVector& model, const LabeledDataset& data,
                   std::span<const std::size_t> indices, const TaskSpec& task,
                   std::vector<double>& out);

/// Mini-batch source drawing without replacement from a private permutation,
/// reshuffled when fewer than a full batch remains.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::uint64_t seed);

  /// Next batch of min(batch_size, dataset_size) distinct indices.
  std::span<const std::size_t> next(std::size_t batch_size);

  std::size_t dataset_size() const noexcept { return order_.size(); }

 private:
  void reshuffle();

  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// `local_steps` sequential steps x <- x - lr * grad(x, batch).
ModelVector sgd_local_update(ModelVector model, const LabeledDataset& data, const TaskSpec& task,
                             double learning_rate, std::size_t local_steps, std::size_t batch_size,
                             BatchSampler& sampler);

/// In-place variant used by the engine; `scratch` avoids per-step allocation.
void sgd_local_update_inplace(ModelVector& model, const LabeledDataset& data, const TaskSpec& task,
                              double learning_rate, std::size_t local_steps,
                              std::size_t batch_size, BatchSampler& sampler,
                              std::vector<double>& scratch);

/// Predicted class of one sample; ties go to the lowest class index.
int predict_class(const ModelVector& model, std::span<const double> sample, const TaskSpec& task);

/// Top-1 accuracy. Throws InvalidArgument for least-squares tasks.
double evaluate_accuracy(const ModelVector& model, const LabeledDataset& testset,
                         const TaskSpec& task);

/// Sorts by label, cuts n*shards_per_node contiguous shards (sizes within 1)
/// and deals them to nodes through a seeded permutation.
std::vector<LabeledDataset> shard_partition(const LabeledDataset& dataset, std::size_t n,
                                            std::size_t shards_per_node, std::uint64_t seed);

/// Gaussian class-conditional clusters. Class centers are drawn once per seed
/// with N(0, separation^2) coordinates; samples add N(0, noise^2) per feature.
struct SyntheticSpec {
  std::size_t feature_dim = 20;
  std::size_t class_count = 10;
  double separation = 1.0;
  double noise = 1.0;
  /// Ratio of the largest to the smallest per-feature noise std; feature k
  /// gets noise * spread^(-k / (f - 1)). 1 gives isotropic clusters.
  double noise_spread = 1.0;
  std::size_t train_samples = 3200;
  /// Validation and test sets each get this many samples, disjoint.
  std::size_t eval_samples = 1000;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
};

/// Balanced classes in every split (counts differ by at most one).
SyntheticData make_synthetic(const SyntheticSpec& spec);

/// Least-squares data with targets a.x_true + noise; x_true returned for checks.
LabeledDataset make_linear_regression(std::size_t samples, std::size_t feature_dim, double noise,
                                      std::uint64_t seed, ModelVector* true_model = nullptr);

/// CSV with a header row: feature columns, then an integer label column.
void write_dataset_csv(std::ostream& out, const LabeledDataset& dataset);
void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& dataset);
LabeledDataset read_dataset_csv(std::istream& in);
LabeledDataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace gossipgrid
