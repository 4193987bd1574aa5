#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gossipgrid/energy.hpp"
#include "gossipgrid/learning.hpp"
#include "gossipgrid/metrics.hpp"
#include "gossipgrid/topology.hpp"

namespace gossipgrid {

enum class RoundKind { kTrain, kSync };

/// Blocks of gamma_train training rounds followed by gamma_sync
/// synchronization rounds, rounds indexed from 0.
struct RoundSchedule {
  std::uint64_t gamma_train = 1;
  std::uint64_t gamma_sync = 0;
  std::uint64_t total_rounds = 0;

  std::uint64_t cycle() const noexcept { return gamma_train + gamma_sync; }
  /// Throws InvalidArgument when round >= total_rounds.
  RoundKind kind(std::uint64_t round) const;
  void validate() const;
};

enum class AlgorithmKind { kDpsgd, kSkipTrain, kSkipTrainConstrained, kGreedy };

std::string_view to_string(AlgorithmKind kind);
/// Accepts "dpsgd", "skiptrain", "skiptrain-constrained", "greedy".
AlgorithmKind algorithm_from_string(std::string_view text);

struct NodeState {
  std::size_t id = 0;
  ModelVector model;
  double per_round_mwh = 0.0;
  std::uint64_t remaining_budget = kUnlimitedBudget;
  double train_probability = 1.0;
  /// Root of the node's private random streams.
  std::uint64_t stream_seed = 0;
};

/// Training decision for `node` in round `t`.
///
/// D-PSGD always trains. SkipTrain variants train on Train rounds when budget
/// remains and a uniform draw r satisfies r <= p_i; the draw comes from a
/// stream keyed by (node, round), so it exists only on rounds that reach it.
/// Greedy trains while budget remains, regardless of the schedule.
bool should_train(const NodeState& node, std::uint64_t t, const RoundSchedule& schedule,
                  AlgorithmKind kind);

/// sum_j W[j][i] * models[j], summed in ascending j over the support of column i.
ModelVector gossip_aggregate(std::span<const ModelVector> models, const MixingMatrix& w,
                             std::size_t i);

/// Unweighted global average.
ModelVector all_reduce(std::span<const ModelVector> models);

struct SimulationConfig {
  AlgorithmKind algorithm = AlgorithmKind::kDpsgd;
  RoundSchedule schedule;
  double learning_rate = 0.1;
  std::size_t local_steps = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  /// Evaluate every this many rounds; 0 means every gamma_train + gamma_sync.
  /// The last round is always evaluated.
  std::size_t eval_every = 0;
  bool track_all_reduce = false;
  double init_scale = 0.01;
  unsigned threads = 1;
};

/// Everything a run consumes besides the config.
///
/// Without a task the run is energy-only: models have dimension 0, training
/// rounds are charged but perform no arithmetic, and records carry energy and
/// consensus only.
struct SimulationInputs {
  MixingMatrix mixing = MixingMatrix::identity(1);
  std::optional<TaskSpec> task;
  std::vector<LabeledDataset> partitions;
  LabeledDataset test;
  std::optional<LabeledDataset> validation;
  /// Per node.
  std::vector<double> per_round_mwh;
  /// Per node; kUnlimitedBudget for no limit. Only SkipTrain-constrained and
  /// Greedy enforce budgets.
  std::vector<std::uint64_t> budgets;
};

struct SimulationResult {
  std::vector<MetricsRecord> records;
  EnergyLedger ledger;
  std::vector<ModelVector> models;
  std::vector<double> train_probabilities;
};

/// Runs total_rounds barrier-synchronized rounds: every node copies its
/// model, optionally trains (charging the ledger), then aggregates the frozen
/// post-training snapshot through W. Deterministic in the seed for any
/// thread count. Throws DivergenceError on a non-finite model.
SimulationResult run_simulation(const SimulationConfig& config, const SimulationInputs& inputs);

/// Profile index of each node: round-robin over the device list.
std::vector<std::size_t> assign_profiles(std::size_t n, std::size_t profile_count);

/// Rounds of every-node training whose network energy fits in the summed
/// per-node budgets: floor(sum tau_i e_i / sum e_i).
std::uint64_t energy_matched_rounds(std::span<const double> per_round_mwh,
                                    std::span<const std::uint64_t> budgets);

}  // namespace gossipgrid
