#include "gossipgrid/engine.hpp"

#include <cmath>
#include <numeric>

#include "gossipgrid/error.hpp"
#include "gossipgrid/parallel.hpp"
#include "gossipgrid/rng.hpp"

namespace gossipgrid {

RoundKind RoundSchedule::kind(std::uint64_t round) const {
  if (round >= total_rounds) {
    throw InvalidArgument("round " + std::to_string(round) + " outside [0, " +
                          std::to_string(total_rounds) + ")");
  }
  return round % cycle() < gamma_train ? RoundKind::kTrain : RoundKind::kSync;
}

void RoundSchedule::validate() const {
  if (gamma_train == 0) throw InvalidArgument("gamma_train must be at least 1");
}

std::string_view to_string(AlgorithmKind kind) {
  switch (kind) {
    case AlgorithmKind::kDpsgd:
      return "dpsgd";
    case AlgorithmKind::kSkipTrain:
      return "skiptrain";
    case AlgorithmKind::kSkipTrainConstrained:
      return "skiptrain-constrained";
    case AlgorithmKind::kGreedy:
      return "greedy";
  }
  return "dpsgd";
}

AlgorithmKind algorithm_from_string(std::string_view text) {
  for (auto k : {AlgorithmKind::kDpsgd, AlgorithmKind::kSkipTrain,
                 AlgorithmKind::kSkipTrainConstrained, AlgorithmKind::kGreedy}) {
    if (text == to_string(k)) return k;
  }
  throw InvalidArgument("unknown algorithm '" + std::string(text) + "'");
}

bool should_train(const NodeState& node, std::uint64_t t, const RoundSchedule& schedule,
                  AlgorithmKind kind) {
  switch (kind) {
    case AlgorithmKind::kDpsgd:
      return true;
    case AlgorithmKind::kGreedy:
      return node.remaining_budget > 0;
    case AlgorithmKind::kSkipTrain:
    case AlgorithmKind::kSkipTrainConstrained: {
      if (schedule.kind(t) != RoundKind::kTrain || node.remaining_budget == 0) return false;
      Rng draw(derive_seed(node.stream_seed, node.id, t, StreamPurpose::kTrainDecision));
      return uniform01(draw) <= node.train_probability;
    }
  }
  return false;
}

namespace {

void aggregate_into(std::span<const ModelVector> models, const MixingMatrix& w, std::size_t i,
                    ModelVector& out) {
  const auto dim = models[i].size();
  out.values.assign(dim, 0.0);
  for (auto j : w.column_support(i)) {
    const double weight = w(j, i);
    const auto& src = models[j].values;
    for (std::size_t k = 0; k < dim; ++k) out.values[k] += weight * src[k];
  }
}

}  // namespace

ModelVector gossip_aggregate(std::span<const ModelVector> models, const MixingMatrix& w,
                             std::size_t i) {
  if (models.size() != w.size()) {
    throw DimensionError("got " + std::to_string(models.size()) + " models for a " +
                         std::to_string(w.size()) + "-node mixing matrix");
  }
  if (i >= models.size()) throw InvalidArgument("node index out of range");
  for (const auto& m : models) {
    if (m.size() != models.front().size()) throw DimensionError("models differ in dimension");
  }
  ModelVector out;
  aggregate_into(models, w, i, out);
  return out;
}

ModelVector all_reduce(std::span<const ModelVector> models) { return average_model(models); }

std::vector<std::size_t> assign_profiles(std::size_t n, std::size_t profile_count) {
  if (profile_count == 0) throw InvalidArgument("no device profiles");
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i % profile_count;
  return out;
}

std::uint64_t energy_matched_rounds(std::span<const double> per_round_mwh,
                                    std::span<const std::uint64_t> budgets) {
  if (per_round_mwh.size() != budgets.size() || per_round_mwh.empty()) {
    throw DimensionError("per-node energies and budgets must be non-empty and equal in length");
  }
  double budget_mwh = 0.0;
  double round_mwh = 0.0;
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] == kUnlimitedBudget) throw InvalidArgument("unlimited budget has no energy");
    budget_mwh += static_cast<double>(budgets[i]) * per_round_mwh[i];
    round_mwh += per_round_mwh[i];
  }
  return static_cast<std::uint64_t>(std::floor(budget_mwh / round_mwh));
}

namespace {

Phase phase_of(const RoundSchedule& s, std::uint64_t t) {
  const auto pos = t % s.cycle();
  if (pos + 1 == s.gamma_train) return Phase::kAfterTrainBlock;
  if (s.gamma_sync > 0 && pos + 1 == s.cycle()) return Phase::kAfterSyncBlock;
  return Phase::kPerRound;
}

void check_inputs(const SimulationConfig& config, const SimulationInputs& inputs) {
  config.schedule.validate();
  const auto n = inputs.mixing.size();
  if (inputs.per_round_mwh.size() != n || inputs.budgets.size() != n) {
    throw DimensionError("per-node energy and budget vectors must match the node count");
  }
  for (double e : inputs.per_round_mwh) {
    if (!(e > 0.0)) throw InvalidArgument("per-round energy must be positive");
  }
  if (!(config.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (config.batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (!inputs.task) return;
  inputs.task->validate();
  if (inputs.partitions.size() != n) {
    throw DimensionError("need one data partition per node");
  }
  for (const auto& p : inputs.partitions) {
    if (p.empty()) throw InvalidArgument("every node needs at least one training sample");
    if (p.feature_dim != inputs.task->feature_dim) {
      throw DimensionError("partition feature dimension differs from the task");
    }
  }
  if (inputs.test.empty()) throw InvalidArgument("evaluation needs a non-empty test set");
}

}  // namespace

SimulationResult run_simulation(const SimulationConfig& config, const SimulationInputs& inputs) {
  check_inputs(config, inputs);
  const auto n = inputs.mixing.size();
  const auto& schedule = config.schedule;
  const auto kind = config.algorithm;
  const bool learning = inputs.task.has_value();
  const bool classification = learning && inputs.task->kind == TaskKind::kLogistic;
  const auto dim = learning ? inputs.task->model_dim() : 0;
  const bool budgeted =
      kind == AlgorithmKind::kSkipTrainConstrained || kind == AlgorithmKind::kGreedy;
  const auto planned =
      planned_training_rounds(schedule.gamma_train, schedule.gamma_sync, schedule.total_rounds);

  ModelVector initial(dim);
  {
    Rng rng(derive_seed(config.seed, 0, 0, StreamPurpose::kInitModel));
    for (auto& v : initial.values) v = config.init_scale * standard_normal(rng);
  }

  std::vector<NodeState> nodes(n);
  std::vector<BatchSampler> samplers;
  samplers.reserve(n);
  SimulationResult result;
  result.train_probabilities.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& node = nodes[i];
    node.id = i;
    node.model = initial;
    node.per_round_mwh = inputs.per_round_mwh[i];
    node.stream_seed = config.seed;
    node.remaining_budget = budgeted ? inputs.budgets[i] : kUnlimitedBudget;
    node.train_probability = 1.0;
    if (kind == AlgorithmKind::kSkipTrainConstrained && planned.exact > 0) {
      node.train_probability = training_probability(node.remaining_budget, planned.exact);
    }
    result.train_probabilities[i] = node.train_probability;
    const auto data_size = learning ? inputs.partitions[i].size() : 0;
    samplers.emplace_back(data_size, derive_seed(config.seed, i, 0, StreamPurpose::kBatchSampler));
  }
  result.ledger = EnergyLedger(inputs.per_round_mwh);

  const auto cadence = config.eval_every == 0 ? schedule.cycle() : config.eval_every;
  std::vector<ModelVector> snapshot(n);
  std::vector<std::vector<double>> scratch(n);
  std::vector<char> trained(n, 0);
  std::vector<char> finite(n, 1);
  std::vector<ModelVector> current(n);

  auto evaluate = [&](std::uint64_t t) {
    for (std::size_t i = 0; i < n; ++i) current[i] = nodes[i].model;
    MetricsRecord rec;
    rec.round = t;
    rec.algorithm = std::string(to_string(kind));
    rec.phase = phase_of(schedule, t);
    rec.cumulative_energy_wh = total_energy_wh(result.ledger);
    rec.consensus_distance = consensus_distance(current);
    if (learning) {
      const auto& task = *inputs.task;
      std::vector<double> acc(n), val(n), losses(n);
      parallel_for(n, config.threads, [&](std::size_t i) {
        losses[i] = loss(current[i], inputs.test, task);
        if (classification) {
          acc[i] = evaluate_accuracy(current[i], inputs.test, task);
          if (inputs.validation) val[i] = evaluate_accuracy(current[i], *inputs.validation, task);
        }
      });
      rec.mean_loss = summarize(losses).mean;
      if (classification) {
        const auto stats = summarize(acc);
        rec.mean_accuracy = stats.mean;
        rec.std_accuracy = stats.std;
        if (inputs.validation) rec.mean_validation_accuracy = summarize(val).mean;
        if (config.track_all_reduce) {
          rec.all_reduce_accuracy = evaluate_accuracy(all_reduce(current), inputs.test, task);
        }
      }
    }
    result.records.push_back(std::move(rec));
  };

  for (std::uint64_t t = 0; t < schedule.total_rounds; ++t) {
    parallel_for(n, config.threads, [&](std::size_t i) {
      auto& node = nodes[i];
      snapshot[i] = node.model;
      trained[i] = should_train(node, t, schedule, kind) ? 1 : 0;
      if (trained[i] == 0) return;
      if (learning) {
        sgd_local_update_inplace(snapshot[i], inputs.partitions[i], *inputs.task,
                                 config.learning_rate, config.local_steps, config.batch_size,
                                 samplers[i], scratch[i]);
      }
      if (node.remaining_budget != kUnlimitedBudget) --node.remaining_budget;
    });
    for (std::size_t i = 0; i < n; ++i) {
      if (trained[i] != 0) result.ledger.charge_training_round(i);
    }
    parallel_for(n, config.threads, [&](std::size_t i) {
      aggregate_into(snapshot, inputs.mixing, i, nodes[i].model);
      finite[i] = nodes[i].model.all_finite() ? 1 : 0;
    });
    for (std::size_t i = 0; i < n; ++i) {
      if (finite[i] == 0) throw DivergenceError(t, i);
    }
    if ((t + 1) % cadence == 0 || t + 1 == schedule.total_rounds) evaluate(t);
  }

  result.models.reserve(n);
  for (auto& node : nodes) result.models.push_back(std::move(node.model));
  return result;
}

}  // namespace gossipgrid
