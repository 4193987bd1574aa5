#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gossipgrid/engine.hpp"

namespace gossipgrid {

enum class BudgetMode { kUnconstrained, kTraceTau, kBatteryFraction };

/// Every knob of one simulation run. Defaults mirror the CIFAR-10 preset
/// (lr 0.1, batch 32, 20 local steps, 1000 rounds, 256 nodes on a 6-regular
/// graph) with a synthetic 10-class stand-in task.
struct RunConfig {
  AlgorithmKind algorithm = AlgorithmKind::kDpsgd;
  std::size_t n = 256;
  std::size_t degree = 6;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> topology_file;

  TaskKind task = TaskKind::kLogistic;
  std::size_t features = 20;
  std::size_t classes = 10;
  double l2 = 0.0;
  double separation = 1.0;
  double noise = 1.0;
  double noise_spread = 1.0;
  std::size_t samples_per_node = 50;
  std::size_t eval_samples = 1000;
  std::size_t shards_per_node = 2;
  std::optional<std::filesystem::path> train_data;
  std::optional<std::filesystem::path> test_data;
  std::optional<std::filesystem::path> validation_data;
  bool energy_only = false;

  double learning_rate = 0.1;
  std::size_t local_steps = 20;
  std::size_t batch_size = 32;
  std::uint64_t rounds = 1000;
  std::uint64_t gamma_train = 4;
  std::uint64_t gamma_sync = 4;

  std::string trace = "builtin:cifar10";
  TraceColumn trace_dataset = TraceColumn::kCifar10;
  BudgetMode budget_mode = BudgetMode::kUnconstrained;
  /// Multiplies trace tau before flooring; lets short runs keep the
  /// budget-to-rounds ratio of the reference traces.
  double budget_scale = 1.0;
  std::optional<double> battery_capacity_wh;
  std::optional<double> battery_fraction;

  std::size_t eval_every = 0;
  bool all_reduce = false;
  std::filesystem::path output_dir = ".";
  std::string label;

  /// Effective label: `label` or the algorithm name.
  std::string run_label() const;
};

/// Known keys in kebab-case, in documentation order.
const std::vector<std::string>& config_keys();

/// Sets one field from text. Keys may use '-' or '_'. Throws ConfigError
/// naming the key on unknown keys or malformed values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Flat "key = value" lines; '#' and ';' start comments, [section] headers
/// are ignored. Throws ConfigError("line N", ...) on malformed lines.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Cross-field checks. Throws ConfigError naming the offending field.
void validate(const RunConfig& config);

/// Effective configuration, every key present.
nlohmann::json to_json(const RunConfig& config);

/// Builds graph, data, profiles and budgets for `config` (validated first).
struct PreparedRun {
  Topology topology;
  SimulationConfig sim;
  SimulationInputs inputs;
  std::vector<DeviceProfile> profiles;
};
PreparedRun prepare_run(const RunConfig& config, unsigned threads);

}  // namespace gossipgrid
