#include "gossipgrid/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>

#include "gossipgrid/error.hpp"

namespace gossipgrid {

std::string RunConfig::run_label() const {
  return label.empty() ? std::string(to_string(algorithm)) : label;
}

namespace {

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || res.ec != std::errc{} || res.ptr != value.data() + value.size()) {
    throw ConfigError(key, "expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || res.ec != std::errc{} || res.ptr != value.data() + value.size() ||
      !std::isfinite(out)) {
    throw ConfigError(key, "expected a number, got '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError(key, "expected true/false, got '" + value + "'");
}

std::optional<std::filesystem::path> parse_path(const std::string& value) {
  if (value.empty()) return std::nullopt;
  return std::filesystem::path(value);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"algo",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.algorithm = algorithm_from_string(v);
         } catch (const InvalidArgument&) {
           throw ConfigError(k, "expected dpsgd, skiptrain, skiptrain-constrained or greedy");
         }
       }},
      {"n", [](RunConfig& c, auto& k, auto& v) { c.n = parse_integer<std::size_t>(k, v); }},
      {"degree",
       [](RunConfig& c, auto& k, auto& v) { c.degree = parse_integer<std::size_t>(k, v); }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.seed = parse_integer<std::uint64_t>(k, v); }},
      {"topology-file", [](RunConfig& c, auto&, auto& v) { c.topology_file = parse_path(v); }},
      {"task",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "logistic") {
           c.task = TaskKind::kLogistic;
         } else if (v == "least-squares") {
           c.task = TaskKind::kLeastSquares;
         } else {
           throw ConfigError(k, "expected logistic or least-squares");
         }
       }},
      {"features",
       [](RunConfig& c, auto& k, auto& v) { c.features = parse_integer<std::size_t>(k, v); }},
      {"classes",
       [](RunConfig& c, auto& k, auto& v) { c.classes = parse_integer<std::size_t>(k, v); }},
      {"l2", [](RunConfig& c, auto& k, auto& v) { c.l2 = parse_real(k, v); }},
      {"separation", [](RunConfig& c, auto& k, auto& v) { c.separation = parse_real(k, v); }},
      {"noise", [](RunConfig& c, auto& k, auto& v) { c.noise = parse_real(k, v); }},
      {"noise-spread", [](RunConfig& c, auto& k, auto& v) { c.noise_spread = parse_real(k, v); }},
      {"samples-per-node",
       [](RunConfig& c, auto& k, auto& v) { c.samples_per_node = parse_integer<std::size_t>(k, v); }},
      {"eval-samples",
       [](RunConfig& c, auto& k, auto& v) { c.eval_samples = parse_integer<std::size_t>(k, v); }},
      {"shards-per-node",
       [](RunConfig& c, auto& k, auto& v) { c.shards_per_node = parse_integer<std::size_t>(k, v); }},
      {"train-data", [](RunConfig& c, auto&, auto& v) { c.train_data = parse_path(v); }},
      {"test-data", [](RunConfig& c, auto&, auto& v) { c.test_data = parse_path(v); }},
      {"validation-data", [](RunConfig& c, auto&, auto& v) { c.validation_data = parse_path(v); }},
      {"energy-only", [](RunConfig& c, auto& k, auto& v) { c.energy_only = parse_bool(k, v); }},
      {"learning-rate",
       [](RunConfig& c, auto& k, auto& v) { c.learning_rate = parse_real(k, v); }},
      {"local-steps",
       [](RunConfig& c, auto& k, auto& v) { c.local_steps = parse_integer<std::size_t>(k, v); }},
      {"batch-size",
       [](RunConfig& c, auto& k, auto& v) { c.batch_size = parse_integer<std::size_t>(k, v); }},
      {"rounds",
       [](RunConfig& c, auto& k, auto& v) { c.rounds = parse_integer<std::uint64_t>(k, v); }},
      {"gamma-train",
       [](RunConfig& c, auto& k, auto& v) { c.gamma_train = parse_integer<std::uint64_t>(k, v); }},
      {"gamma-sync",
       [](RunConfig& c, auto& k, auto& v) { c.gamma_sync = parse_integer<std::uint64_t>(k, v); }},
      {"trace", [](RunConfig& c, auto&, auto& v) { c.trace = v; }},
      {"trace-dataset",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "cifar10") {
           c.trace_dataset = TraceColumn::kCifar10;
         } else if (v == "femnist") {
           c.trace_dataset = TraceColumn::kFemnist;
         } else {
           throw ConfigError(k, "expected cifar10 or femnist");
         }
       }},
      {"budget-mode",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "unconstrained") {
           c.budget_mode = BudgetMode::kUnconstrained;
         } else if (v == "trace-tau") {
           c.budget_mode = BudgetMode::kTraceTau;
         } else if (v == "battery-fraction") {
           c.budget_mode = BudgetMode::kBatteryFraction;
         } else {
           throw ConfigError(k, "expected unconstrained, trace-tau or battery-fraction");
         }
       }},
      {"budget-scale", [](RunConfig& c, auto& k, auto& v) { c.budget_scale = parse_real(k, v); }},
      {"battery-capacity-wh",
       [](RunConfig& c, auto& k, auto& v) { c.battery_capacity_wh = parse_real(k, v); }},
      {"battery-fraction",
       [](RunConfig& c, auto& k, auto& v) { c.battery_fraction = parse_real(k, v); }},
      {"eval-every",
       [](RunConfig& c, auto& k, auto& v) { c.eval_every = parse_integer<std::size_t>(k, v); }},
      {"all-reduce", [](RunConfig& c, auto& k, auto& v) { c.all_reduce = parse_bool(k, v); }},
      {"output-dir", [](RunConfig& c, auto&, auto& v) { c.output_dir = v; }},
      {"label", [](RunConfig& c, auto&, auto& v) { c.label = v; }},
  };
  return table;
}

std::string_view budget_mode_name(BudgetMode m) {
  switch (m) {
    case BudgetMode::kUnconstrained:
      return "unconstrained";
    case BudgetMode::kTraceTau:
      return "trace-tau";
    case BudgetMode::kBatteryFraction:
      return "battery-fraction";
  }
  return "unconstrained";
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [key, setter] : setters()) out.push_back(key);
    return out;
  }();
  return keys;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  const auto k = normalize_key(key);
  for (const auto& [name, setter] : setters()) {
    if (name == k) {
      setter(config, k, trim(value));
      return;
    }
  }
  throw ConfigError(k, "unknown configuration key");
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "empty key");
    out.emplace_back(normalize_key(key), trim(line.substr(eq + 1)));
  }
  return out;
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  for (const auto& [k, v] : parse_config_text(in)) apply_setting(config, k, v);
}

void validate(const RunConfig& c) {
  if (!c.topology_file) {
    if (c.n < 2) throw ConfigError("n", "need at least 2 nodes");
    if (c.degree == 0 || c.degree >= c.n) throw ConfigError("degree", "must be in [1, n)");
    if ((c.n * c.degree) % 2 != 0) throw ConfigError("degree", "n * degree must be even");
  }
  if (c.gamma_train == 0) throw ConfigError("gamma-train", "must be at least 1");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning-rate", "must be positive");
  if (c.batch_size == 0) throw ConfigError("batch-size", "must be positive");
  if (!(c.budget_scale >= 0.0)) throw ConfigError("budget-scale", "must be non-negative");
  if (c.budget_mode == BudgetMode::kBatteryFraction) {
    if (!c.battery_capacity_wh || !(*c.battery_capacity_wh >= 0.0)) {
      throw ConfigError("battery-capacity-wh", "required (non-negative) for battery-fraction");
    }
    if (!c.battery_fraction || !(*c.battery_fraction >= 0.0 && *c.battery_fraction <= 1.0)) {
      throw ConfigError("battery-fraction", "required, in [0, 1]");
    }
  }
  if (c.trace.empty()) throw ConfigError("trace", "must name a built-in trace or a file");
  if (c.trace.starts_with("builtin:") && c.trace != "builtin:cifar10" &&
      c.trace != "builtin:femnist") {
    throw ConfigError("trace", "unknown built-in trace '" + c.trace + "'");
  }
  if (!c.trace.starts_with("builtin:") && !std::filesystem::exists(c.trace)) {
    throw ConfigError("trace", "file not found: " + c.trace);
  }
  if (c.topology_file && !std::filesystem::exists(*c.topology_file)) {
    throw ConfigError("topology-file", "file not found: " + c.topology_file->string());
  }
  if (c.label.find_first_of("/\\") != std::string::npos) {
    throw ConfigError("label", "must not contain path separators");
  }
  if (c.energy_only) return;

  if (c.features == 0) throw ConfigError("features", "must be positive");
  if (c.task == TaskKind::kLogistic && c.classes < 2) {
    throw ConfigError("classes", "logistic task needs at least 2 classes");
  }
  if (!(c.l2 >= 0.0)) throw ConfigError("l2", "must be non-negative");
  if (!(c.noise >= 0.0)) throw ConfigError("noise", "must be non-negative");
  if (!(c.noise_spread >= 1.0) || !std::isfinite(c.noise_spread)) {
    throw ConfigError("noise-spread", "must be finite and at least 1");
  }
  if (!(c.separation >= 0.0)) throw ConfigError("separation", "must be non-negative");
  if (c.shards_per_node == 0) throw ConfigError("shards-per-node", "must be positive");
  if (c.train_data) {
    if (!std::filesystem::exists(*c.train_data)) {
      throw ConfigError("train-data", "file not found: " + c.train_data->string());
    }
    if (!c.test_data) throw ConfigError("test-data", "required together with train-data");
    if (!std::filesystem::exists(*c.test_data)) {
      throw ConfigError("test-data", "file not found: " + c.test_data->string());
    }
    if (c.validation_data && !std::filesystem::exists(*c.validation_data)) {
      throw ConfigError("validation-data", "file not found: " + c.validation_data->string());
    }
  } else {
    if (c.samples_per_node < c.shards_per_node) {
      throw ConfigError("samples-per-node", "must be at least shards-per-node");
    }
    if (c.eval_samples == 0) throw ConfigError("eval-samples", "must be positive");
  }
}

nlohmann::json to_json(const RunConfig& c) {
  auto opt_path = [](const std::optional<std::filesystem::path>& p) -> nlohmann::json {
    return p ? nlohmann::json(p->string()) : nlohmann::json(nullptr);
  };
  auto opt_real = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json j;
  j["algo"] = to_string(c.algorithm);
  j["n"] = c.n;
  j["degree"] = c.degree;
  j["seed"] = c.seed;
  j["topology-file"] = opt_path(c.topology_file);
  j["task"] = c.task == TaskKind::kLogistic ? "logistic" : "least-squares";
  j["features"] = c.features;
  j["classes"] = c.classes;
  j["l2"] = c.l2;
  j["separation"] = c.separation;
  j["noise"] = c.noise;
  j["noise-spread"] = c.noise_spread;
  j["samples-per-node"] = c.samples_per_node;
  j["eval-samples"] = c.eval_samples;
  j["shards-per-node"] = c.shards_per_node;
  j["train-data"] = opt_path(c.train_data);
  j["test-data"] = opt_path(c.test_data);
  j["validation-data"] = opt_path(c.validation_data);
  j["energy-only"] = c.energy_only;
  j["learning-rate"] = c.learning_rate;
  j["local-steps"] = c.local_steps;
  j["batch-size"] = c.batch_size;
  j["rounds"] = c.rounds;
  j["gamma-train"] = c.gamma_train;
  j["gamma-sync"] = c.gamma_sync;
  j["trace"] = c.trace;
  j["trace-dataset"] = c.trace_dataset == TraceColumn::kCifar10 ? "cifar10" : "femnist";
  j["budget-mode"] = budget_mode_name(c.budget_mode);
  j["budget-scale"] = c.budget_scale;
  j["battery-capacity-wh"] = opt_real(c.battery_capacity_wh);
  j["battery-fraction"] = opt_real(c.battery_fraction);
  j["eval-every"] = c.eval_every;
  j["all-reduce"] = c.all_reduce;
  j["output-dir"] = c.output_dir.string();
  j["label"] = c.run_label();
  return j;
}

PreparedRun prepare_run(const RunConfig& c, unsigned threads) {
  validate(c);
  auto topology = c.topology_file ? read_edge_list(*c.topology_file)
                                  : generate_regular(c.n, c.degree, c.seed);
  const auto n = topology.size();

  PreparedRun run{std::move(topology), {}, {}, {}};
  run.inputs.mixing = metropolis_weights(run.topology);
  run.profiles = resolve_trace(c.trace, c.trace_dataset);

  const auto assignment = assign_profiles(n, run.profiles.size());
  run.inputs.per_round_mwh.resize(n);
  run.inputs.budgets.assign(n, kUnlimitedBudget);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = run.profiles[assignment[i]];
    run.inputs.per_round_mwh[i] = p.per_round_mwh;
    switch (c.budget_mode) {
      case BudgetMode::kUnconstrained:
        break;
      case BudgetMode::kTraceTau:
        if (!p.budget_rounds) {
          throw ConfigError("budget-mode", "trace has no budget for device '" + p.name + "'");
        }
        run.inputs.budgets[i] = static_cast<std::uint64_t>(
            std::floor(static_cast<double>(*p.budget_rounds) * c.budget_scale));
        break;
      case BudgetMode::kBatteryFraction:
        run.inputs.budgets[i] =
            budget_from_battery(*c.battery_capacity_wh, *c.battery_fraction, p.per_round_mwh);
        break;
    }
  }

  auto& sim = run.sim;
  sim.algorithm = c.algorithm;
  sim.schedule = {c.gamma_train, c.gamma_sync, c.rounds};
  sim.learning_rate = c.learning_rate;
  sim.local_steps = c.local_steps;
  sim.batch_size = c.batch_size;
  sim.seed = c.seed;
  sim.eval_every = c.eval_every;
  sim.track_all_reduce = c.all_reduce;
  sim.threads = threads;

  if (c.energy_only) return run;

  TaskSpec task;
  task.kind = c.task;
  task.l2_regularization = c.l2;
  task.class_count = c.task == TaskKind::kLogistic ? c.classes : 0;

  LabeledDataset train;
  if (c.train_data) {
    train = read_dataset_csv(*c.train_data);
    run.inputs.test = read_dataset_csv(*c.test_data);
    if (c.validation_data) run.inputs.validation = read_dataset_csv(*c.validation_data);
    task.feature_dim = train.feature_dim;
    if (run.inputs.test.feature_dim != train.feature_dim) {
      throw ConfigError("test-data", "feature count differs from train-data");
    }
  } else if (c.task == TaskKind::kLogistic) {
    SyntheticSpec spec;
    spec.feature_dim = c.features;
    spec.class_count = c.classes;
    spec.separation = c.separation;
    spec.noise = c.noise;
    spec.noise_spread = c.noise_spread;
    spec.train_samples = n * c.samples_per_node;
    spec.eval_samples = c.eval_samples;
    spec.seed = c.seed;
    auto data = make_synthetic(spec);
    train = std::move(data.train);
    run.inputs.test = std::move(data.test);
    run.inputs.validation = std::move(data.validation);
    task.feature_dim = c.features;
  } else {
    auto all = make_linear_regression(n * c.samples_per_node + c.eval_samples, c.features,
                                      c.noise, c.seed);
    LabeledDataset test;
    train.feature_dim = test.feature_dim = c.features;
    for (std::size_t i = 0; i < all.size(); ++i) {
      (i < n * c.samples_per_node ? train : test).append(all, i);
    }
    run.inputs.test = std::move(test);
    task.feature_dim = c.features;
  }
  train.validate(task.kind == TaskKind::kLogistic ? task.class_count : 0);
  if (train.size() < n * c.shards_per_node) {
    throw ConfigError("shards-per-node", "training set too small for n * shards-per-node shards");
  }
  run.inputs.partitions = shard_partition(train, n, c.shards_per_node, c.seed);
  run.inputs.task = task;
  return run;
}

}  // namespace gossipgrid
