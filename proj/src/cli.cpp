#include "gossipgrid/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "gossipgrid/error.hpp"
#include "gossipgrid/parallel.hpp"

namespace gossipgrid {

std::vector<std::uint64_t> parse_range(const std::string& field, const std::string& text) {
  auto number = [&](const std::string& s) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      throw ConfigError(field, "bad range element '" + s + "'");
    }
    return v;
  };
  std::vector<std::uint64_t> out;
  if (const auto colon = text.find(':'); colon != std::string::npos) {
    const auto lo = number(text.substr(0, colon));
    const auto hi = number(text.substr(colon + 1));
    if (lo > hi) throw ConfigError(field, "range start exceeds end");
    for (auto v = lo; v <= hi; ++v) out.push_back(v);
  } else {
    std::size_t start = 0;
    while (true) {
      const auto comma = text.find(',', start);
      out.push_back(number(text.substr(start, comma == std::string::npos ? std::string::npos
                                                                          : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  if (out.empty()) throw ConfigError(field, "range is empty");
  return out;
}

std::optional<std::size_t> select_best_cell(const std::vector<SweepCell>& cells) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    if (!c.accuracy || !c.energy_wh) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = cells[*best];
    if (*c.accuracy > *b.accuracy ||
        (*c.accuracy == *b.accuracy && *c.energy_wh < *b.energy_wh)) {
      best = i;
    }
  }
  return best;
}

SweepResult run_sweep(const RunConfig& base, const std::vector<std::uint64_t>& gamma_train,
                      const std::vector<std::uint64_t>& gamma_sync, unsigned threads) {
  SweepResult sweep;
  sweep.gamma_train = gamma_train;
  sweep.gamma_sync = gamma_sync;
  for (auto gt : gamma_train) {
    for (auto gs : gamma_sync) sweep.cells.push_back({gt, gs, {}, {}, {}});
  }
  parallel_for(sweep.cells.size(), threads, [&](std::size_t idx) {
    auto& cell = sweep.cells[idx];
    try {
      RunConfig cfg = base;
      cfg.gamma_train = cell.gamma_train;
      cfg.gamma_sync = cell.gamma_sync;
      auto prepared = prepare_run(cfg, 1);
      const auto result = run_simulation(prepared.sim, prepared.inputs);
      cell.energy_wh = total_energy_wh(result.ledger);
      if (!result.records.empty()) cell.accuracy = result.records.back().mean_validation_accuracy;
    } catch (const std::exception& e) {
      cell.accuracy.reset();
      cell.energy_wh.reset();
      cell.error = e.what();
    }
  });
  sweep.best = select_best_cell(sweep.cells);
  return sweep;
}

namespace {

void put_number(std::ostream& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

}  // namespace

void write_sweep_matrix(std::ostream& out, const SweepResult& sweep, bool energy) {
  out << "gamma_train\\gamma_sync";
  for (auto gs : sweep.gamma_sync) out << ',' << gs;
  out << '\n';
  for (std::size_t r = 0; r < sweep.gamma_train.size(); ++r) {
    out << sweep.gamma_train[r];
    for (std::size_t c = 0; c < sweep.gamma_sync.size(); ++c) {
      out << ',';
      const auto& cell = sweep.at(r, c);
      const auto& v = energy ? cell.energy_wh : cell.accuracy;
      if (v) put_number(out, *v);
    }
    out << '\n';
  }
}

std::vector<DeviceProfile> traces_from_benchmarks(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto a = cell.find_first_not_of(" \t\r");
      const auto b = cell.find_last_not_of(" \t\r");
      cells.push_back(a == std::string::npos ? std::string{} : cell.substr(a, b - a + 1));
    }
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) header = split(line);
  }
  const std::vector<std::string> required{"device",      "power_w",    "inference_s_per_sample",
                                          "batch_size",  "local_steps", "param_ratio"};
  if (header.size() < required.size() ||
      !std::equal(required.begin(), required.end(), header.begin())) {
    throw ParseError("benchmark header must start with device,power_w,inference_s_per_sample,"
                     "batch_size,local_steps,param_ratio",
                     line_no == 0 ? 1 : line_no);
  }
  const bool with_battery = header.size() == 8 && header[6] == "battery_capacity_wh" &&
                            header[7] == "battery_fraction";
  if (header.size() != required.size() && !with_battery) {
    throw ParseError("unexpected benchmark columns", line_no);
  }

  std::vector<DeviceProfile> out;
  std::set<std::string> names;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    const std::string device = cells.empty() ? std::string{} : cells[0];
    auto fail = [&](const std::string& what) -> ParseError {
      return ParseError("device '" + device + "': " + what, line_no);
    };
    if (cells.size() != header.size()) throw fail("wrong column count");
    if (device.empty()) throw fail("empty device name");
    auto real = [&](std::size_t col) {
      double v = 0.0;
      const auto& s = cells[col];
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw fail("bad value '" + s + "' for " + header[col]);
      }
      return v;
    };
    auto integer = [&](std::size_t col) {
      std::size_t v = 0;
      const auto& s = cells[col];
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw fail("bad value '" + s + "' for " + header[col]);
      }
      return v;
    };
    DeviceProfile p;
    p.name = device;
    try {
      p.per_round_mwh =
          trace_from_benchmark(real(1), real(2), integer(3), integer(4), real(5));
      if (with_battery) p.budget_rounds = budget_from_battery(real(6), real(7), p.per_round_mwh);
    } catch (const InvalidArgument& e) {
      throw fail(e.what());
    }
    if (!names.insert(p.name).second) throw fail("duplicate device name");
    out.push_back(std::move(p));
  }
  if (out.empty()) throw ParseError("benchmark file lists no devices", line_no);
  return out;
}

namespace {

/// Registers every RunConfig key as a --kebab-case option.
void add_config_options(CLI::App& cmd, std::map<std::string, std::string>& values,
                        std::map<std::string, CLI::Option*>& options) {
  for (const auto& key : config_keys()) {
    auto& slot = values[key];
    if (key == "energy-only" || key == "all-reduce") {
      options[key] = cmd.add_flag("--" + key, slot, "boolean; bare flag means true");
    } else {
      options[key] = cmd.add_option("--" + key, slot);
    }
  }
}

RunConfig build_config(const std::string& config_path,
                       const std::map<std::string, std::string>& values,
                       const std::map<std::string, CLI::Option*>& options) {
  RunConfig cfg;
  if (!config_path.empty()) apply_config_file(cfg, config_path);
  for (const auto& [key, opt] : options) {
    if (opt->count() > 0) apply_setting(cfg, key, values.at(key));
  }
  validate(cfg);
  return cfg;
}

void print_fixed(std::ostream& out, const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  out << buf;
}

int cmd_run(const RunConfig& cfg, std::ostream& out) {
  auto prepared = prepare_run(cfg, thread_count_from_env());
  const auto result = run_simulation(prepared.sim, prepared.inputs);
  const auto paths = emit_results(result.records, result.ledger, cfg.output_dir,
                                  cfg.run_label(), to_json(cfg));
  out << "algorithm: " << to_string(cfg.algorithm) << '\n';
  out << "rounds: " << cfg.rounds << '\n';
  print_fixed(out, "total_energy_wh: %.2f\n", total_energy_wh(result.ledger));
  if (!result.records.empty() && result.records.back().mean_accuracy) {
    print_fixed(out, "final_mean_accuracy: %.4f\n", *result.records.back().mean_accuracy);
  }
  out << "metrics: " << paths.metrics_csv.string() << '\n';
  out << "summary: " << paths.summary_json.string() << '\n';
  return kExitOk;
}

int cmd_sweep(const RunConfig& cfg, const std::string& train_range, const std::string& sync_range,
              std::ostream& out) {
  const auto gt = parse_range("gamma-train-range", train_range);
  const auto gs = parse_range("gamma-sync-range", sync_range);
  for (auto v : gt) {
    if (v == 0) throw ConfigError("gamma-train-range", "values must be at least 1");
  }
  const auto sweep = run_sweep(cfg, gt, gs, thread_count_from_env());

  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create " + cfg.output_dir.string());
  const auto label = cfg.run_label();
  const auto acc_path = cfg.output_dir / (label + ".sweep-accuracy.csv");
  const auto energy_path = cfg.output_dir / (label + ".sweep-energy.csv");
  const auto json_path = cfg.output_dir / (label + ".sweep.json");
  {
    std::ofstream f(acc_path, std::ios::binary);
    if (!f) throw IoError("cannot open " + acc_path.string());
    write_sweep_matrix(f, sweep, false);
  }
  {
    std::ofstream f(energy_path, std::ios::binary);
    if (!f) throw IoError("cannot open " + energy_path.string());
    write_sweep_matrix(f, sweep, true);
  }
  nlohmann::json doc;
  doc["config"] = to_json(cfg);
  doc["cells"] = nlohmann::json::array();
  for (const auto& c : sweep.cells) {
    nlohmann::json j{{"gamma_train", c.gamma_train}, {"gamma_sync", c.gamma_sync}};
    j["validation_accuracy"] = c.accuracy ? nlohmann::json(*c.accuracy) : nlohmann::json(nullptr);
    j["energy_wh"] = c.energy_wh ? nlohmann::json(*c.energy_wh) : nlohmann::json(nullptr);
    if (!c.error.empty()) j["error"] = c.error;
    doc["cells"].push_back(j);
  }
  if (sweep.best) {
    const auto& b = sweep.cells[*sweep.best];
    doc["best"] = {{"gamma_train", b.gamma_train},
                   {"gamma_sync", b.gamma_sync},
                   {"validation_accuracy", *b.accuracy},
                   {"energy_wh", *b.energy_wh}};
    out << "best: gamma_train=" << b.gamma_train << " gamma_sync=" << b.gamma_sync;
    print_fixed(out, " validation_accuracy=%.4f", *b.accuracy);
    print_fixed(out, " energy_wh=%.2f\n", *b.energy_wh);
  } else {
    doc["best"] = nullptr;
    out << "best: none (no cell produced a validation accuracy)\n";
  }
  {
    std::ofstream f(json_path, std::ios::binary);
    if (!f) throw IoError("cannot open " + json_path.string());
    f << doc.dump(2) << '\n';
  }
  std::size_t failed = 0;
  for (const auto& c : sweep.cells) failed += c.error.empty() ? 0 : 1;
  if (failed > 0) out << "failed cells: " << failed << '\n';
  out << "accuracy matrix: " << acc_path.string() << '\n';
  out << "energy matrix: " << energy_path.string() << '\n';
  return kExitOk;
}

int cmd_trace_gen(const std::string& input, const std::string& output, std::ostream& out) {
  std::ifstream in(input);
  if (!in) throw ConfigError("input", "cannot open " + input);
  const auto profiles = traces_from_benchmarks(in);
  if (output.empty() || output == "-") {
    write_profiles(out, profiles);
  } else {
    std::ofstream f(output, std::ios::binary);
    if (!f) throw IoError("cannot open " + output);
    write_profiles(f, profiles);
    out << "wrote " << profiles.size() << " profiles to " << output << '\n';
  }
  return kExitOk;
}

int cmd_topology(std::size_t n, std::size_t d, std::uint64_t seed, const std::string& output,
                 std::ostream& out) {
  const auto topology = generate_regular(n, d, seed);
  if (output.empty() || output == "-") {
    write_edge_list(out, topology);
  } else {
    write_edge_list(std::filesystem::path(output), topology);
    out << "wrote " << topology.edges().size() << " edges to " << output << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Energy-aware decentralized learning simulator", "gossipgrid"};
  app.require_subcommand(1);

  std::map<std::string, std::string> run_values, sweep_values;
  std::map<std::string, CLI::Option*> run_options, sweep_options;
  std::string run_config, sweep_config, train_range, sync_range;

  auto* run = app.add_subcommand("run", "Execute one simulation");
  run->add_option("--config", run_config, "INI-style key = value file; flags override it");
  add_config_options(*run, run_values, run_options);

  auto* sweep = app.add_subcommand("sweep", "Grid search over gamma-train x gamma-sync");
  sweep->add_option("--config", sweep_config, "INI-style key = value file; flags override it");
  sweep->add_option("--gamma-train-range", train_range, "a:b or a,b,c")->required();
  sweep->add_option("--gamma-sync-range", sync_range, "a:b or a,b,c")->required();
  add_config_options(*sweep, sweep_values, sweep_options);

  std::string bench_input, trace_output;
  auto* trace_gen = app.add_subcommand("trace-gen", "Energy traces from benchmark parameters");
  trace_gen->add_option("--input", bench_input, "benchmark parameter CSV")->required();
  trace_gen->add_option("--out", trace_output, "output trace CSV (default stdout)");

  std::size_t topo_n = 0, topo_d = 0;
  std::uint64_t topo_seed = 1;
  std::string topo_out;
  auto* topo = app.add_subcommand("topology", "Write a random d-regular edge list");
  topo->add_option("--n", topo_n, "node count")->required();
  topo->add_option("--degree", topo_d, "degree")->required();
  topo->add_option("--seed", topo_seed, "seed");
  topo->add_option("--out", topo_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (*run) return cmd_run(build_config(run_config, run_values, run_options), out);
    if (*sweep) {
      return cmd_sweep(build_config(sweep_config, sweep_values, sweep_options), train_range,
                       sync_range, out);
    }
    if (*trace_gen) return cmd_trace_gen(bench_input, trace_output, out);
    if (*topo) return cmd_topology(topo_n, topo_d, topo_seed, topo_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const InfeasibleError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
  return kExitConfigError;
}

}  // namespace gossipgrid
