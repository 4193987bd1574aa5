#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gossipgrid/config.hpp"

namespace gossipgrid {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitRuntimeError = 3;

/// Entry point for the `gossipgrid` executable: run, sweep, trace-gen, topology.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// "a:b" (inclusive) or "a,b,c". Throws ConfigError naming `field`.
std::vector<std::uint64_t> parse_range(const std::string& field, const std::string& text);

struct SweepCell {
  std::uint64_t gamma_train = 0;
  std::uint64_t gamma_sync = 0;
  /// Final mean validation accuracy; empty when the cell failed or the run
  /// has no classification task.
  std::optional<double> accuracy;
  std::optional<double> energy_wh;
  std::string error;
};

struct SweepResult {
  std::vector<std::uint64_t> gamma_train;
  std::vector<std::uint64_t> gamma_sync;
  /// Row-major: gamma_train rows, gamma_sync columns.
  std::vector<SweepCell> cells;
  std::optional<std::size_t> best;

  const SweepCell& at(std::size_t row, std::size_t col) const {
    return cells[row * gamma_sync.size() + col];
  }
};

/// Highest accuracy; equal accuracy goes to the lower energy, then to the
/// earlier cell. Cells without accuracy are skipped.
std::optional<std::size_t> select_best_cell(const std::vector<SweepCell>& cells);

/// Runs every (gamma_train, gamma_sync) pair at the base config's round
/// count. Cells run in parallel over `threads` workers; failures are recorded
/// per cell.
SweepResult run_sweep(const RunConfig& base, const std::vector<std::uint64_t>& gamma_train,
                      const std::vector<std::uint64_t>& gamma_sync, unsigned threads);

/// Matrix CSV: header "gamma_train\\gamma_sync,<gs...>", one row per gamma_train.
void write_sweep_matrix(std::ostream& out, const SweepResult& sweep, bool energy);

/// Benchmark file "device,power_w,inference_s_per_sample,batch_size,local_steps,param_ratio"
/// with optional "battery_capacity_wh,battery_fraction" columns giving tau.
std::vector<DeviceProfile> traces_from_benchmarks(std::istream& in);

}  // namespace gossipgrid
