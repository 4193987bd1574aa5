#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gossipgrid {

/// Budget value meaning "no limit on training rounds".
inline constexpr std::uint64_t kUnlimitedBudget = std::numeric_limits<std::uint64_t>::max();

/// Training energy characteristics of one device type.
struct DeviceProfile {
  std::string name;
  double per_round_mwh = 0.0;
  /// tau: training rounds affordable before the battery share runs out.
  std::optional<std::uint64_t> budget_rounds;
  std::optional<double> power_w;
  std::optional<double> round_duration_s;

  /// Throws InvalidArgument if per_round_mwh <= 0 or if power/duration are
  /// present and disagree with per_round_mwh by more than 1e-9 mWh.
  void validate() const;

  friend bool operator==(const DeviceProfile&, const DeviceProfile&) = default;
};

/// Power (W) times duration (s), in mWh.
double round_energy(double power_w, double duration_s);

/// Duration 3 * inference_s_per_sample * param_ratio * batch_size * local_steps,
/// priced with round_energy. The 3x factor converts inference into training time.
double trace_from_benchmark(double power_w, double inference_s_per_sample, std::size_t batch_size,
                            std::size_t local_steps, double param_ratio);

/// floor(capacity_wh * fraction * 1000 / per_round_energy_mwh).
std::uint64_t budget_from_battery(double capacity_wh, double fraction,
                                  double per_round_energy_mwh);

struct PlannedRounds {
  /// Train rounds under the 0-based schedule t mod (gt + gs) < gt, t in [0, T).
  std::uint64_t exact = 0;
  /// gt * T / (gt + gs) without rounding.
  double continuous = 0.0;
};

PlannedRounds planned_training_rounds(std::uint64_t gamma_train, std::uint64_t gamma_sync,
                                      std::uint64_t total_rounds);

/// min(tau / planned, 1); kUnlimitedBudget maps to 1.
double training_probability(std::uint64_t budget_rounds, std::uint64_t planned_train_rounds);

/// Per-node training energy bookkeeping.
///
/// Energy is derived as count * per-round energy rather than accumulated, so
/// the ledger equals the product exactly at every point of a run.
class EnergyLedger {
 public:
  EnergyLedger() = default;
  explicit EnergyLedger(std::vector<double> per_round_mwh);

  std::size_t size() const noexcept { return per_round_mwh_.size(); }
  void charge_training_round(std::size_t node) { ++train_rounds_[node]; }

  std::uint64_t train_rounds(std::size_t node) const { return train_rounds_[node]; }
  const std::vector<std::uint64_t>& train_rounds() const noexcept { return train_rounds_; }
  double per_round_mwh(std::size_t node) const { return per_round_mwh_[node]; }
  double node_mwh(std::size_t node) const {
    return static_cast<double>(train_rounds_[node]) * per_round_mwh_[node];
  }
  std::vector<double> per_node_mwh() const;

 private:
  std::vector<double> per_round_mwh_;
  std::vector<std::uint64_t> train_rounds_;
};

/// Sum over nodes in Wh.
double total_energy_wh(const EnergyLedger& ledger);

/// Which per-round/budget column pair to take from a two-dataset trace file.
enum class TraceColumn { kCifar10, kFemnist };

/// Parses either trace layout:
///   device,per_round_mwh_cifar,per_round_mwh_femnist,rounds_cifar,rounds_femnist
///   device,per_round_mwh,budget_rounds   (budget_rounds may be empty)
/// `column` selects the dataset for the first layout and is ignored otherwise.
std::vector<DeviceProfile> load_traces(std::istream& in, TraceColumn column = TraceColumn::kCifar10);
std::vector<DeviceProfile> load_traces(const std::filesystem::path& path,
                                       TraceColumn column = TraceColumn::kCifar10);

/// Four-phone reference traces, both dataset columns.
std::vector<DeviceProfile> builtin_trace(TraceColumn column);
/// Same data in the two-dataset CSV layout.
std::string builtin_trace_csv();

/// "builtin:cifar10", "builtin:femnist", or a trace file path. `column`
/// applies to two-dataset files only.
std::vector<DeviceProfile> resolve_trace(std::string_view spec,
                                         TraceColumn column = TraceColumn::kCifar10);

/// Writes the generic layout. Energies keep 17 significant digits.
void write_profiles(std::ostream& out, const std::vector<DeviceProfile>& profiles);

}  // namespace gossipgrid
