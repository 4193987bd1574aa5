#include "gossipgrid/energy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "gossipgrid/error.hpp"

namespace gossipgrid {

void DeviceProfile::validate() const {
  if (!(per_round_mwh > 0.0) || !std::isfinite(per_round_mwh)) {
    throw InvalidArgument("profile '" + name + "': per-round energy must be positive");
  }
  if (power_w && round_duration_s) {
    const double derived = round_energy(*power_w, *round_duration_s);
    if (std::abs(derived - per_round_mwh) > 1e-9) {
      throw InvalidArgument("profile '" + name + "': power * duration gives " +
                            std::to_string(derived) + " mWh, not " +
                            std::to_string(per_round_mwh));
    }
  }
}

double round_energy(double power_w, double duration_s) {
  if (!(power_w > 0.0) || !(duration_s > 0.0)) {
    throw InvalidArgument("power and duration must be positive");
  }
  return power_w * duration_s / 3600.0 * 1000.0;
}

double trace_from_benchmark(double power_w, double inference_s_per_sample, std::size_t batch_size,
                            std::size_t local_steps, double param_ratio) {
  if (!(inference_s_per_sample > 0.0) || !(param_ratio > 0.0) || batch_size == 0 ||
      local_steps == 0) {
    throw InvalidArgument("benchmark inputs must be positive");
  }
  constexpr double kTrainingMultiplier = 3.0;
  const double duration = kTrainingMultiplier * inference_s_per_sample * param_ratio *
                          static_cast<double>(batch_size) * static_cast<double>(local_steps);
  return round_energy(power_w, duration);
}

std::uint64_t budget_from_battery(double capacity_wh, double fraction,
                                  double per_round_energy_mwh) {
  if (!(per_round_energy_mwh > 0.0)) {
    throw InvalidArgument("per-round energy must be positive");
  }
  if (!(capacity_wh >= 0.0) || !(fraction >= 0.0 && fraction <= 1.0)) {
    throw InvalidArgument("capacity must be non-negative and fraction in [0, 1]");
  }
  return static_cast<std::uint64_t>(std::floor(capacity_wh * fraction * 1000.0 /
                                               per_round_energy_mwh));
}

PlannedRounds planned_training_rounds(std::uint64_t gamma_train, std::uint64_t gamma_sync,
                                      std::uint64_t total_rounds) {
  if (gamma_train == 0) throw InvalidArgument("gamma_train must be at least 1");
  const auto cycle = gamma_train + gamma_sync;
  PlannedRounds out;
  out.exact = (total_rounds / cycle) * gamma_train + std::min(total_rounds % cycle, gamma_train);
  out.continuous = static_cast<double>(gamma_train) * static_cast<double>(total_rounds) /
                   static_cast<double>(cycle);
  return out;
}

double training_probability(std::uint64_t budget_rounds, std::uint64_t planned_train_rounds) {
  if (planned_train_rounds == 0) throw InvalidArgument("planned training rounds must be >= 1");
  if (budget_rounds >= planned_train_rounds) return 1.0;
  return static_cast<double>(budget_rounds) / static_cast<double>(planned_train_rounds);
}

EnergyLedger::EnergyLedger(std::vector<double> per_round_mwh)
    : per_round_mwh_(std::move(per_round_mwh)), train_rounds_(per_round_mwh_.size(), 0) {}

std::vector<double> EnergyLedger::per_node_mwh() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = node_mwh(i);
  return out;
}

double total_energy_wh(const EnergyLedger& ledger) {
  double mwh = 0.0;
  for (std::size_t i = 0; i < ledger.size(); ++i) mwh += ledger.node_mwh(i);
  return mwh / 1000.0;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    auto cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto first = cell.find_first_not_of(" \t");
    const auto last = cell.find_last_not_of(" \t\r");
    out.push_back(first == std::string::npos ? std::string{} : cell.substr(first, last - first + 1));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_energy(const std::string& cell, std::size_t line_no) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
    throw ParseError("bad energy value '" + cell + "'", line_no);
  }
  if (!(v > 0.0)) throw ParseError("per-round energy must be positive", line_no);
  return v;
}

std::optional<std::uint64_t> parse_rounds(const std::string& cell, std::size_t line_no,
                                          bool allow_empty) {
  if (cell.empty() && allow_empty) return std::nullopt;
  std::uint64_t v = 0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
    throw ParseError("bad budget value '" + cell + "'", line_no);
  }
  return v;
}

}  // namespace

std::vector<DeviceProfile> load_traces(std::istream& in, TraceColumn column) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) header = split_csv(line);
  }
  if (header.empty()) throw ParseError("empty trace file", line_no == 0 ? 1 : line_no);

  const std::vector<std::string> dual{"device", "per_round_mwh_cifar", "per_round_mwh_femnist",
                                      "rounds_cifar", "rounds_femnist"};
  const std::vector<std::string> generic{"device", "per_round_mwh", "budget_rounds"};
  const bool is_dual = header == dual;
  if (!is_dual && header != generic) throw ParseError("unrecognized trace header", line_no);

  std::vector<DeviceProfile> profiles;
  std::set<std::string> names;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " columns, got " +
                       std::to_string(cells.size()),
                       line_no);
    }
    DeviceProfile p;
    p.name = cells[0];
    if (p.name.empty()) throw ParseError("empty device name", line_no);
    if (is_dual) {
      const bool cifar = column == TraceColumn::kCifar10;
      p.per_round_mwh = parse_energy(cells[cifar ? 1 : 2], line_no);
      p.budget_rounds = parse_rounds(cells[cifar ? 3 : 4], line_no, false);
    } else {
      p.per_round_mwh = parse_energy(cells[1], line_no);
      p.budget_rounds = parse_rounds(cells[2], line_no, true);
    }
    if (!names.insert(p.name).second) {
      throw ParseError("duplicate device name '" + p.name + "'", line_no);
    }
    profiles.push_back(std::move(p));
  }
  if (profiles.empty()) throw ParseError("trace file has no devices", line_no);
  return profiles;
}

std::vector<DeviceProfile> load_traces(const std::filesystem::path& path, TraceColumn column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file " + path.string());
  return load_traces(in, column);
}

std::string builtin_trace_csv() {
  return "device,per_round_mwh_cifar,per_round_mwh_femnist,rounds_cifar,rounds_femnist\n"
         "Xiaomi 12 Pro,6.532875,21.508007,272,413\n"
         "Samsung Galaxy S22 Ultra,5.986076,19.707797,324,492\n"
         "OnePlus Nord 2 5G,2.556283,8.415981,681,1034\n"
         "Xiaomi Poco X3,8.51912,28.047269,272,413\n";
}

std::vector<DeviceProfile> builtin_trace(TraceColumn column) {
  std::istringstream in(builtin_trace_csv());
  return load_traces(in, column);
}

std::vector<DeviceProfile> resolve_trace(std::string_view spec, TraceColumn column) {
  if (spec == "builtin:cifar10") return builtin_trace(TraceColumn::kCifar10);
  if (spec == "builtin:femnist") return builtin_trace(TraceColumn::kFemnist);
  if (spec.starts_with("builtin:")) {
    throw InvalidArgument("unknown built-in trace '" + std::string(spec) + "'");
  }
  return load_traces(std::filesystem::path(spec), column);
}

void write_profiles(std::ostream& out, const std::vector<DeviceProfile>& profiles) {
  out << "device,per_round_mwh,budget_rounds\n";
  char buf[32];
  for (const auto& p : profiles) {
    const auto res = std::to_chars(buf, buf + sizeof buf, p.per_round_mwh);
    out << p.name << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << ',';
    if (p.budget_rounds) out << *p.budget_rounds;
    out << '\n';
  }
}

}  // namespace gossipgrid
