#include "gossipgrid/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "gossipgrid/error.hpp"
#include "gossipgrid/parallel.hpp"

namespace gossipgrid {

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::kAfterTrainBlock:
      return "after_train_block";
    case Phase::kAfterSyncBlock:
      return "after_sync_block";
    case Phase::kPerRound:
      return "per_round";
  }
  return "per_round";
}

Phase phase_from_string(const std::string& text) {
  if (text == "after_train_block") return Phase::kAfterTrainBlock;
  if (text == "after_sync_block") return Phase::kAfterSyncBlock;
  if (text == "per_round") return Phase::kPerRound;
  throw InvalidArgument("unknown phase '" + text + "'");
}

AccuracyStats summarize(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("no values to summarize");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

AccuracyStats accuracy_stats(std::span<const ModelVector> models, const LabeledDataset& testset,
                             const TaskSpec& task, unsigned threads) {
  if (models.empty()) throw InvalidArgument("accuracy_stats of an empty model list");
  std::vector<double> acc(models.size());
  parallel_for(models.size(), threads,
               [&](std::size_t i) { acc[i] = evaluate_accuracy(models[i], testset, task); });
  return summarize(acc);
}

ModelVector average_model(std::span<const ModelVector> models) {
  if (models.empty()) throw InvalidArgument("average of an empty model list");
  const auto dim = models.front().size();
  ModelVector avg(dim);
  for (const auto& m : models) {
    if (m.size() != dim) throw DimensionError("models differ in dimension");
    for (std::size_t k = 0; k < dim; ++k) avg[k] += m[k];
  }
  const double inv = 1.0 / static_cast<double>(models.size());
  for (auto& v : avg.values) v *= inv;
  return avg;
}

double consensus_distance(std::span<const ModelVector> models) {
  const auto avg = average_model(models);
  double total = 0.0;
  for (const auto& m : models) {
    double sq = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) sq += (m[k] - avg[k]) * (m[k] - avg[k]);
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(models.size());
}

namespace {

void put_number(std::ostream& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

void put_optional(std::ostream& out, const std::optional<double>& v) {
  if (v) put_number(out, *v);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos
                                                                 : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double get_number(const std::string& cell, std::size_t line_no) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
    throw ParseError("bad number '" + cell + "'", line_no);
  }
  return v;
}

std::optional<double> get_optional(const std::string& cell, std::size_t line_no) {
  if (cell.empty()) return std::nullopt;
  return get_number(cell, line_no);
}

}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> records,
                       double total_energy_wh) {
  out << kMetricsHeader << '\n';
  for (const auto& r : records) {
    out << r.round << ',';
    put_optional(out, r.mean_accuracy);
    out << ',';
    put_optional(out, r.std_accuracy);
    out << ',';
    put_optional(out, r.mean_loss);
    out << ',';
    put_number(out, r.consensus_distance);
    out << ',';
    put_number(out, r.cumulative_energy_wh);
    out << ',' << r.algorithm << ',' << to_string(r.phase) << ',';
    put_optional(out, r.mean_validation_accuracy);
    out << ',';
    put_optional(out, r.all_reduce_accuracy);
    out << '\n';
  }
  out << "# summary,final_mean_accuracy=";
  if (!records.empty()) put_optional(out, records.back().mean_accuracy);
  out << ",total_energy_wh=";
  put_number(out, total_energy_wh);
  out << '\n';
}

std::vector<MetricsRecord> parse_metrics_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::vector<MetricsRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != kMetricsHeader) throw ParseError("unexpected metrics header", line_no);
      header_seen = true;
      continue;
    }
    const auto f = split_fields(line);
    if (f.size() != 10) throw ParseError("expected 10 columns", line_no);
    MetricsRecord r;
    std::size_t round = 0;
    const auto res = std::from_chars(f[0].data(), f[0].data() + f[0].size(), round);
    if (res.ec != std::errc{} || res.ptr != f[0].data() + f[0].size()) {
      throw ParseError("bad round index '" + f[0] + "'", line_no);
    }
    r.round = round;
    r.mean_accuracy = get_optional(f[1], line_no);
    r.std_accuracy = get_optional(f[2], line_no);
    r.mean_loss = get_optional(f[3], line_no);
    r.consensus_distance = get_number(f[4], line_no);
    r.cumulative_energy_wh = get_number(f[5], line_no);
    r.algorithm = f[6];
    try {
      r.phase = phase_from_string(f[7]);
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), line_no);
    }
    r.mean_validation_accuracy = get_optional(f[8], line_no);
    r.all_reduce_accuracy = get_optional(f[9], line_no);
    records.push_back(std::move(r));
  }
  if (!header_seen) throw ParseError("missing metrics header", line_no);
  return records;
}

nlohmann::json summary_json(std::span<const MetricsRecord> records, const EnergyLedger& ledger,
                            const nlohmann::json& config_echo) {
  nlohmann::json doc;
  doc["records"] = records.size();
  doc["total_energy_wh"] = total_energy_wh(ledger);
  doc["per_node_train_rounds"] = ledger.train_rounds();
  if (!records.empty()) {
    const auto& last = records.back();
    doc["final_round"] = last.round;
    auto opt = [](const std::optional<double>& v) -> nlohmann::json {
      return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    doc["final_mean_accuracy"] = opt(last.mean_accuracy);
    doc["final_std_accuracy"] = opt(last.std_accuracy);
    doc["final_mean_loss"] = opt(last.mean_loss);
    doc["final_mean_validation_accuracy"] = opt(last.mean_validation_accuracy);
    doc["final_all_reduce_accuracy"] = opt(last.all_reduce_accuracy);
    doc["final_consensus_distance"] = last.consensus_distance;
  } else {
    doc["final_mean_accuracy"] = nullptr;
  }
  doc["config"] = config_echo;
  return doc;
}

ResultPaths emit_results(std::span<const MetricsRecord> records, const EnergyLedger& ledger,
                         const std::filesystem::path& directory, const std::string& label,
                         const nlohmann::json& config_echo) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());
  ResultPaths paths{directory / (label + ".metrics.csv"), directory / (label + ".summary.json")};

  std::ofstream csv(paths.metrics_csv, std::ios::binary);
  if (!csv) throw IoError("cannot open " + paths.metrics_csv.string());
  write_metrics_csv(csv, records, total_energy_wh(ledger));
  if (!csv) throw IoError("write failed: " + paths.metrics_csv.string());

  std::ofstream js(paths.summary_json, std::ios::binary);
  if (!js) throw IoError("cannot open " + paths.summary_json.string());
  js << summary_json(records, ledger, config_echo).dump(2) << '\n';
  if (!js) throw IoError("write failed: " + paths.summary_json.string());
  return paths;
}

}  // namespace gossipgrid
