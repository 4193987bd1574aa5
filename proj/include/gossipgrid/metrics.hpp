#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gossipgrid/energy.hpp"
#include "gossipgrid/learning.hpp"

namespace gossipgrid {

/// Where in the train/sync cycle a record was taken.
enum class Phase { kAfterTrainBlock, kAfterSyncBlock, kPerRound };

std::string to_string(Phase phase);
Phase phase_from_string(const std::string& text);

/// One evaluation snapshot. Accuracy fields are empty for runs without a
/// classification task; loss is empty for energy-only runs.
struct MetricsRecord {
  std::size_t round = 0;
  std::optional<double> mean_accuracy;
  std::optional<double> std_accuracy;
  std::optional<double> mean_loss;
  double consensus_distance = 0.0;
  double cumulative_energy_wh = 0.0;
  std::string algorithm;
  Phase phase = Phase::kPerRound;
  std::optional<double> mean_validation_accuracy;
  /// Accuracy of the exact global average model (all-reduce oracle).
  std::optional<double> all_reduce_accuracy;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct AccuracyStats {
  double mean = 0.0;
  /// Population standard deviation.
  double std = 0.0;
};

/// Mean and population std of two or more per-node accuracies.
AccuracyStats summarize(std::span<const double> values);

/// Per-node Top-1 accuracy on a shared test set, summarized.
AccuracyStats accuracy_stats(std::span<const ModelVector> models, const LabeledDataset& testset,
                             const TaskSpec& task, unsigned threads = 1);

/// Mean Euclidean distance of each model from the global average.
double consensus_distance(std::span<const ModelVector> models);

/// Plain average of equal-dimension models.
ModelVector average_model(std::span<const ModelVector> models);

inline constexpr const char* kMetricsHeader =
    "round,mean_accuracy,std_accuracy,mean_loss,consensus_distance,cumulative_energy_wh,"
    "algorithm,phase,mean_validation_accuracy,all_reduce_accuracy";

/// CSV rows with shortest round-trip number formatting, followed by a
/// "# summary" comment line carrying the final mean accuracy and total Wh.
void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> records,
                       double total_energy_wh);
/// Inverse of write_metrics_csv; comment lines are skipped.
std::vector<MetricsRecord> parse_metrics_csv(std::istream& in);

struct ResultPaths {
  std::filesystem::path metrics_csv;
  std::filesystem::path summary_json;
};

/// Summary document: final metrics, ledger totals, per-node training counts
/// and the caller's config echo.
nlohmann::json summary_json(std::span<const MetricsRecord> records, const EnergyLedger& ledger,
                            const nlohmann::json& config_echo);

/// Writes `<label>.metrics.csv` and `<label>.summary.json` into `directory`.
ResultPaths emit_results(std::span<const MetricsRecord> records, const EnergyLedger& ledger,
                         const std::filesystem::path& directory, const std::string& label,
                         const nlohmann::json& config_echo = nlohmann::json::object());

}  // namespace gossipgrid
