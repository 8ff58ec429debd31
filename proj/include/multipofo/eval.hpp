#pragma once

// Forecast evaluation in kW: MAE, boxplot-style error summaries, naive
// baselines and the versioned JSON/CSV report.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "multipofo/data.hpp"
#include "multipofo/multiscale.hpp"

namespace multipofo::eval {

/// Mean of |pred - target|. Both spans must be nonempty and equally long.
double mae(std::span<const double> preds, std::span<const double> targets);

struct ErrorSummary {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
  friend bool operator==(const ErrorSummary&, const ErrorSummary&) = default;
};

/// Quantile p of already sorted data, interpolating linearly between order
/// statistics at position (n - 1) p (Hyndman-Fan type 7).
double quantile_sorted(std::span<const double> sorted, double p);

ErrorSummary error_distribution(std::span<const double> errors);

enum class Units { normalized, kilowatts };

/// One forecast for one sample, tagged with the units its values are in.
struct Forecast {
  std::string circuit_id;
  Eigen::Index scale = 0;
  data::Timestamp anchor_time{};
  Eigen::VectorXd predicted;
  Eigen::VectorXd actual;
  Units units = Units::normalized;
};

/// Inverse-scales normalized forecasts with each circuit's scaler.
std::vector<Forecast> to_kilowatts(
    std::vector<Forecast> forecasts,
    const std::map<std::string, data::MinMaxScaler>& scalers);

inline constexpr int kReportSchemaVersion = 1;

struct MetricsRow {
  std::string group;
  std::string scale;
  std::string predictor;
  std::size_t count = 0;
  double mae_kw = 0;
  ErrorSummary abs_error_kw;  // distribution of |pred - actual|
  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

struct MetricsReport {
  int schema_version = kReportSchemaVersion;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<MetricsRow> rows;
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;

  const MetricsRow& row(const std::string& group, const std::string& scale,
                        const std::string& predictor) const;
};

using Groups = std::map<std::string, std::vector<std::string>>;

/// Every circuit in a single group named "all".
Groups default_groups(std::span<const std::string> circuits);

/// One row per (group, scale) for `predictor`. Throws if any forecast is
/// still in normalized units, or if a group names an unknown circuit.
std::vector<MetricsRow> summarize(std::span<const Forecast> forecasts,
                                  const multiscale::ScaleSet& scales,
                                  const Groups& groups,
                                  const std::string& predictor);

inline constexpr const char* kModel = "multipofo";
inline constexpr const char* kPersistence = "persistence";
inline constexpr const char* kTrainMean = "train_mean";

/// Normalized forecasts of the two naive predictors:
///   persistence: the maximum of the observed input window;
///   train_mean: the mean normalized training target of the sample's scale.
std::vector<Forecast> persistence_forecasts(
    std::span<const multiscale::Sample> test);
std::vector<Forecast> train_mean_forecasts(
    std::span<const multiscale::Sample> train,
    std::span<const multiscale::Sample> test, Eigen::Index scale_count);

/// Evaluates both baselines on `test` and returns their rows (kW).
std::vector<MetricsRow> naive_baselines(
    std::span<const multiscale::Sample> train,
    std::span<const multiscale::Sample> test,
    const multiscale::ScaleSet& scales,
    const std::map<std::string, data::MinMaxScaler>& scalers,
    const Groups& groups);

/// Orders rows by group, then scale order, then predictor (model first).
void sort_rows(MetricsReport& report, const multiscale::ScaleSet& scales);

enum class ReportFormat { json, csv };

std::string to_json(const MetricsReport& report);
std::string to_csv(const MetricsReport& report);
MetricsReport parse_json_report(const std::string& text);
MetricsReport parse_csv_report(const std::string& text);

void export_report(const MetricsReport& report,
                   const std::filesystem::path& path, ReportFormat format);

/// Per-forecast rows for external boxplots:
/// `circuit_id,scale,predictor,anchor_time,predicted_kw,actual_kw,error_kw`.
void write_forecasts_csv(std::ostream& out, std::span<const Forecast> forecasts,
                         const multiscale::ScaleSet& scales,
                         const std::string& predictor);

}  // namespace multipofo::eval
