#pragma once

// Load time series: CSV ingestion, gap filling, min-max scaling and the
// chronological train/test split.

#include <Eigen/Dense>

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace multipofo::data {

using Timestamp = std::chrono::sys_seconds;

/// Parses `YYYY-MM-DDTHH:MM:SS` with an optional `Z` or `+00:00` suffix.
/// A space is accepted in place of `T`. Only UTC is supported.
Timestamp parse_timestamp(std::string_view text);
/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_timestamp(Timestamp t);

/// Uniformly sampled load observations in kW. A NaN entry marks a missing
/// observation; pipeline stages downstream of fill_gaps() require none.
struct TimeSeries {
  std::string circuit_id;
  Timestamp start{};
  std::chrono::seconds step{1800};
  Eigen::VectorXd values;

  Eigen::Index size() const { return values.size(); }
  Timestamp time_at(Eigen::Index i) const { return start + step * i; }
  Timestamp end() const { return time_at(size()); }  // one past the last
  bool has_gaps() const;
};

struct CsvSchema {
  std::chrono::seconds step{1800};
};

/// Reads `timestamp,circuit_id,load_kw` rows into one series per circuit,
/// sorted by circuit id. Lines starting with `#` and blank lines are skipped.
/// Time differences that are multiples of the step larger than one become
/// NaN gaps; any other irregular difference is rejected. An empty load
/// field is also recorded as a gap.
std::vector<TimeSeries> ingest_csv(const std::filesystem::path& path,
                                   const CsvSchema& schema = {});
std::vector<TimeSeries> parse_csv(std::istream& in, const CsvSchema& schema,
                                  const std::string& source_name = "<stream>");

/// Writes the standard CSV schema. `comment`, when non-empty, is emitted
/// first as a `# ...` line.
void write_csv(std::ostream& out, std::span<const TimeSeries> series,
               const std::string& comment = {});

enum class GapPolicy { linear, forward, reject };
GapPolicy parse_gap_policy(std::string_view name);
const char* to_string(GapPolicy policy);

TimeSeries fill_gaps(const TimeSeries& series, GapPolicy policy);

/// Linear map of the fitted [min, max] onto [0, 1]. Values outside the
/// fitted range extrapolate; nothing is clipped.
class MinMaxScaler {
 public:
  MinMaxScaler(double min, double max, std::string fitted_on = {});

  static MinMaxScaler fit(const Eigen::Ref<const Eigen::VectorXd>& values,
                          std::string fitted_on = {});

  double min() const { return min_; }
  double max() const { return max_; }
  const std::string& fitted_on() const { return fitted_on_; }

  double transform(double kw) const { return (kw - min_) / (max_ - min_); }
  double inverse(double scaled) const { return scaled * (max_ - min_) + min_; }
  Eigen::VectorXd transform(const Eigen::Ref<const Eigen::VectorXd>& kw) const;
  Eigen::VectorXd inverse(const Eigen::Ref<const Eigen::VectorXd>& scaled) const;

  friend bool operator==(const MinMaxScaler&, const MinMaxScaler&) = default;

 private:
  double min_;
  double max_;
  std::string fitted_on_;
};

/// Fits on a (training) series; the descriptor records circuit and time range.
MinMaxScaler fit_scaler(const TimeSeries& train);

/// Scales every value of `series` with `scaler`.
TimeSeries transform(const MinMaxScaler& scaler, const TimeSeries& series);

struct SplitSpec {
  Timestamp train_end;   // train covers [start, train_end)
  Timestamp test_start;  // test covers [test_start, end)
};

struct Partitions {
  TimeSeries train;
  TimeSeries test;
};

Partitions split(const TimeSeries& series, const SplitSpec& spec);

}  // namespace multipofo::data
