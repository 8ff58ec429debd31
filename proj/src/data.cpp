#include "multipofo/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "multipofo/errors.hpp"
#include "multipofo/text.hpp"

namespace multipofo::data {

namespace chr = std::chrono;

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

bool parse_int(std::string_view s, int& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty();
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
  const auto fail = [&]() -> Timestamp {
    throw ParseError("invalid ISO-8601 UTC timestamp '" + std::string(text) +
                     "'");
  };
  std::string_view s = text::trim(text);
  if (s.ends_with('Z') || s.ends_with('z')) {
    s.remove_suffix(1);
  } else if (s.ends_with("+00:00")) {
    s.remove_suffix(6);
  }
  // YYYY-MM-DDTHH:MM[:SS]
  if (s.size() != 19 && s.size() != 16) return fail();
  if (s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
      s[13] != ':')
    return fail();
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), mo) ||
      !parse_int(s.substr(8, 2), d) || !parse_int(s.substr(11, 2), h) ||
      !parse_int(s.substr(14, 2), mi))
    return fail();
  if (s.size() == 19 && (s[16] != ':' || !parse_int(s.substr(17, 2), sec)))
    return fail();
  const chr::year_month_day ymd{chr::year{y}, chr::month{static_cast<unsigned>(mo)},
                                chr::day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 59 || h < 0 || mi < 0 || sec < 0)
    return fail();
  return chr::sys_days{ymd} + chr::hours{h} + chr::minutes{mi} +
         chr::seconds{sec};
}

std::string format_timestamp(Timestamp t) {
  const auto day = chr::floor<chr::days>(t);
  const chr::year_month_day ymd{day};
  const chr::hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ",
                static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

bool TimeSeries::has_gaps() const { return !values.allFinite(); }

std::vector<TimeSeries> ingest_csv(const std::filesystem::path& path,
                                   const CsvSchema& schema) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("data file not found: " + path.string());
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file: " + path.string());
  return parse_csv(in, schema, path.string());
}

std::vector<TimeSeries> parse_csv(std::istream& in, const CsvSchema& schema,
                                  const std::string& source_name) {
  if (schema.step <= chr::seconds{0}) {
    throw ConfigError("CSV schema step must be positive");
  }
  struct Row {
    Timestamp time;
    double load;
    std::size_t line;
  };
  std::map<std::string, std::vector<Row>> by_circuit;

  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto where = source_name + ":" + std::to_string(line_no);
    const auto fields = text::split(trimmed, ',');
    if (!header_seen) {
      if (fields.size() != 3 || text::trim(fields[0]) != "timestamp" ||
          text::trim(fields[1]) != "circuit_id" ||
          text::trim(fields[2]) != "load_kw") {
        throw ParseError(where +
                         ": expected header 'timestamp,circuit_id,load_kw'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 3) {
      throw ParseError(where + ": expected 3 fields, found " +
                       std::to_string(fields.size()));
    }
    Timestamp t;
    try {
      t = parse_timestamp(fields[0]);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    const auto circuit = std::string(text::trim(fields[1]));
    if (circuit.empty()) throw ParseError(where + ": empty circuit_id");
    double load = kMissing;
    const auto load_text = text::trim(fields[2]);
    if (!load_text.empty()) {
      const auto v = text::parse_double(load_text);
      if (!v) {
        throw ParseError(where + ": invalid load_kw '" +
                         std::string(load_text) + "'");
      }
      if (std::isinf(*v)) {
        throw ParseError(where + ": infinite load_kw");
      }
      load = std::isnan(*v) ? kMissing : *v;
    }
    by_circuit[circuit].push_back({t, load, line_no});
  }
  if (!header_seen) throw ParseError(source_name + ": missing CSV header");

  std::vector<TimeSeries> out;
  out.reserve(by_circuit.size());
  for (auto& [circuit, rows] : by_circuit) {
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      return a.time < b.time;
    });
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].time == rows[i - 1].time) {
        throw ValidationError("duplicate timestamp " +
                              format_timestamp(rows[i].time) +
                              " for circuit '" + circuit + "' (lines " +
                              std::to_string(rows[i - 1].line) + " and " +
                              std::to_string(rows[i].line) + ")");
      }
      const auto gap = rows[i].time - rows[i - 1].time;
      if (gap % schema.step != chr::seconds{0}) {
        throw ValidationError(
            "circuit '" + circuit + "': non-uniform step between " +
            format_timestamp(rows[i - 1].time) + " and " +
            format_timestamp(rows[i].time) + " (" +
            std::to_string(gap.count()) + " s is not a multiple of " +
            std::to_string(schema.step.count()) + " s)");
      }
    }
    TimeSeries ts;
    ts.circuit_id = circuit;
    ts.start = rows.front().time;
    ts.step = schema.step;
    const auto n = (rows.back().time - rows.front().time) / schema.step + 1;
    ts.values = Eigen::VectorXd::Constant(n, kMissing);
    for (const auto& r : rows) {
      ts.values((r.time - ts.start) / schema.step) = r.load;
    }
    out.push_back(std::move(ts));
  }
  return out;
}

void write_csv(std::ostream& out, std::span<const TimeSeries> series,
               const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "timestamp,circuit_id,load_kw\n";
  for (const auto& s : series) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      out << format_timestamp(s.time_at(i)) << ',' << s.circuit_id << ',';
      if (std::isfinite(s.values(i))) out << text::format_double(s.values(i));
      out << '\n';
    }
  }
}

GapPolicy parse_gap_policy(std::string_view name) {
  if (name == "linear") return GapPolicy::linear;
  if (name == "forward") return GapPolicy::forward;
  if (name == "reject") return GapPolicy::reject;
  throw ConfigError("unknown gap policy '" + std::string(name) +
                    "' (expected linear, forward or reject)");
}

const char* to_string(GapPolicy policy) {
  switch (policy) {
    case GapPolicy::linear:
      return "linear";
    case GapPolicy::forward:
      return "forward";
    case GapPolicy::reject:
      return "reject";
  }
  return "?";
}

TimeSeries fill_gaps(const TimeSeries& series, GapPolicy policy) {
  TimeSeries out = series;
  auto& v = out.values;
  const Eigen::Index n = v.size();
  Eigen::Index i = 0;
  while (i < n) {
    if (std::isfinite(v(i))) {
      ++i;
      continue;
    }
    Eigen::Index j = i;
    while (j < n && !std::isfinite(v(j))) ++j;
    // [i, j) is missing
    const auto extent = "circuit '" + series.circuit_id + "': gap of " +
                        std::to_string(j - i) + " step(s) from " +
                        format_timestamp(series.time_at(i)) + " to " +
                        format_timestamp(series.time_at(j - 1));
    switch (policy) {
      case GapPolicy::reject:
        throw ValidationError(extent + " (gap policy 'reject')");
      case GapPolicy::forward:
        if (i == 0) {
          throw ValidationError(extent +
                                " at series start cannot be forward-filled");
        }
        for (Eigen::Index k = i; k < j; ++k) v(k) = v(i - 1);
        break;
      case GapPolicy::linear: {
        if (i == 0 || j == n) {
          throw ValidationError(extent +
                                " at series boundary cannot be interpolated");
        }
        const double a = v(i - 1);
        const double b = v(j);
        const auto span = static_cast<double>(j - i + 1);
        for (Eigen::Index k = i; k < j; ++k) {
          v(k) = a + (b - a) * static_cast<double>(k - i + 1) / span;
        }
        break;
      }
    }
    i = j;
  }
  return out;
}

MinMaxScaler::MinMaxScaler(double min, double max, std::string fitted_on)
    : min_(min), max_(max), fitted_on_(std::move(fitted_on)) {
  if (!std::isfinite(min) || !std::isfinite(max)) {
    throw ValidationError("scaler bounds must be finite");
  }
  if (!(max > min)) {
    throw ValidationError("cannot min-max scale a constant series (min = max = " +
                          text::format_double(min) + ")" +
                          (fitted_on_.empty() ? "" : " for " + fitted_on_));
  }
}

MinMaxScaler MinMaxScaler::fit(const Eigen::Ref<const Eigen::VectorXd>& values,
                               std::string fitted_on) {
  if (values.size() == 0) throw ValidationError("cannot fit scaler on no data");
  if (!values.allFinite()) {
    throw ValidationError("cannot fit scaler on non-finite values");
  }
  return MinMaxScaler(values.minCoeff(), values.maxCoeff(),
                      std::move(fitted_on));
}

Eigen::VectorXd MinMaxScaler::transform(
    const Eigen::Ref<const Eigen::VectorXd>& kw) const {
  return ((kw.array() - min_) / (max_ - min_)).matrix();
}

Eigen::VectorXd MinMaxScaler::inverse(
    const Eigen::Ref<const Eigen::VectorXd>& scaled) const {
  return (scaled.array() * (max_ - min_) + min_).matrix();
}

MinMaxScaler fit_scaler(const TimeSeries& train) {
  return MinMaxScaler::fit(train.values,
                           train.circuit_id + " [" +
                               format_timestamp(train.start) + ", " +
                               format_timestamp(train.end()) + ")");
}

TimeSeries transform(const MinMaxScaler& scaler, const TimeSeries& series) {
  TimeSeries out = series;
  out.values = scaler.transform(series.values);
  return out;
}

Partitions split(const TimeSeries& series, const SplitSpec& spec) {
  if (spec.train_end > spec.test_start) {
    throw ValidationError("split: train_end " +
                          format_timestamp(spec.train_end) +
                          " is after test_start " +
                          format_timestamp(spec.test_start));
  }
  const auto index_at_or_after = [&](Timestamp t) -> Eigen::Index {
    if (t <= series.start) return 0;
    const auto offset = t - series.start;
    // ceil division so that a boundary between samples rounds forward
    const auto idx = (offset + series.step - chr::seconds{1}) / series.step;
    return std::min<Eigen::Index>(idx, series.size());
  };
  const Eigen::Index train_len = index_at_or_after(spec.train_end);
  const Eigen::Index test_begin = index_at_or_after(spec.test_start);

  const auto where = "circuit '" + series.circuit_id + "'";
  if (train_len == 0) {
    throw ValidationError("split: empty train partition for " + where +
                          " (train_end " + format_timestamp(spec.train_end) +
                          " is at or before series start)");
  }
  if (test_begin >= series.size()) {
    throw ValidationError("split: empty test partition for " + where +
                          " (test_start " + format_timestamp(spec.test_start) +
                          " is at or after series end)");
  }
  Partitions p;
  p.train = series;
  p.train.values = series.values.head(train_len);
  p.test = series;
  p.test.start = series.time_at(test_begin);
  p.test.values = series.values.segment(test_begin, series.size() - test_begin);
  return p;
}

}  // namespace multipofo::data
