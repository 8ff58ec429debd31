#include "multipofo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "multipofo/errors.hpp"
#include "multipofo/text.hpp"

namespace multipofo::eval {

using nlohmann::json;

double mae(std::span<const double> preds, std::span<const double> targets) {
  if (preds.empty()) throw ValidationError("mae: empty input");
  if (preds.size() != targets.size()) {
    throw ShapeError("mae: " + std::to_string(preds.size()) +
                     " predictions but " + std::to_string(targets.size()) +
                     " targets");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    sum += std::abs(preds[i] - targets[i]);
  }
  return sum / static_cast<double>(preds.size());
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of empty data");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ErrorSummary error_distribution(std::span<const double> errors) {
  if (errors.empty()) throw ValidationError("error_distribution: empty input");
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  ErrorSummary s;
  s.min = sorted.front();
  s.q1 = quantile_sorted(sorted, 0.25);
  s.median = quantile_sorted(sorted, 0.5);
  s.q3 = quantile_sorted(sorted, 0.75);
  s.max = sorted.back();
  double sum = 0.0;
  for (double e : errors) sum += e;
  s.mean = sum / static_cast<double>(errors.size());
  return s;
}

std::vector<Forecast> to_kilowatts(
    std::vector<Forecast> forecasts,
    const std::map<std::string, data::MinMaxScaler>& scalers) {
  for (auto& f : forecasts) {
    if (f.units == Units::kilowatts) continue;
    const auto it = scalers.find(f.circuit_id);
    if (it == scalers.end()) {
      throw ContractError("no scaler for circuit '" + f.circuit_id + "'");
    }
    f.predicted = it->second.inverse(f.predicted);
    f.actual = it->second.inverse(f.actual);
    f.units = Units::kilowatts;
  }
  return forecasts;
}

const MetricsRow& MetricsReport::row(const std::string& group,
                                     const std::string& scale,
                                     const std::string& predictor) const {
  for (const auto& r : rows) {
    if (r.group == group && r.scale == scale && r.predictor == predictor)
      return r;
  }
  throw ValidationError("report has no row for group '" + group +
                        "', scale '" + scale + "', predictor '" + predictor +
                        "'");
}

Groups default_groups(std::span<const std::string> circuits) {
  return {{"all", std::vector<std::string>(circuits.begin(), circuits.end())}};
}

std::vector<MetricsRow> summarize(std::span<const Forecast> forecasts,
                                  const multiscale::ScaleSet& scales,
                                  const Groups& groups,
                                  const std::string& predictor) {
  std::set<std::string> known;
  for (const auto& f : forecasts) {
    if (f.units != Units::kilowatts) {
      throw ContractError("refusing to report normalized values for circuit '" +
                          f.circuit_id + "': inverse-scale to kW first");
    }
    known.insert(f.circuit_id);
  }
  std::vector<MetricsRow> rows;
  for (const auto& [group, members] : groups) {
    const std::set<std::string> member_set(members.begin(), members.end());
    for (const auto& m : member_set) {
      if (known.count(m) == 0) {
        throw ConfigError("group '" + group + "' names circuit '" + m +
                          "' which has no forecasts");
      }
    }
    for (Eigen::Index s = 0; s < static_cast<Eigen::Index>(scales.scales.size());
         ++s) {
      std::vector<double> preds, actual, abs_err;
      for (const auto& f : forecasts) {
        if (f.scale != s || member_set.count(f.circuit_id) == 0) continue;
        for (Eigen::Index k = 0; k < f.predicted.size(); ++k) {
          preds.push_back(f.predicted(k));
          actual.push_back(f.actual(k));
          abs_err.push_back(std::abs(f.predicted(k) - f.actual(k)));
        }
      }
      if (preds.empty()) continue;
      MetricsRow row;
      row.group = group;
      row.scale = scales.scales[static_cast<std::size_t>(s)].name;
      row.predictor = predictor;
      row.count = preds.size();
      row.mae_kw = mae(preds, actual);
      row.abs_error_kw = error_distribution(abs_err);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<Forecast> persistence_forecasts(
    std::span<const multiscale::Sample> test) {
  std::vector<Forecast> out;
  out.reserve(test.size());
  for (const auto& s : test) {
    Forecast f;
    f.circuit_id = s.circuit_id;
    f.scale = s.scale;
    f.anchor_time = s.anchor_time;
    f.predicted = Eigen::VectorXd::Constant(s.target.size(), s.input_max());
    f.actual = s.target;
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<Forecast> train_mean_forecasts(
    std::span<const multiscale::Sample> train,
    std::span<const multiscale::Sample> test, Eigen::Index scale_count) {
  std::vector<double> sum(static_cast<std::size_t>(scale_count), 0.0);
  std::vector<std::size_t> n(static_cast<std::size_t>(scale_count), 0);
  for (const auto& s : train) {
    const auto i = static_cast<std::size_t>(s.scale);
    sum.at(i) += s.target.sum();
    n.at(i) += static_cast<std::size_t>(s.target.size());
  }
  std::vector<Forecast> out;
  out.reserve(test.size());
  for (const auto& s : test) {
    const auto i = static_cast<std::size_t>(s.scale);
    if (n.at(i) == 0) {
      throw ValidationError("train_mean baseline: no training samples for scale index " +
                            std::to_string(s.scale));
    }
    Forecast f;
    f.circuit_id = s.circuit_id;
    f.scale = s.scale;
    f.anchor_time = s.anchor_time;
    f.predicted = Eigen::VectorXd::Constant(s.target.size(),
                                            sum[i] / static_cast<double>(n[i]));
    f.actual = s.target;
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<MetricsRow> naive_baselines(
    std::span<const multiscale::Sample> train,
    std::span<const multiscale::Sample> test,
    const multiscale::ScaleSet& scales,
    const std::map<std::string, data::MinMaxScaler>& scalers,
    const Groups& groups) {
  if (test.empty()) throw ValidationError("naive_baselines: no test samples");
  auto rows = summarize(to_kilowatts(persistence_forecasts(test), scalers),
                        scales, groups, kPersistence);
  auto mean_rows = summarize(
      to_kilowatts(train_mean_forecasts(
                       train, test,
                       static_cast<Eigen::Index>(scales.scales.size())),
                   scalers),
      scales, groups, kTrainMean);
  rows.insert(rows.end(), mean_rows.begin(), mean_rows.end());
  return rows;
}

void sort_rows(MetricsReport& report, const multiscale::ScaleSet& scales) {
  const auto scale_rank = [&](const std::string& name) {
    for (std::size_t i = 0; i < scales.scales.size(); ++i)
      if (scales.scales[i].name == name) return i;
    return scales.scales.size();
  };
  const auto predictor_rank = [](const std::string& p) {
    if (p == kModel) return 0;
    if (p == kPersistence) return 1;
    if (p == kTrainMean) return 2;
    return 3;
  };
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [&](const MetricsRow& a, const MetricsRow& b) {
                     if (a.group != b.group) return a.group < b.group;
                     const auto sa = scale_rank(a.scale);
                     const auto sb = scale_rank(b.scale);
                     if (sa != sb) return sa < sb;
                     return predictor_rank(a.predictor) <
                            predictor_rank(b.predictor);
                   });
}

namespace {

json summary_json(const ErrorSummary& s) {
  return {{"min", s.min}, {"q1", s.q1},   {"median", s.median},
          {"q3", s.q3},   {"max", s.max}, {"mean", s.mean}};
}

ErrorSummary summary_from_json(const json& j) {
  ErrorSummary s;
  s.min = j.at("min").get<double>();
  s.q1 = j.at("q1").get<double>();
  s.median = j.at("median").get<double>();
  s.q3 = j.at("q3").get<double>();
  s.max = j.at("max").get<double>();
  s.mean = j.at("mean").get<double>();
  return s;
}

constexpr const char* kCsvHeader =
    "group,scale,predictor,count,mae_kw,min,q1,median,q3,max,mean";

}  // namespace

std::string to_json(const MetricsReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"group", r.group},
                    {"scale", r.scale},
                    {"predictor", r.predictor},
                    {"count", r.count},
                    {"mae_kw", r.mae_kw},
                    {"abs_error_kw", summary_json(r.abs_error_kw)}});
  }
  const json j = {{"schema_version", report.schema_version},
                  {"units", "kW"},
                  {"quantile_method", "linear"},
                  {"seed", report.seed},
                  {"config_hash", report.config_hash},
                  {"rows", rows}};
  return j.dump(2) + "\n";
}

MetricsReport parse_json_report(const std::string& text) {
  try {
    const auto j = json::parse(text);
    MetricsReport r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion) {
      throw FormatError("unsupported report schema version " +
                        std::to_string(r.schema_version));
    }
    if (j.at("units").get<std::string>() != "kW") {
      throw FormatError("report units must be kW");
    }
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& row : j.at("rows")) {
      MetricsRow m;
      m.group = row.at("group").get<std::string>();
      m.scale = row.at("scale").get<std::string>();
      m.predictor = row.at("predictor").get<std::string>();
      m.count = row.at("count").get<std::size_t>();
      m.mae_kw = row.at("mae_kw").get<double>();
      m.abs_error_kw = summary_from_json(row.at("abs_error_kw"));
      r.rows.push_back(std::move(m));
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed metrics report: ") + e.what());
  }
}

std::string to_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "# schema_version=" << report.schema_version
      << " seed=" << report.seed << " config_hash=" << report.config_hash
      << " units=kW\n";
  out << kCsvHeader << '\n';
  using text::format_double;
  for (const auto& r : report.rows) {
    const auto& e = r.abs_error_kw;
    out << r.group << ',' << r.scale << ',' << r.predictor << ',' << r.count
        << ',' << format_double(r.mae_kw) << ',' << format_double(e.min) << ','
        << format_double(e.q1) << ',' << format_double(e.median) << ','
        << format_double(e.q3) << ',' << format_double(e.max) << ','
        << format_double(e.mean) << '\n';
  }
  return out.str();
}

MetricsReport parse_csv_report(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  MetricsReport r;
  const auto bad = [](const std::string& why) -> FormatError {
    return FormatError("malformed metrics CSV: " + why);
  };
  if (!std::getline(in, line) || !line.starts_with("# ")) {
    throw bad("missing metadata comment");
  }
  const std::string meta = line.substr(2);
  for (auto token : text::split(text::trim(meta), ' ')) {
    const auto eq = token.find('=');
    if (eq == std::string_view::npos) throw bad("bad metadata token");
    const auto key = token.substr(0, eq);
    const auto value = std::string(token.substr(eq + 1));
    if (key == "schema_version") {
      r.schema_version = std::stoi(value);
    } else if (key == "seed") {
      r.seed = std::stoull(value);
    } else if (key == "config_hash") {
      r.config_hash = value;
    }
  }
  if (!std::getline(in, line) || text::trim(line) != kCsvHeader) {
    throw bad("unexpected header");
  }
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const auto f = text::split(text::trim(line), ',');
    if (f.size() != 11) throw bad("expected 11 fields");
    double v[7];
    for (int i = 0; i < 7; ++i) {
      const auto d = text::parse_double(f[static_cast<std::size_t>(4 + i)]);
      if (!d) throw bad("non-numeric field");
      v[i] = *d;
    }
    MetricsRow m;
    m.group = std::string(f[0]);
    m.scale = std::string(f[1]);
    m.predictor = std::string(f[2]);
    m.count = std::stoull(std::string(f[3]));
    m.mae_kw = v[0];
    m.abs_error_kw = {v[1], v[2], v[3], v[4], v[5], v[6]};
    r.rows.push_back(std::move(m));
  }
  return r;
}

void export_report(const MetricsReport& report,
                   const std::filesystem::path& path, ReportFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << (format == ReportFormat::json ? to_json(report) : to_csv(report));
  if (!out) throw IoError("failed writing report: " + path.string());
}

void write_forecasts_csv(std::ostream& out, std::span<const Forecast> forecasts,
                         const multiscale::ScaleSet& scales,
                         const std::string& predictor) {
  using text::format_double;
  for (const auto& f : forecasts) {
    if (f.units != Units::kilowatts) {
      throw ContractError("forecast export requires kW values");
    }
    for (Eigen::Index k = 0; k < f.predicted.size(); ++k) {
      out << f.circuit_id << ','
          << scales.scales.at(static_cast<std::size_t>(f.scale)).name << ','
          << predictor << ',' << data::format_timestamp(f.anchor_time) << ','
          << format_double(f.predicted(k)) << ','
          << format_double(f.actual(k)) << ','
          << format_double(f.predicted(k) - f.actual(k)) << '\n';
    }
  }
}

}  // namespace multipofo::eval
