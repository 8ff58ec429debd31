#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "multipofo/errors.hpp"
#include "multipofo/eval.hpp"
#include "multipofo/synth.hpp"

namespace multipofo::eval {
namespace {

std::vector<double> v(std::initializer_list<double> x) { return x; }

// Sort, then index by hand: position h = (n-1)p, interpolate between floor
// and ceil order statistics.
double oracle_quantile(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

TEST(Mae, Examples) {
  EXPECT_EQ(mae(v({1, 2, 3}), v({1, 2, 3})), 0.0);
  EXPECT_EQ(mae(v({2, 4}), v({1, 1})), 2.0);
  EXPECT_THROW(mae(v({}), v({})), ValidationError);
  EXPECT_THROW(mae(v({1}), v({1, 2})), ShapeError);
}

TEST(Mae, ShiftAbovePredictionsAddsConstant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 100);
  std::vector<double> target(50), pred(50), shifted(50);
  for (std::size_t i = 0; i < 50; ++i) {
    target[i] = u(rng);
    pred[i] = target[i] + u(rng);  // pred >= target
    shifted[i] = pred[i] + 7.5;
  }
  EXPECT_NEAR(mae(shifted, target), mae(pred, target) + 7.5, 1e-12);
}

TEST(Distribution, Examples) {
  const auto a = error_distribution(v({1, 1, 1}));
  EXPECT_EQ(a, (ErrorSummary{1, 1, 1, 1, 1, 1}));
  const auto b = error_distribution(v({0, 10}));
  EXPECT_EQ(b.median, 5.0);
  EXPECT_EQ(b.q1, 2.5);
  EXPECT_EQ(b.mean, 5.0);
  EXPECT_THROW(error_distribution(v({})), ValidationError);
}

TEST(Distribution, MatchesSortAndIndexOracle) {
  std::mt19937_64 rng(7);
  std::exponential_distribution<double> e(0.1);
  std::uniform_int_distribution<int> len(1, 10000);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> x(static_cast<std::size_t>(trial < 5 ? trial + 1 : len(rng)));
    for (auto& y : x) y = e(rng);
    const auto s = error_distribution(x);
    EXPECT_EQ(s.min, *std::min_element(x.begin(), x.end()));
    EXPECT_EQ(s.max, *std::max_element(x.begin(), x.end()));
    EXPECT_NEAR(s.q1, oracle_quantile(x, 0.25), 1e-12);
    EXPECT_NEAR(s.median, oracle_quantile(x, 0.5), 1e-12);
    EXPECT_NEAR(s.q3, oracle_quantile(x, 0.75), 1e-12);
    double sum = 0;
    for (double y : x) sum += y;
    EXPECT_NEAR(s.mean, sum / static_cast<double>(x.size()), 1e-9);
    EXPECT_LE(s.min, s.q1);
    EXPECT_LE(s.q1, s.median);
    EXPECT_LE(s.median, s.q3);
    EXPECT_LE(s.q3, s.max);
  }
}

// Two circuits of one scale with hand-set forecasts.
struct Fixture {
  multiscale::ScaleSet scales = multiscale::resolve_scales({{"daily", 4}, {"weekly", 8}});
  std::map<std::string, data::MinMaxScaler> scalers{{"a", data::MinMaxScaler(0, 100)},
                                                    {"b", data::MinMaxScaler(10, 20)}};

  Forecast f(const std::string& c, Eigen::Index scale, double pred, double actual) const {
    Forecast out;
    out.circuit_id = c;
    out.scale = scale;
    out.predicted = Eigen::VectorXd::Constant(1, pred);
    out.actual = Eigen::VectorXd::Constant(1, actual);
    return out;
  }
};

TEST(Summarize, KilowattsPerGroupAndScale) {
  Fixture fx;
  std::vector<Forecast> fc{fx.f("a", 0, 0.5, 0.4), fx.f("a", 0, 0.2, 0.2),
                           fx.f("b", 0, 0.5, 0.0), fx.f("b", 1, 1.0, 0.5)};
  const auto kw = to_kilowatts(fc, fx.scalers);
  EXPECT_EQ(kw[0].units, Units::kilowatts);
  EXPECT_DOUBLE_EQ(kw[0].predicted(0), 50.0);
  EXPECT_DOUBLE_EQ(kw[2].predicted(0), 15.0);

  const Groups groups{{"both", {"a", "b"}}, {"only_b", {"b"}}};
  const auto rows = summarize(kw, fx.scales, groups, kModel);
  MetricsReport r;
  r.rows = rows;
  EXPECT_EQ(r.row("both", "daily", kModel).count, 3u);
  EXPECT_NEAR(r.row("both", "daily", kModel).mae_kw, (10.0 + 0.0 + 5.0) / 3, 1e-12);
  EXPECT_NEAR(r.row("only_b", "weekly", kModel).mae_kw, 5.0, 1e-12);
  EXPECT_EQ(r.row("only_b", "daily", kModel).abs_error_kw.max, 5.0);
  EXPECT_THROW(r.row("only_b", "monthly", kModel), ValidationError);
  for (const auto& row : rows)
    EXPECT_NEAR(row.abs_error_kw.mean, row.mae_kw, 1e-12);
}

TEST(Summarize, RefusesNormalizedValues) {
  Fixture fx;
  std::vector<Forecast> fc{fx.f("a", 0, 0.5, 0.4)};
  EXPECT_THROW(summarize(fc, fx.scales, default_groups(std::vector<std::string>{"a"}), kModel),
               ContractError);
}

TEST(Summarize, UnknownGroupMemberIsConfigError) {
  Fixture fx;
  const auto kw = to_kilowatts({fx.f("a", 0, 0.5, 0.4)}, fx.scalers);
  EXPECT_THROW(summarize(kw, fx.scales, {{"g", {"a", "zzz"}}}, kModel), ConfigError);
}

std::vector<multiscale::Sample> samples_of(const data::TimeSeries& s,
                                           const multiscale::ScaleSet& scales) {
  std::vector<multiscale::Sample> out;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(scales.scales.size()); ++i) {
    auto part = multiscale::build_samples(s, scales, i, {});
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

TEST(Baselines, PeriodicSeriesHasZeroPersistenceError) {
  synth::SynthSpec spec;
  spec.circuit_id = "p";
  spec.duration = 48 * 30;
  spec.components = {{48, 10, 0.4}};
  spec.base_load = 50;
  const auto raw = synth::generate(spec);
  const auto scaler = data::fit_scaler(raw);
  const auto norm = data::transform(scaler, raw);
  const auto scales = multiscale::resolve_scales({{"daily", 48}});
  const auto samples = samples_of(norm, scales);
  const auto rows = naive_baselines(samples, samples, scales, {{"p", scaler}},
                                    default_groups(std::vector<std::string>{"p"}));
  MetricsReport r;
  r.rows = rows;
  EXPECT_LT(r.row("all", "daily", kPersistence).mae_kw, 1e-9);
}

TEST(Baselines, ConstantTargetsGiveZeroError) {
  // Inputs vary but every next-period max is the same: persistence and the
  // training mean are both exact.
  data::TimeSeries s;
  s.circuit_id = "c";
  s.values.resize(8 * 20);
  for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values(i) = (i % 8 == 3) ? 1.0 : 0.1 * (i % 3);
  const auto scales = multiscale::resolve_scales({{"daily", 8}});
  const auto samples = samples_of(s, scales);
  const std::map<std::string, data::MinMaxScaler> scalers{{"c", data::MinMaxScaler(0, 1)}};
  MetricsReport r;
  r.rows = naive_baselines(samples, samples, scales, scalers,
                           default_groups(std::vector<std::string>{"c"}));
  EXPECT_EQ(r.row("all", "daily", kPersistence).mae_kw, 0.0);
  EXPECT_EQ(r.row("all", "daily", kTrainMean).mae_kw, 0.0);
}

TEST(Baselines, TrainMeanIsPerScaleMeanTarget) {
  std::vector<multiscale::Sample> train(4), test(2);
  const double targets[] = {0.1, 0.3, 0.8, 1.0};
  for (int i = 0; i < 4; ++i) {
    train[static_cast<std::size_t>(i)].target = Eigen::VectorXd::Constant(1, targets[i]);
    train[static_cast<std::size_t>(i)].scale = i < 2 ? 0 : 1;
  }
  for (int i = 0; i < 2; ++i) {
    test[static_cast<std::size_t>(i)].scale = i;
    test[static_cast<std::size_t>(i)].target = Eigen::VectorXd::Zero(1);
  }
  const auto fc = train_mean_forecasts(train, test, 2);
  EXPECT_DOUBLE_EQ(fc[0].predicted(0), 0.2);
  EXPECT_DOUBLE_EQ(fc[1].predicted(0), 0.9);
}

MetricsReport sample_report() {
  MetricsReport r;
  r.seed = 42;
  r.config_hash = "00ff00ff00ff00ff";
  r.rows.push_back({"campus", "daily", kModel, 10, 1.0 / 3, {0, 0.1, 0.2, 0.5, 2.0 / 3, 1.0 / 3}});
  r.rows.push_back({"campus", "weekly", kPersistence, 3, 1234.5678901234567,
                    {1e-300, 2, 3, 4, 1e300, 1234.5678901234567}});
  return r;
}

TEST(Report, JsonRoundTrip) {
  const auto r = sample_report();
  const auto text = to_json(r);
  EXPECT_EQ(parse_json_report(text), r);
  EXPECT_NE(text.find("\"schema_version\": 1"), std::string::npos);
  EXPECT_NE(text.find("\"units\": \"kW\""), std::string::npos);
  EXPECT_EQ(to_json(parse_json_report(text)), text);
}

TEST(Report, CsvRoundTripAndHeader) {
  const auto r = sample_report();
  const auto text = to_csv(r);
  EXPECT_EQ(parse_csv_report(text), r);
  std::istringstream in(text);
  std::string first, header;
  std::getline(in, first);
  std::getline(in, header);
  EXPECT_EQ(first.rfind("# schema_version=1", 0), 0u);
  EXPECT_NE(first.find("seed=42"), std::string::npos);
  EXPECT_EQ(header, "group,scale,predictor,count,mae_kw,min,q1,median,q3,max,mean");
}

TEST(Report, RejectsMalformedInput) {
  EXPECT_THROW(parse_json_report("{}"), FormatError);
  EXPECT_THROW(parse_json_report("not json"), FormatError);
  auto text = to_json(sample_report());
  text.replace(text.find("\"schema_version\": 1"), 19, "\"schema_version\": 7");
  EXPECT_THROW(parse_json_report(text), FormatError);
  EXPECT_THROW(parse_csv_report("group,scale\n"), FormatError);
}

TEST(Report, ExportWritesFilesAndFailsOnBadPath) {
  const auto dir = std::filesystem::temp_directory_path() / "multipofo_eval_test";
  std::filesystem::create_directories(dir);
  const auto r = sample_report();
  export_report(r, dir / "m.json", ReportFormat::json);
  export_report(r, dir / "m.csv", ReportFormat::csv);
  std::ifstream j(dir / "m.json"), c(dir / "m.csv");
  EXPECT_EQ(parse_json_report({std::istreambuf_iterator<char>(j), {}}), r);
  EXPECT_EQ(parse_csv_report({std::istreambuf_iterator<char>(c), {}}), r);
  EXPECT_THROW(export_report(r, "/nonexistent/dir/m.json", ReportFormat::json), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Report, SortOrderIsGroupScalePredictor) {
  Fixture fx;
  MetricsReport r;
  r.rows = {{"b", "weekly", kTrainMean}, {"a", "weekly", kModel}, {"a", "daily", kPersistence},
            {"a", "daily", kModel}};
  sort_rows(r, fx.scales);
  EXPECT_EQ(r.rows[0].predictor, kModel);
  EXPECT_EQ(r.rows[0].scale, "daily");
  EXPECT_EQ(r.rows[1].predictor, kPersistence);
  EXPECT_EQ(r.rows[2].scale, "weekly");
  EXPECT_EQ(r.rows[3].group, "b");
}

TEST(ForecastsCsv, RowsInKilowatts) {
  Fixture fx;
  auto kw = to_kilowatts({fx.f("a", 1, 0.5, 0.25)}, fx.scalers);
  std::ostringstream out;
  write_forecasts_csv(out, kw, fx.scales, kModel);
  EXPECT_EQ(out.str(), "a,weekly,multipofo,1970-01-01T00:00:00Z,50,25,25\n");
  std::ostringstream bad;
  EXPECT_THROW(write_forecasts_csv(bad, std::vector<Forecast>{fx.f("a", 0, 1, 1)}, fx.scales, kModel),
               ContractError);
}

}  // namespace
}  // namespace multipofo::eval
