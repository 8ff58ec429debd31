#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "multipofo/data.hpp"
#include "multipofo/eval.hpp"

namespace fs = std::filesystem;

namespace multipofo {
namespace {

struct CliResult {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

class Cli : public ::testing::Test {
 protected:
  static fs::path dir;
  static const fs::path smoke;

  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / ("multipofo_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  static void TearDownTestSuite() { fs::remove_all(dir); }

  static CliResult run(const std::string& args) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string(MULTIPOFO_CLI) + " " + args + " >" + out.string() +
                            " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  // Trains the smoke config once and shares the output directory.
  static const fs::path& trained() {
    static const fs::path out = [] {
      const auto o = dir / "trained";
      const auto r = run("train --config " + smoke.string() + " --out-dir " + o.string());
      EXPECT_EQ(r.code, 0) << r.err;
      return o;
    }();
    return out;
  }

  static std::vector<data::TimeSeries> smoke_series() {
    const auto csv = dir / "smoke.csv";
    if (!fs::exists(csv)) {
      EXPECT_EQ(run("synth --config " + smoke.string() + " --out " + csv.string()).code, 0);
    }
    return data::ingest_csv(csv);
  }

  static fs::path write_window(const data::TimeSeries& s, Eigen::Index first, Eigen::Index len,
                               const std::string& name) {
    data::TimeSeries w;
    w.circuit_id = s.circuit_id;
    w.start = s.time_at(first);
    w.step = s.step;
    w.values = s.values.segment(first, len);
    std::ostringstream out;
    data::write_csv(out, std::vector<data::TimeSeries>{w});
    spit(dir / name, out.str());
    return dir / name;
  }
};

fs::path Cli::dir;
const fs::path Cli::smoke = MULTIPOFO_SOURCE_DIR "/configs/smoke.json";

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("fly").code, 2);
  EXPECT_EQ(run("train").code, 2);
  EXPECT_EQ(run("train --config /nonexistent/config.json").code, 2);
  spit(dir / "bad.json", R"({"data": {"csv": "x.csv"}})");
  EXPECT_EQ(run("train --config " + (dir / "bad.json").string()).code, 2);
}

TEST_F(Cli, SynthWritesParseableCsvWithSeedComment) {
  const auto csv = dir / "synth_seed.csv";
  const auto r = run("synth --config " + smoke.string() + " --out " + csv.string() + " --seed 42");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = slurp(csv);
  EXPECT_EQ(text.rfind("# multipofo synth seed=42", 0), 0u) << text.substr(0, 80);
  const auto series = data::ingest_csv(csv);
  ASSERT_EQ(series.size(), 2u);
  EXPECT_EQ(series[0].circuit_id, "north");
  EXPECT_EQ(series[0].size(), 3360);
  EXPECT_FALSE(series[0].has_gaps());
}

TEST_F(Cli, SynthZeroDurationIsConfigError) {
  auto text = slurp(smoke);
  text.replace(text.find("3360"), 4, "0");
  spit(dir / "zero.json", text);
  EXPECT_EQ(run("synth --config " + (dir / "zero.json").string() + " --out " +
                (dir / "zero.csv").string())
                .code,
            2);
}

TEST_F(Cli, TrainWritesArtifacts) {
  const auto& out = trained();
  for (const auto* name : {"model.ckpt", "train_log.csv", "metrics.json", "metrics.csv",
                           "forecasts.csv"}) {
    EXPECT_TRUE(fs::exists(out / name)) << name;
  }
  const auto report = eval::parse_json_report(slurp(out / "metrics.json"));
  EXPECT_EQ(report, eval::parse_csv_report(slurp(out / "metrics.csv")));
  EXPECT_EQ(slurp(out / "train_log.csv").rfind("epoch,stage,loss\n", 0), 0u);
}

TEST_F(Cli, TrainMissingDataFileNamesPath) {
  spit(dir / "csv.json", R"({"data": {"csv": "/nonexistent/loads.csv"},
                             "split": {"train_end": "2016-01-01T00:00:00Z"}})");
  const auto r = run("train --config " + (dir / "csv.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/nonexistent/loads.csv"), std::string::npos) << r.err;
}

TEST_F(Cli, TrainIsDeterministic) {
  const auto again = dir / "again";
  ASSERT_EQ(run("train --config " + smoke.string() + " --out-dir " + again.string()).code, 0);
  EXPECT_EQ(slurp(again / "metrics.json"), slurp(trained() / "metrics.json"));
  EXPECT_EQ(slurp(again / "metrics.csv"), slurp(trained() / "metrics.csv"));
  EXPECT_EQ(slurp(again / "model.ckpt"), slurp(trained() / "model.ckpt"));
  EXPECT_EQ(slurp(again / "forecasts.csv"), slurp(trained() / "forecasts.csv"));
}

TEST_F(Cli, PredictOnTrainingWindowsIsWithinTestError) {
  const auto ckpt = trained() / "model.ckpt";
  const auto report = eval::parse_json_report(slurp(trained() / "metrics.json"));
  const double test_mae = report.row("north_only", "daily", eval::kModel).mae_kw;
  const auto series = smoke_series();
  const auto& north = series[0];
  ASSERT_EQ(north.circuit_id, "north");
  // Sampled spot check over training windows. Both this error and the test
  // MAE sit near the noise floor of a maximum over noisy samples, and the test
  // MAE comes from only 13 windows, hence the allowance.
  constexpr double kAllowance = 1.25;
  std::vector<double> errors;
  for (Eigen::Index anchor = 47; anchor + 47 < 2400; anchor += 48) {
    const auto w = write_window(north, anchor - 47, 48, "window.csv");
    const auto r = run("predict --checkpoint " + ckpt.string() + " --window " + w.string() +
                       " --scale daily");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.find('\n'), r.out.size() - 1) << "expected one number: " << r.out;
    errors.push_back(std::abs(std::stod(r.out) - north.values.segment(anchor + 1, 47).maxCoeff()));
  }
  std::sort(errors.begin(), errors.end());
  const double median = errors[errors.size() / 2];
  EXPECT_LE(median, kAllowance * test_mae) << "median " << median << " of " << errors.size();
}

TEST_F(Cli, PredictReproducesTrainingForecasts) {
  const auto ckpt = trained() / "model.ckpt";
  const auto series = smoke_series();
  const auto& north = series[0];
  std::istringstream rows(slurp(trained() / "forecasts.csv"));
  std::string line;
  int checked = 0;
  while (std::getline(rows, line)) {
    if (line.rfind("north,daily,multipofo,", 0) != 0) continue;
    std::vector<std::string> f;
    std::istringstream fields(line);
    for (std::string x; std::getline(fields, x, ',');) f.push_back(x);
    const auto anchor = (data::parse_timestamp(f[3]) - north.start) / north.step;
    const auto w = write_window(north, anchor - 47, 48, "test_window.csv");
    const auto r = run("predict --checkpoint " + ckpt.string() + " --window " + w.string() +
                       " --scale daily");
    ASSERT_EQ(r.code, 0) << r.err;
    // Batched and single-column products may differ in the last bit.
    const double want = std::stod(f[4]);
    EXPECT_NEAR(std::stod(r.out), want, 1e-12 * std::abs(want)) << f[3];
    ++checked;
  }
  EXPECT_EQ(checked, 13);
}

TEST_F(Cli, PredictErrors) {
  const auto ckpt = trained() / "model.ckpt";
  const auto series = smoke_series();
  const auto short_w = write_window(series[0], 0, 40, "short.csv");
  auto r = run("predict --checkpoint " + ckpt.string() + " --window " + short_w.string() +
               " --scale daily");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("48"), std::string::npos) << r.err;

  const auto w = write_window(series[0], 0, 48, "ok.csv");
  r = run("predict --checkpoint " + ckpt.string() + " --window " + w.string() +
          " --scale monthly");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("daily"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("weekly"), std::string::npos) << r.err;

  auto bytes = slurp(ckpt);
  bytes[bytes.size() / 2] ^= 0x10;
  spit(dir / "corrupt.ckpt", bytes);
  r = run("predict --checkpoint " + (dir / "corrupt.ckpt").string() + " --window " + w.string() +
          " --scale daily");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(run("predict --checkpoint /nonexistent.ckpt --window " + w.string() +
                " --scale daily")
                .code,
            2);
}

TEST_F(Cli, PredictOnNearConstantDataReturnsTheLevel) {
  // A constant series cannot be min-max scaled, so the level carries a tiny
  // amount of noise.
  const auto config = dir / "flat.json";
  spit(config, R"({
    "data": {"synth": {"start": "2015-01-01T00:00:00Z", "duration": 1440, "seed": 1,
                       "circuits": [{"id": "flat", "base_load": 50, "noise_std": 0.01}]}},
    "split": {"train_end": "2015-01-26T00:00:00Z"},
    "scales": [{"name": "daily", "window_len": 48, "stride": 4}],
    "model": {"hidden1": 16, "hidden2": 8, "latent_dim": 4},
    "train": {"stage1_epochs": 20, "stage2_epochs": 30, "batch_size": 8,
              "stage2_learning_rate": 0.01}})");
  const auto out = dir / "flat";
  ASSERT_EQ(run("train --config " + config.string() + " --out-dir " + out.string()).code, 0);
  data::TimeSeries c;
  c.circuit_id = "flat";
  c.start = data::parse_timestamp("2015-02-01T00:00:00Z");
  c.values = Eigen::VectorXd::Constant(48, 50.0);
  const auto w = write_window(c, 0, 48, "flat_window.csv");
  const auto r = run("predict --checkpoint " + (out / "model.ckpt").string() + " --window " +
                     w.string() + " --scale daily");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(std::stod(r.out), 50.0, 0.1);
}

TEST_F(Cli, EvaluateReportsEveryGroupScaleWithBaselines) {
  const auto out = dir / "eval";
  const auto r = run("evaluate --checkpoint " + (trained() / "model.ckpt").string() +
                     " --config " + smoke.string() + " --out-dir " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = eval::parse_json_report(slurp(out / "eval_metrics.json"));
  EXPECT_EQ(report, eval::parse_csv_report(slurp(out / "eval_metrics.csv")));
  EXPECT_EQ(report.rows.size(), 2u * 2u * 3u);
  for (const auto* g : {"all_circuits", "north_only"}) {
    for (const auto* s : {"daily", "weekly"}) {
      for (const auto* p : {eval::kModel, eval::kPersistence, eval::kTrainMean}) {
        EXPECT_NO_THROW(report.row(g, s, p)) << g << ' ' << s << ' ' << p;
      }
    }
  }
  // Same checkpoint and split as training, so the same numbers.
  EXPECT_EQ(report, eval::parse_json_report(slurp(trained() / "metrics.json")));
}

TEST_F(Cli, EvaluateUntrainedModelCompletes) {
  auto text = slurp(smoke);
  text.replace(text.find(R"("learning_rate": 0.001, "stage2_learning_rate": 0.01)"),
               std::string(R"("learning_rate": 0.001, "stage2_learning_rate": 0.01)").size(),
               R"("learning_rate": 0, "stage2_learning_rate": 0)");
  text.replace(text.find(R"("stage1_epochs": 40, "stage2_epochs": 40)"),
               std::string(R"("stage1_epochs": 40, "stage2_epochs": 40)").size(),
               R"("stage1_epochs": 1, "stage2_epochs": 1)");
  const auto config = dir / "untrained.json";
  spit(config, text);
  const auto out = dir / "untrained";
  ASSERT_EQ(run("train --config " + config.string() + " --out-dir " + out.string()).code, 0);
  const auto r = run("evaluate --checkpoint " + (out / "model.ckpt").string() + " --config " +
                     smoke.string() + " --out-dir " + (out / "eval").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = eval::parse_json_report(slurp(out / "eval" / "eval_metrics.json"));
  EXPECT_TRUE(std::isfinite(report.row("all_circuits", "daily", eval::kModel).mae_kw));
}

TEST_F(Cli, EvaluateWithoutTestSamplesFails) {
  auto text = slurp(smoke);
  text.replace(text.find("2015-02-26T00"), 13, "2015-03-11T06");
  spit(dir / "late.json", text);
  const auto r = run("evaluate --checkpoint " + (trained() / "model.ckpt").string() +
                     " --config " + (dir / "late.json").string() + " --out-dir " +
                     (dir / "late").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("too short"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace multipofo
