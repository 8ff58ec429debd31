// multipofo: synth | train | predict | evaluate
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "multipofo/config.hpp"
#include "multipofo/errors.hpp"
#include "multipofo/eval.hpp"
#include "multipofo/model.hpp"
#include "multipofo/pipeline.hpp"
#include "multipofo/text.hpp"

namespace fs = std::filesystem;
using namespace multipofo;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

fs::path resolve_out_dir(const std::optional<std::string>& flag,
                         const RunConfig* config) {
  if (flag) return *flag;
  if (config != nullptr && config->out_dir) return *config->out_dir;
  if (const char* env = std::getenv("MULTIPOFO_OUT_DIR"); env && *env) return env;
  return "multipofo-out";
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
}

void print_report(const eval::MetricsReport& report) {
  std::cout << "group,scale,predictor,count,mae_kw\n";
  for (const auto& r : report.rows) {
    std::cout << r.group << ',' << r.scale << ',' << r.predictor << ','
              << r.count << ',' << text::format_double(r.mae_kw) << '\n';
  }
}

void write_reports(const fs::path& dir, const std::string& stem,
                   const eval::MetricsReport& report) {
  eval::export_report(report, dir / (stem + ".json"), eval::ReportFormat::json);
  eval::export_report(report, dir / (stem + ".csv"), eval::ReportFormat::csv);
}

int cmd_synth(const std::string& config_path, const std::string& out_csv,
              std::optional<std::uint64_t> seed) {
  auto config = load_run_config(config_path);
  if (!config.data.synth) {
    throw ConfigError("synth: config has no data.synth section");
  }
  if (seed) set_synth_seed(config, *seed);
  const auto series = load_series(config);
  const auto base_seed = config.data.synth->front().seed;
  std::ofstream out(out_csv, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_csv);
  data::write_csv(out, series,
                  "multipofo synth seed=" + std::to_string(base_seed) +
                      " circuits=" + std::to_string(series.size()));
  if (!out) throw IoError("failed writing " + out_csv);
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::optional<std::string>& out_flag) {
  auto config = load_run_config(config_path);
  if (seed) config.pipeline.train.seed = *seed;
  const auto out_dir = resolve_out_dir(out_flag, &config);
  const auto raw = load_series(config);
  const auto result = run_pipeline(raw, config);

  ensure_dir(out_dir);
  save(result.checkpoint, out_dir / "model.ckpt");
  {
    std::ofstream log(out_dir / "train_log.csv", std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot write train log");
    write_train_log_csv(log, result.log);
  }
  write_reports(out_dir, "metrics", result.report);
  {
    std::ofstream f(out_dir / "forecasts.csv", std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write forecasts");
    f << "circuit_id,scale,predictor,anchor_time,predicted_kw,actual_kw,error_kw\n";
    eval::write_forecasts_csv(f, result.forecasts, result.checkpoint.scales,
                              eval::kModel);
  }
  print_report(result.report);
  std::cerr << "wrote " << (out_dir / "model.ckpt").string() << ", train_log.csv, "
            << "metrics.json, metrics.csv, forecasts.csv ("
            << result.log.wall_seconds << " s training)\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& window_csv,
                const std::string& scale) {
  const auto ckpt = load(checkpoint_path);
  std::chrono::seconds step{1800};
  try {
    const auto cfg = nlohmann::json::parse(ckpt.config_json);
    if (cfg.contains("step_seconds")) step = std::chrono::seconds(cfg["step_seconds"].get<long>());
  } catch (const nlohmann::json::exception&) {
    // older or hand-built checkpoints: keep the 30-minute default
  }
  const auto series = data::ingest_csv(window_csv, {step});
  if (series.size() != 1) {
    throw ConfigError("predict: window file must contain exactly one circuit, found " +
                      std::to_string(series.size()));
  }
  const auto y = predict_window(ckpt, series.front(), scale);
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    std::cout << text::format_double(y(k)) << '\n';
  }
  return 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& config_path,
                 const std::optional<std::string>& data_csv,
                 const std::optional<std::string>& out_flag) {
  const auto ckpt = load(checkpoint_path);
  auto config = load_run_config(config_path);
  if (data_csv) {
    config.data.csv = fs::path(*data_csv);
    config.data.synth.reset();
  }
  const auto out_dir = resolve_out_dir(out_flag, &config);
  const auto raw = load_series(config);
  const auto prepared = prepare(raw, config.pipeline, ckpt);
  const auto report = evaluate(ckpt, prepared, config.pipeline.groups,
                               config.pipeline.train.seed, config_hash(config));
  ensure_dir(out_dir);
  write_reports(out_dir, "eval_metrics", report);
  print_report(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-timescale peak load forecasting"};
  app.require_subcommand(1);

  std::string config_path, out_csv, checkpoint, window, scale;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir, data_csv;

  auto* synth = app.add_subcommand("synth", "Write synthetic load series as CSV");
  synth->add_option("--config", config_path, "Run config (JSON)")->required();
  synth->add_option("--out", out_csv, "Output CSV path")->required();
  synth->add_option("--seed", seed, "Override the synthetic noise seed");

  auto* train = app.add_subcommand("train", "Two-stage training and test evaluation");
  train->add_option("--config", config_path, "Run config (JSON)")->required();
  train->add_option("--seed", seed, "Override train.seed");
  train->add_option("--out-dir", out_dir, "Output directory");

  auto* pred = app.add_subcommand("predict", "Forecast the next-period maximum for one window");
  pred->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  pred->add_option("--window", window, "Window CSV (timestamp,circuit_id,load_kw)")->required();
  pred->add_option("--scale", scale, "Scale name, e.g. daily")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on the configured test split");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evaluate->add_option("--config", config_path, "Run config (JSON)")->required();
  evaluate->add_option("--data", data_csv, "CSV data overriding the config source");
  evaluate->add_option("--out-dir", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(config_path, out_csv, seed);
    if (*train) return cmd_train(config_path, seed, out_dir);
    if (*pred) return cmd_predict(checkpoint, window, scale);
    if (*evaluate) return cmd_evaluate(checkpoint, config_path, data_csv, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
