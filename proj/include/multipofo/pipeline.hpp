#pragma once

// End-to-end run: gap filling, split, per-circuit scaling, sample
// construction, two-stage training and evaluation on the test partition.

#include <map>
#include <string>
#include <vector>

#include "multipofo/config.hpp"
#include "multipofo/eval.hpp"
#include "multipofo/model.hpp"
#include "multipofo/training.hpp"

namespace multipofo {

struct PreparedData {
  multiscale::ScaleSet scales;
  std::map<std::string, data::MinMaxScaler> scalers;
  std::vector<std::string> circuits;
  std::vector<multiscale::Sample> train;
  std::vector<multiscale::Sample> test;
};

/// Fills gaps, splits, fits one scaler per circuit on its training
/// partition and builds samples for every enabled scale from each partition
/// separately.
PreparedData prepare(const std::vector<data::TimeSeries>& raw,
                     const PipelineConfig& config);

/// As prepare(), but reusing the scale layout and scalers of a checkpoint.
PreparedData prepare(const std::vector<data::TimeSeries>& raw,
                     const PipelineConfig& config, const Checkpoint& ckpt);

struct PipelineResult {
  Checkpoint checkpoint;
  TrainLog log;
  eval::MetricsReport report;
  std::vector<eval::Forecast> forecasts;  // model forecasts on test, kW
};

PipelineResult run_pipeline(const std::vector<data::TimeSeries>& raw,
                            const RunConfig& config);

/// Model forecasts (normalized) for `samples`.
std::vector<eval::Forecast> model_forecasts(
    const MultipofoModel& model, std::span<const multiscale::Sample> samples);

/// Model and baseline rows on the prepared test set.
eval::MetricsReport evaluate(const Checkpoint& ckpt, const PreparedData& data,
                             const eval::Groups& groups, std::uint64_t seed,
                             const std::string& config_hash);

/// Forecast in kW for one raw input window of the named scale; `window`
/// must be one circuit known to the checkpoint, exactly L_i long.
Eigen::VectorXd predict_window(const Checkpoint& ckpt,
                               const data::TimeSeries& window,
                               const std::string& scale_name);

}  // namespace multipofo
