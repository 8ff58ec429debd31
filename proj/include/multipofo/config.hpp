#pragma once

// Run configuration: a JSON document with nested sections for the data
// source, split, scales, model, training and report grouping.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "multipofo/data.hpp"
#include "multipofo/eval.hpp"
#include "multipofo/multiscale.hpp"
#include "multipofo/synth.hpp"
#include "multipofo/training.hpp"

namespace multipofo {

struct ModelWidths {
  Eigen::Index hidden1 = 256;
  Eigen::Index hidden2 = 128;
  Eigen::Index latent = 64;
  bool per_scale_heads = false;
};

/// Everything run_pipeline() needs besides the raw series.
struct PipelineConfig {
  data::SplitSpec split{};
  data::GapPolicy gap_policy = data::GapPolicy::linear;
  std::chrono::seconds step{1800};
  std::vector<multiscale::ScaleSpec> scales = multiscale::default_scales();
  std::optional<Eigen::Index> embedding_size;
  multiscale::TargetSpec target;
  ModelWidths model;
  TrainConfig train;
  eval::Groups groups;  // empty: one group "all"
};

/// Exactly one of `csv` and `synth` is set.
struct DataSource {
  std::optional<std::filesystem::path> csv;
  std::optional<std::vector<synth::SynthSpec>> synth;
};

struct RunConfig {
  DataSource data;
  PipelineConfig pipeline;
  std::optional<std::filesystem::path> out_dir;
};

/// Parses a config document. Relative paths are resolved against `base_dir`.
RunConfig parse_run_config(std::string_view json_text,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON of the data source and pipeline settings (the output
/// directory is excluded).
std::string canonical_json(const RunConfig& config);
std::string config_hash(const RunConfig& config);

/// Overrides every synthetic circuit seed: circuit k gets `seed + k`.
void set_synth_seed(RunConfig& config, std::uint64_t seed);

/// Raw series from the configured source.
std::vector<data::TimeSeries> load_series(const RunConfig& config);

}  // namespace multipofo
