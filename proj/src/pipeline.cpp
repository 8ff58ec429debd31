#include "multipofo/pipeline.hpp"

#include <set>

#include "multipofo/errors.hpp"

namespace multipofo {

namespace {

// Runs `fn`, prefixing any library error with the pipeline stage name while
// keeping its category (ConfigError stays a usage error for the CLI).
template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  const auto tag = [&](const std::exception& e) {
    return std::string("stage '") + stage + "': " + e.what();
  };
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(tag(e));
  } catch (const ValidationError& e) {
    throw ValidationError(tag(e));
  } catch (const TrainingError& e) {
    throw TrainingError(tag(e));
  } catch (const ContractError& e) {
    throw ContractError(tag(e));
  } catch (const Error& e) {
    throw Error(tag(e));
  }
}

void check_circuits(const std::vector<data::TimeSeries>& raw,
                    const PipelineConfig& config) {
  if (raw.empty()) throw ValidationError("no input series");
  std::set<std::string> ids;
  for (const auto& s : raw) {
    if (!ids.insert(s.circuit_id).second) {
      throw ValidationError("circuit '" + s.circuit_id + "' appears twice");
    }
    if (s.step != config.step) {
      throw ValidationError("circuit '" + s.circuit_id + "' has step " +
                            std::to_string(s.step.count()) +
                            " s but the config expects " +
                            std::to_string(config.step.count()) + " s");
    }
  }
}

void append_samples(PreparedData& out, const data::TimeSeries& train_n,
                    const data::TimeSeries& test_n,
                    const multiscale::TargetSpec& target) {
  for (Eigen::Index s = 0; s < static_cast<Eigen::Index>(out.scales.scales.size());
       ++s) {
    auto tr = multiscale::build_samples(train_n, out.scales, s, target);
    auto te = multiscale::build_samples(test_n, out.scales, s, target);
    std::move(tr.begin(), tr.end(), std::back_inserter(out.train));
    std::move(te.begin(), te.end(), std::back_inserter(out.test));
  }
}

}  // namespace

PreparedData prepare(const std::vector<data::TimeSeries>& raw,
                     const PipelineConfig& config) {
  check_circuits(raw, config);
  PreparedData out;
  out.scales = multiscale::resolve_scales(config.scales, config.embedding_size);
  for (const auto& series : raw) {
    const auto filled = data::fill_gaps(series, config.gap_policy);
    const auto parts = data::split(filled, config.split);
    const auto scaler = data::fit_scaler(parts.train);
    append_samples(out, data::transform(scaler, parts.train),
                   data::transform(scaler, parts.test), config.target);
    out.scalers.emplace(series.circuit_id, scaler);
    out.circuits.push_back(series.circuit_id);
  }
  return out;
}

PreparedData prepare(const std::vector<data::TimeSeries>& raw,
                     const PipelineConfig& config, const Checkpoint& ckpt) {
  check_circuits(raw, config);
  PreparedData out;
  out.scales = ckpt.scales;
  for (const auto& series : raw) {
    const auto it = ckpt.scalers.find(series.circuit_id);
    if (it == ckpt.scalers.end()) {
      std::string known;
      for (const auto& [id, s] : ckpt.scalers) known += (known.empty() ? "" : ", ") + id;
      throw ConfigError("circuit '" + series.circuit_id +
                        "' is not in the checkpoint (known circuits: " + known + ")");
    }
    const auto filled = data::fill_gaps(series, config.gap_policy);
    const auto parts = data::split(filled, config.split);
    append_samples(out, data::transform(it->second, parts.train),
                   data::transform(it->second, parts.test), ckpt.target);
    out.scalers.emplace(series.circuit_id, it->second);
    out.circuits.push_back(series.circuit_id);
  }
  return out;
}

std::vector<eval::Forecast> model_forecasts(
    const MultipofoModel& model, std::span<const multiscale::Sample> samples) {
  const MatrixXd preds = predict_samples(model, samples);
  std::vector<eval::Forecast> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    eval::Forecast f;
    f.circuit_id = s.circuit_id;
    f.scale = s.scale;
    f.anchor_time = s.anchor_time;
    f.predicted = preds.col(static_cast<Eigen::Index>(i));
    f.actual = s.target;
    out.push_back(std::move(f));
  }
  return out;
}

eval::MetricsReport evaluate(const Checkpoint& ckpt, const PreparedData& data,
                             const eval::Groups& groups, std::uint64_t seed,
                             const std::string& config_hash) {
  if (data.test.empty()) {
    throw ValidationError("the configured split yields no test samples");
  }
  const auto effective =
      groups.empty() ? eval::default_groups(data.circuits) : groups;
  eval::MetricsReport report;
  report.seed = seed;
  report.config_hash = config_hash;
  report.rows = eval::summarize(
      eval::to_kilowatts(model_forecasts(ckpt.model, data.test), data.scalers),
      data.scales, effective, eval::kModel);
  auto baselines = eval::naive_baselines(data.train, data.test, data.scales,
                                         data.scalers, effective);
  report.rows.insert(report.rows.end(), baselines.begin(), baselines.end());
  eval::sort_rows(report, data.scales);
  return report;
}

PipelineResult run_pipeline(const std::vector<data::TimeSeries>& raw,
                            const RunConfig& config) {
  const auto& p = config.pipeline;
  in_stage("config", [&] {
    p.train.validate();
    return 0;
  });
  const auto hash = config_hash(config);
  auto prepared = in_stage("prepare", [&] { return prepare(raw, p); });

  auto rng = nn::seed_rng(p.train.seed);
  ModelDims dims;
  dims.input_size = prepared.scales.embedded_size();
  dims.output_size = prepared.scales.max_window;
  dims.hidden1 = p.model.hidden1;
  dims.hidden2 = p.model.hidden2;
  dims.latent = p.model.latent;
  dims.horizon = p.target.horizon;
  dims.heads = p.model.per_scale_heads
                   ? static_cast<Eigen::Index>(prepared.scales.scales.size())
                   : 1;

  PipelineResult result;
  auto model = in_stage("init", [&] { return make_model(dims, rng); });
  result.log = in_stage("stage1", [&] {
    return train_stage1(model, prepared.train, p.train, rng);
  });
  freeze_encoder(model);
  result.log.append(in_stage("stage2", [&] {
    return train_stage2(model, prepared.train, p.train, rng);
  }));
  result.log.seed = p.train.seed;
  result.log.config_hash = hash;

  result.checkpoint = {std::move(model), prepared.scales, p.target,
                       prepared.scalers, canonical_json(config)};
  result.report = in_stage("evaluate", [&] {
    return evaluate(result.checkpoint, prepared, p.groups, p.train.seed, hash);
  });
  result.forecasts = eval::to_kilowatts(
      model_forecasts(result.checkpoint.model, prepared.test), prepared.scalers);
  return result;
}

Eigen::VectorXd predict_window(const Checkpoint& ckpt,
                               const data::TimeSeries& window,
                               const std::string& scale_name) {
  const auto& scale = ckpt.scales.by_name(scale_name);
  Eigen::Index scale_index = 0;
  while (ckpt.scales.scales[static_cast<std::size_t>(scale_index)].name != scale_name)
    ++scale_index;
  const auto it = ckpt.scalers.find(window.circuit_id);
  if (it == ckpt.scalers.end()) {
    throw ConfigError("circuit '" + window.circuit_id +
                      "' has no scaler in the checkpoint");
  }
  if (window.size() != scale.window_len) {
    throw ValidationError("input window has " + std::to_string(window.size()) +
                          " steps but scale '" + scale_name + "' expects L = " +
                          std::to_string(scale.window_len));
  }
  if (window.has_gaps()) throw ValidationError("input window has missing values");
  const VectorXd scaled = it->second.transform(window.values);
  const VectorXd embedded = multiscale::embed(
      multiscale::pad_to_max(scaled, ckpt.scales.max_window), scale,
      ckpt.scales.embedding_size);
  const VectorXd z = encode(ckpt.model, embedded);
  return it->second.inverse(
      predict(ckpt.model, z, head_for_scale(ckpt.model, scale_index)));
}

}  // namespace multipofo
