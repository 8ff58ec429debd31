#include "multipofo/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "multipofo/errors.hpp"
#include "multipofo/nn.hpp"

namespace multipofo::synth {

void validate(const SynthSpec& spec) {
  const auto where = "synthetic circuit '" + spec.circuit_id + "': ";
  if (spec.duration <= 0) throw ConfigError(where + "duration must be > 0 steps");
  if (spec.step <= std::chrono::seconds{0}) {
    throw ConfigError(where + "step must be positive");
  }
  if (!(spec.noise_std >= 0)) throw ConfigError(where + "noise_std must be >= 0");
  double amplitude_sum = 0;
  for (const auto& c : spec.components) {
    if (!(c.period > 0)) throw ConfigError(where + "component period must be > 0");
    if (!(c.amplitude >= 0)) {
      throw ConfigError(where + "component amplitude must be >= 0");
    }
    amplitude_sum += c.amplitude;
  }
  if (spec.base_load < amplitude_sum + 4 * spec.noise_std) {
    throw ConfigError(where + "base_load must be >= sum of amplitudes + 4 * noise_std");
  }
}

double signal_at(const SynthSpec& spec, Eigen::Index t) {
  double x = spec.base_load;
  for (const auto& c : spec.components) {
    x += c.amplitude *
         std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / c.period +
                  c.phase);
  }
  return x;
}

data::TimeSeries generate(const SynthSpec& spec) {
  validate(spec);
  data::TimeSeries ts;
  ts.circuit_id = spec.circuit_id;
  ts.start = spec.start;
  ts.step = spec.step;
  ts.values.resize(spec.duration);
  for (Eigen::Index t = 0; t < spec.duration; ++t) ts.values(t) = signal_at(spec, t);
  if (spec.noise_std > 0) {
    auto rng = nn::seed_rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (Eigen::Index t = 0; t < spec.duration; ++t) ts.values(t) += noise(rng);
  }
  return ts;
}

std::vector<Eigen::VectorXd> oracle_max_targets(
    const SynthSpec& spec, Eigen::Index window_len, Eigen::Index stride,
    const multiscale::TargetSpec& target) {
  validate(spec);
  if (spec.noise_std != 0) {
    throw ConfigError("oracle_max_targets requires noise_std == 0");
  }
  if (window_len < 2 || stride < 1 || target.horizon < 1) {
    throw ConfigError("oracle_max_targets: invalid window/stride/horizon");
  }
  const Eigen::Index span = target.full_period ? window_len : window_len - 1;
  std::vector<Eigen::VectorXd> out;
  for (Eigen::Index t = window_len - 1;; t += stride) {
    const Eigen::Index last = t + (target.horizon - 1) * window_len + span;
    if (last >= spec.duration) break;
    Eigen::VectorXd maxima(target.horizon);
    for (Eigen::Index k = 0; k < target.horizon; ++k) {
      const Eigen::Index first = t + k * window_len + 1;
      double best = signal_at(spec, first);
      for (Eigen::Index u = first + 1; u < first + span; ++u) {
        best = std::max(best, signal_at(spec, u));
      }
      maxima(k) = best;
    }
    out.push_back(std::move(maxima));
  }
  return out;
}

}  // namespace multipofo::synth
