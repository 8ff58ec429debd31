#pragma once

// Synthetic load: base load plus sinusoidal components and Gaussian noise,
// with an independent dense-evaluation oracle for the max targets.

#include <cstdint>
#include <vector>

#include "multipofo/data.hpp"
#include "multipofo/multiscale.hpp"

namespace multipofo::synth {

struct Component {
  double period = 48;     // steps
  double amplitude = 0;   // kW
  double phase = 0;       // radians
};

struct SynthSpec {
  std::string circuit_id = "synthetic";
  data::Timestamp start{};
  std::chrono::seconds step{1800};
  Eigen::Index duration = 0;  // steps
  std::vector<Component> components;
  double base_load = 0;  // kW
  double noise_std = 0;  // kW
  std::uint64_t seed = 0;
};

/// Throws ConfigError unless duration > 0, periods > 0, amplitudes >= 0,
/// noise_std >= 0 and base_load >= sum of amplitudes + 4 noise_std.
void validate(const SynthSpec& spec);

/// base + sum_k A_k sin(2 pi t / P_k + phi_k), without noise.
double signal_at(const SynthSpec& spec, Eigen::Index t);

/// The deterministic signal plus N(0, noise_std^2) noise drawn from a
/// generator seeded with spec.seed.
data::TimeSeries generate(const SynthSpec& spec);

/// Exact targets of build_windows() on the generated series, obtained by
/// evaluating signal_at() over each target slice. Requires noise_std == 0.
std::vector<Eigen::VectorXd> oracle_max_targets(
    const SynthSpec& spec, Eigen::Index window_len, Eigen::Index stride,
    const multiscale::TargetSpec& target = {});

}  // namespace multipofo::synth
