#pragma once

// Per-scale supervised samples: sliding input windows with max-over-next-
// period targets, zero padding to the longest enabled window, and the
// one-hot scale suffix that lets one encoder serve every scale.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "multipofo/data.hpp"

namespace multipofo::multiscale {

using Eigen::Index;
using Eigen::VectorXd;

struct ScaleSpec {
  std::string name;        // daily, weekly, monthly or yearly
  Index window_len = 0;    // L_i, in steps
  Index one_hot_index = -1;  // -1: assigned by resolve_scales()
  bool enabled = true;
  Index stride = 0;  // 0: non-overlapping (stride = window_len)

  Index effective_stride() const { return stride > 0 ? stride : window_len; }
};

/// Standard scales at 30-minute resolution: daily 48, weekly 336, monthly
/// 1440 (30 days), yearly 17520. Yearly is disabled.
std::vector<ScaleSpec> default_scales();

/// The enabled scales with validated one-hot indices.
struct ScaleSet {
  std::vector<ScaleSpec> scales;  // enabled only, in config order
  Index embedding_size = 0;       // I
  Index max_window = 0;           // L_max

  Index embedded_size() const { return max_window + embedding_size; }
  const ScaleSpec& by_name(std::string_view name) const;
  std::vector<std::string> names() const;
};

/// Drops disabled scales, assigns missing one-hot indices in order, and
/// checks window_len >= 2, unique indices < I and at least one enabled scale.
/// I defaults to the number of enabled scales.
ScaleSet resolve_scales(const std::vector<ScaleSpec>& specs,
                        std::optional<Index> embedding_size = std::nullopt);

struct TargetSpec {
  Index horizon = 1;         // H: number of future period maxima
  bool full_period = false;  // false: L_i - 1 future steps; true: L_i
};

/// Number of future steps each target maximum covers.
inline Index target_span(Index window_len, const TargetSpec& target) {
  return target.full_period ? window_len : window_len - 1;
}

/// Series length needed for at least one window.
inline Index required_length(Index window_len, const TargetSpec& target) {
  return window_len + (target.horizon - 1) * window_len +
         target_span(window_len, target);
}

struct Window {
  VectorXd input;   // x_{t-L+1} .. x_t
  VectorXd target;  // H maxima
  Index anchor = 0;  // t, 0-based
};

/// Slides a window of `window_len` over `series` starting at anchor
/// t = window_len - 1 and advancing by `stride`. Target k is the maximum of
/// x_{t+kL+1} .. x_{t+kL+span}. Only anchors whose whole target range lies
/// inside `series` are emitted.
std::vector<Window> build_windows(const Eigen::Ref<const VectorXd>& series,
                                  Index window_len, Index stride,
                                  const TargetSpec& target = {});

/// X' = [x_1 .. x_L, 0 .. 0] of length `max_len`.
VectorXd pad_to_max(const Eigen::Ref<const VectorXd>& window, Index max_len);

VectorXd one_hot(Index index, Index size);

/// [padded; one_hot(scale.one_hot_index, embedding_size)].
VectorXd embed(const Eigen::Ref<const VectorXd>& padded,
               const ScaleSpec& scale, Index embedding_size);

struct Sample {
  VectorXd padded;        // X'_i, length L_max
  VectorXd scale_onehot;  // s_i, length I
  VectorXd embedded;      // [X'_i; s_i]
  VectorXd target;        // normalized, length H
  std::string circuit_id;
  data::Timestamp anchor_time{};
  Index scale = 0;  // position in ScaleSet::scales
  Index window_len = 0;

  /// Maximum of the observed input window (the persistence forecast).
  double input_max() const { return padded.head(window_len).maxCoeff(); }
};

/// All samples of one scale from one (normalized) partition.
std::vector<Sample> build_samples(const data::TimeSeries& normalized,
                                  const ScaleSet& scales, Index scale,
                                  const TargetSpec& target);

}  // namespace multipofo::multiscale
