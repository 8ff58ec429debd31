#include "multipofo/multiscale.hpp"

#include <algorithm>
#include <set>

#include "multipofo/errors.hpp"

namespace multipofo::multiscale {

namespace {

bool known_scale_name(std::string_view name) {
  return name == "daily" || name == "weekly" || name == "monthly" ||
         name == "yearly";
}

}  // namespace

std::vector<ScaleSpec> default_scales() {
  return {
      {"daily", 48, -1, true, 0},
      {"weekly", 336, -1, true, 0},
      {"monthly", 1440, -1, true, 0},
      {"yearly", 17520, -1, false, 0},
  };
}

const ScaleSpec& ScaleSet::by_name(std::string_view name) const {
  for (const auto& s : scales)
    if (s.name == name) return s;
  std::string available;
  for (const auto& s : scales) {
    if (!available.empty()) available += ", ";
    available += s.name;
  }
  throw ConfigError("unknown scale '" + std::string(name) +
                    "'; available scales: " + available);
}

std::vector<std::string> ScaleSet::names() const {
  std::vector<std::string> out;
  for (const auto& s : scales) out.push_back(s.name);
  return out;
}

ScaleSet resolve_scales(const std::vector<ScaleSpec>& specs,
                        std::optional<Index> embedding_size) {
  ScaleSet set;
  std::set<std::string> names;
  for (const auto& s : specs) {
    if (!known_scale_name(s.name)) {
      throw ConfigError("unknown scale name '" + s.name +
                        "' (expected daily, weekly, monthly or yearly)");
    }
    if (!names.insert(s.name).second) {
      throw ConfigError("scale '" + s.name + "' configured twice");
    }
    if (!s.enabled) continue;
    if (s.window_len < 2) {
      throw ConfigError("scale '" + s.name + "': window_len must be >= 2");
    }
    if (s.stride < 0) {
      throw ConfigError("scale '" + s.name + "': stride must be >= 1");
    }
    set.scales.push_back(s);
  }
  if (set.scales.empty()) throw ConfigError("no scale is enabled");

  set.embedding_size =
      embedding_size.value_or(static_cast<Index>(set.scales.size()));
  if (set.embedding_size < static_cast<Index>(set.scales.size())) {
    throw ConfigError("embedding size " + std::to_string(set.embedding_size) +
                      " is smaller than the number of enabled scales");
  }

  std::set<Index> used;
  for (const auto& s : set.scales)
    if (s.one_hot_index >= 0) used.insert(s.one_hot_index);
  Index next = 0;
  std::set<Index> seen;
  for (auto& s : set.scales) {
    if (s.one_hot_index < 0) {
      while (used.count(next) != 0) ++next;
      s.one_hot_index = next++;
    }
    if (s.one_hot_index >= set.embedding_size) {
      throw ConfigError("scale '" + s.name + "': one-hot index " +
                        std::to_string(s.one_hot_index) +
                        " out of range for embedding size " +
                        std::to_string(set.embedding_size));
    }
    if (!seen.insert(s.one_hot_index).second) {
      throw ConfigError("one-hot index " + std::to_string(s.one_hot_index) +
                        " used by more than one enabled scale");
    }
    set.max_window = std::max(set.max_window, s.window_len);
  }
  return set;
}

std::vector<Window> build_windows(const Eigen::Ref<const VectorXd>& series,
                                  Index window_len, Index stride,
                                  const TargetSpec& target) {
  if (window_len < 2) throw ConfigError("window length must be >= 2");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (target.horizon < 1) throw ConfigError("target horizon must be >= 1");
  const Index needed = required_length(window_len, target);
  if (series.size() < needed) {
    throw ValidationError("series of length " + std::to_string(series.size()) +
                          " is too short for window length " +
                          std::to_string(window_len) + ": requires at least " +
                          std::to_string(needed) + " steps");
  }
  const Index span = target_span(window_len, target);
  const Index last_offset = (target.horizon - 1) * window_len + span;

  std::vector<Window> out;
  for (Index t = window_len - 1; t + last_offset < series.size(); t += stride) {
    Window w;
    w.anchor = t;
    w.input = series.segment(t - window_len + 1, window_len);
    w.target.resize(target.horizon);
    for (Index k = 0; k < target.horizon; ++k) {
      w.target(k) = series.segment(t + k * window_len + 1, span).maxCoeff();
    }
    out.push_back(std::move(w));
  }
  return out;
}

VectorXd pad_to_max(const Eigen::Ref<const VectorXd>& window, Index max_len) {
  if (window.size() == 0) throw ValidationError("cannot pad an empty window");
  if (window.size() > max_len) {
    throw ValidationError("window of length " + std::to_string(window.size()) +
                          " exceeds L_max = " + std::to_string(max_len));
  }
  VectorXd out = VectorXd::Zero(max_len);
  out.head(window.size()) = window;
  return out;
}

VectorXd one_hot(Index index, Index size) {
  if (index < 0 || index >= size) {
    throw ConfigError("one-hot index " + std::to_string(index) +
                      " out of range [0, " + std::to_string(size) + ")");
  }
  VectorXd out = VectorXd::Zero(size);
  out(index) = 1.0;
  return out;
}

VectorXd embed(const Eigen::Ref<const VectorXd>& padded,
               const ScaleSpec& scale, Index embedding_size) {
  VectorXd out(padded.size() + embedding_size);
  out << padded, one_hot(scale.one_hot_index, embedding_size);
  return out;
}

std::vector<Sample> build_samples(const data::TimeSeries& normalized,
                                  const ScaleSet& scales, Index scale,
                                  const TargetSpec& target) {
  if (normalized.has_gaps()) {
    throw ContractError("circuit '" + normalized.circuit_id +
                        "': samples require a gap-free series");
  }
  const auto& spec = scales.scales.at(static_cast<std::size_t>(scale));
  std::vector<Window> windows;
  try {
    windows = build_windows(normalized.values, spec.window_len,
                            spec.effective_stride(), target);
  } catch (const ValidationError& e) {
    throw ValidationError("circuit '" + normalized.circuit_id + "', scale '" +
                          spec.name + "': " + e.what());
  }
  std::vector<Sample> out;
  out.reserve(windows.size());
  const auto onehot = one_hot(spec.one_hot_index, scales.embedding_size);
  for (auto& w : windows) {
    Sample s;
    s.padded = pad_to_max(w.input, scales.max_window);
    s.scale_onehot = onehot;
    s.embedded.resize(scales.embedded_size());
    s.embedded << s.padded, s.scale_onehot;
    s.target = std::move(w.target);
    s.circuit_id = normalized.circuit_id;
    s.anchor_time = normalized.time_at(w.anchor);
    s.scale = scale;
    s.window_len = spec.window_len;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace multipofo::multiscale
