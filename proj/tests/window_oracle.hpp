#pragma once

// Brute-force reference for sliding-window targets: nested loops over plain
// std::vector, no Eigen reductions, no shared code with build_windows().

#include <cstddef>
#include <vector>

namespace multipofo::testing {

struct OracleWindow {
  std::size_t anchor;
  std::vector<double> input;
  std::vector<double> target;
};

// Anchors t = L-1, L-1+stride, ... while the last target slice still fits.
// Target k is the max of x[t+k*L+1 .. t+k*L+span].
inline std::vector<OracleWindow> oracle_windows(const std::vector<double>& x,
                                                std::size_t L, std::size_t stride,
                                                std::size_t horizon, bool full_period) {
  const std::size_t span = full_period ? L : L - 1;
  std::vector<OracleWindow> out;
  for (std::size_t t = L - 1; t < x.size(); t += stride) {
    const std::size_t last = t + (horizon - 1) * L + span;
    if (last >= x.size()) break;
    OracleWindow w;
    w.anchor = t;
    for (std::size_t i = t + 1 - L; i <= t; ++i) w.input.push_back(x[i]);
    for (std::size_t k = 0; k < horizon; ++k) {
      double best = x[t + k * L + 1];
      for (std::size_t j = 1; j <= span; ++j) {
        const double v = x[t + k * L + j];
        if (v > best) best = v;
      }
      w.target.push_back(best);
    }
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace multipofo::testing
