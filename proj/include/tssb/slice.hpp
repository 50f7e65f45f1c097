#pragma once

#include <cmath>
#include <limits>

#include "tssb/errors.hpp"
#include "tssb/hyperparams.hpp"
#include "tssb/random.hpp"

namespace tssb {

inline constexpr int kDefaultMaxShrink = 1000;

/// One shrinkage slice-sampling update of x0 within `bounds` (Neal 2003).
/// The initial bracket is the full bounds interval.
template <class LogDensity>
double slice_sample_1d(LogDensity&& logf, double x0, Interval bounds, Rng& rng,
                       int max_shrink = kDefaultMaxShrink) {
  double fx = logf(x0);
  if (!std::isfinite(fx)) throw numerical_error("slice sampler started at a zero-density point");
  double level = fx + std::log(rng.uniform());
  double lo = bounds.lo, hi = bounds.hi;
  for (int it = 0; it < max_shrink; ++it) {
    double x = rng.uniform(lo, hi);
    if (logf(x) > level) return x;
    if (x < x0)
      lo = x;
    else
      hi = x;
  }
  throw numerical_error("slice sampler exceeded its shrink cap");
}

/// Slice update on the whole real line with stepping out from a bracket of
/// the given width, then shrinkage.
template <class LogDensity>
double slice_sample_stepout(LogDensity&& logf, double x0, double width, Rng& rng,
                            int max_steps = 64, int max_shrink = kDefaultMaxShrink) {
  double fx = logf(x0);
  if (!std::isfinite(fx)) throw numerical_error("slice sampler started at a zero-density point");
  double level = fx + std::log(rng.uniform());
  double lo = x0 - width * rng.uniform();
  double hi = lo + width;
  int j = static_cast<int>(std::floor(max_steps * rng.uniform()));
  int k = max_steps - 1 - j;
  while (j-- > 0 && logf(lo) > level) lo -= width;
  while (k-- > 0 && logf(hi) > level) hi += width;
  for (int it = 0; it < max_shrink; ++it) {
    double x = rng.uniform(lo, hi);
    if (logf(x) > level) return x;
    if (x < x0)
      lo = x;
    else
      hi = x;
  }
  throw numerical_error("slice sampler exceeded its shrink cap");
}

}  // namespace tssb
