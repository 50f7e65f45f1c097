#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "tssb/errors.hpp"

namespace tssb {

/// Open interval used for top-hat priors.
struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  bool contains(double x) const { return x > lo && x < hi; }
  double width() const { return hi - lo; }
};

struct HyperBounds {
  Interval alpha0{10.0, 50.0};
  Interval lambda{0.05, 0.8};
  Interval gamma{1.0, 10.0};

  void validate() const {
    auto check = [](const Interval& iv, const char* name) {
      if (!(iv.lo < iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
        throw config_error(std::string("empty or non-finite bounds for ") + name);
    };
    check(alpha0, "alpha0");
    check(lambda, "lambda");
    check(gamma, "gamma");
    if (alpha0.lo < 0.0) throw config_error("alpha0 bounds must be positive");
    if (gamma.lo < 0.0) throw config_error("gamma bounds must be positive");
    if (lambda.lo < 0.0 || lambda.hi > 1.0)
      throw config_error("lambda bounds must lie within (0, 1]");
  }
};

/// Tree hyperparameters. The depth schedule is alpha(j) = lambda^j * alpha0.
struct Hyperparams {
  double alpha0 = 1.0;
  double lambda = 1.0;
  double gamma = 1.0;
  HyperBounds bounds{};

  void validate() const {
    if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) throw config_error("alpha0 must be > 0");
    // lambda <= 1 guarantees sum_j ln(1 + 1/alpha(j-1)) diverges, i.e. the
    // node masses sum to one.
    if (!(lambda > 0.0) || lambda > 1.0) throw config_error("lambda must lie in (0, 1]");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw config_error("gamma must be > 0");
  }

  /// Center of the top-hat box; the usual starting point for a chain.
  static Hyperparams centered(const HyperBounds& b) {
    return {0.5 * (b.alpha0.lo + b.alpha0.hi), 0.5 * (b.lambda.lo + b.lambda.hi),
            0.5 * (b.gamma.lo + b.gamma.hi), b};
  }
};

inline double depth_alpha(double alpha0, double lambda, std::size_t depth) {
  return std::pow(lambda, static_cast<double>(depth)) * alpha0;
}

inline double depth_alpha(const Hyperparams& hp, std::size_t depth) {
  return depth_alpha(hp.alpha0, hp.lambda, depth);
}

}  // namespace tssb
