#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "tssb/errors.hpp"

namespace tssb {

// Distribution objects are created per call: libstdc++'s normal_distribution
// caches a spare variate, which would make the engine state alone
// insufficient to resume a chain.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed = 5489u) : engine_(seed) {}

  engine_type& engine() { return engine_; }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    for (;;) {
      double u = std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
      if (u > 0.0) return u;
    }
  }

  /// Uniform on the open interval (lo, hi); falls back to the midpoint when
  /// the interval has collapsed below double resolution.
  double uniform(double lo, double hi) {
    for (int tries = 0; tries < 64; ++tries) {
      double u = lo + (hi - lo) * uniform();
      if (u > lo && u < hi) return u;
    }
    return 0.5 * (lo + hi);
  }

  double normal(double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(engine_);
  }

  /// Gamma(shape, 1); zero draws (underflow for tiny shapes) are redrawn.
  double gamma(double shape) {
    check_shape(shape);
    for (int tries = 0; tries < 10000; ++tries) {
      double g = std::gamma_distribution<double>(shape, 1.0)(engine_);
      if (g > 0.0) return g;
    }
    throw numerical_error("gamma draw underflowed repeatedly");
  }

  /// log of a Gamma(shape, 1) variate. Small shapes use
  /// Gamma(a) = Gamma(a + 1) * U^(1/a) so the result never underflows.
  double log_gamma_variate(double shape) {
    check_shape(shape);
    if (shape >= 1.0) return std::log(gamma(shape));
    return std::log(gamma(shape + 1.0)) + std::log(uniform()) / shape;
  }

  /// A Beta variate together with log(1 - value), which stays exact when the
  /// value itself rounds to 1.
  struct BetaDraw {
    double value;
    double log1m;
  };

  BetaDraw beta_draw(double a, double b) {
    for (int tries = 0; tries < 16; ++tries) {
      double lx = log_gamma_variate(a);
      double ly = log_gamma_variate(b);
      double m = std::max(lx, ly);
      double log1m = ly - (m + std::log(std::exp(lx - m) + std::exp(ly - m)));
      double v = 1.0 / (1.0 + std::exp(ly - lx));
      if (v >= 1.0) return {std::nextafter(1.0, 0.0), log1m};
      if (v > 0.0) return {v, log1m};
    }
    return {std::numeric_limits<double>::min(), 0.0};
  }

  /// Beta(a, b) on the open interval. Exact 0 or 1 is redrawn; when the law
  /// sits closer to a boundary than double resolution allows, the draw is
  /// clamped to the nearest representable interior value.
  double beta(double a, double b) {
    double v = 0.5;
    for (int tries = 0; tries < 16; ++tries) {
      double lx = log_gamma_variate(a);
      double ly = log_gamma_variate(b);
      v = 1.0 / (1.0 + std::exp(ly - lx));
      if (v > 0.0 && v < 1.0) return v;
    }
    return v <= 0.0 ? std::numeric_limits<double>::min()
                    : std::nextafter(1.0, 0.0);
  }

  /// Dirichlet draw via normalized gammas, computed in log space. Components
  /// are floored at 1e-300 so the result stays strictly inside the simplex.
  std::vector<double> dirichlet(std::span<const double> conc) {
    std::vector<double> out(conc.size());
    double mx = -INFINITY;
    for (std::size_t k = 0; k < conc.size(); ++k) {
      out[k] = log_gamma_variate(conc[k]);
      mx = std::max(mx, out[k]);
    }
    double total = 0.0;
    for (double& v : out) {
      v = std::max(std::exp(v - mx), 1e-300);
      total += v;
    }
    for (double& v : out) v /= total;
    return out;
  }

  /// Index drawn proportionally to non-negative weights.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (r < acc) return i;
    }
    for (std::size_t i = weights.size(); i-- > 0;)
      if (weights[i] > 0.0) return i;
    throw numerical_error("categorical draw with all-zero weights");
  }

  /// Index drawn from unnormalized log weights.
  std::size_t categorical_log(std::span<const double> logw) {
    double mx = -INFINITY;
    for (double w : logw) mx = std::max(mx, w);
    std::vector<double> w(logw.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(logw[i] - mx);
    return categorical(w);
  }

  std::uint64_t next_seed() { return engine_(); }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (!is) throw data_error("corrupt RNG state in checkpoint");
  }

 private:
  static void check_shape(double shape) {
    if (!(shape > 0.0) || !std::isfinite(shape))
      throw numerical_error("gamma draw with non-positive shape");
  }

  engine_type engine_;
};

}  // namespace tssb
