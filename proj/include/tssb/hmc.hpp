#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "tssb/random.hpp"

namespace tssb {

struct HmcResult {
  bool accepted = false;
  double delta_h = 0.0;       ///< H(end) - H(start); NaN if the trajectory blew up
  double accept_prob = 0.0;
};

/// One HMC transition with a diagonal mass matrix.
///
/// `potential(q, grad)` returns U(q) and writes dU/dq into grad. On rejection
/// (including a non-finite Hamiltonian) q is left untouched.
template <class Potential>
HmcResult hmc_step(std::vector<double>& q, Potential&& potential, std::span<const double> mass,
                   double step, int leapfrog_steps, Rng& rng) {
  const std::size_t n = q.size();
  std::vector<double> grad(n), p(n), qn = q;
  for (std::size_t d = 0; d < n; ++d) p[d] = rng.normal(0.0, std::sqrt(mass[d]));
  auto kinetic = [&](const std::vector<double>& mom) {
    double k = 0.0;
    for (std::size_t d = 0; d < n; ++d) k += 0.5 * mom[d] * mom[d] / mass[d];
    return k;
  };

  double u0 = potential(qn, grad);
  double h0 = u0 + kinetic(p);
  for (std::size_t d = 0; d < n; ++d) p[d] -= 0.5 * step * grad[d];
  double u1 = u0;
  for (int l = 0; l < leapfrog_steps; ++l) {
    for (std::size_t d = 0; d < n; ++d) qn[d] += step * p[d] / mass[d];
    u1 = potential(qn, grad);
    double s = (l + 1 == leapfrog_steps) ? 0.5 * step : step;
    for (std::size_t d = 0; d < n; ++d) p[d] -= s * grad[d];
  }
  double h1 = u1 + kinetic(p);

  HmcResult r;
  r.delta_h = h1 - h0;
  if (!std::isfinite(h1) || !std::isfinite(h0)) {
    r.delta_h = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.accept_prob = std::min(1.0, std::exp(-r.delta_h));
  if (std::log(rng.uniform()) < -r.delta_h) {
    q = std::move(qn);
    r.accepted = true;
  }
  return r;
}

/// Dual-averaging step-size adaptation (Hoffman & Gelman 2014) on log scale.
class DualAveraging {
 public:
  explicit DualAveraging(double initial, double target = 0.65)
      : mu_(std::log(10.0 * initial)), target_(target), log_x_(std::log(initial)),
        log_x_bar_(std::log(initial)) {}

  void update(double accept_prob) {
    ++m_;
    double eta = 1.0 / (m_ + t0_);
    h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_prob);
    log_x_ = mu_ - std::sqrt(m_) / gamma_ * h_bar_;
    double w = std::pow(m_, -kappa_);
    log_x_bar_ = w * log_x_ + (1.0 - w) * log_x_bar_;
  }

  double current() const { return std::exp(log_x_); }
  double final_value() const { return std::exp(log_x_bar_); }

  /// Full internal state, for checkpoints.
  std::array<double, 6> save() const { return {mu_, target_, log_x_, log_x_bar_, h_bar_, m_}; }
  void load(const std::array<double, 6>& s) {
    mu_ = s[0];
    target_ = s[1];
    log_x_ = s[2];
    log_x_bar_ = s[3];
    h_bar_ = s[4];
    m_ = s[5];
  }

 private:
  double mu_, target_, log_x_, log_x_bar_;
  double h_bar_ = 0.0;
  double m_ = 0.0;
  static constexpr double gamma_ = 0.05, t0_ = 10.0, kappa_ = 0.75;
};

}  // namespace tssb
