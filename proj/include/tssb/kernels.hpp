#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tssb/errors.hpp"
#include "tssb/random.hpp"
#include "tssb/tree_state.hpp"

namespace tssb {

/// Gaussian diffusion: child ~ N(eta * parent, diag(Lambda)).
///
/// The root prior is the stationary marginal N(mean, Lambda / (1 - eta^2))
/// for eta < 1 and N(mean, Lambda) for eta = 1.
struct GaussianKernel {
  double eta = 1.0;
  std::vector<double> lambda_diag;  // per-dimension variance
  std::vector<double> root_mean;    // empty means all zeros

  GaussianKernel() = default;
  GaussianKernel(std::size_t dim, double var, double eta_ = 1.0)
      : eta(eta_), lambda_diag(dim, var) {
    validate();
  }

  std::size_t dim() const { return lambda_diag.size(); }

  void validate() const {
    if (!(eta >= 0.0 && eta <= 1.0)) throw config_error("gaussian kernel eta must lie in [0, 1]");
    for (double v : lambda_diag)
      if (!(v > 0.0) || !std::isfinite(v)) throw config_error("kernel variances must be > 0");
    if (!root_mean.empty() && root_mean.size() != dim())
      throw config_error("root mean dimension mismatch");
  }

  double root_mean_at(std::size_t d) const { return root_mean.empty() ? 0.0 : root_mean[d]; }

  double root_var(std::size_t d) const {
    return eta < 1.0 ? lambda_diag[d] / (1.0 - eta * eta) : lambda_diag[d];
  }

  Theta sample_root(Rng& rng) const {
    Theta t(dim());
    for (std::size_t d = 0; d < dim(); ++d)
      t[d] = rng.normal(root_mean_at(d), std::sqrt(root_var(d)));
    return t;
  }

  Theta sample_child(std::span<const double> parent, Rng& rng) const {
    check_dim(parent);
    Theta t(dim());
    for (std::size_t d = 0; d < dim(); ++d)
      t[d] = rng.normal(eta * parent[d], std::sqrt(lambda_diag[d]));
    return t;
  }

  double log_density_root(std::span<const double> theta) const {
    check_dim(theta);
    double lp = 0.0;
    for (std::size_t d = 0; d < dim(); ++d) {
      check_finite(theta[d]);
      double v = root_var(d);
      double r = theta[d] - root_mean_at(d);
      lp += -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * r * r / v;
    }
    return lp;
  }

  double log_density_child(std::span<const double> child, std::span<const double> parent) const {
    check_dim(child);
    check_dim(parent);
    double lp = 0.0;
    for (std::size_t d = 0; d < dim(); ++d) {
      check_finite(child[d]);
      check_finite(parent[d]);
      double v = lambda_diag[d];
      double r = child[d] - eta * parent[d];
      lp += -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * r * r / v;
    }
    return lp;
  }

  /// Adds d/dchild and d/dparent of log_density_child into the outputs
  /// (either may be empty to skip).
  void grad_log_density_child(std::span<const double> child, std::span<const double> parent,
                              std::span<double> d_child, std::span<double> d_parent) const {
    for (std::size_t d = 0; d < dim(); ++d) {
      double r = (child[d] - eta * parent[d]) / lambda_diag[d];
      if (!d_child.empty()) d_child[d] -= r;
      if (!d_parent.empty()) d_parent[d] += eta * r;
    }
  }

  void grad_log_density_root(std::span<const double> theta, std::span<double> d_theta) const {
    for (std::size_t d = 0; d < dim(); ++d)
      d_theta[d] -= (theta[d] - root_mean_at(d)) / root_var(d);
  }

 private:
  void check_dim(std::span<const double> t) const {
    if (t.size() != dim()) throw invariant_error("gaussian kernel dimension mismatch");
  }
  static void check_finite(double x) {
    if (!std::isfinite(x)) throw numerical_error("non-finite parameter in gaussian kernel");
  }
};

/// Chained Dirichlet diffusion: child ~ Dir(kappa * parent), root ~ Dir(kappa * 1).
struct DirichletKernel {
  double kappa = 1.0;
  std::size_t dimension = 2;

  DirichletKernel() = default;
  DirichletKernel(std::size_t dim, double kappa_) : kappa(kappa_), dimension(dim) { validate(); }

  std::size_t dim() const { return dimension; }

  void validate() const {
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw config_error("dirichlet kappa must be > 0");
    if (dimension < 1) throw config_error("dirichlet dimension must be >= 1");
  }

  Theta sample_root(Rng& rng) const {
    std::vector<double> conc(dim(), kappa);
    return rng.dirichlet(conc);
  }

  Theta sample_child(std::span<const double> parent, Rng& rng) const {
    check_simplex(parent);
    std::vector<double> conc(dim());
    for (std::size_t k = 0; k < dim(); ++k) conc[k] = kappa * parent[k];
    return rng.dirichlet(conc);
  }

  double log_density_root(std::span<const double> theta) const {
    check_simplex(theta);
    double K = static_cast<double>(dim());
    double lp = std::lgamma(kappa * K) - K * std::lgamma(kappa);
    for (double t : theta) lp += (kappa - 1.0) * safe_log(t);
    return lp;
  }

  double log_density_child(std::span<const double> child, std::span<const double> parent) const {
    check_simplex(child);
    check_simplex(parent);
    double lp = std::lgamma(kappa);
    for (std::size_t k = 0; k < dim(); ++k) {
      double a = kappa * std::max(parent[k], 1e-300);
      lp += -std::lgamma(a) + (a - 1.0) * safe_log(child[k]);
    }
    return lp;
  }

  /// Components are clamped away from zero before the log.
  static double safe_log(double x) { return std::log(std::max(x, 1e-12)); }

  void check_simplex(std::span<const double> t) const {
    if (t.size() != dim()) throw invariant_error("dirichlet kernel dimension mismatch");
    double s = 0.0;
    for (double v : t) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw numerical_error("simplex component out of range");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-8) throw numerical_error("parameter is not on the simplex");
  }
};

/// Parameter-free kernel for exercising the stick machinery alone.
struct NullKernel {
  Theta sample_root(Rng&) const { return {}; }
  Theta sample_child(std::span<const double>, Rng&) const { return {}; }
};

}  // namespace tssb
