#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <vector>

#include "tssb/bernoulli.hpp"
#include "tssb/hmc.hpp"
#include "tssb/kernels.hpp"
#include "tssb/mcmc.hpp"
#include "tssb/slice.hpp"
#include "tssb/tree_state.hpp"

namespace tssb {

/// Hierarchical clustering of binary vectors: Bernoulli-logistic likelihood
/// at each node, Gaussian diffusion of the logits down the tree.
class BernoulliTreeModel {
 public:
  static constexpr bool uses_hmc = true;
  using kernel_type = GaussianKernel;

  BernoulliTreeModel(BinaryMatrix data, GaussianKernel kernel)
      : data_(std::move(data)), kernel_(std::move(kernel)) {
    kernel_.validate();
    if (data_.rows() > 0 && data_.cols() != kernel_.dim())
      throw config_error("data width does not match kernel dimension");
  }

  const GaussianKernel& kernel() const { return kernel_; }
  GaussianKernel& kernel() { return kernel_; }
  const BinaryMatrix& data() const { return data_; }
  BinaryMatrix& data() { return data_; }
  std::size_t num_data() const { return data_.rows(); }
  std::size_t dim() const { return kernel_.dim(); }

  double loglik(std::size_t n, const Theta& theta) const { return bern_loglik(data_.row(n), theta); }
  double score_loglik(std::size_t n, const Theta& theta) const { return loglik(n, theta); }

  std::map<NodePath, BernoulliStats> node_stats(const TreeState& state) const {
    std::map<NodePath, BernoulliStats> out;
    for (const auto& [p, rec] : state.nodes()) out.emplace(p, BernoulliStats(dim()));
    for (std::size_t n = 0; n < state.num_data(); ++n)
      if (const auto& a = state.assignment(n)) out.at(*a).add(data_.row(n));
    return out;
  }

  /// Potential -[log T(theta <- parent) + sum_children log T(child <- theta)
  /// + sum_data log f(x | theta)] for node `p` at parameter `theta`, with its
  /// gradient written to `grad`.
  double node_potential(const TreeState& state, const NodePath& p, const std::vector<double>& theta,
                        const BernoulliStats& stats, std::vector<double>& grad) const {
    const std::size_t M = dim();
    grad.assign(M, 0.0);
    double lp;
    if (p.is_root()) {
      lp = kernel_.log_density_root(theta);
      kernel_.grad_log_density_root(theta, grad);
    } else {
      const Theta& par = state.at(p.parent()).theta;
      lp = kernel_.log_density_child(theta, par);
      kernel_.grad_log_density_child(theta, par, grad, {});
    }
    for (const NodePath& c : state.children(p)) {
      const Theta& ct = state.at(c).theta;
      lp += kernel_.log_density_child(ct, theta);
      kernel_.grad_log_density_child(ct, theta, {}, grad);
    }
    lp += bern_loglik_stats(stats, theta);
    for (std::size_t d = 0; d < M; ++d) grad[d] += stats.ones[d] - stats.n * sigmoid(theta[d]);
    for (double& g : grad) g = -g;
    return -lp;
  }

  /// Diagonal mass: an upper bound on the potential's curvature, which does
  /// not depend on the node's own parameter.
  std::vector<double> node_mass_matrix(const TreeState& state, const NodePath& p,
                                       const BernoulliStats& stats) const {
    const double nchild = static_cast<double>(state.children(p).size());
    std::vector<double> m(dim());
    for (std::size_t d = 0; d < dim(); ++d) {
      double self = p.is_root() ? 1.0 / kernel_.root_var(d) : 1.0 / kernel_.lambda_diag[d];
      m[d] = self + nchild * kernel_.eta * kernel_.eta / kernel_.lambda_diag[d] + 0.25 * stats.n;
    }
    return m;
  }

  HmcResult hmc_update_theta(TreeState& state, const NodePath& p, const BernoulliStats& stats,
                             const SweepConfig& cfg, Rng& rng) const {
    auto mass = node_mass_matrix(state, p, stats);
    double step = cfg.step_scale * rng.uniform(cfg.step_jitter.lo, cfg.step_jitter.hi);
    if (cfg.step_jitter.lo == cfg.step_jitter.hi) step = cfg.step_scale * cfg.step_jitter.lo;
    std::vector<double> theta = state.at(p).theta;
    auto pot = [&](const std::vector<double>& q, std::vector<double>& g) {
      return node_potential(state, p, q, stats, g);
    };
    HmcResult r = hmc_step(theta, pot, mass, step, cfg.leapfrog_steps, rng);
    if (r.accepted) state.at(p).theta = std::move(theta);
    return r;
  }

  /// Coordinate-wise slice update of a node's logits; the target factorizes
  /// over dimensions.
  void slice_update_theta(TreeState& state, const NodePath& p, const BernoulliStats& stats,
                          const SweepConfig& cfg, Rng& rng) const {
    auto mass = node_mass_matrix(state, p, stats);
    std::vector<NodePath> kids = state.children(p);
    const Theta* par = p.is_root() ? nullptr : &state.at(p.parent()).theta;
    Theta& theta = state.at(p).theta;
    for (std::size_t d = 0; d < dim(); ++d) {
      const double eta = kernel_.eta, lam = kernel_.lambda_diag[d];
      auto logf = [&](double t) {
        double lp;
        if (par) {
          double r = t - eta * (*par)[d];
          lp = -0.5 * r * r / lam;
        } else {
          double r = t - kernel_.root_mean_at(d);
          lp = -0.5 * r * r / kernel_.root_var(d);
        }
        for (const NodePath& c : kids) {
          double r = state.at(c).theta[d] - eta * t;
          lp -= 0.5 * r * r / lam;
        }
        return lp + stats.ones[d] * log_sigmoid(t) + (stats.n - stats.ones[d]) * log_sigmoid(-t);
      };
      theta[d] = slice_sample_stepout(logf, theta[d], 2.0 / std::sqrt(mass[d]), rng, 64, cfg.max_shrink);
    }
  }

  /// Slice each Lambda diagonal entry under its uniform prior.
  void slice_lambda_diag(const TreeState& state, const SweepConfig& cfg, Rng& rng) {
    const std::size_t M = dim();
    std::vector<double> ss(M, 0.0);
    double edges = 0.0;
    for (const auto& [p, rec] : state.nodes()) {
      if (p.is_root()) continue;
      const Theta& par = state.at(p.parent()).theta;
      edges += 1.0;
      for (std::size_t d = 0; d < M; ++d) {
        double r = rec.theta[d] - kernel_.eta * par[d];
        ss[d] += r * r;
      }
    }
    const Theta& root = state.at(NodePath::root()).theta;
    const double shrink = kernel_.eta < 1.0 ? 1.0 - kernel_.eta * kernel_.eta : 1.0;
    for (std::size_t d = 0; d < M; ++d) {
      double r0 = root[d] - kernel_.root_mean_at(d);
      auto logf = [&](double lam) {
        double lp = -0.5 * edges * std::log(lam) - 0.5 * ss[d] / lam;
        double v0 = lam / shrink;
        return lp - 0.5 * std::log(v0) - 0.5 * r0 * r0 / v0;
      };
      kernel_.lambda_diag[d] =
          slice_sample_1d(logf, kernel_.lambda_diag[d], cfg.lambda_diag_bounds, rng, cfg.max_shrink);
    }
  }

  /// HMC on every node (plus a slice pass every k-th sweep), then Lambda.
  /// Returns the mean HMC acceptance probability.
  double update_parameters(TreeState& state, const Hyperparams&, const SweepConfig& cfg,
                           std::size_t sweep_index, Rng& rng) {
    auto stats = node_stats(state);
    double acc = 0.0;
    std::size_t cnt = 0;
    bool slice_now = (sweep_index + 1) % static_cast<std::size_t>(cfg.slice_theta_every) == 0;
    for (auto& [p, st] : stats) {
      HmcResult r = hmc_update_theta(state, p, st, cfg, rng);
      acc += std::isfinite(r.delta_h) ? r.accept_prob : 0.0;
      ++cnt;
      if (slice_now) slice_update_theta(state, p, st, cfg, rng);
    }
    if (cfg.update_kernel) slice_lambda_diag(state, cfg, rng);
    return cnt ? acc / static_cast<double>(cnt) : 0.0;
  }

  /// Replace every datum with a draw from its node's likelihood.
  void regenerate_data(const TreeState& state, Rng& rng) {
    for (std::size_t n = 0; n < state.num_data(); ++n) {
      const Theta& th = state.at(*state.assignment(n)).theta;
      auto row = data_.row(n);
      for (std::size_t d = 0; d < dim(); ++d) row[d] = rng.uniform() < sigmoid(th[d]) ? 1 : 0;
    }
  }

 private:
  BinaryMatrix data_;
  GaussianKernel kernel_;
};

}  // namespace tssb
