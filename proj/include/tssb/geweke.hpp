#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tssb/bernoulli_model.hpp"
#include "tssb/mcmc.hpp"
#include "tssb/stats.hpp"

namespace tssb {

/// Joint-distribution ("getting it right") test for the Bernoulli model.
struct GewekeConfig {
  std::size_t n_data = 10;
  std::size_t dim = 2;
  std::size_t samples = 10000;
  std::size_t sweeps_per_sample = 10;  ///< 0 gives the degenerate variant
  double alpha = 0.01;                 ///< family-wise level, Bonferroni-split
  HyperBounds bounds{{1.0, 5.0}, {0.5, 0.8}, {1.0, 3.0}};
  double eta = 1.0;
  SweepConfig sweep = [] {
    SweepConfig s;
    s.step_scale = 4.0;
    return s;
  }();
  std::uint64_t seed = 1;
};

struct GewekeStat {
  std::string name;
  double ks = 0.0;
  double p_value = 1.0;
  double forward_mean = 0.0;
  double chain_mean = 0.0;
};

struct GewekeReport {
  std::vector<GewekeStat> stats;
  double threshold = 0.0;  ///< per-statistic p-value threshold

  double min_p() const {
    double m = 1.0;
    for (const auto& s : stats) m = std::min(m, s.p_value);
    return m;
  }
  bool passed() const { return min_p() > threshold; }
};

/// Names of the tracked statistics, in report order.
inline std::vector<std::string> geweke_stat_names(std::size_t dim) {
  std::vector<std::string> n{"nu_root", "max_depth", "node_count", "mean_depth", "alpha0", "lambda", "gamma"};
  for (std::size_t d = 0; d < dim; ++d) n.push_back("theta_root_" + std::to_string(d));
  for (std::size_t d = 0; d < dim; ++d) n.push_back("lambda_diag_" + std::to_string(d));
  return n;
}

inline std::vector<double> geweke_statistics(const TreeState& s, const Hyperparams& hp,
                                             const GaussianKernel& k) {
  const NodeRecord& root = s.at(NodePath::root());
  std::vector<double> v{root.nu,
                        static_cast<double>(s.max_depth()),
                        static_cast<double>(s.node_count()),
                        s.mean_data_depth(),
                        hp.alpha0,
                        hp.lambda,
                        hp.gamma};
  for (double t : root.theta) v.push_back(t);
  for (double l : k.lambda_diag) v.push_back(l);
  return v;
}

/// One draw from the joint prior: hyperparameters and Lambda from their
/// uniform priors, sticks and parameters from the prior with each datum
/// placed by find_node, then data from the likelihood.
struct GewekeDraw {
  TreeState state;
  Hyperparams hp;
  BernoulliTreeModel model;
};

inline GewekeDraw geweke_forward(const GewekeConfig& cfg, Rng& rng) {
  Hyperparams hp;
  hp.bounds = cfg.bounds;
  hp.alpha0 = rng.uniform(cfg.bounds.alpha0.lo, cfg.bounds.alpha0.hi);
  hp.lambda = rng.uniform(cfg.bounds.lambda.lo, cfg.bounds.lambda.hi);
  hp.gamma = rng.uniform(cfg.bounds.gamma.lo, cfg.bounds.gamma.hi);
  GaussianKernel kernel(cfg.dim, 1.0, cfg.eta);
  for (auto& l : kernel.lambda_diag)
    l = rng.uniform(cfg.sweep.lambda_diag_bounds.lo, cfg.sweep.lambda_diag_bounds.hi);
  BernoulliTreeModel model(BinaryMatrix(cfg.n_data, cfg.dim), kernel);
  TreeState state = initial_state(model, hp, rng);
  model.regenerate_data(state, rng);
  return {std::move(state), hp, std::move(model)};
}

inline GewekeReport run_geweke(const GewekeConfig& cfg,
                               const std::function<void(std::size_t)>& progress = {}) {
  cfg.bounds.validate();
  cfg.sweep.validate();
  Rng fwd_rng(cfg.seed);
  const auto names = geweke_stat_names(cfg.dim);
  std::vector<std::vector<double>> fwd(names.size()), chain(names.size());

  for (std::size_t i = 0; i < cfg.samples; ++i) {
    GewekeDraw g = geweke_forward(cfg, fwd_rng);
    auto v = geweke_statistics(g.state, g.hp, g.model.kernel());
    for (std::size_t j = 0; j < v.size(); ++j) fwd[j].push_back(v[j]);
  }

  if (cfg.sweeps_per_sample == 0) {
    // No transitions: every sample is a fresh forward draw on a copy of the
    // forward stream, so both sides coincide.
    Rng same(cfg.seed);
    for (std::size_t i = 0; i < cfg.samples; ++i) {
      GewekeDraw g = geweke_forward(cfg, same);
      auto v = geweke_statistics(g.state, g.hp, g.model.kernel());
      for (std::size_t j = 0; j < v.size(); ++j) chain[j].push_back(v[j]);
    }
  } else {
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    GewekeDraw g = geweke_forward(cfg, rng);
    std::size_t sweep_index = 0;
    for (std::size_t i = 0; i < cfg.samples; ++i) {
      for (std::size_t k = 0; k < cfg.sweeps_per_sample; ++k) {
        sweep(g.state, g.hp, g.model, cfg.sweep, sweep_index++, rng);
        g.model.regenerate_data(g.state, rng);
      }
      auto v = geweke_statistics(g.state, g.hp, g.model.kernel());
      for (std::size_t j = 0; j < v.size(); ++j) chain[j].push_back(v[j]);
      if (progress) progress(i);
    }
  }

  GewekeReport rep;
  rep.threshold = cfg.alpha / static_cast<double>(names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    KsResult ks = ks_two_sample(fwd[j], chain[j]);
    rep.stats.push_back({names[j], ks.statistic, ks.p_value, mean(fwd[j]), mean(chain[j])});
  }
  return rep;
}

}  // namespace tssb
