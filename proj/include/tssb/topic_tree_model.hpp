#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "tssb/kernels.hpp"
#include "tssb/mcmc.hpp"
#include "tssb/slice.hpp"
#include "tssb/topics.hpp"
#include "tssb/tree_state.hpp"

namespace tssb {

/// Documents live at nodes; each node carries a topic distribution that
/// diffuses down the tree through the chained Dirichlet kernel. Token topics
/// are instantiated, so a document's node likelihood is p(z_d | theta).
class TopicTreeModel {
 public:
  static constexpr bool uses_hmc = false;
  using kernel_type = DirichletKernel;

  TopicTreeModel(Corpus corpus, TopicModel topics, DirichletKernel kernel)
      : corpus_(std::move(corpus)), topics_(std::move(topics)), kernel_(kernel) {
    kernel_.validate();
    if (kernel_.dim() != topics_.K) throw config_error("kernel dimension must equal topic count");
    if (topics_.z.size() != corpus_.size()) throw config_error("topic labels do not match corpus");
    if (topics_.doc_topic.size() != corpus_.size()) topics_.recount();
  }

  const DirichletKernel& kernel() const { return kernel_; }
  DirichletKernel& kernel() { return kernel_; }
  const Corpus& corpus() const { return corpus_; }
  const TopicModel& topics() const { return topics_; }
  TopicModel& topics() { return topics_; }
  std::size_t num_data() const { return corpus_.size(); }

  double loglik(std::size_t n, const Theta& theta) const {
    return topic_assignment_loglik(topics_.doc_topic[n], theta);
  }
  /// Scores use the word likelihood with token topics summed out.
  double score_loglik(std::size_t n, const Theta& theta) const {
    return topic_doc_loglik(topics_, corpus_.docs[n], theta);
  }

  /// Log target of a node's topic distribution: kernel from the parent (or
  /// root prior), kernels to represented children, and the topic counts of
  /// documents at the node.
  double node_log_target(const TreeState& state, const NodePath& p, std::span<const double> theta,
                         std::span<const double> counts) const {
    double lp = p.is_root() ? kernel_.log_density_root(theta)
                            : kernel_.log_density_child(theta, state.at(p.parent()).theta);
    for (const NodePath& c : state.children(p)) lp += kernel_.log_density_child(state.at(c).theta, theta);
    return lp + topic_assignment_loglik(counts, theta);
  }

  /// Coordinate-wise slice sampling in additive log-ratio coordinates
  /// y_k = log(theta_k / theta_K), including the Jacobian prod_k theta_k.
  void slice_update_theta(TreeState& state, const NodePath& p, std::span<const double> counts,
                          const SweepConfig& cfg, Rng& rng) const {
    const std::size_t K = kernel_.dim();
    if (K < 2) return;
    Theta& theta = state.at(p).theta;
    std::vector<double> y(K, 0.0);
    for (std::size_t k = 0; k + 1 < K; ++k)
      y[k] = std::log(std::max(theta[k], 1e-300)) - std::log(std::max(theta[K - 1], 1e-300));
    std::vector<double> t(K);
    auto to_simplex = [&](const std::vector<double>& yy) {
      double mx = 0.0;
      for (double v : yy) mx = std::max(mx, v);
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        t[k] = std::max(std::exp(yy[k] - mx), 1e-300);
        s += t[k];
      }
      for (double& v : t) v /= s;
    };
    for (std::size_t k = 0; k + 1 < K; ++k) {
      auto logf = [&](double v) {
        double keep = y[k];
        y[k] = v;
        to_simplex(y);
        y[k] = keep;
        double lj = 0.0;
        for (double c : t) lj += std::log(c);
        return node_log_target(state, p, t, counts) + lj;
      };
      y[k] = slice_sample_stepout(logf, y[k], 2.0, rng, 64, cfg.max_shrink);
    }
    to_simplex(y);
    theta = t;
  }

  double update_parameters(TreeState& state, const Hyperparams&, const SweepConfig& cfg,
                           std::size_t, Rng& rng) {
    const std::size_t K = kernel_.dim();
    std::map<NodePath, std::vector<double>> counts;
    for (const auto& [p, rec] : state.nodes()) counts.emplace(p, std::vector<double>(K, 0.0));
    for (std::size_t d = 0; d < corpus_.size(); ++d)
      if (const auto& a = state.assignment(d)) {
        auto& c = counts.at(*a);
        for (std::size_t k = 0; k < K; ++k) c[k] += topics_.doc_topic[d][k];
      }
    for (auto& [p, c] : counts) slice_update_theta(state, p, c, cfg, rng);

    if (!cfg.freeze_word_topics) {
      std::vector<std::span<const double>> thetas;
      thetas.reserve(corpus_.size());
      for (std::size_t d = 0; d < corpus_.size(); ++d) thetas.emplace_back(state.at(*state.assignment(d)).theta);
      gibbs_word_topics(topics_, corpus_, thetas, rng);
    }
    if (cfg.update_kappa) slice_kappa(state, cfg, rng);
    return 1.0;
  }

  void slice_kappa(const TreeState& state, const SweepConfig& cfg, Rng& rng) {
    auto logf = [&](double kappa) {
      DirichletKernel k(kernel_.dim(), kappa);
      double lp = 0.0;
      for (const auto& [p, rec] : state.nodes())
        lp += p.is_root() ? k.log_density_root(rec.theta)
                          : k.log_density_child(rec.theta, state.at(p.parent()).theta);
      return lp;
    };
    kernel_.kappa = slice_sample_1d(logf, kernel_.kappa, cfg.kappa_bounds, rng, cfg.max_shrink);
  }

 private:
  Corpus corpus_;
  TopicModel topics_;
  DirichletKernel kernel_;
};

}  // namespace tssb
