#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "tssb/errors.hpp"
#include "tssb/hyperparams.hpp"
#include "tssb/measure.hpp"
#include "tssb/random.hpp"
#include "tssb/slice.hpp"
#include "tssb/tree_state.hpp"

namespace tssb {

/// Deliberate sampler defects, used to check that the joint-distribution
/// test has power. Never set outside tests.
enum class FaultInjection {
  None,
  SwappedNuPosterior,  ///< nu ~ Beta(N_below + alpha, N_here + 1)
  SkipSbp,             ///< size-biased reordering never runs
  StaleCounts,         ///< data visited in fixed order; stick Gibbs sees pre-pass counts
};

struct SweepConfig {
  bool update_assignments = true;
  bool update_sticks = true;
  bool update_order = true;
  bool update_hyperparams = true;
  bool update_parameters = true;
  bool shuffle_data = true;

  int leapfrog_steps = 25;
  Interval step_jitter{0.005, 0.05};
  double step_scale = 1.0;        ///< multiplier on the jitter interval, set by warmup
  int slice_theta_every = 10;     ///< interleave a slice update of node parameters
  int max_shrink = kDefaultMaxShrink;
  PsiCounts psi_counts = PsiCounts::SubtreeTotal;

  bool update_kernel = true;      ///< Gaussian: slice the Lambda diagonal
  Interval lambda_diag_bounds{0.01, 1.0};
  bool update_kappa = false;      ///< Dirichlet: slice kappa (off by default)
  Interval kappa_bounds{0.1, 1000.0};
  bool freeze_word_topics = false;

  FaultInjection fault = FaultInjection::None;

  void validate() const {
    if (leapfrog_steps < 1) throw config_error("leapfrog steps must be >= 1");
    if (slice_theta_every < 1) throw config_error("slice interleave period must be >= 1");
    if (max_shrink < 1) throw config_error("shrink cap must be >= 1");
    if (!(step_jitter.lo > 0.0) || !(step_jitter.lo <= step_jitter.hi))
      throw config_error("step-size jitter interval must be positive and ordered");
    if (!(step_scale > 0.0)) throw config_error("step scale must be > 0");
    if (!(lambda_diag_bounds.lo > 0.0 && lambda_diag_bounds.lo < lambda_diag_bounds.hi))
      throw config_error("Lambda bounds must be positive and ordered");
    if (!(kappa_bounds.lo > 0.0 && kappa_bounds.lo < kappa_bounds.hi))
      throw config_error("kappa bounds must be positive and ordered");
  }
};

/// Per-sweep summary.
struct ChainRecord {
  std::size_t sweep = 0;
  double complete_loglik = 0.0;    ///< sum_n log pi + log f(x_n | theta)
  double assignment_loglik = 0.0;  ///< sum_n log pi only (sticks and hyperparameters given)
  Hyperparams hp;
  std::size_t node_count = 0;
  std::size_t max_depth = 0;
  double mean_depth = 0.0;
  double param_accept = 0.0;       ///< mean HMC acceptance over nodes this sweep
};

using CountSnapshot = std::map<NodePath, std::pair<std::int64_t, std::int64_t>>;

inline CountSnapshot snapshot_counts(const TreeState& state) {
  CountSnapshot out;
  for (const auto& [p, rec] : state.nodes()) out[p] = {rec.n_here, rec.n_below};
  return out;
}

// --- assignments ----------------------------------------------------------

/// Slice-sample the node of datum n. The slice level is drawn under the
/// current likelihood, u is drawn from a bracket that starts at (0,1), and the
/// bracket shrinks toward the current node using the lexical order of paths.
/// Lazily drawn state is kept; see samp_assignment for the collecting form.
template <class Model>
NodePath slice_assignment(TreeState& state, std::size_t n, const Model& model,
                          const Hyperparams& hp, const SweepConfig& cfg, Rng& rng) {
  const auto& cur_opt = state.assignment(n);
  if (!cur_opt) throw invariant_error("samp_assignment on an unassigned datum");
  const NodePath cur = *cur_opt;
  auto prior = make_prior(hp, model.kernel());
  double level = model.loglik(n, state.at(cur).theta) + std::log(rng.uniform());
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < cfg.max_shrink; ++it) {
    // The bracket always covers the current node's interval. Once it is only
    // a few doubles wide that interval cannot be hit by a representable u,
    // so the datum stays put.
    if (std::nextafter(std::nextafter(lo, hi), hi) >= hi) return cur;
    double u = rng.uniform(lo, hi);
    NodePath e = find_node(state, u, prior, rng);
    if (model.loglik(n, state.at(e).theta) > level) {
      state.update_counts(n, e);
      return e;
    }
    if (e < cur)
      lo = u;
    else
      hi = u;
  }
  throw numerical_error("assignment slice sampler exceeded its shrink cap for datum " +
                        std::to_string(n));
}

template <class Model>
NodePath samp_assignment(TreeState& state, std::size_t n, const Model& model,
                         const Hyperparams& hp, const SweepConfig& cfg, Rng& rng) {
  NodePath e = slice_assignment(state, n, model, hp, cfg, rng);
  state.garbage_collect();
  return e;
}

// --- sticks ---------------------------------------------------------------

/// Redraw every represented nu and psi from its Beta conditional.
inline void gibbs_sticks(TreeState& state, const Hyperparams& hp, const SweepConfig& cfg, Rng& rng,
                         const CountSnapshot* stale = nullptr) {
  auto counts_of = [&](const NodePath& p, const NodeRecord& rec) -> std::pair<std::int64_t, std::int64_t> {
    if (!stale) return {rec.n_here, rec.n_below};
    auto it = stale->find(p);
    return it == stale->end() ? std::pair<std::int64_t, std::int64_t>{0, 0} : it->second;
  };
  for (auto& [p, rec] : state.nodes()) {
    auto [here, below] = counts_of(p, rec);
    double a = static_cast<double>(here) + 1.0;
    double b = static_cast<double>(below) + depth_alpha(hp, p.depth());
    if (cfg.fault == FaultInjection::SwappedNuPosterior) std::swap(a, b);
    auto nu = rng.beta_draw(a, b);
    rec.set_nu(nu.value, nu.log1m);

    std::vector<double> s(rec.psi.size(), 0.0);
    for (std::size_t i = 1; i <= rec.psi.size(); ++i) {
      NodePath c = p.child(static_cast<NodePath::index_type>(i));
      auto it = state.nodes().find(c);
      if (it == state.nodes().end()) continue;
      auto [ch, cb] = counts_of(c, it->second);
      s[i - 1] = static_cast<double>(cfg.psi_counts == PsiCounts::SubtreeTotal ? ch + cb : cb);
    }
    double after = 0.0;
    for (std::size_t i = s.size(); i-- > 0;) {
      rec.psi[i] = rng.beta(s[i] + 1.0, hp.gamma + after);
      after += s[i];
    }
  }
}

// --- size-biased reordering -------------------------------------------------

/// Reorder the represented child slots of `node` by a size-biased permutation
/// of their branch weights.
///
/// The proposal draws without replacement among the represented slots. The
/// exact conditional of the order also accounts for the unrepresented tail
/// mass R, so the proposal is accepted with probability
///   prod_i (R_{i-1}' - R)/R_{i-1}'  /  prod_i (R_{i-1} - R)/R_{i-1}
/// where R_i is the mass left after the first i slots. This equals one when
/// the represented slots carry all the mass.
///
/// After garbage collection the last represented slot always holds data, so
/// the number of represented slots is a function of the assignments. Orders
/// that would put an empty slot last leave that support and are rejected.
inline bool gibbs_sbp_reorder(TreeState& state, const NodePath& node, Rng& rng) {
  NodeRecord& rec = state.at(node);
  const std::size_t k = rec.psi.size();
  if (k < 2) return false;
  auto occupied = [&](std::size_t slot) {
    auto it = state.nodes().find(node.child(static_cast<NodePath::index_type>(slot + 1)));
    return it != state.nodes().end() && it->second.subtree_total() > 0;
  };
  std::vector<double> phi(k);
  double remain = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    phi[i] = remain * rec.psi[i];
    remain *= 1.0 - rec.psi[i];
  }
  const double tail = remain;

  auto log_correction = [&](const std::vector<std::size_t>& order) {
    // Remaining mass before step i, summed from the back for accuracy.
    std::vector<double> left(k + 1, tail);
    for (std::size_t i = k; i-- > 0;) left[i] = left[i + 1] + phi[order[i]];
    double lc = 0.0;
    for (std::size_t i = 0; i < k; ++i) lc += std::log((left[i] - tail) / left[i]);
    return lc;
  };

  std::vector<std::size_t> pool(k), order;
  std::iota(pool.begin(), pool.end(), 0);
  order.reserve(k);
  std::vector<double> w;
  while (!pool.empty()) {
    w.clear();
    for (auto j : pool) w.push_back(phi[j]);
    std::size_t pick = rng.categorical(w);
    order.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<long>(pick));
  }

  if (occupied(k - 1) && !occupied(order.back())) return false;

  std::vector<std::size_t> identity(k);
  std::iota(identity.begin(), identity.end(), 0);
  double log_ratio = log_correction(order) - log_correction(identity);
  if (log_ratio < 0.0 && std::log(rng.uniform()) >= log_ratio) return false;

  std::vector<double> new_psi(k);
  double left = tail;
  for (std::size_t i = 0; i < k; ++i) left += phi[i];
  for (std::size_t i = 0; i < k; ++i) {
    double v = phi[order[i]] / left;
    new_psi[i] = std::clamp(v, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
    left -= phi[order[i]];
  }
  state.permute_children(node, order, std::move(new_psi));
  return true;
}

/// SBP move at every represented node, deepest first so that pending paths
/// stay valid while subtrees are relabeled.
inline void sbp_pass(TreeState& state, Rng& rng) {
  std::vector<NodePath> todo;
  for (const auto& [p, rec] : state.nodes())
    if (rec.psi.size() >= 2) todo.push_back(p);
  std::stable_sort(todo.begin(), todo.end(),
                   [](const NodePath& a, const NodePath& b) { return a.depth() > b.depth(); });
  for (const auto& p : todo) gibbs_sbp_reorder(state, p, rng);
}

// --- hyperparameters ------------------------------------------------------

/// log prod Beta(nu | 1, lambda^depth * alpha0) over represented nodes.
inline double nu_stick_logprior(const TreeState& state, double alpha0, double lambda) {
  double lp = 0.0;
  for (const auto& [p, rec] : state.nodes()) {
    double a = depth_alpha(alpha0, lambda, p.depth());
    lp += std::log(a) + (a - 1.0) * rec.log1m_nu();
  }
  return lp;
}

/// log prod Beta(psi | 1, gamma) over represented psi sticks.
inline double psi_stick_logprior(const TreeState& state, double gamma) {
  double lp = 0.0;
  for (const auto& [p, rec] : state.nodes())
    for (double s : rec.psi) lp += std::log(gamma) + (gamma - 1.0) * std::log1p(-s);
  return lp;
}

/// Slice-sample alpha0 and lambda (coordinate-wise, jointly conditioned on the
/// nu sticks) and gamma (conditioned on the psi sticks) under their top-hat
/// priors. Each bracket starts at the prior bounds.
inline void slice_hyperparams(const TreeState& state, Hyperparams& hp, Rng& rng,
                              int max_shrink = kDefaultMaxShrink) {
  // Sufficient statistics per depth: number of nu sticks and sum log(1 - nu).
  std::vector<double> cnt, slog;
  for (const auto& [p, rec] : state.nodes()) {
    if (p.depth() >= cnt.size()) {
      cnt.resize(p.depth() + 1, 0.0);
      slog.resize(p.depth() + 1, 0.0);
    }
    cnt[p.depth()] += 1.0;
    slog[p.depth()] += rec.log1m_nu();
  }
  auto nu_lp = [&](double alpha0, double lambda) {
    double lp = 0.0;
    for (std::size_t d = 0; d < cnt.size(); ++d) {
      if (cnt[d] == 0.0) continue;
      double a = depth_alpha(alpha0, lambda, d);
      lp += cnt[d] * std::log(a) + (a - 1.0) * slog[d];
    }
    return lp;
  };
  const HyperBounds& b = hp.bounds;
  hp.alpha0 = slice_sample_1d([&](double x) { return nu_lp(x, hp.lambda); }, hp.alpha0, b.alpha0,
                              rng, max_shrink);
  hp.lambda = slice_sample_1d([&](double x) { return nu_lp(hp.alpha0, x); }, hp.lambda, b.lambda,
                              rng, max_shrink);

  double n_psi = 0.0, s_psi = 0.0;
  for (const auto& [p, rec] : state.nodes())
    for (double s : rec.psi) {
      n_psi += 1.0;
      s_psi += std::log1p(-s);
    }
  hp.gamma = slice_sample_1d([&](double g) { return n_psi * std::log(g) + (g - 1.0) * s_psi; },
                             hp.gamma, b.gamma, rng, max_shrink);
}

// --- scores ---------------------------------------------------------------

/// Complete-data log likelihood: (sum log pi + log f, sum log pi).
template <class Model>
std::pair<double, double> complete_data_loglik(const TreeState& state, const Model& model) {
  double assign = 0.0, full = 0.0;
  std::map<NodePath, double> lpi;
  for (std::size_t n = 0; n < state.num_data(); ++n) {
    const auto& a = state.assignment(n);
    if (!a) continue;
    auto it = lpi.find(*a);
    if (it == lpi.end()) it = lpi.emplace(*a, log_node_mass(state, *a)).first;
    assign += it->second;
    full += it->second + model.score_loglik(n, state.at(*a).theta);
  }
  return {full, assign};
}

// --- initialization and sweeps ----------------------------------------------

/// Seed a chain: root from the prior, each datum placed by find_node with a
/// fresh uniform (a draw from the prior over assignments).
template <class Model>
TreeState initial_state(const Model& model, const Hyperparams& hp, Rng& rng) {
  TreeState state(model.num_data());
  auto prior = make_prior(hp, model.kernel());
  ensure_root(state, prior, rng);
  for (std::size_t n = 0; n < model.num_data(); ++n)
    state.update_counts(n, find_node(state, rng.uniform(), prior, rng));
  state.garbage_collect();
  return state;
}

/// One full pass over every move. Order: assignments (shuffled), stick
/// Gibbs, size-biased reordering, hyperparameters, node parameters (and any
/// model-specific parameters).
template <class Model>
ChainRecord sweep(TreeState& state, Hyperparams& hp, Model& model, const SweepConfig& cfg,
                  std::size_t sweep_index, Rng& rng) {
  std::optional<CountSnapshot> stale;
  if (cfg.fault == FaultInjection::StaleCounts) stale = snapshot_counts(state);

  if (cfg.update_assignments && state.num_data() > 0) {
    std::vector<std::size_t> order(state.num_data());
    std::iota(order.begin(), order.end(), 0);
    if (cfg.shuffle_data && cfg.fault != FaultInjection::StaleCounts)
      std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t n : order) samp_assignment(state, n, model, hp, cfg, rng);
  }
  state.garbage_collect();

  if (cfg.update_sticks) gibbs_sticks(state, hp, cfg, rng, stale ? &*stale : nullptr);
  if (cfg.update_order && cfg.fault != FaultInjection::SkipSbp) sbp_pass(state, rng);
  if (cfg.update_hyperparams) slice_hyperparams(state, hp, rng, cfg.max_shrink);

  double accept = 0.0;
  if (cfg.update_parameters) accept = model.update_parameters(state, hp, cfg, sweep_index, rng);

  ChainRecord r;
  r.sweep = sweep_index;
  std::tie(r.complete_loglik, r.assignment_loglik) = complete_data_loglik(state, model);
  r.hp = hp;
  r.node_count = state.node_count();
  r.max_depth = state.max_depth();
  r.mean_depth = state.mean_data_depth();
  r.param_accept = accept;
  if (!std::isfinite(r.complete_loglik))
    throw numerical_error("complete-data log likelihood is not finite");
  return r;
}

/// A retained sample: its score and the state it came from.
struct ScoredTree {
  double score;
  TreeState state;
  Hyperparams hp;
};

/// Sample with the highest complete-data log likelihood.
inline const ScoredTree& best_tree(const std::vector<ScoredTree>& history) {
  if (history.empty()) throw invariant_error("best_tree on an empty history");
  return *std::max_element(history.begin(), history.end(),
                           [](const ScoredTree& a, const ScoredTree& b) { return a.score < b.score; });
}

}  // namespace tssb
