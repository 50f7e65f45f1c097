#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <utility>
#include <vector>

#include "tssb/errors.hpp"
#include "tssb/hyperparams.hpp"
#include "tssb/node_path.hpp"
#include "tssb/random.hpp"
#include "tssb/tree_state.hpp"

namespace tssb {

/// Hard cap on psi sticks drawn at one node by a single find_node call.
inline constexpr std::size_t kMaxNewSiblings = 10000;

/// Prior source for lazily instantiated state: sticks from the hyperparameters,
/// node parameters from the diffusion kernel.
template <class Kernel>
struct StickPrior {
  const Hyperparams* hp;
  const Kernel* kernel;

  Rng::BetaDraw nu(std::size_t depth, Rng& rng) const { return rng.beta_draw(1.0, depth_alpha(*hp, depth)); }
  double psi(Rng& rng) const { return rng.beta(1.0, hp->gamma); }
  Theta root_theta(Rng& rng) const { return kernel->sample_root(rng); }
  Theta child_theta(const Theta& parent, Rng& rng) const {
    return kernel->sample_child(parent, rng);
  }
};

template <class Kernel>
StickPrior<Kernel> make_prior(const Hyperparams& hp, const Kernel& k) {
  return {&hp, &k};
}

/// Make sure the root record exists, drawing it from the prior if needed.
template <class Prior>
NodeRecord& ensure_root(TreeState& state, const Prior& prior, Rng& rng) {
  if (!state.contains(NodePath::root())) {
    NodeRecord rec;
    auto nu = prior.nu(0, rng);
    rec.set_nu(nu.value, nu.log1m);
    rec.theta = prior.root_theta(rng);
    state.insert(NodePath::root(), std::move(rec));
  }
  return state.at(NodePath::root());
}

/// Branch weight phi of child slot i (1-based) given the parent's psi sticks.
inline double branch_weight(const std::vector<double>& psi, std::size_t i) {
  double w = psi.at(i - 1);
  for (std::size_t j = 0; j + 1 < i; ++j) w *= 1.0 - psi[j];
  return w;
}

/// pi of a node; every stick on the path must be represented.
inline double node_mass(const TreeState& state, const NodePath& eps) {
  double mass = 1.0;
  NodePath p;
  for (std::size_t k = 0;; ++k) {
    const NodeRecord& rec = state.at(p);
    if (k == eps.depth()) return mass * rec.nu;
    std::size_t i = eps[k];
    if (rec.psi.size() < i)
      throw invariant_error("missing psi stick on path to " + eps.to_string());
    mass *= rec.one_minus_nu() * branch_weight(rec.psi, i);
    p = p.child(static_cast<NodePath::index_type>(i));
  }
}

/// log pi, accumulated with log1p so deep nodes do not underflow.
inline double log_node_mass(const TreeState& state, const NodePath& eps) {
  double lm = 0.0;
  NodePath p;
  for (std::size_t k = 0;; ++k) {
    const NodeRecord& rec = state.at(p);
    if (k == eps.depth()) return lm + std::log(rec.nu);
    std::size_t i = eps[k];
    if (rec.psi.size() < i)
      throw invariant_error("missing psi stick on path to " + eps.to_string());
    lm += rec.log1m_nu() + std::log(rec.psi[i - 1]);
    for (std::size_t j = 0; j + 1 < i; ++j) lm += std::log1p(-rec.psi[j]);
    p = p.child(static_cast<NodePath::index_type>(i));
  }
}

/// Mass not covered by represented nodes, accumulated from the leftover stick
/// fractions: unrepresented child slots plus the tail beyond the last psi.
inline double residual_mass(const TreeState& state) {
  if (!state.contains(NodePath::root())) return 1.0;
  double residual = 0.0;
  std::vector<std::pair<NodePath, double>> stack{{NodePath::root(), 1.0}};
  while (!stack.empty()) {
    auto [p, mass] = std::move(stack.back());
    stack.pop_back();
    const NodeRecord& rec = state.at(p);
    double down = mass * rec.one_minus_nu();
    double remain = 1.0;
    for (std::size_t i = 1; i <= rec.psi.size(); ++i) {
      double share = down * remain * rec.psi[i - 1];
      remain *= 1.0 - rec.psi[i - 1];
      NodePath c = p.child(static_cast<NodePath::index_type>(i));
      if (state.contains(c))
        stack.emplace_back(std::move(c), share);
      else
        residual += share;
    }
    residual += down * remain;
  }
  return residual;
}

inline double represented_mass(const TreeState& state) {
  double s = 0.0;
  for (const auto& [p, rec] : state.nodes()) s += node_mass(state, p);
  return s;
}

/// Map u in (0,1) to the node whose interval contains it, drawing missing
/// psi sticks, nu sticks and parameters from the prior on the way. New state
/// stays in `state`.
template <class Prior>
NodePath find_node(TreeState& state, double u, const Prior& prior, Rng& rng) {
  if (!(u > 0.0 && u < 1.0)) throw numerical_error("find_node needs u in (0,1)");
  constexpr double kBelowOne = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  NodePath p;
  NodeRecord* rec = &ensure_root(state, prior, rng);
  std::vector<double> edges;
  for (;;) {
    if (u < rec->nu) return p;
    u = std::min((u - rec->nu) / rec->one_minus_nu(), kBelowOne);

    edges.assign(1, 0.0);
    double remain = 1.0;
    for (double s : rec->psi) {
      remain *= 1.0 - s;
      edges.push_back(1.0 - remain);
    }
    std::size_t drawn = 0;
    while (!(u < edges.back())) {
      if (++drawn > kMaxNewSiblings)
        throw numerical_error("psi stick extension cap exceeded at " + p.to_string());
      double s = prior.psi(rng);
      rec->psi.push_back(s);
      remain *= 1.0 - s;
      edges.push_back(1.0 - remain);
    }
    std::size_t i = 1;
    while (!(u < edges[i])) ++i;

    NodePath c = p.child(static_cast<NodePath::index_type>(i));
    auto it = state.nodes().find(c);
    if (it == state.nodes().end()) {
      NodeRecord fresh;
      auto nu = prior.nu(c.depth(), rng);
      fresh.set_nu(nu.value, nu.log1m);
      fresh.theta = prior.child_theta(rec->theta, rng);
      rec = &state.insert(c, std::move(fresh));
    } else {
      rec = &it->second;
    }
    double lo = edges[i - 1], hi = edges[i];
    u = std::clamp((u - lo) / (hi - lo), 0.0, kBelowOne);
    p = std::move(c);
  }
}

/// Instantiate unrepresented pieces, largest first, until the residual mass
/// falls below `threshold`. Throws numerical_error after `max_expansions`.
template <class Prior>
void expand_to_residual(TreeState& state, double threshold, const Prior& prior, Rng& rng,
                        std::size_t max_expansions = 2'000'000) {
  ensure_root(state, prior, rng);
  // A piece is either an unrepresented child slot (tail == false) or the
  // tail beyond a node's last psi stick (tail == true).
  struct Piece {
    double mass;
    NodePath at;
    bool tail;
    bool operator<(const Piece& o) const { return mass < o.mass; }
  };
  std::priority_queue<Piece> heap;
  double residual = 0.0;
  std::vector<std::pair<NodePath, double>> stack{{NodePath::root(), 1.0}};
  while (!stack.empty()) {
    auto [p, mass] = std::move(stack.back());
    stack.pop_back();
    const NodeRecord& rec = state.at(p);
    double down = mass * rec.one_minus_nu();
    double remain = 1.0;
    for (std::size_t i = 1; i <= rec.psi.size(); ++i) {
      double share = down * remain * rec.psi[i - 1];
      remain *= 1.0 - rec.psi[i - 1];
      NodePath c = p.child(static_cast<NodePath::index_type>(i));
      if (state.contains(c)) {
        stack.emplace_back(std::move(c), share);
      } else {
        heap.push({share, c, false});
        residual += share;
      }
    }
    heap.push({down * remain, p, true});
    residual += down * remain;
  }

  std::size_t steps = 0;
  while (residual >= threshold) {
    if (heap.empty()) break;
    if (++steps > max_expansions)
      throw numerical_error("expansion budget exhausted before residual reached threshold");
    Piece top = heap.top();
    heap.pop();
    residual -= top.mass;
    if (top.tail) {
      NodeRecord& rec = state.at(top.at);
      double s = prior.psi(rng);
      rec.psi.push_back(s);
      NodePath c = top.at.child(static_cast<NodePath::index_type>(rec.psi.size()));
      heap.push({top.mass * s, c, false});
      heap.push({top.mass * (1.0 - s), top.at, true});
      residual += top.mass;
    } else {
      NodeRecord fresh;
      auto nu = prior.nu(top.at.depth(), rng);
      fresh.set_nu(nu.value, nu.log1m);
      fresh.theta = prior.child_theta(state.at(top.at.parent()).theta, rng);
      double down = top.mass * fresh.one_minus_nu();
      state.insert(top.at, std::move(fresh));
      heap.push({down, top.at, true});
      residual += down;
    }
  }
}

// --- urn view -------------------------------------------------------------

/// Probability that a datum reaching a node stops there.
inline double urn_stay_probability(std::int64_t n_here, std::int64_t n_below, double alpha) {
  return (static_cast<double>(n_here) + 1.0) /
         (static_cast<double>(n_here + n_below) + alpha + 1.0);
}

/// Append one datum to `state` by the sequential urn scheme (sticks
/// integrated out) and return its node. Newly visited nodes get prior sticks
/// and parameters so the state stays well formed.
template <class Prior>
NodePath urn_extend(TreeState& state, const Hyperparams& hp, const Prior& prior, Rng& rng) {
  std::size_t n = state.num_data();
  state.resize_data(n + 1);
  NodeRecord* rec = &ensure_root(state, prior, rng);
  NodePath p;
  for (;;) {
    double stay = urn_stay_probability(rec->n_here, rec->n_below, depth_alpha(hp, p.depth()));
    if (rng.uniform() < stay) break;
    std::vector<double> w;
    w.reserve(rec->psi.size() + 1);
    for (std::size_t i = 1; i <= rec->psi.size(); ++i) {
      auto it = state.nodes().find(p.child(static_cast<NodePath::index_type>(i)));
      w.push_back(it == state.nodes().end() ? 0.0
                                            : static_cast<double>(it->second.subtree_total()));
    }
    w.push_back(hp.gamma);
    std::size_t pick = rng.categorical(w) + 1;
    if (pick == w.size()) {
      rec->psi.push_back(prior.psi(rng));
      pick = rec->psi.size();
    }
    NodePath c = p.child(static_cast<NodePath::index_type>(pick));
    auto it = state.nodes().find(c);
    if (it == state.nodes().end()) {
      NodeRecord fresh;
      auto nu = prior.nu(c.depth(), rng);
      fresh.set_nu(nu.value, nu.log1m);
      fresh.theta = prior.child_theta(rec->theta, rng);
      rec = &state.insert(c, std::move(fresh));
    } else {
      rec = &it->second;
    }
    p = std::move(c);
  }
  state.update_counts(n, p);
  return p;
}

/// Exact log probability of generating `seq` (in order) by the urn scheme.
/// New children must take the next free slot; otherwise returns -inf.
inline double urn_sequence_log_prob(const std::vector<NodePath>& seq, const Hyperparams& hp) {
  struct Counts {
    std::int64_t here = 0, below = 0;
    std::size_t children = 0;
  };
  std::map<NodePath, Counts> c;
  std::map<NodePath, std::int64_t> subtree;
  double lp = 0.0;
  for (const NodePath& target : seq) {
    for (std::size_t k = 0; k <= target.depth(); ++k) {
      NodePath p = target.prefix(k);
      Counts& ct = c[p];
      double stay = urn_stay_probability(ct.here, ct.below, depth_alpha(hp, k));
      if (k == target.depth()) {
        lp += std::log(stay);
        break;
      }
      lp += std::log1p(-stay);
      std::size_t i = target[k];
      double denom = static_cast<double>(ct.below) + hp.gamma;
      if (i <= ct.children) {
        lp += std::log(static_cast<double>(subtree[p.child(static_cast<NodePath::index_type>(i))]) / denom);
      } else if (i == ct.children + 1) {
        lp += std::log(hp.gamma / denom);
      } else {
        return -std::numeric_limits<double>::infinity();
      }
    }
    for (std::size_t k = 0; k <= target.depth(); ++k) {
      NodePath p = target.prefix(k);
      Counts& ct = c[p];
      ++subtree[p];
      if (k == target.depth()) {
        ++ct.here;
      } else {
        ++ct.below;
        ct.children = std::max<std::size_t>(ct.children, target[k]);
      }
    }
  }
  return lp;
}

/// Relabel child indices by order of first appearance (data visited in
/// order, each path walked from the root). Two assignment vectors describe
/// the same unordered treed partition iff their canonical forms are equal.
inline std::vector<NodePath> canonical_assignments(const std::vector<NodePath>& paths) {
  std::map<NodePath, std::map<NodePath::index_type, NodePath::index_type>> relabel;
  std::vector<NodePath> out;
  out.reserve(paths.size());
  for (const NodePath& p : paths) {
    std::vector<NodePath::index_type> idx;
    NodePath orig;
    for (std::size_t k = 0; k < p.depth(); ++k) {
      auto& m = relabel[orig];
      auto [it, fresh] = m.try_emplace(p[k], static_cast<NodePath::index_type>(m.size() + 1));
      idx.push_back(it->second);
      orig = orig.child(p[k]);
    }
    out.emplace_back(std::move(idx));
  }
  return out;
}

// --- conjugate stick posteriors ---------------------------------------------

/// Which counts enter the psi posterior.
///   SubtreeTotal: S_i = N_child + N_child_below (what the urn's branch choice uses).
///   StrictDescendants: N_child_below only, as the posterior is sometimes printed.
enum class PsiCounts { SubtreeTotal, StrictDescendants };

struct BetaParams {
  double a, b;
};

inline BetaParams nu_posterior(const NodeRecord& rec, std::size_t depth, const Hyperparams& hp) {
  return {static_cast<double>(rec.n_here) + 1.0,
          static_cast<double>(rec.n_below) + depth_alpha(hp, depth)};
}

/// Beta posterior of every psi stick at `parent`, in slot order.
inline std::vector<BetaParams> psi_posteriors(const TreeState& state, const NodePath& parent,
                                              const Hyperparams& hp,
                                              PsiCounts conv = PsiCounts::SubtreeTotal) {
  const NodeRecord& rec = state.at(parent);
  std::vector<double> s(rec.psi.size(), 0.0);
  for (std::size_t i = 1; i <= rec.psi.size(); ++i) {
    auto it = state.nodes().find(parent.child(static_cast<NodePath::index_type>(i)));
    if (it == state.nodes().end()) continue;
    s[i - 1] = static_cast<double>(conv == PsiCounts::SubtreeTotal ? it->second.subtree_total()
                                                                   : it->second.n_below);
  }
  std::vector<BetaParams> out(s.size());
  double after = 0.0;
  for (std::size_t i = s.size(); i-- > 0;) {
    out[i] = {s[i] + 1.0, hp.gamma + after};
    after += s[i];
  }
  return out;
}

/// Redraw every represented nu and psi from its conditional posterior.
inline void draw_sticks_given_counts(TreeState& state, const Hyperparams& hp, Rng& rng,
                                     PsiCounts conv = PsiCounts::SubtreeTotal) {
  for (auto& [p, rec] : state.nodes()) {
    BetaParams bp = nu_posterior(rec, p.depth(), hp);
    auto nu = rng.beta_draw(bp.a, bp.b);
    rec.set_nu(nu.value, nu.log1m);
    auto post = psi_posteriors(state, p, hp, conv);
    for (std::size_t i = 0; i < post.size(); ++i) rec.psi[i] = rng.beta(post[i].a, post[i].b);
  }
}

/// n successive urn draws from an empty tree, followed by a stick draw from
/// the conditional given the induced counts and a top-down parameter draw.
template <class Kernel>
TreeState sample_prior_tree(std::size_t n, const Hyperparams& hp, const Kernel& kernel, Rng& rng) {
  hp.validate();
  TreeState state;
  auto prior = make_prior(hp, kernel);
  ensure_root(state, prior, rng);
  for (std::size_t k = 0; k < n; ++k) urn_extend(state, hp, prior, rng);
  draw_sticks_given_counts(state, hp, rng);
  for (auto& [p, rec] : state.nodes())
    rec.theta = p.is_root() ? kernel.sample_root(rng)
                            : kernel.sample_child(state.at(p.parent()).theta, rng);
  return state;
}

}  // namespace tssb
