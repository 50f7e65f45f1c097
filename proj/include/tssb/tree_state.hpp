#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tssb/errors.hpp"
#include "tssb/node_path.hpp"

namespace tssb {

using Theta = std::vector<double>;

/// Per-node stick state and path counts.
struct NodeRecord {
  double nu = 0.5;          ///< fraction of the node's mass kept at the node
  std::vector<double> psi;  ///< branch sticks for child slots 1..psi.size()
  Theta theta;              ///< node parameter, interpreted by the kernel
  std::int64_t n_here = 0;  ///< data assigned exactly here
  std::int64_t n_below = 0; ///< data assigned to strict descendants

  /// Exact log(1 - nu) recorded with the draw; only trusted while `nu` still
  /// equals `nu_log1m_key`, so plain assignments to `nu` stay valid.
  double nu_log1m = 0.0;
  double nu_log1m_key = -1.0;

  std::int64_t subtree_total() const { return n_here + n_below; }

  void set_nu(double v, double log1m) {
    nu = v;
    nu_log1m = log1m;
    nu_log1m_key = v;
  }
  double log1m_nu() const { return nu_log1m_key == nu ? nu_log1m : std::log1p(-nu); }
  double one_minus_nu() const { return nu_log1m_key == nu ? std::exp(nu_log1m) : 1.0 - nu; }
};

/// Represented part of a tree plus the data assignments.
///
/// Nodes are keyed by path, and std::map iteration order is the left-to-right
/// interval order. The root record is always present once the state has been
/// seeded; every other record must lie on the path to some assigned datum
/// after garbage_collect().
class TreeState {
 public:
  using NodeMap = std::map<NodePath, NodeRecord>;

  TreeState() = default;
  explicit TreeState(std::size_t n_data) : assignments_(n_data) {}

  // --- node access -------------------------------------------------------
  const NodeMap& nodes() const { return nodes_; }
  NodeMap& nodes() { return nodes_; }
  bool contains(const NodePath& p) const { return nodes_.count(p) != 0; }
  std::size_t node_count() const { return nodes_.size(); }

  const NodeRecord& at(const NodePath& p) const {
    auto it = nodes_.find(p);
    if (it == nodes_.end()) throw invariant_error("node " + p.to_string() + " not represented");
    return it->second;
  }
  NodeRecord& at(const NodePath& p) {
    auto it = nodes_.find(p);
    if (it == nodes_.end()) throw invariant_error("node " + p.to_string() + " not represented");
    return it->second;
  }

  NodeRecord& insert(const NodePath& p, NodeRecord rec) {
    if (!p.is_root()) {
      const NodeRecord& par = at(p.parent());
      if (par.psi.size() < p.last())
        throw invariant_error("inserting " + p.to_string() + " without its psi stick");
    }
    auto [it, ok] = nodes_.insert_or_assign(p, std::move(rec));
    return it->second;
  }

  /// Immediate represented children, in slot order.
  std::vector<NodePath> children(const NodePath& p) const {
    std::vector<NodePath> out;
    const NodeRecord& rec = at(p);
    for (NodePath::index_type i = 1; i <= rec.psi.size(); ++i) {
      NodePath c = p.child(i);
      if (contains(c)) out.push_back(std::move(c));
    }
    return out;
  }

  // --- assignments -------------------------------------------------------
  std::size_t num_data() const { return assignments_.size(); }
  const std::vector<std::optional<NodePath>>& assignments() const { return assignments_; }
  const std::optional<NodePath>& assignment(std::size_t n) const { return assignments_.at(n); }

  void resize_data(std::size_t n) {
    for (std::size_t k = n; k < assignments_.size(); ++k)
      if (assignments_[k]) unassign(k);
    assignments_.resize(n);
  }

  /// Move datum n to `dest`, updating path counts along the old and new
  /// paths. Every node on the destination path must already be represented.
  void update_counts(std::size_t n, const NodePath& dest) {
    if (n >= assignments_.size()) throw invariant_error("datum index out of range");
    for (std::size_t k = 0; k <= dest.depth(); ++k)
      if (!contains(dest.prefix(k)))
        throw invariant_error("destination path " + dest.to_string() + " not represented");
    if (assignments_[n] && *assignments_[n] == dest) return;
    if (assignments_[n]) unassign(n);
    bump(dest, +1);
    assignments_[n] = dest;
  }

  void unassign(std::size_t n) {
    if (!assignments_.at(n)) return;
    bump(*assignments_[n], -1);
    assignments_[n].reset();
  }

  /// Counts recomputed from scratch from the assignment vector.
  std::map<NodePath, std::pair<std::int64_t, std::int64_t>> recount() const {
    std::map<NodePath, std::pair<std::int64_t, std::int64_t>> out;
    for (const auto& a : assignments_) {
      if (!a) continue;
      out[*a].first += 1;
      for (std::size_t k = 0; k < a->depth(); ++k) out[a->prefix(k)].second += 1;
    }
    return out;
  }

  /// True iff every stored count equals the recount.
  bool counts_consistent() const {
    auto rc = recount();
    for (const auto& [p, rec] : nodes_) {
      auto it = rc.find(p);
      std::int64_t h = it == rc.end() ? 0 : it->second.first;
      std::int64_t b = it == rc.end() ? 0 : it->second.second;
      if (rec.n_here != h || rec.n_below != b) return false;
    }
    for (const auto& [p, c] : rc)
      if (!contains(p)) return false;
    return true;
  }

  // --- hull --------------------------------------------------------------

  /// Paths whose nu/theta must be represented: the root plus every node on
  /// the path to an assigned datum.
  std::set<NodePath> hull_nodes() const {
    std::set<NodePath> out;
    out.insert(NodePath::root());
    for (const auto& a : assignments_) {
      if (!a) continue;
      for (std::size_t k = 0; k <= a->depth(); ++k) out.insert(a->prefix(k));
    }
    return out;
  }

  /// Drop every record and psi stick outside the hull. Idempotent. Uses the
  /// stored counts (a node is in the hull iff its subtree holds data), so
  /// counts must be consistent.
  void garbage_collect() {
    std::map<NodePath, std::size_t> psi_needed;
    for (auto it = nodes_.begin(); it != nodes_.end();) {
      const NodePath& p = it->first;
      if (!p.is_root() && it->second.subtree_total() == 0) {
        // Descendants of an empty subtree are empty too and follow in order.
        it = nodes_.erase(it);
        continue;
      }
      if (!p.is_root()) {
        auto& need = psi_needed[p.parent()];
        need = std::max<std::size_t>(need, p.last());
      }
      ++it;
    }
    for (auto& [p, rec] : nodes_) {
      auto pn = psi_needed.find(p);
      std::size_t need = pn == psi_needed.end() ? 0 : pn->second;
      if (rec.psi.size() > need) rec.psi.resize(need);
    }
#ifdef TSSB_DEBUG_COUNTS
    if (!counts_consistent()) throw invariant_error("path counts drifted from assignments");
#endif
  }

  /// Relabel the child slots of `parent`: new slot k+1 receives what was in
  /// slot order[k]+1. Subtrees, psi sticks and assignments move along.
  /// `new_psi` replaces the parent's psi vector (same length as order).
  void permute_children(const NodePath& parent, const std::vector<std::size_t>& order,
                        std::vector<double> new_psi) {
    NodeRecord& par = at(parent);
    if (order.size() != par.psi.size() || new_psi.size() != order.size())
      throw invariant_error("child permutation size mismatch");
    std::vector<NodePath::index_type> remap(order.size() + 1, 0);
    bool identity = true;
    for (std::size_t k = 0; k < order.size(); ++k) {
      remap[order[k] + 1] = static_cast<NodePath::index_type>(k + 1);
      if (order[k] != k) identity = false;
    }
    par.psi = std::move(new_psi);
    if (identity) return;

    const std::size_t d = parent.depth();
    auto rewrite = [&](const NodePath& p) {
      std::vector<NodePath::index_type> idx = p.indices();
      idx[d] = remap[idx[d]];
      return NodePath(std::move(idx));
    };
    std::vector<std::pair<NodePath, NodeRecord>> moved;
    for (auto it = nodes_.upper_bound(parent); it != nodes_.end();) {
      if (!parent.is_ancestor_of(it->first)) break;
      moved.emplace_back(rewrite(it->first), std::move(it->second));
      it = nodes_.erase(it);
    }
    for (auto& [p, rec] : moved) nodes_.emplace(std::move(p), std::move(rec));
    for (auto& a : assignments_)
      if (a && parent.is_ancestor_of(*a)) a = rewrite(*a);
  }

  // --- summaries ---------------------------------------------------------
  std::size_t max_depth() const {
    std::size_t m = 0;
    for (const auto& [p, rec] : nodes_) m = std::max(m, p.depth());
    return m;
  }

  double mean_data_depth() const {
    double s = 0.0;
    std::size_t c = 0;
    for (const auto& a : assignments_)
      if (a) {
        s += static_cast<double>(a->depth());
        ++c;
      }
    return c ? s / static_cast<double>(c) : 0.0;
  }

  /// Indices of data assigned exactly to each node.
  std::map<NodePath, std::vector<std::size_t>> data_by_node() const {
    std::map<NodePath, std::vector<std::size_t>> out;
    for (std::size_t n = 0; n < assignments_.size(); ++n)
      if (assignments_[n]) out[*assignments_[n]].push_back(n);
    return out;
  }

 private:
  void bump(const NodePath& p, std::int64_t delta) {
    NodeRecord& leaf = at(p);
    if (leaf.n_here + delta < 0) throw invariant_error("count underflow at " + p.to_string());
    leaf.n_here += delta;
    for (std::size_t k = 0; k < p.depth(); ++k) {
      NodeRecord& anc = at(p.prefix(k));
      if (anc.n_below + delta < 0)
        throw invariant_error("count underflow below " + p.prefix(k).to_string());
      anc.n_below += delta;
    }
  }

  NodeMap nodes_;
  std::vector<std::optional<NodePath>> assignments_;
};

}  // namespace tssb
