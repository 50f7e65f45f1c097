#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "tssb/errors.hpp"

namespace tssb {

/// Address of a node: the sequence of 1-based child indices walked from the
/// root. The empty sequence is the root.
class NodePath {
 public:
  using index_type = std::uint32_t;

  NodePath() = default;
  NodePath(std::initializer_list<index_type> idx) : idx_(idx) { validate(); }
  explicit NodePath(std::vector<index_type> idx) : idx_(std::move(idx)) {
    validate();
  }

  static NodePath root() { return {}; }

  std::size_t depth() const { return idx_.size(); }
  bool is_root() const { return idx_.empty(); }
  const std::vector<index_type>& indices() const { return idx_; }
  index_type operator[](std::size_t k) const { return idx_[k]; }
  index_type last() const { return idx_.back(); }

  NodePath child(index_type i) const {
    if (i == 0) throw invariant_error("child indices are 1-based");
    NodePath out = *this;
    out.idx_.push_back(i);
    return out;
  }

  NodePath parent() const {
    if (idx_.empty()) throw invariant_error("root has no parent");
    NodePath out = *this;
    out.idx_.pop_back();
    return out;
  }

  /// Ancestor at the given depth (depth() returns the node itself).
  NodePath prefix(std::size_t len) const {
    NodePath out;
    out.idx_.assign(idx_.begin(), idx_.begin() + static_cast<long>(len));
    return out;
  }

  /// Strict prefix: *this is a proper ancestor of other.
  bool is_ancestor_of(const NodePath& other) const {
    if (idx_.size() >= other.idx_.size()) return false;
    for (std::size_t k = 0; k < idx_.size(); ++k)
      if (idx_[k] != other.idx_[k]) return false;
    return true;
  }

  bool is_ancestor_or_self_of(const NodePath& other) const {
    return *this == other || is_ancestor_of(other);
  }

  /// Dotted form, "" for the root.
  std::string to_string(char sep = '.') const {
    std::string s;
    for (std::size_t k = 0; k < idx_.size(); ++k) {
      if (k) s += sep;
      s += std::to_string(idx_[k]);
    }
    return s;
  }

  static NodePath parse(std::string_view s) {
    NodePath out;
    if (s.empty()) return out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
      std::size_t dot = s.find('.', pos);
      if (dot == std::string_view::npos) dot = s.size();
      std::string_view tok = s.substr(pos, dot - pos);
      if (tok.empty()) throw data_error("malformed node path '" + std::string(s) + "'");
      index_type v = 0;
      for (char c : tok) {
        if (c < '0' || c > '9')
          throw data_error("malformed node path '" + std::string(s) + "'");
        v = v * 10 + static_cast<index_type>(c - '0');
      }
      if (v == 0) throw data_error("node path index must be >= 1");
      out.idx_.push_back(v);
      pos = dot + 1;
    }
    return out;
  }

  // Lexicographic with a strict prefix ordered first: the left-to-right
  // layout of node intervals on (0,1).
  friend std::strong_ordering operator<=>(const NodePath& a, const NodePath& b) {
    return a.idx_ <=> b.idx_;
  }
  friend bool operator==(const NodePath&, const NodePath&) = default;

 private:
  void validate() const {
    for (index_type v : idx_)
      if (v == 0) throw invariant_error("node path indices must be >= 1");
  }

  std::vector<index_type> idx_;
};

/// Ordering of node intervals on the unit interval.
inline std::strong_ordering lex_compare(const NodePath& a, const NodePath& b) {
  return a <=> b;
}

}  // namespace tssb

template <>
struct std::hash<tssb::NodePath> {
  std::size_t operator()(const tssb::NodePath& p) const noexcept {
    std::size_t h = 0xcbf29ce484222325ull;
    for (auto v : p.indices()) h = (h ^ v) * 0x100000001b3ull;
    return h ^ p.depth();
  }
};
