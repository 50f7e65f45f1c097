#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tssb/bernoulli.hpp"
#include "tssb/errors.hpp"
#include "tssb/hyperparams.hpp"
#include "tssb/kernels.hpp"
#include "tssb/mcmc.hpp"
#include "tssb/topics.hpp"
#include "tssb/tree_state.hpp"

namespace tssb::io {

using json = nlohmann::json;

// --- tree JSON ----------------------------------------------------------------

/// Nodes keyed by path string ("" is the root) plus one path per datum.
inline json tree_to_json(const TreeState& state) {
  json nodes = json::object();
  for (const auto& [p, rec] : state.nodes()) {
    json n = {{"nu", rec.nu}, {"psi", rec.psi}, {"theta", rec.theta},
              {"n_here", rec.n_here}, {"n_below", rec.n_below}};
    if (rec.nu_log1m_key == rec.nu) n["nu_log1m"] = rec.nu_log1m;
    nodes[p.to_string()] = std::move(n);
  }
  json assign = json::array();
  for (const auto& a : state.assignments()) {
    if (a)
      assign.push_back(a->indices());
    else
      assign.push_back(nullptr);
  }
  return {{"nodes", std::move(nodes)}, {"assignments", std::move(assign)}};
}

/// Rebuilds a state and checks the stored counts against the assignments.
inline TreeState tree_from_json(const json& j) {
  try {
    const json& assign = j.at("assignments");
    TreeState state(assign.size());
    std::vector<std::pair<NodePath, const json*>> recs;
    for (const auto& [key, val] : j.at("nodes").items()) recs.emplace_back(NodePath::parse(key), &val);
    std::sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    if (recs.empty() || !recs.front().first.is_root()) throw data_error("tree has no root node");
    std::map<NodePath, std::pair<std::int64_t, std::int64_t>> stored;
    for (const auto& [p, v] : recs) {
      NodeRecord rec;
      rec.nu = v->at("nu").get<double>();
      rec.psi = v->at("psi").get<std::vector<double>>();
      rec.theta = v->value("theta", Theta{});
      if (v->contains("nu_log1m")) rec.set_nu(rec.nu, v->at("nu_log1m").get<double>());
      if (!(rec.nu > 0.0 && rec.nu < 1.0)) throw data_error("nu outside (0,1) at node " + p.to_string());
      for (double s : rec.psi)
        if (!(s > 0.0 && s < 1.0)) throw data_error("psi outside (0,1) at node " + p.to_string());
      stored[p] = {v->value("n_here", std::int64_t{0}), v->value("n_below", std::int64_t{0})};
      state.insert(p, std::move(rec));
    }
    for (std::size_t n = 0; n < assign.size(); ++n) {
      if (assign[n].is_null()) continue;
      NodePath p(assign[n].get<std::vector<NodePath::index_type>>());
      if (!state.contains(p)) throw data_error("datum " + std::to_string(n) + " assigned to missing node");
      state.update_counts(n, p);
    }
    for (const auto& [p, c] : stored) {
      const NodeRecord& rec = state.at(p);
      if (rec.n_here != c.first || rec.n_below != c.second)
        throw data_error("stored counts disagree with assignments at node '" + p.to_string() + "'");
    }
    return state;
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed tree JSON: ") + e.what());
  } catch (const invariant_error& e) {
    throw data_error(std::string("inconsistent tree JSON: ") + e.what());
  }
}

inline json hyperparams_to_json(const Hyperparams& hp) {
  auto iv = [](const Interval& i) { return json::array({i.lo, i.hi}); };
  return {{"alpha0", hp.alpha0},
          {"lambda", hp.lambda},
          {"gamma", hp.gamma},
          {"bounds", {{"alpha0", iv(hp.bounds.alpha0)}, {"lambda", iv(hp.bounds.lambda)},
                      {"gamma", iv(hp.bounds.gamma)}}}};
}

inline Interval interval_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw config_error("bounds must be [min, max]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline Hyperparams hyperparams_from_json(const json& j) {
  Hyperparams hp;
  hp.alpha0 = j.at("alpha0").get<double>();
  hp.lambda = j.at("lambda").get<double>();
  hp.gamma = j.at("gamma").get<double>();
  if (j.contains("bounds")) {
    const json& b = j["bounds"];
    hp.bounds.alpha0 = interval_from_json(b.at("alpha0"));
    hp.bounds.lambda = interval_from_json(b.at("lambda"));
    hp.bounds.gamma = interval_from_json(b.at("gamma"));
  }
  return hp;
}

inline json record_to_json(const ChainRecord& r) {
  return {{"sweep", r.sweep},
          {"complete_loglik", r.complete_loglik},
          {"assignment_loglik", r.assignment_loglik},
          {"alpha0", r.hp.alpha0},
          {"lambda", r.hp.lambda},
          {"gamma", r.hp.gamma},
          {"node_count", r.node_count},
          {"max_depth", r.max_depth},
          {"mean_depth", r.mean_depth},
          {"param_accept", r.param_accept}};
}

// --- DOT ----------------------------------------------------------------------

struct DotOptions {
  std::int64_t threshold = 0;  ///< keep nodes whose subtree holds at least this many data
  /// Optional extra label lines per node (e.g. representative items).
  std::function<std::vector<std::string>(const NodePath&)> annotate;
  std::string graph_name = "tssb";
};

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

/// Graphviz rendering. The root is always drawn; other nodes appear when their
/// subtree total reaches the threshold (and, by construction, so do their
/// ancestors).
inline void write_dot(std::ostream& os, const TreeState& state, const DotOptions& opt = {}) {
  auto id = [](const NodePath& p) { return p.is_root() ? std::string("root") : "n" + p.to_string('_'); };
  auto keep = [&](const NodePath& p, const NodeRecord& rec) {
    return p.is_root() || rec.subtree_total() >= opt.threshold;
  };
  os << "digraph " << opt.graph_name << " {\n  node [shape=box];\n";
  for (const auto& [p, rec] : state.nodes()) {
    if (!keep(p, rec)) continue;
    os << "  " << id(p) << " [label=\"" << (p.is_root() ? "root" : p.to_string()) << "\\nN=" << rec.n_here
       << " below=" << rec.n_below;
    if (opt.annotate)
      for (const auto& line : opt.annotate(p)) os << "\\n" << dot_escape(line);
    os << "\"];\n";
  }
  for (const auto& [p, rec] : state.nodes()) {
    if (p.is_root() || !keep(p, rec)) continue;
    os << "  " << id(p.parent()) << " -> " << id(p) << ";\n";
  }
  os << "}\n";
}

/// Copy of `state` restricted to nodes drawn by write_dot at `threshold`.
/// Data below dropped nodes are left unassigned.
inline TreeState filter_tree(const TreeState& state, std::int64_t threshold) {
  TreeState out(state.num_data());
  for (const auto& [p, rec] : state.nodes()) {
    if (!p.is_root() && rec.subtree_total() < threshold) continue;
    NodeRecord r = rec;
    r.n_here = r.n_below = 0;
    out.insert(p, std::move(r));
  }
  for (std::size_t n = 0; n < state.num_data(); ++n)
    if (const auto& a = state.assignment(n); a && out.contains(*a)) out.update_counts(n, *a);
  return out;
}

// --- binary features ------------------------------------------------------------

/// CSV of 0/1 values, one row per datum. Blank lines are skipped.
inline BinaryMatrix read_binary_csv(std::istream& in) {
  std::vector<std::uint8_t> bits;
  std::size_t cols = 0, rows = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t c = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      auto b = cell.find_first_not_of(" \t"), e = cell.find_last_not_of(" \t");
      std::string v = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
      if (v != "0" && v != "1")
        throw data_error("line " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                         ": expected 0 or 1, got '" + v + "'");
      bits.push_back(v == "1");
      ++c;
    }
    if (rows == 0) cols = c;
    if (c != cols)
      throw data_error("line " + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                       " columns, got " + std::to_string(c));
    ++rows;
  }
  BinaryMatrix m(rows, cols);
  for (std::size_t n = 0; n < rows; ++n)
    for (std::size_t d = 0; d < cols; ++d) m(n, d) = bits[n * cols + d];
  return m;
}

inline void write_binary_csv(std::ostream& os, const BinaryMatrix& m) {
  for (std::size_t n = 0; n < m.rows(); ++n) {
    for (std::size_t d = 0; d < m.cols(); ++d) os << (d ? "," : "") << int(m(n, d));
    os << '\n';
  }
}

inline constexpr char kBinMagic[8] = {'T', 'S', 'S', 'B', 'B', 'I', 'N', '1'};

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t get_u32(const unsigned char* b) {
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}
}  // namespace detail

/// Header: magic, u32 rows, u32 cols (little-endian). Payload: rows*cols bits,
/// row-major, least significant bit first, padded to a whole byte at the end.
inline void write_bitpacked(std::ostream& os, const BinaryMatrix& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() || m.cols() > std::numeric_limits<std::uint32_t>::max())
    throw config_error("matrix too large for the bit-packed format");
  os.write(kBinMagic, 8);
  detail::put_u32(os, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(os, static_cast<std::uint32_t>(m.cols()));
  const std::size_t total = m.rows() * m.cols();
  std::vector<unsigned char> buf((total + 7) / 8, 0);
  for (std::size_t i = 0; i < total; ++i)
    if (m(i / std::max<std::size_t>(m.cols(), 1), i % std::max<std::size_t>(m.cols(), 1)))
      buf[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline BinaryMatrix read_bitpacked(std::istream& in) {
  unsigned char hdr[16];
  if (!in.read(reinterpret_cast<char*>(hdr), 16)) throw data_error("bit-packed file shorter than its header");
  if (std::memcmp(hdr, kBinMagic, 8) != 0) throw data_error("bad magic in bit-packed file");
  const std::size_t rows = detail::get_u32(hdr + 8), cols = detail::get_u32(hdr + 12);
  const std::size_t total = rows * cols;
  std::vector<unsigned char> buf((total + 7) / 8);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw data_error("bit-packed payload truncated: expected " + std::to_string(buf.size()) + " bytes");
  BinaryMatrix m(rows, cols);
  for (std::size_t i = 0; i < total; ++i) m(i / cols, i % cols) = (buf[i / 8] >> (i % 8)) & 1u;
  return m;
}

/// Dispatch on the magic bytes: bit-packed if present, CSV otherwise.
inline BinaryMatrix read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path);
  char magic[8] = {};
  in.read(magic, 8);
  bool packed = in.gcount() == 8 && std::memcmp(magic, kBinMagic, 8) == 0;
  in.clear();
  in.seekg(0);
  return packed ? read_bitpacked(in) : read_binary_csv(in);
}

// --- corpus triplets -------------------------------------------------------------

/// `doc_id word_id count` lines, 0-based. Repeated (doc, word) pairs add up.
/// Documents between the listed ids exist and are empty. `min_vocab` widens
/// the vocabulary beyond the largest word id seen.
inline Corpus read_corpus(std::istream& in, std::size_t min_vocab = 0) {
  std::vector<std::map<std::uint32_t, std::uint32_t>> docs;
  std::size_t vocab = min_vocab, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    long long d, w, c;
    if (!(ss >> d)) continue;
    std::string rest;
    if (!(ss >> w >> c) || (ss >> rest))
      throw data_error("line " + std::to_string(line_no) + ": expected 'doc_id word_id count'");
    if (d < 0 || w < 0 || c < 0 || d > std::numeric_limits<std::uint32_t>::max() ||
        w > std::numeric_limits<std::uint32_t>::max() || c > std::numeric_limits<std::uint32_t>::max())
      throw data_error("line " + std::to_string(line_no) + ": ids and counts must be non-negative 32-bit");
    if (static_cast<std::size_t>(d) >= docs.size()) docs.resize(static_cast<std::size_t>(d) + 1);
    vocab = std::max(vocab, static_cast<std::size_t>(w) + 1);
    if (c > 0) docs[static_cast<std::size_t>(d)][static_cast<std::uint32_t>(w)] += static_cast<std::uint32_t>(c);
  }
  Corpus corpus;
  corpus.vocab = vocab;
  for (auto& m : docs) {
    Document doc;
    doc.words.assign(m.begin(), m.end());
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

inline Corpus read_corpus_file(const std::string& path, std::size_t min_vocab = 0) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  return read_corpus(in, min_vocab);
}

inline void write_corpus(std::ostream& os, const Corpus& c) {
  for (std::size_t d = 0; d < c.size(); ++d)
    for (auto [w, n] : c.docs[d].words) os << d << ' ' << w << ' ' << n << '\n';
}

// --- small file helpers ------------------------------------------------------------

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  if (!f) throw config_error("cannot write " + path);
  f << std::setprecision(17);
  return f;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw data_error(path + ": " + e.what());
  }
}

}  // namespace tssb::io
