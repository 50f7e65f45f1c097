#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tssb/errors.hpp"
#include "tssb/random.hpp"

namespace tssb {

/// Bag-of-words document: (word id, count) pairs with distinct, sorted ids.
struct Document {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> words;

  std::size_t length() const {
    std::size_t n = 0;
    for (auto [w, c] : words) n += c;
    return n;
  }
};

struct Corpus {
  std::size_t vocab = 0;
  std::vector<Document> docs;

  std::size_t size() const { return docs.size(); }
  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& d : docs) n += d.length();
    return n;
  }

  /// Word id of every token, counts expanded in word-id order.
  static std::vector<std::uint32_t> tokens(const Document& d) {
    std::vector<std::uint32_t> out;
    out.reserve(d.length());
    for (auto [w, c] : d.words)
      for (std::uint32_t k = 0; k < c; ++k) out.push_back(w);
    return out;
  }
};

/// Topics shared by all documents plus per-token topic labels.
struct TopicModel {
  std::size_t K = 1;
  std::size_t V = 1;
  double topic_word_conc = 0.1;          ///< symmetric Dirichlet prior on rows
  std::vector<double> topic_word;        ///< K x V, row-major, rows on the simplex
  std::vector<std::vector<std::uint32_t>> z;  ///< per doc, per token (0-based topics)
  std::vector<std::vector<double>> doc_topic; ///< per doc topic counts n_dk

  std::span<const double> topic(std::size_t k) const { return {topic_word.data() + k * V, V}; }

  /// Rebuild doc_topic from z.
  void recount() {
    doc_topic.assign(z.size(), std::vector<double>(K, 0.0));
    for (std::size_t d = 0; d < z.size(); ++d)
      for (auto k : z[d]) doc_topic[d][k] += 1.0;
  }

  /// Random labels and a prior draw of the topics.
  static TopicModel random(const Corpus& corpus, std::size_t K, double conc, Rng& rng) {
    TopicModel m;
    m.K = K;
    m.V = corpus.vocab;
    m.topic_word_conc = conc;
    m.topic_word.resize(K * m.V);
    std::vector<double> prior(m.V, conc);
    for (std::size_t k = 0; k < K; ++k) {
      auto row = rng.dirichlet(prior);
      std::copy(row.begin(), row.end(), m.topic_word.begin() + static_cast<long>(k * m.V));
    }
    m.z.resize(corpus.size());
    for (std::size_t d = 0; d < corpus.size(); ++d) {
      m.z[d].resize(corpus.docs[d].length());
      for (auto& t : m.z[d]) t = static_cast<std::uint32_t>(rng.categorical(std::vector<double>(K, 1.0)));
    }
    m.recount();
    return m;
  }
};

inline void check_simplex(std::span<const double> t, double tol = 1e-8) {
  double s = 0.0;
  for (double v : t) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw numerical_error("simplex component out of range");
    s += v;
  }
  if (std::abs(s - 1.0) > tol) throw numerical_error("topic distribution is not on the simplex");
}

/// sum_w count_w * log sum_k theta_k * topic_word[k][w].
inline double topic_doc_loglik(const TopicModel& m, const Document& doc, std::span<const double> theta) {
  if (theta.size() != m.K) throw invariant_error("topic count mismatch");
  check_simplex(theta);
  double ll = 0.0;
  for (auto [w, c] : doc.words) {
    double p = 0.0;
    for (std::size_t k = 0; k < m.K; ++k) p += theta[k] * m.topic_word[k * m.V + w];
    ll += c * std::log(p);
  }
  return ll;
}

/// log p(z_d | theta): the node likelihood once token topics are instantiated.
inline double topic_assignment_loglik(std::span<const double> doc_topic_counts,
                                      std::span<const double> theta) {
  double ll = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k)
    if (doc_topic_counts[k] > 0.0) ll += doc_topic_counts[k] * std::log(std::max(theta[k], 1e-300));
  return ll;
}

/// Resample every token topic from p(z = k) ∝ theta_{doc,k} * topic_word[k][w],
/// then every topic row from its Dirichlet posterior.
inline void gibbs_word_topics(TopicModel& m, const Corpus& corpus,
                              const std::vector<std::span<const double>>& doc_thetas, Rng& rng) {
  if (doc_thetas.size() != corpus.size()) throw invariant_error("one theta per document required");
  std::vector<double> counts(m.K * m.V, 0.0);
  std::vector<double> w(m.K);
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    auto theta = doc_thetas[d];
    std::size_t t = 0;
    for (auto [word, c] : corpus.docs[d].words) {
      for (std::size_t k = 0; k < m.K; ++k) w[k] = theta[k] * m.topic_word[k * m.V + word];
      for (std::uint32_t r = 0; r < c; ++r, ++t) {
        auto k = static_cast<std::uint32_t>(m.K == 1 ? 0 : rng.categorical(w));
        m.z[d][t] = k;
        counts[k * m.V + word] += 1.0;
      }
    }
  }
  std::vector<double> conc(m.V);
  for (std::size_t k = 0; k < m.K; ++k) {
    for (std::size_t v = 0; v < m.V; ++v) conc[v] = m.topic_word_conc + counts[k * m.V + v];
    auto row = rng.dirichlet(conc);
    std::copy(row.begin(), row.end(), m.topic_word.begin() + static_cast<long>(k * m.V));
  }
  m.recount();
}

}  // namespace tssb
