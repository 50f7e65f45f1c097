#pragma once

#include <cstdint>
#include <vector>

#include "tssb/errors.hpp"
#include "tssb/random.hpp"
#include "tssb/topics.hpp"

namespace tssb {

/// Collapsed-Gibbs LDA state. Token order per document follows
/// Corpus::tokens.
struct LdaState {
  std::size_t K = 1, V = 1;
  double alpha = 50.0;  ///< doc-topic concentration (per topic)
  double beta = 0.1;    ///< topic-word concentration (per word)
  std::vector<std::vector<std::uint32_t>> z;
  std::vector<std::vector<double>> ndk;  ///< D x K
  std::vector<double> nkw;               ///< K x V
  std::vector<double> nk;

  static LdaState random(const Corpus& corpus, std::size_t K, Rng& rng, double alpha = -1.0,
                         double beta = 0.1) {
    if (K < 1) throw config_error("LDA needs at least one topic");
    LdaState s;
    s.K = K;
    s.V = corpus.vocab;
    s.alpha = alpha > 0.0 ? alpha : 50.0 / static_cast<double>(K);
    s.beta = beta;
    s.z.resize(corpus.size());
    for (std::size_t d = 0; d < corpus.size(); ++d) {
      s.z[d].resize(corpus.docs[d].length());
      for (auto& t : s.z[d]) t = static_cast<std::uint32_t>(rng.uniform() * static_cast<double>(K)) % K;
    }
    s.recount(corpus);
    return s;
  }

  void recount(const Corpus& corpus) {
    ndk.assign(corpus.size(), std::vector<double>(K, 0.0));
    nkw.assign(K * V, 0.0);
    nk.assign(K, 0.0);
    for (std::size_t d = 0; d < corpus.size(); ++d) {
      auto words = Corpus::tokens(corpus.docs[d]);
      if (words.size() != z[d].size()) throw invariant_error("token count mismatch");
      for (std::size_t t = 0; t < words.size(); ++t) {
        auto k = z[d][t];
        ndk[d][k] += 1.0;
        nkw[k * V + words[t]] += 1.0;
        nk[k] += 1.0;
      }
    }
  }

  bool counts_consistent(const Corpus& corpus) const {
    LdaState fresh = *this;
    fresh.recount(corpus);
    return fresh.ndk == ndk && fresh.nkw == nkw && fresh.nk == nk;
  }

  /// Posterior-mean topic-word distributions, K x V row-major.
  std::vector<double> topic_word_mean() const {
    std::vector<double> phi(K * V);
    const double vb = static_cast<double>(V) * beta;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t w = 0; w < V; ++w) phi[k * V + w] = (nkw[k * V + w] + beta) / (nk[k] + vb);
    return phi;
  }
};

/// One collapsed-Gibbs pass over every token.
inline void lda_gibbs_sweep(LdaState& s, const Corpus& corpus, Rng& rng) {
  std::vector<double> p(s.K);
  const double vb = static_cast<double>(s.V) * s.beta;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    auto words = Corpus::tokens(corpus.docs[d]);
    for (std::size_t t = 0; t < words.size(); ++t) {
      const auto w = words[t];
      auto k = s.z[d][t];
      s.ndk[d][k] -= 1.0;
      s.nkw[k * s.V + w] -= 1.0;
      s.nk[k] -= 1.0;
      for (std::size_t j = 0; j < s.K; ++j)
        p[j] = (s.ndk[d][j] + s.alpha) * (s.nkw[j * s.V + w] + s.beta) / (s.nk[j] + vb);
      k = static_cast<std::uint32_t>(s.K == 1 ? 0 : rng.categorical(p));
      s.z[d][t] = k;
      s.ndk[d][k] += 1.0;
      s.nkw[k * s.V + w] += 1.0;
      s.nk[k] += 1.0;
    }
  }
}

/// Seed the tree topic model from a trained LDA state: token topics are
/// copied and topics set to their posterior means.
inline TopicModel lda_init_tssb(const LdaState& lda, const Corpus& corpus, std::size_t K) {
  if (lda.K != K) throw config_error("LDA topic count does not match the tree topic model");
  if (lda.z.size() != corpus.size()) throw data_error("LDA state does not match the corpus");
  TopicModel m;
  m.K = lda.K;
  m.V = lda.V;
  m.topic_word_conc = lda.beta;
  m.topic_word = lda.topic_word_mean();
  m.z = lda.z;
  m.recount();
  return m;
}

/// Inverse of lda_init_tssb for the assignment tables.
inline LdaState lda_from_topic_model(const TopicModel& m, const Corpus& corpus, double alpha) {
  LdaState s;
  s.K = m.K;
  s.V = m.V;
  s.alpha = alpha;
  s.beta = m.topic_word_conc;
  s.z = m.z;
  s.recount(corpus);
  return s;
}

}  // namespace tssb
