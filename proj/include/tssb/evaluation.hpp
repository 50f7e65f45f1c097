#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tssb/errors.hpp"
#include "tssb/kernels.hpp"
#include "tssb/lda.hpp"
#include "tssb/measure.hpp"
#include "tssb/topics.hpp"

namespace tssb {

struct PerplexityReport {
  double perplexity = 0.0;
  double log_likelihood = 0.0;  ///< sum over held-out documents
  std::size_t tokens = 0;
  std::size_t topics = 0;
  std::size_t components = 0;
};

/// Empirical-likelihood perplexity of held-out documents under a uniform
/// mixture of multinomials. Each component is the exact word distribution of
/// an infinitely long pseudo-document.
inline PerplexityReport perplexity_empirical(const std::vector<std::vector<double>>& components,
                                             const Corpus& heldout) {
  if (heldout.docs.empty()) throw data_error("held-out set is empty");
  if (components.empty()) throw config_error("need at least one mixture component");
  PerplexityReport rep;
  rep.components = components.size();
  std::vector<double> lp(components.size());
  const double log_c = std::log(static_cast<double>(components.size()));
  for (const Document& doc : heldout.docs) {
    for (std::size_t c = 0; c < components.size(); ++c) {
      double s = 0.0;
      for (auto [w, n] : doc.words) s += n * std::log(components[c].at(w));
      lp[c] = s;
    }
    double m = *std::max_element(lp.begin(), lp.end());
    double acc = 0.0;
    for (double v : lp) acc += std::exp(v - m);
    rep.log_likelihood += m + std::log(acc) - log_c;
    rep.tokens += doc.length();
  }
  rep.perplexity = rep.tokens ? std::exp(-rep.log_likelihood / static_cast<double>(rep.tokens)) : 1.0;
  return rep;
}

/// Word distribution sum_k theta_k * topic_k.
inline std::vector<double> mix_topics(std::span<const double> theta, std::span<const double> topic_word,
                                      std::size_t V) {
  std::vector<double> p(V, 0.0);
  for (std::size_t k = 0; k < theta.size(); ++k)
    for (std::size_t w = 0; w < V; ++w) p[w] += theta[k] * topic_word[k * V + w];
  return p;
}

/// Pseudo-document word distributions from a trained tree: a node is drawn
/// from the urn's posterior predictive given the path counts (new nodes get
/// parameters from the kernel), and its topic mixture is pushed through the
/// topics.
inline std::vector<std::vector<double>> tssb_pseudo_documents(const TreeState& state, const Hyperparams& hp,
                                                              const DirichletKernel& kernel,
                                                              const TopicModel& topics, std::size_t n,
                                                              Rng& rng) {
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    NodePath p;
    const NodeRecord* rec = &state.at(p);
    Theta fresh;  // parameter of the current node once we leave the represented tree
    for (;;) {
      std::int64_t here = rec ? rec->n_here : 0, below = rec ? rec->n_below : 0;
      if (rng.uniform() < urn_stay_probability(here, below, depth_alpha(hp, p.depth()))) break;
      std::vector<double> w;
      std::vector<NodePath> kids;
      if (rec) {
        for (const NodePath& k : state.children(p)) {
          kids.push_back(k);
          w.push_back(static_cast<double>(state.at(k).subtree_total()));
        }
      }
      w.push_back(hp.gamma);
      std::size_t pick = rng.categorical(w);
      if (pick < kids.size()) {
        p = kids[pick];
        rec = &state.at(p);
      } else {
        const Theta& parent = rec ? rec->theta : fresh;
        fresh = kernel.sample_child(parent, rng);
        rec = nullptr;
        p = p.child(static_cast<NodePath::index_type>(kids.size() + 1));
      }
    }
    out.push_back(mix_topics(rec ? std::span<const double>(rec->theta) : std::span<const double>(fresh),
                             topics.topic_word, topics.V));
  }
  return out;
}

/// Pseudo-documents from an LDA fit: theta ~ Dir(alpha), posterior-mean topics.
inline std::vector<std::vector<double>> lda_pseudo_documents(const LdaState& lda, std::size_t n, Rng& rng) {
  auto phi = lda.topic_word_mean();
  std::vector<double> conc(lda.K, lda.alpha);
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t c = 0; c < n; ++c) out.push_back(mix_topics(rng.dirichlet(conc), phi, lda.V));
  return out;
}

/// Seeded random partition of n items into `folds` disjoint test sets.
inline std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 1) throw config_error("need at least one fold");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  std::vector<std::vector<std::size_t>> out(folds);
  for (std::size_t i = 0; i < n; ++i) out[i % folds].push_back(idx[i]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

/// (train, test) corpora for one fold.
inline std::pair<Corpus, Corpus> split_corpus(const Corpus& c, const std::vector<std::size_t>& test) {
  Corpus train, held;
  train.vocab = held.vocab = c.vocab;
  std::vector<bool> is_test(c.size(), false);
  for (auto i : test) is_test.at(i) = true;
  for (std::size_t i = 0; i < c.size(); ++i) (is_test[i] ? held : train).docs.push_back(c.docs[i]);
  return {std::move(train), std::move(held)};
}

// --- prior summaries --------------------------------------------------------

struct PriorStats {
  double mean_depth = 0.0;        ///< mean data depth
  double mean_max_depth = 0.0;
  double max_depth = 0.0;         ///< largest over replicates
  double mean_nodes = 0.0;
  double mean_children = 0.0;     ///< children per node that has any
  double occupied_internal = 0.0; ///< fraction of internal nodes holding data
  double occupied_nodes = 0.0;    ///< mean number of nodes with data
};

inline PriorStats prior_stats(const Hyperparams& hp, std::size_t n_data, std::size_t replicates, Rng& rng) {
  static const NullKernel kernel;
  PriorStats s;
  double internal = 0.0, internal_occ = 0.0, parents = 0.0, kids = 0.0;
  for (std::size_t r = 0; r < replicates; ++r) {
    TreeState t = sample_prior_tree(n_data, hp, kernel, rng);
    s.mean_depth += t.mean_data_depth();
    s.mean_max_depth += static_cast<double>(t.max_depth());
    s.max_depth = std::max(s.max_depth, static_cast<double>(t.max_depth()));
    s.mean_nodes += static_cast<double>(t.node_count());
    for (const auto& [p, rec] : t.nodes()) {
      std::size_t nc = t.children(p).size();
      if (rec.n_here > 0) s.occupied_nodes += 1.0;
      if (nc > 0) {
        parents += 1.0;
        kids += static_cast<double>(nc);
        internal += 1.0;
        if (rec.n_here > 0) internal_occ += 1.0;
      }
    }
  }
  const double R = static_cast<double>(std::max<std::size_t>(replicates, 1));
  s.mean_depth /= R;
  s.mean_max_depth /= R;
  s.mean_nodes /= R;
  s.occupied_nodes /= R;
  s.mean_children = parents > 0 ? kids / parents : 0.0;
  s.occupied_internal = internal > 0 ? internal_occ / internal : 0.0;
  return s;
}

}  // namespace tssb
