#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "tssb/bernoulli.hpp"
#include "tssb/stats.hpp"
#include "tssb/topics.hpp"
#include "tssb/tree_state.hpp"
#include "test_support.hpp"

using namespace tssb;

TEST(Bernoulli, ZeroLogitsGiveHalfPerBit) {
  std::vector<std::uint8_t> x(256);
  Rng rng(1);
  for (auto& v : x) v = rng.uniform() < 0.5;
  std::vector<double> theta(256, 0.0);
  EXPECT_NEAR(bern_loglik(x, theta), -256 * std::log(2.0), 1e-10);
}

TEST(Bernoulli, SaturatesWithoutOverflow) {
  std::vector<std::uint8_t> one{1}, zero{0};
  std::vector<double> big{50.0}, huge{700.0};
  EXPECT_NEAR(bern_loglik(one, big), 0.0, 1e-20);
  EXPECT_NEAR(bern_loglik(zero, big), -50.0, 1e-12);
  EXPECT_TRUE(std::isfinite(bern_loglik(zero, huge)));
  EXPECT_TRUE(std::isfinite(bern_loglik(one, std::vector<double>{-700.0})));
}

TEST(Bernoulli, MatchesProductFormulaInLongDouble) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::uint8_t> x(4);
    std::vector<double> th(4);
    long double prod = 1.0L;
    for (int d = 0; d < 4; ++d) {
      x[d] = rng.uniform() < 0.5;
      th[d] = rng.normal(0, 4);
      long double e = std::exp(static_cast<long double>(th[d]));
      prod *= x[d] ? 1.0L / (1.0L + 1.0L / e) : 1.0L / (1.0L + e);
    }
    EXPECT_NEAR(bern_loglik(x, th), static_cast<double>(std::log(prod)), 1e-12);
  }
}

TEST(Bernoulli, MonotoneInLogit) {
  std::vector<std::uint8_t> one{1}, zero{0};
  double prev1 = -INFINITY, prev0 = INFINITY;
  for (double t = -700; t <= 700; t += 7) {
    double a = bern_loglik(one, std::vector<double>{t});
    double b = bern_loglik(zero, std::vector<double>{t});
    EXPECT_TRUE(std::isfinite(a) && std::isfinite(b));
    EXPECT_GE(a, prev1);
    EXPECT_LE(b, prev0);
    prev1 = a;
    prev0 = b;
  }
}

TEST(Bernoulli, GradientExamples) {
  std::vector<std::uint8_t> ones(3, 1);
  std::vector<double> zero(3, 0.0);
  auto g = bern_loglik_grad(std::vector<std::span<const std::uint8_t>>{ones}, zero);
  for (double v : g) EXPECT_DOUBLE_EQ(v, 0.5);
  auto e = bern_loglik_grad(std::vector<std::span<const std::uint8_t>>{}, zero);
  for (double v : e) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Bernoulli, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const std::size_t M = 1 + static_cast<std::size_t>(rng.uniform() * 8);
    const std::size_t n = static_cast<std::size_t>(rng.uniform() * 6);
    BinaryMatrix X(n, M);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < M; ++d) X(i, d) = rng.uniform() < 0.4;
    std::vector<std::span<const std::uint8_t>> rows;
    for (std::size_t i = 0; i < n; ++i) rows.push_back(X.row(i));
    std::vector<double> th(M);
    for (double& v : th) v = rng.normal(0, 3);
    auto g = bern_loglik_grad(rows, th);
    auto total = [&](const std::vector<double>& q) {
      double s = 0;
      for (auto r : rows) s += bern_loglik(r, q);
      return s;
    };
    for (std::size_t d = 0; d < M; ++d) {
      const double h = 1e-5;
      auto a = th, b = th;
      a[d] += h;
      b[d] -= h;
      double fd = (total(a) - total(b)) / (2 * h);
      EXPECT_NEAR(g[d], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Bernoulli, StatsAgreeWithPerRowSum) {
  Rng rng(4);
  BinaryMatrix X(20, 6);
  BernoulliStats s(6);
  std::vector<double> th(6);
  for (double& v : th) v = rng.normal(0, 1);
  double direct = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t d = 0; d < 6; ++d) X(i, d) = rng.uniform() < 0.5;
    s.add(X.row(i));
    direct += bern_loglik(X.row(i), th);
  }
  EXPECT_NEAR(bern_loglik_stats(s, th), direct, 1e-10);
}

namespace {

TopicModel toy_topics(std::size_t K, std::size_t V, std::vector<double> rows) {
  TopicModel m;
  m.K = K;
  m.V = V;
  m.topic_word = std::move(rows);
  return m;
}

}  // namespace

TEST(Topics, SingleTopicIsMultinomial) {
  TopicModel m = toy_topics(1, 3, {0.2, 0.3, 0.5});
  Document d{{{0, 2}, {2, 1}}};
  EXPECT_NEAR(topic_doc_loglik(m, d, std::vector<double>{1.0}),
              2 * std::log(0.2) + std::log(0.5), 1e-14);
}

TEST(Topics, UniformEverything) {
  TopicModel m = toy_topics(2, 4, std::vector<double>(8, 0.25));
  Document d{{{0, 1}, {3, 2}}};
  EXPECT_NEAR(topic_doc_loglik(m, d, std::vector<double>{0.5, 0.5}), 3 * std::log(0.25), 1e-14);
}

TEST(Topics, MatchesExhaustiveTokenSum) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    TopicModel m = toy_topics(2, 3, {});
    for (int k = 0; k < 2; ++k) {
      auto row = rng.dirichlet(std::vector<double>(3, 1.0));
      m.topic_word.insert(m.topic_word.end(), row.begin(), row.end());
    }
    Theta th = rng.dirichlet(std::vector<double>(2, 1.0));
    Document d{{{0, 1}, {1, 2}, {2, 1}}};
    auto tokens = Corpus::tokens(d);
    double total = 0.0;
    for (unsigned mask = 0; mask < (1u << tokens.size()); ++mask) {
      double p = 1.0;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        unsigned k = (mask >> i) & 1u;
        p *= th[k] * m.topic_word[k * 3 + tokens[i]];
      }
      total += p;
    }
    EXPECT_NEAR(topic_doc_loglik(m, d, th), std::log(total), 1e-12);
  }
}

TEST(Topics, InvariantUnderJointLabelPermutation) {
  Rng rng(6);
  TopicModel m = toy_topics(3, 4, {});
  for (int k = 0; k < 3; ++k) {
    auto row = rng.dirichlet(std::vector<double>(4, 1.0));
    m.topic_word.insert(m.topic_word.end(), row.begin(), row.end());
  }
  Theta th = rng.dirichlet(std::vector<double>(3, 1.0));
  Document d{{{0, 3}, {2, 1}, {3, 4}}};
  TopicModel p = m;
  std::vector<int> perm{2, 0, 1};
  Theta pth(3);
  for (int k = 0; k < 3; ++k) {
    pth[k] = th[perm[k]];
    for (int v = 0; v < 4; ++v) p.topic_word[k * 4 + v] = m.topic_word[perm[k] * 4 + v];
  }
  EXPECT_NEAR(topic_doc_loglik(m, d, th), topic_doc_loglik(p, d, pth), 1e-12);
}

TEST(Topics, RejectsOffSimplexTheta) {
  TopicModel m = toy_topics(2, 2, {0.5, 0.5, 0.5, 0.5});
  Document d{{{0, 1}}};
  EXPECT_THROW(topic_doc_loglik(m, d, std::vector<double>{0.7, 0.7}), numerical_error);
}

namespace {

Corpus small_corpus() {
  Corpus c;
  c.vocab = 3;
  c.docs = {Document{{{0, 2}, {1, 1}}}, Document{{{1, 1}, {2, 3}}}};
  return c;
}

}  // namespace

TEST(GibbsWordTopics, SingleTopicAssignsEverythingToIt) {
  Corpus c = small_corpus();
  Rng rng(7);
  TopicModel m = TopicModel::random(c, 1, 0.1, rng);
  std::vector<double> one{1.0};
  gibbs_word_topics(m, c, {one, one}, rng);
  for (const auto& zd : m.z)
    for (auto z : zd) EXPECT_EQ(z, 0u);
}

TEST(GibbsWordTopics, OneHotThetaPinsTopics) {
  Corpus c = small_corpus();
  Rng rng(8);
  TopicModel m = TopicModel::random(c, 2, 0.1, rng);
  std::vector<double> second{0.0, 1.0}, mixed{0.5, 0.5};
  for (int it = 0; it < 20; ++it) {
    gibbs_word_topics(m, c, {second, mixed}, rng);
    for (auto z : m.z[0]) EXPECT_EQ(z, 1u);
  }
}

namespace {
void regenerate_words(Corpus& c, TopicModel& m, Rng& rng) {
  test::regenerate_words(c, m.z, m.topic_word, rng);
  m.recount();
}
}  // namespace

TEST(GibbsWordTopics, GewekeAgreesWithForwardSimulation) {
  // Fixed per-document theta; joint over (topics, z, words).
  Corpus shape = small_corpus();
  const std::vector<double> th0{0.3, 0.7}, th1{0.6, 0.4};
  Rng rng(9);
  auto forward = [&](Corpus& c, TopicModel& m) {
    m = TopicModel::random(c, 2, 0.5, rng);
    for (std::size_t d = 0; d < c.size(); ++d)
      for (auto& z : m.z[d]) z = static_cast<std::uint32_t>(rng.categorical(d == 0 ? th0 : th1));
    m.recount();
    regenerate_words(c, m, rng);
  };
  const int n = 6000;
  std::vector<double> fa, fb, sa, sb;
  for (int i = 0; i < n; ++i) {
    Corpus c = shape;
    TopicModel m;
    forward(c, m);
    fa.push_back(m.topic_word[0]);
    fb.push_back(m.doc_topic[1][0]);
  }
  Corpus c = shape;
  TopicModel m;
  forward(c, m);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      gibbs_word_topics(m, c, {th0, th1}, rng);
      regenerate_words(c, m, rng);
    }
    sa.push_back(m.topic_word[0]);
    sb.push_back(m.doc_topic[1][0]);
  }
  EXPECT_GT(ks_two_sample(fa, sa).p_value, 0.005);
  EXPECT_GT(ks_two_sample(fb, sb).p_value, 0.005);
}
