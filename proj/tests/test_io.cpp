#include <gtest/gtest.h>

#include <sstream>

#include "tssb/bernoulli_model.hpp"
#include "tssb/io.hpp"
#include "test_support.hpp"

using namespace tssb;

namespace {

TreeState sample_state(std::uint64_t seed, std::size_t n = 30) {
  Rng rng(seed);
  Hyperparams hp{5.0, 0.7, 1.0, {}};
  GaussianKernel k(3, 0.5);
  auto prior = make_prior(hp, k);
  TreeState s(n);
  ensure_root(s, prior, rng);
  for (std::size_t i = 0; i < n; ++i) s.update_counts(i, find_node(s, rng.uniform(), prior, rng));
  s.garbage_collect();
  return s;
}

std::size_t count_substr(const std::string& s, const std::string& sub) {
  std::size_t n = 0;
  for (auto p = s.find(sub); p != std::string::npos; p = s.find(sub, p + 1)) ++n;
  return n;
}

}  // namespace

TEST(TreeJson, RoundTripKeepsEveryNodeMass) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    TreeState s = sample_state(seed);
    std::string text = io::tree_to_json(s).dump();
    TreeState back = io::tree_from_json(io::json::parse(text));
    ASSERT_EQ(back.node_count(), s.node_count());
    for (const auto& [p, rec] : s.nodes()) {
      EXPECT_EQ(node_mass(back, p), node_mass(s, p)) << p.to_string();
      EXPECT_EQ(back.at(p).theta, rec.theta);
      EXPECT_EQ(back.at(p).psi, rec.psi);
    }
    EXPECT_EQ(back.assignments(), s.assignments());
    EXPECT_EQ(residual_mass(back), residual_mass(s));
  }
}

TEST(TreeJson, RootKeyIsEmptyString) {
  TreeState s = sample_state(3, 5);
  auto j = io::tree_to_json(s);
  EXPECT_TRUE(j["nodes"].contains(""));
  EXPECT_EQ(j["assignments"].size(), 5u);
}

TEST(TreeJson, RejectsInconsistentInput) {
  TreeState s = sample_state(4, 10);
  auto j = io::tree_to_json(s);
  auto bad_counts = j;
  bad_counts["nodes"][""]["n_below"] = 1000;
  EXPECT_THROW(io::tree_from_json(bad_counts), data_error);
  auto no_root = j;
  no_root["nodes"].erase("");
  EXPECT_THROW(io::tree_from_json(no_root), data_error);
  auto bad_path = j;
  bad_path["nodes"]["1.x"] = j["nodes"][""];
  EXPECT_THROW(io::tree_from_json(bad_path), data_error);
  auto bad_nu = j;
  bad_nu["nodes"][""]["nu"] = 1.5;
  EXPECT_THROW(io::tree_from_json(bad_nu), data_error);
  auto missing = j;
  missing.erase("assignments");
  EXPECT_THROW(io::tree_from_json(missing), data_error);
}

TEST(TreeJson, RecomputedScoreMatchesRecorded) {
  Rng rng(5);
  BinaryMatrix x(12, 3);
  for (std::size_t n = 0; n < 12; ++n)
    for (std::size_t d = 0; d < 3; ++d) x(n, d) = rng.uniform() < 0.5;
  BernoulliTreeModel model(x, GaussianKernel(3, 0.5));
  Hyperparams hp = Hyperparams::centered(HyperBounds{});
  TreeState s = initial_state(model, hp, rng);
  SweepConfig cfg;
  ChainRecord r;
  for (std::size_t i = 0; i < 5; ++i) r = sweep(s, hp, model, cfg, i, rng);
  TreeState back = io::tree_from_json(io::json::parse(io::tree_to_json(s).dump()));
  auto [full, assign] = complete_data_loglik(back, model);
  EXPECT_NEAR(full, r.complete_loglik, 1e-9);
  EXPECT_NEAR(assign, r.assignment_loglik, 1e-9);
}

TEST(Dot, ThresholdAboveDataCountLeavesRoot) {
  TreeState s = sample_state(6, 20);
  ASSERT_GT(s.node_count(), 1u);
  io::DotOptions opt;
  opt.threshold = 21;
  std::ostringstream os;
  io::write_dot(os, s, opt);
  EXPECT_EQ(count_substr(os.str(), "[label="), 1u);
  EXPECT_EQ(count_substr(os.str(), "->"), 0u);
  EXPECT_EQ(io::filter_tree(s, 21).node_count(), 1u);
}

TEST(Dot, ZeroThresholdDrawsEveryNode) {
  TreeState s = sample_state(7, 20);
  std::ostringstream os;
  io::write_dot(os, s);
  EXPECT_EQ(count_substr(os.str(), "[label="), s.node_count());
  EXPECT_EQ(count_substr(os.str(), "->"), s.node_count() - 1);
}

TEST(Dot, AnnotationsAreEscaped) {
  TreeState s = sample_state(8, 3);
  io::DotOptions opt;
  opt.annotate = [](const NodePath&) { return std::vector<std::string>{"say \"hi\""}; };
  std::ostringstream os;
  io::write_dot(os, s, opt);
  EXPECT_NE(os.str().find("say \\\"hi\\\""), std::string::npos);
}

TEST(Dot, EmptyTreeIsSingleRoot) {
  Rng rng(9);
  TreeState s = sample_prior_tree(0, Hyperparams{}, NullKernel{}, rng);
  std::ostringstream os;
  io::write_dot(os, s);
  EXPECT_EQ(count_substr(os.str(), "[label="), 1u);
}

TEST(BinaryCsv, ReadsRowsAndReportsBadLines) {
  std::istringstream good("0,1,1\n1, 0 ,0\n\n1,1,1\r\n");
  BinaryMatrix m = io::read_binary_csv(good);
  ASSERT_EQ(m.rows(), 3u);
  ASSERT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(1, 0), 1);
  EXPECT_EQ(m(1, 1), 0);
  EXPECT_EQ(m(2, 2), 1);

  std::istringstream bad_value("0,1\n1,2\n");
  try {
    io::read_binary_csv(bad_value);
    FAIL();
  } catch (const data_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream ragged("0,1\n1\n");
  EXPECT_THROW(io::read_binary_csv(ragged), data_error);
}

TEST(BitPacked, RoundTripAndHeader) {
  Rng rng(10);
  BinaryMatrix m(7, 13);
  for (std::size_t n = 0; n < 7; ++n)
    for (std::size_t d = 0; d < 13; ++d) m(n, d) = rng.uniform() < 0.4;
  std::stringstream ss;
  io::write_bitpacked(ss, m);
  std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 16u + (7 * 13 + 7) / 8);
  EXPECT_EQ(bytes.substr(0, 8), "TSSBBIN1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 7);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 13);
  BinaryMatrix back = io::read_bitpacked(ss);
  for (std::size_t n = 0; n < 7; ++n)
    for (std::size_t d = 0; d < 13; ++d) EXPECT_EQ(back(n, d), m(n, d));
}

TEST(BitPacked, RejectsBadMagicAndTruncation) {
  std::istringstream bad(std::string("NOTMAGIC\x01\0\0\0\x01\0\0\0\x01", 17));
  EXPECT_THROW(io::read_bitpacked(bad), data_error);
  std::stringstream ss;
  BinaryMatrix m(4, 8);
  io::write_bitpacked(ss, m);
  std::string cut = ss.str().substr(0, 18);
  std::istringstream trunc(cut);
  EXPECT_THROW(io::read_bitpacked(trunc), data_error);
}

TEST(Corpus, ReadsTripletsMergingRepeats) {
  std::istringstream in("# header\n0 2 3\n0 1 1\n2 0 4\n0 2 1\n");
  Corpus c = io::read_corpus(in);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.vocab, 3u);
  ASSERT_EQ(c.docs[0].words.size(), 2u);
  EXPECT_EQ(c.docs[0].words[0], (std::pair<std::uint32_t, std::uint32_t>{1, 1}));
  EXPECT_EQ(c.docs[0].words[1], (std::pair<std::uint32_t, std::uint32_t>{2, 4}));
  EXPECT_TRUE(c.docs[1].words.empty());
  EXPECT_EQ(c.docs[2].length(), 4u);

  std::stringstream out;
  io::write_corpus(out, c);
  Corpus back = io::read_corpus(out);
  EXPECT_EQ(back.docs[2].words, c.docs[2].words);
}

TEST(Corpus, ReportsMalformedLine) {
  std::istringstream in("0 1 2\n0 1\n");
  try {
    io::read_corpus(in);
    FAIL();
  } catch (const data_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream neg("0 -1 2\n");
  EXPECT_THROW(io::read_corpus(neg), data_error);
}

TEST(HyperparamsJson, RoundTrip) {
  Hyperparams hp{12.5, 0.3, 2.5, {}};
  hp.bounds.gamma = {0.5, 4.0};
  Hyperparams back = io::hyperparams_from_json(io::hyperparams_to_json(hp));
  EXPECT_EQ(back.alpha0, hp.alpha0);
  EXPECT_EQ(back.lambda, hp.lambda);
  EXPECT_EQ(back.gamma, hp.gamma);
  EXPECT_EQ(back.bounds.gamma.lo, 0.5);
  EXPECT_EQ(back.bounds.gamma.hi, 4.0);
}
