#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "cdr_support.hpp"
#include "pathsentry/cdr.hpp"
#include "pathsentry/errors.hpp"

using namespace pathsentry;

namespace {

// Sorted-order-statistics quantile with linear interpolation, written out directly.
double quantile_oracle(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  double pos = q * static_cast<double>(v.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Eigen::MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  Eigen::MatrixXd m(r.size(), r.begin()->size());
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double x : row) m(i, j++) = x;
    ++i;
  }
  return m;
}

}  // namespace

TEST(Quantile, IntraOrgExample) {
  EXPECT_DOUBLE_EQ(quantile_linear({1, 2, 3, 4}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile_linear({4, 3, 2, 1}, 0.75), 3.25);
}

TEST(Quantile, MatchesOracleOnRandomSamples) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 100);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> v(1 + rng() % 40);
    for (auto& x : v) x = u(rng);
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) EXPECT_DOUBLE_EQ(quantile_linear(v, q), quantile_oracle(v, q));
  }
}

TEST(Softplus, Examples) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(-10.0), 4.5399e-5, 1e-9);
  EXPECT_NEAR(softplus(1.0), 1.313262, 1e-6);
  EXPECT_NEAR(softplus(800.0), 800.0, 1e-9);
  EXPECT_GT(softplus(-800.0), -1e-300);
}

TEST(CdrLoss, ExamplesFromLossValues) {
  // d' = 1: squared distance / d' equals the chosen L values.
  auto z = rows({{0.0}});
  auto one = rows({{1.0}});
  auto sq2 = rows({{std::sqrt(2.0)}});
  auto sq10 = rows({{std::sqrt(10.0)}});
  EXPECT_NEAR(cdr_loss(z, one, z, one).loss, std::log(2.0), 1e-12);
  EXPECT_NEAR(cdr_loss(z, z, z, sq10).loss, 4.5399e-5, 1e-9);
  auto parts = cdr_loss(z, sq2, z, one);
  EXPECT_NEAR(parts.pos, 2.0, 1e-12);
  EXPECT_NEAR(parts.neg, 1.0, 1e-12);
  EXPECT_NEAR(parts.loss, 1.313262, 1e-6);
  EXPECT_NEAR(cdr_loss(z, sq2, z, one, true).loss, softplus(-1.0), 1e-12);
}

TEST(CdrLoss, AlwaysPositive) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 5);
  for (int t = 0; t < 200; ++t) {
    Eigen::MatrixXd a(3, 4), b(3, 4), c(2, 4), d(2, 4);
    for (auto* m : {&a, &b, &c, &d})
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = g(rng);
    EXPECT_GT(cdr_loss(a, b, c, d).loss, 0.0);
  }
}

TEST(CdrGradients, MatchCentralDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto r = cdr_support::check_gradients(seed);
    EXPECT_GT(r.parameters, 0u);
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(ConstructPairs, RulesAndInvariants) {
  EmbeddingStore store;
  OrgMap orgs;
  cdr_support::two_org_store(5, 12, 8, 6.0, 1.0, store, orgs);
  auto pairs = construct_pairs(store.entries(), orgs, PairOptions{4.0, 9});
  ASSERT_FALSE(pairs.positives.empty());
  ASSERT_FALSE(pairs.negatives.empty());
  EXPECT_LE(pairs.negatives.size(), 4 * pairs.positives.size());
  EXPECT_TRUE(std::is_sorted(pairs.positives.begin(), pairs.positives.end()));
  EXPECT_TRUE(std::is_sorted(pairs.negatives.begin(), pairs.negatives.end()));

  std::vector<double> intra;
  const auto& e = store.entries();
  for (auto a = e.begin(); a != e.end(); ++a)
    for (auto b = std::next(a); b != e.end(); ++b)
      if (orgs.at(a->first) == orgs.at(b->first)) intra.push_back(euclidean(a->second, b->second));
  EXPECT_DOUBLE_EQ(pairs.q25, quantile_oracle(intra, 0.25));
  EXPECT_DOUBLE_EQ(pairs.q75, quantile_oracle(intra, 0.75));

  std::set<AsPair> seen;
  for (const auto& p : pairs.positives) {
    EXPECT_EQ(orgs.at(p.a), orgs.at(p.b));
    EXPECT_LE(euclidean(*store.find(p.a), *store.find(p.b)), pairs.q25);
    EXPECT_TRUE(seen.insert(p).second);
  }
  for (const auto& p : pairs.negatives) {
    EXPECT_NE(orgs.at(p.a), orgs.at(p.b));
    EXPECT_GE(euclidean(*store.find(p.a), *store.find(p.b)), pairs.q75);
    EXPECT_TRUE(seen.insert(p).second);
  }
}

TEST(ConstructPairs, ExcludesCrossOrgPairBelowQ75) {
  // Intra-org distances {1,2,3,4}: X at 0,1,3 and Y at 10,14. Z sits at 6.
  std::map<Asn, Vector> v{{1, {0.0}}, {2, {1.0}}, {3, {3.0}}, {4, {10.0}}, {5, {14.0}}, {6, {6.0}}};
  OrgMap orgs{{1, "X"}, {2, "X"}, {3, "X"}, {4, "Y"}, {5, "Y"}, {6, "Z"}};
  auto pairs = construct_pairs(v, orgs, PairOptions{100.0, 1});
  EXPECT_DOUBLE_EQ(pairs.q25, 1.75);
  EXPECT_DOUBLE_EQ(pairs.q75, 3.25);
  EXPECT_EQ(pairs.positives, (std::vector<AsPair>{{1, 2}}));
  std::set<AsPair> neg(pairs.negatives.begin(), pairs.negatives.end());
  EXPECT_FALSE(neg.count({3, 6}));  // distance 3.0 < q75
  EXPECT_TRUE(neg.count({2, 6}));   // distance 5.0
  EXPECT_TRUE(neg.count({3, 4}));   // distance 7.0
}

TEST(ConstructPairs, InsufficientSupervisionIsDataError) {
  std::map<Asn, Vector> v{{1, {0.0}}, {2, {1.0}}, {3, {5.0}}};
  OrgMap orgs{{1, "X"}, {2, "X"}, {3, "Y"}};
  EXPECT_THROW(construct_pairs(v, orgs, {}), DataError);
}

TEST(ReductionModel, ZeroModelGivesZeroOutputAndShape) {
  CdrHyper h;
  h.hidden = 8;
  h.out_dim = 16;
  ReductionModel m(32, h, 1);
  Vector x(32, 0.7);
  EXPECT_EQ(m.forward(x).size(), 16u);
  EXPECT_EQ(m.forward(x), m.forward(x));
  m.w1.setZero();
  m.b1.setZero();
  m.w2.setZero();
  m.b2.setZero();
  for (double y : m.forward(x)) EXPECT_EQ(y, 0.0);
}

TEST(ReductionModel, InitRangeAndJsonRoundTrip) {
  CdrHyper h;
  h.hidden = 10;
  h.out_dim = 3;
  ReductionModel m(9, h, 4);
  EXPECT_LE(m.w1.cwiseAbs().maxCoeff(), 1.0 / 3.0);
  EXPECT_LE(m.w2.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(10.0));
  auto back = ReductionModel::from_json(m.to_json());
  EXPECT_EQ(back.checksum(), m.checksum());
  EXPECT_EQ(back.w1, m.w1);
  EXPECT_EQ(back.b2, m.b2);
}

TEST(Reduce, DimensionMismatchIsDataError) {
  CdrHyper h;
  h.hidden = 4;
  h.out_dim = 2;
  ReductionModel m(3, h, 1);
  EmbeddingStore store(5, "p", "v");
  store.put(1, Vector(5, 0.1));
  EXPECT_THROW(reduce(m, store), DataError);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  EmbeddingStore store;
  OrgMap orgs;
  cdr_support::two_org_store(2, 10, 8, 10.0, 1.0, store, orgs);
  CdrHyper h;
  h.hidden = 16;
  h.out_dim = 2;
  h.learning_rate = 0.0;
  h.iterations = 30;
  auto r = train(store, orgs, h, 3);
  ReductionModel fresh(8, h, 3);
  EXPECT_EQ(r.model.w1, fresh.w1);
  EXPECT_EQ(r.model.b2, fresh.b2);
  ASSERT_EQ(r.loss_trace.size(), 30u);
  // The first pair set comes from original-space distances and the resample at
  // iteration 25 switches to reduced-space distances; the trace is flat on
  // each side of that point.
  for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(r.loss_trace[i], r.loss_trace.front());
  for (std::size_t i = 25; i < 30; ++i) EXPECT_EQ(r.loss_trace[i], r.loss_trace[25]);
}

TEST(Train, DeterministicForEqualSeeds) {
  EmbeddingStore store;
  OrgMap orgs;
  cdr_support::two_org_store(2, 10, 8, 10.0, 1.0, store, orgs);
  CdrHyper h;
  h.hidden = 16;
  h.out_dim = 2;
  h.iterations = 60;
  auto a = train(store, orgs, h, 5);
  auto b = train(store, orgs, h, 5);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.model.checksum(), b.model.checksum());
  EXPECT_EQ(a.resamples, 2u);
}

TEST(Train, LossDecreasesOnSeparatedClusters) {
  EmbeddingStore store;
  OrgMap orgs;
  cdr_support::two_org_store(7, 30, 32, 10.0, 1.0, store, orgs);
  CdrHyper h;
  h.hidden = 64;
  h.iterations = 300;
  auto r = train(store, orgs, h, 1);
  EXPECT_LT(cdr_support::trailing_mean(r.loss_trace, 50), r.loss_trace.front());
  auto reduced = reduce(r.model, store);
  EXPECT_EQ(reduced.dim(), 16u);
  EXPECT_TRUE(reduced.reduced());
  EXPECT_EQ(reduced.model_checksum(), r.model.checksum());
  auto [intra, inter] = cdr_support::mean_intra_inter(reduced, orgs);
  EXPECT_LT(intra, inter);
}

TEST(Train, ResampledPairsSatisfyInvariantsInReducedSpace) {
  EmbeddingStore store;
  OrgMap orgs;
  cdr_support::two_org_store(8, 15, 16, 10.0, 1.0, store, orgs);
  CdrHyper h;
  h.hidden = 32;
  h.out_dim = 4;
  // The resample at iteration 25 sees the model after 25 updates, which is
  // exactly the model returned by a 25-iteration run with the same seed.
  h.iterations = 25;
  auto before = train(store, orgs, h, 2);
  h.iterations = 26;
  auto r = train(store, orgs, h, 2);
  ASSERT_EQ(r.resamples, 1u);
  auto reduced = reduce(before.model, store);
  const auto& pairs = r.final_pairs;
  for (const auto& p : pairs.positives) {
    EXPECT_EQ(orgs.at(p.a), orgs.at(p.b));
    EXPECT_LE(euclidean(*reduced.find(p.a), *reduced.find(p.b)), pairs.q25);
  }
  for (const auto& p : pairs.negatives) {
    EXPECT_NE(orgs.at(p.a), orgs.at(p.b));
    EXPECT_GE(euclidean(*reduced.find(p.a), *reduced.find(p.b)), pairs.q75);
  }
}
