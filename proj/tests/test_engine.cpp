#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "jointnet/engine.hpp"
#include "oracle.hpp"

using namespace jointnet;

namespace {

Hyperparameters make_hp(std::optional<double> eta, std::optional<double> lambda) {
  Hyperparameters hp;
  hp.eta = eta ? Strength::finite(*eta) : Strength::infinity();
  hp.lambda = lambda ? Strength::finite(*lambda) : Strength::infinity();
  return hp;
}

void expect_matches_oracle(const ScoreTable& scores, const ParentSpace& space, const Hyperparameters& hp,
                           const Network& prior, double tol) {
  const auto post = JointEngine(space, hp).infer(scores, prior);
  for (int p = 0; p < space.num_vertices(); ++p) {
    const auto ref = oracle::brute_force_marginals(scores, space, hp, prior, p);
    for (int i = 0; i < space.num_vertices(); ++i) {
      EXPECT_NEAR(post.latent(i, p), static_cast<double>(ref.latent[i]), tol) << "latent " << i << "->" << p;
      for (int j = 0; j < scores.individuals(); ++j)
        EXPECT_NEAR(post.individual[j](i, p), static_cast<double>(ref.individual[j][i]), tol)
            << "individual " << j << ", " << i << "->" << p;
    }
  }
}

}  // namespace

TEST(Engine, MatchesBruteForceAcrossGrid) {
  std::uint64_t seed = 100;
  for (int P : {2, 3, 4})
    for (int J : {1, 2, 3})
      for (int c : {1, 2})
        for (std::optional<double> eta : {std::optional<double>(0.0), std::optional<double>(1.0), std::optional<double>()})
          for (std::optional<double> lambda :
               {std::optional<double>(0.0), std::optional<double>(2.0), std::optional<double>()}) {
            const ParentSpace space(P, c);
            const auto scores = fixtures::random_scores(J, space, ++seed);
            const auto prior = fixtures::random_network(P, 0.4, seed * 7);
            SCOPED_TRACE("P=" + std::to_string(P) + " J=" + std::to_string(J) + " c=" + std::to_string(c) +
                         " eta=" + (eta ? std::to_string(*eta) : "inf") +
                         " lambda=" + (lambda ? std::to_string(*lambda) : "inf"));
            expect_matches_oracle(scores, space, make_hp(eta, lambda), prior, 1e-10);
          }
}

TEST(Engine, PriorOutsideRestrictedSpace) {
  // prior parent sets larger than c: the finite-eta prior still ranks sets by distance
  const ParentSpace space(4, 1);
  const auto scores = fixtures::random_scores(2, space, 3);
  const Network prior = Network::complete(4);
  for (auto hp : {make_hp(1.0, 2.0), make_hp(0.5, std::nullopt)}) expect_matches_oracle(scores, space, hp, prior, 1e-10);
}

TEST(Oracle, HandComputedTwoSetPosterior) {
  // P = 1, c = 1: sets {} and {0}. J = 1, eta = 1, lambda = 1, prior {}.
  const ParentSpace space(1, 1);
  ScoreTable scores(1, 1, 2);
  scores.at(0, 0, 0) = 0.0;
  scores.at(0, 0, 1) = 2.0;
  Network prior(1);
  const auto hp = make_hp(1.0, 1.0);
  // mass(G, H) = exp(-d(G, {}) + s(H) - d(H, G) - log(1 + e^-1)), Z identical for both G
  const double m00 = 1.0, m01 = std::exp(2.0 - 1.0), m10 = std::exp(-1.0 - 1.0), m11 = std::exp(-1.0 + 2.0);
  const double total = m00 + m01 + m10 + m11;
  const auto ref = oracle::brute_force_marginals(scores, space, hp, prior, 0);
  EXPECT_NEAR(static_cast<double>(ref.latent[0]), (m10 + m11) / total, 1e-15);
  EXPECT_NEAR(static_cast<double>(ref.individual[0][0]), (m01 + m11) / total, 1e-15);
  const auto post = JointEngine(space, hp).infer(scores, prior);
  EXPECT_NEAR(post.latent(0, 0), (m10 + m11) / total, 1e-15);
  EXPECT_NEAR(post.individual[0](0, 0), (m01 + m11) / total, 1e-15);
}

TEST(Oracle, UniformScoresAndFlatPriorsGiveSetFractions) {
  const ParentSpace space(4, 2);
  const ScoreTable flat(2, 4, space.size());
  const auto ref = oracle::brute_force_marginals(flat, space, make_hp(0.0, 0.0), Network(4), 1);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(static_cast<double>(ref.latent[i]), 4.0 / 11.0, 1e-15);
}

TEST(Oracle, GuardRejectsHugeEnumerations) {
  const ParentSpace space(8, 3);  // M = 93
  const ScoreTable flat(4, 8, space.size());
  EXPECT_THROW(oracle::brute_force_marginals(flat, space, make_hp(1.0, 1.0), Network(8), 0), TooLarge);
}

TEST(Phase1, InfiniteLambdaIsTheScoreTable) {
  const ParentSpace space(3, 2);
  const auto scores = fixtures::random_scores(2, space, 5);
  const auto cache = phase1(scores, space, make_hp(1.0, std::nullopt));
  for (int p = 0; p < 3; ++p)
    for (int j = 0; j < 2; ++j)
      for (std::size_t g = 0; g < space.size(); ++g) EXPECT_EQ(cache.phase1_row(p, j)[g], scores.at(j, p, g));
}

TEST(Phase1, ZeroLambdaIsConstantOverLatentSets) {
  const ParentSpace space(3, 2);
  const auto scores = fixtures::random_scores(2, space, 6);
  const auto cache = phase1(scores, space, make_hp(1.0, 0.0));
  for (int p = 0; p < 3; ++p)
    for (int j = 0; j < 2; ++j)
      for (std::size_t g = 1; g < space.size(); ++g)
        EXPECT_NEAR(cache.phase1_row(p, j)[g], cache.phase1_row(p, j)[0], 1e-13);
}

TEST(Phase1, MatchesExtendedPrecisionSummation) {
  const ParentSpace space(3, 1);
  const auto scores = fixtures::random_scores(2, space, 7);
  const double lambda = 1.7;
  const auto cache = phase1(scores, space, make_hp(1.0, lambda));
  for (int p = 0; p < 3; ++p)
    for (int j = 0; j < 2; ++j)
      for (std::size_t g = 0; g < space.size(); ++g) {
        long double num = 0.0L, z = 0.0L;
        for (std::size_t h = 0; h < space.size(); ++h) {
          const long double k = std::exp(-static_cast<long double>(lambda) * shd(space[g], space[h]));
          num += k * std::exp(static_cast<long double>(scores.at(j, p, h)));
          z += k;
        }
        EXPECT_NEAR(cache.phase1_row(p, j)[g], static_cast<double>(std::log(num / z)), 1e-12);
      }
}

TEST(Phase2, PosteriorsSumToOne) {
  const ParentSpace space(5, 3);
  const auto scores = fixtures::random_scores(3, space, 8, 10.0);
  PhaseCache cache;
  JointEngine(space, make_hp(1.0, 4.0)).infer(scores, fixtures::random_network(5, 0.3, 1), &cache);
  for (int p = 0; p < 5; ++p)
    for (int j = 0; j < 3; ++j) {
      const auto row = cache.phase2_row(p, j);
      double s = 0.0;
      for (double v : row) s += std::exp(v);
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
}

TEST(Limits, InfiniteEtaPinsLatentToPrior) {
  const ParentSpace space(4, 2);
  const auto scores = fixtures::random_scores(2, space, 9);
  const auto prior = fixtures::random_network(4, 0.3, 2);
  const auto post = JointEngine(space, make_hp(std::nullopt, 2.0)).infer(scores, prior);
  EXPECT_EQ(post.latent, detail::indicator(prior));

  // individuals factorize: a single-individual run gives the same matrix
  for (int j = 0; j < 2; ++j) {
    ScoreTable single(1, 4, space.size());
    for (int p = 0; p < 4; ++p)
      for (std::size_t s = 0; s < space.size(); ++s) single.at(0, p, s) = scores.at(j, p, s);
    EXPECT_EQ(JointEngine(space, make_hp(std::nullopt, 2.0)).infer(single, prior).individual[0], post.individual[j]);
  }
}

TEST(Limits, InfiniteLambdaCopiesLatent) {
  const ParentSpace space(4, 2);
  const auto scores = fixtures::random_scores(3, space, 10);
  const auto post = JointEngine(space, make_hp(1.0, std::nullopt)).infer(scores, fixtures::random_network(4, 0.3, 3));
  for (const auto& m : post.individual) EXPECT_EQ(m, post.latent);
  for (const auto& f : post.features) EXPECT_TRUE(f.isZero(0.0));
}

TEST(Limits, BothInfinitePinsEverything) {
  const ParentSpace space(3, 1);
  const auto prior = fixtures::random_network(3, 0.5, 4);
  const auto post =
      JointEngine(space, make_hp(std::nullopt, std::nullopt)).infer(fixtures::random_scores(2, space, 11), prior);
  EXPECT_EQ(post.latent, detail::indicator(prior));
  for (const auto& m : post.individual) EXPECT_EQ(m, post.latent);
}

TEST(Invariance, PermutingIndividuals) {
  const ParentSpace space(5, 2);
  const auto scores = fixtures::random_scores(4, space, 12);
  const auto prior = fixtures::random_network(5, 0.3, 5);
  const std::vector<int> perm = {2, 0, 3, 1};
  ScoreTable permuted(4, 5, space.size());
  for (int j = 0; j < 4; ++j)
    for (int p = 0; p < 5; ++p)
      for (std::size_t s = 0; s < space.size(); ++s) permuted.at(j, p, s) = scores.at(perm[j], p, s);
  const JointEngine engine(space, make_hp(1.0, 4.0));
  const auto a = engine.infer(scores, prior);
  const auto b = engine.infer(permuted, prior);
  EXPECT_LT((a.latent - b.latent).cwiseAbs().maxCoeff(), 1e-12);
  for (int j = 0; j < 4; ++j) EXPECT_LT((b.individual[j] - a.individual[perm[j]]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Invariance, ShiftingScoresOfOneCell) {
  const ParentSpace space(5, 3);
  auto scores = fixtures::random_scores(3, space, 13);
  const auto prior = fixtures::random_network(5, 0.3, 6);
  const JointEngine engine(space, make_hp(1.0, 4.0));
  const auto a = engine.infer(scores, prior);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> shift(-500.0, 500.0);
  for (int j = 0; j < 3; ++j)
    for (int p = 0; p < 5; ++p) {
      const double c = shift(rng);
      for (double& v : scores.row(j, p)) v += c;
    }
  const auto b = engine.infer(scores, prior);
  EXPECT_LT((a.latent - b.latent).cwiseAbs().maxCoeff(), 1e-12);
  for (int j = 0; j < 3; ++j) EXPECT_LT((a.individual[j] - b.individual[j]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Determinism, WorkerCountDoesNotChangeBits) {
  const ParentSpace space(6, 3);
  const auto scores = fixtures::random_scores(5, space, 14);
  const auto prior = fixtures::random_network(6, 0.3, 7);
  for (auto hp : {make_hp(1.0, 4.0), make_hp(std::nullopt, 4.0), make_hp(1.0, std::nullopt)}) {
    const auto a = JointEngine(space, hp, 1).infer(scores, prior);
    for (int w : {2, 3, 8}) {
      const auto b = JointEngine(space, hp, w).infer(scores, prior);
      EXPECT_EQ(a.latent, b.latent);
      for (int j = 0; j < 5; ++j) EXPECT_EQ(a.individual[j], b.individual[j]);
    }
  }
}

TEST(Monotonicity, StrongerEtaPullsLatentTowardPrior) {
  const ParentSpace space(5, 3);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto scores = fixtures::random_scores(3, space, 200 + seed);
    const auto prior = fixtures::random_network(5, 0.3, 300 + seed);
    int previous = std::numeric_limits<int>::max();
    for (double eta : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
      const auto post = JointEngine(space, make_hp(eta, 2.0)).infer(scores, prior);
      Network thresholded(5);
      for (int p = 0; p < 5; ++p)
        for (int i = 0; i < 5; ++i)
          if (post.latent(i, p) > 0.5) thresholded.add_edge(i, p);
      const int d = shd_network(thresholded, prior);
      EXPECT_LE(d, previous) << "seed " << seed << " eta " << eta;
      previous = d;
    }
  }
}

TEST(Posterior, EntriesAreProbabilitiesAndFeaturesAreDifferences) {
  const ParentSpace space(5, 2);
  const auto post = JointEngine(space, make_hp(1.0, 4.0))
                        .infer(fixtures::random_scores(3, space, 15), fixtures::random_network(5, 0.3, 8));
  EXPECT_GE(post.latent.minCoeff(), 0.0);
  EXPECT_LE(post.latent.maxCoeff(), 1.0 + 1e-12);
  for (int j = 0; j < 3; ++j) {
    EXPECT_GE(post.individual[j].minCoeff(), 0.0);
    EXPECT_LE(post.individual[j].maxCoeff(), 1.0 + 1e-12);
    EXPECT_EQ(post.features[j], (post.individual[j] - post.latent).cwiseAbs());
  }
}

TEST(Features, Examples) {
  EdgePosterior post;
  post.latent = Eigen::MatrixXd::Constant(2, 2, 0.9);
  post.individual = {post.latent, Eigen::MatrixXd::Constant(2, 2, 0.2)};
  const auto f = feature_statistics(post);
  EXPECT_TRUE(f[0].isZero(0.0));
  EXPECT_NEAR(f[1](0, 1), 0.7, 1e-15);
}

TEST(SumProduct, Examples) {
  const auto [l1, r1] = sum_product_identity_check({{0.5, 1.5, 2.0}});
  EXPECT_EQ(l1, 4.0);
  EXPECT_EQ(r1, 4.0);

  const auto [l2, r2] = sum_product_identity_check({std::vector<double>(2, 1.0), std::vector<double>(3, 1.0),
                                                    std::vector<double>(4, 1.0)});
  EXPECT_EQ(l2, 24.0);
  EXPECT_EQ(r2, 24.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<std::vector<double>> f(3, std::vector<double>(4));
  for (auto& v : f)
    for (auto& x : v) x = u(rng);
  const auto [l3, r3] = sum_product_identity_check(f);
  EXPECT_NEAR(l3, r3, 1e-12 * r3);
}

TEST(GibbsKernel, UnderflowRowsFallBackToExactSums) {
  const ParentSpace space(6, 3);
  for (double tau : {0.0, 3.0, 400.0}) {
    const GibbsKernel k(space, tau);
    std::mt19937_64 rng(static_cast<std::uint64_t>(tau) + 1);
    std::normal_distribution<double> z(0.0, 300.0);
    std::vector<double> v(space.size()), out(space.size());
    for (auto& x : v) x = z(rng);
    k.apply(v, out);
    for (std::size_t g = 0; g < space.size(); ++g) {
      long double top = -INFINITY;
      for (std::size_t h = 0; h < space.size(); ++h) top = std::max(top, (long double)v[h] - tau * shd(space[g], space[h]));
      long double s = 0.0L;
      for (std::size_t h = 0; h < space.size(); ++h)
        s += std::exp((long double)v[h] - tau * shd(space[g], space[h]) - top);
      EXPECT_NEAR(out[g], static_cast<double>(top + std::log(s)), 1e-9 * std::max(1.0L, std::abs(top)));
      EXPECT_TRUE(std::isfinite(out[g]));
    }
  }
}

TEST(Engine, LargeLambdaStaysFinite) {
  const ParentSpace space(4, 2);
  const auto scores = fixtures::random_scores(2, space, 16, 50.0);
  const auto prior = fixtures::random_network(4, 0.3, 9);
  expect_matches_oracle(scores, space, make_hp(30.0, 200.0), prior, 1e-9);
}

TEST(Engine, RejectsBadInputs) {
  const ParentSpace space(3, 1);
  auto scores = fixtures::random_scores(1, space, 17);
  const JointEngine engine(space, make_hp(1.0, 1.0));
  EXPECT_THROW(engine.infer(scores, Network(4)), InvalidArgument);
  EXPECT_THROW(engine.infer(fixtures::random_scores(1, ParentSpace(3, 2), 1), Network(3)), InvalidArgument);
  scores.at(0, 1, 2) = std::nan("");
  EXPECT_THROW(engine.infer(scores, Network(3)), NumericalDegeneracy);
  EXPECT_THROW(Strength::finite(-1.0), InvalidArgument);
}
