#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "hetpref/error.hpp"
#include "hetpref/identify.hpp"
#include "hetpref/simulate.hpp"

using namespace hetpref;
using namespace hetpref::testing;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Population point_mass(const Vector& theta) {
  Population p;
  p.types = {{0, theta, 1.0}};
  return p;
}

}  // namespace

TEST(BinaryFlatness, AdversarialPairIsExactlyHalf) {
  std::mt19937_64 gen(1);
  for (int rep = 0; rep < 50; ++rep) {
    const Catalog cat = random_catalog(gen, 3, 2, 8, 4, 3.0);
    EXPECT_LE(verify_binary_flatness(cat, random_vector(gen, 4, 3.0)), 1e-12);
  }
}

TEST(BinaryFlatness, LikelihoodCannotTellPairFromNull) {
  const Catalog cat = make_line_catalog(6, 2.0, 2);
  const Population truth = make_adversarial_pair(vec({2}));
  const std::vector<Population> cands = {truth, point_mass(vec({0})), make_adversarial_pair(vec({0.5}))};
  EXPECT_LE(binary_likelihood_flatness(cat, truth, cands, 2), 1e-12);
  EXPECT_NEAR(expected_loglik(cat, truth, population_model(cat, truth), 2), std::log(0.5), 1e-12);
  // three-way choices separate them
  EXPECT_GT(binary_likelihood_flatness(cat, truth, cands, 3), 0.01);
}

TEST(ExpectedLoglik, TruthMaximizes) {
  std::mt19937_64 gen(3);
  const Catalog cat = random_catalog(gen, 2, 4, 5, 2, 1.5);
  Population truth;
  truth.types = {{0, vec({1, -1}), 0.4}, {1, vec({-0.5, 2}), 0.6}};
  const double best = expected_loglik(cat, truth, population_model(cat, truth), 3);
  for (int rep = 0; rep < 50; ++rep) {
    Population other = truth;
    other.types[0].theta += random_vector(gen, 2, 0.5);
    EXPECT_LE(expected_loglik(cat, truth, population_model(cat, other), 3), best + 1e-12);
  }
  EXPECT_THROW(expected_loglik(cat, truth, population_model(cat, truth), 6), ConfigError);
}

TEST(Hungarian, MatchesBruteForce) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0, 10);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 1 + rep % 5;
    Matrix c(n, n);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(gen);
    auto cost_of = [&](const std::vector<std::size_t>& perm) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += c(i, static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
      return s;
    };
    std::vector<std::size_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      best = std::min(best, cost_of(perm));
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto h = hungarian(c);
    std::vector<std::size_t> sorted = h;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < n; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], static_cast<std::size_t>(i));
    EXPECT_NEAR(cost_of(h), best, 1e-9);
  }
  EXPECT_THROW(hungarian(Matrix::Zero(2, 3)), InputError);
}

TEST(RecoverTheta, FullRankDesign) {
  std::mt19937_64 gen(7);
  for (int rep = 0; rep < 50; ++rep) {
    const Catalog cat = random_catalog(gen, 1, 4, 4, 3, 2.0);
    const Vector theta = random_vector(gen, 3, 2.0);
    const Matrix U = comparison_design(cat, 0, {{0, 1}, {1, 2}, {2, 3}});
    Vector logits(3);
    for (Eigen::Index i = 0; i < 3; ++i) {
      const double p = sigmoid(U.row(i).dot(theta));
      logits[i] = std::log(p / (1 - p));
    }
    EXPECT_LE((recover_theta_from_binary(U, logits) - theta).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(RecoverTheta, RankDeficientDesign) {
  // every response on one line through the origin
  Matrix f(4, 2);
  f << 1, 2, 2, 4, -1, -2, 0, 0;
  const Catalog cat = catalog_of({f});
  const Matrix U = comparison_design(cat, 0, {{0, 1}, {1, 2}, {2, 3}});
  try {
    recover_theta_from_binary(U, Vector::Zero(3));
    FAIL() << "expected RankError";
  } catch (const RankError& e) {
    EXPECT_EQ(e.rank(), 1);
    EXPECT_EQ(e.required(), 2);
  }
  EXPECT_THROW(recover_theta_from_binary(U, Vector::Zero(2)), InputError);
  EXPECT_THROW(comparison_design(cat, 0, {{1, 1}}), InvalidPairError);
}

TEST(ScoreRecovery, InvariantToFittedLabels) {
  const Catalog cat = make_line_catalog(5, 1.5, 2);
  Population truth;
  truth.types = {{0, vec({1}), 0.3}, {1, vec({-2}), 0.7}};
  const Dataset d = simulate_dataset(cat, truth, 200, 2, 3, 3);
  EmState fit{{{optimal_table_for_type(cat, vec({-1.8}), 0.1), optimal_table_for_type(cat, vec({0.9}), 0.1)},
               vec({0.65, 0.35}),
               cat.hash()},
              {},
              0,
              0,
              3,
              true,
              {}};
  const RecoveryReport a = score_recovery(cat, truth, d, fit);
  std::swap(fit.ensemble.tables[0], fit.ensemble.tables[1]);
  fit.ensemble.eta = vec({0.35, 0.65});
  const RecoveryReport b = score_recovery(cat, truth, d, fit);
  EXPECT_EQ(a.permutation, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(b.permutation, (std::vector<std::size_t>{0, 1}));
  EXPECT_NEAR(a.margin_correlation, b.margin_correlation, 1e-15);
  EXPECT_NEAR(a.margin_correlation, 1.0, 1e-12);  // margins are exact multiples
  EXPECT_NEAR(a.eta_error, 0.05, 1e-12);
  EXPECT_EQ(a.eta_hat, b.eta_hat);
  EXPECT_NEAR(a.loglik_fit, b.loglik_fit, 1e-10);
  EXPECT_NEAR(a.expected_loglik_null, -std::log(3.0), 1e-15);
  EXPECT_EQ(a.em_iterations, 3u);
}

TEST(TernaryRecovery, SmallRunAndValidation) {
  const Catalog cat = make_line_catalog(6, 2.0);
  EmConfig cfg;
  cfg.K = 3;
  EXPECT_THROW(ternary_recovery_experiment(cat, vec({1}), 100, 0, cfg), ConfigError);
  cfg.K = 2;
  const RecoveryReport r = ternary_recovery_experiment(cat, vec({1}), 500, 4, cfg);
  EXPECT_EQ(r.n, 500u);
  EXPECT_EQ(r.choice_set_size, 3u);
  EXPECT_GE(r.loglik_fit, r.loglik_null);
  const nlohmann::json j = recovery_to_json(r);
  EXPECT_TRUE(j.contains("margin_correlation"));
  EXPECT_EQ(j["permutation"].size(), 2u);
}
