#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "hetpref/error.hpp"
#include "hetpref/evaluate.hpp"

using namespace hetpref;
using namespace hetpref::testing;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Dataset records(const Catalog& cat, std::vector<PreferenceRecord> recs) {
  Dataset d;
  d.catalog_hash = cat.hash();
  AnnotatorData a;
  a.records = std::move(recs);
  d.annotators.push_back(a);
  return d;
}

}  // namespace

TEST(Margin, Examples) {
  const Catalog cat = make_line_catalog(3, 1.0);
  const ScoreTable t({vec({1, 0, -1})}, 0.1);
  EXPECT_NEAR(mean_reward_margin(t, records(cat, {{0, 0, 0, {2}}})), 2.0, 1e-15);
  EXPECT_NEAR(mean_reward_margin(t, records(cat, {{0, 0, 0, {2}}, {0, 0, 2, {1}}})), 0.5, 1e-15);
  EXPECT_EQ(accuracy(t, records(cat, {{0, 0, 0, {1}}})), 1.0);
  EXPECT_EQ(accuracy(t, records(cat, {{0, 0, 1, {0}}})), 0.0);
  const ScoreTable flat = ScoreTable::zeros(cat, 0.1);
  EXPECT_EQ(accuracy(flat, records(cat, {{0, 0, 1, {0}}})), 0.5);
  EXPECT_THROW(accuracy(t, records(cat, {{0, 0, 0, {1, 2}}})), InvalidRecordError);
  EXPECT_THROW(mean_reward_margin(t, Dataset{}), InputError);

  ScoreEnsemble e{{t, ScoreTable({vec({-1, 0, 1})}, 0.1)}, vec({0.5, 0.5}), cat.hash()};
  EXPECT_NEAR(max_mean_reward_margin(e, records(cat, {{0, 0, 2, {0}}})), 2.0, 1e-15);
}

TEST(Accuracy, MonteCarloMatchesChoiceProbability) {
  // reward gap ln 3: the true type prefers response 0 with probability 3/4
  Matrix f(2, 1);
  f << std::log(3.0), 0;
  const Catalog cat = catalog_of({f});
  Population pop;
  pop.types = {{0, vec({1}), 1.0}};
  const Dataset d = simulate_dataset(cat, pop, 10000, 1, 2, 17);
  const double acc = accuracy(optimal_table_for_type(cat, vec({1}), 0.1), d);
  EXPECT_NEAR(acc, 0.75, 3.0 * std::sqrt(0.75 * 0.25 / 10000));
}

TEST(MaxRegret, IsTheLargestRegret) {
  const Catalog cat = make_line_catalog(4, 1.0);
  ScoreEnsemble e{{optimal_table_for_type(cat, vec({1}), 0.1), optimal_table_for_type(cat, vec({-3}), 0.1)},
                  vec({0.5, 0.5}), cat.hash()};
  const ReferencePolicy ref = ReferencePolicy::uniform(cat);
  const PolicyProbs pi = policy_probs(e.tables[0], ref);
  const Vector rho = uniform_prompt_weights(cat);
  EXPECT_EQ(max_regret(pi, e, ref, rho), regrets_of_policy(pi, e, ref, rho).maxCoeff());
  EXPECT_NEAR(max_regret(pi, e, ref, rho), regret_of_policy(pi, e, ref, rho, 1), 1e-15);
}

TEST(VanillaDpo, EqualsSingleClusterEm) {
  const Catalog cat = make_line_catalog(5, 1.0, 2);
  Population pop;
  pop.types = {{0, vec({1}), 0.5}, {1, vec({-0.3}), 0.5}};
  const Dataset d = simulate_dataset(cat, pop, 300, 3, 2, 2);
  const ScoreTable v = run_vanilla_dpo(d, cat, 0.1);
  EmConfig cfg;
  cfg.K = 1;
  const EmState s = run_em(d, cat, cfg);
  const auto direct = m_step_policy(d, cat, Matrix::Ones(300, 1), 0.1);
  for (std::size_t p = 0; p < 2; ++p) {
    EXPECT_EQ(v.scores(p), s.ensemble.tables[0].scores(p));
    EXPECT_LE((v.scores(p) - direct[0].scores(p)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(ClusterDpo, SeparatedTypes) {
  Matrix f(4, 2);
  f << 4, 0, 3, 0, 0, 4, 0, 3;
  const Catalog cat = catalog_of({f});
  Population pop;
  pop.types = {{0, vec({2, -2}), 0.3}, {1, vec({-2, 2}), 0.7}};
  const Dataset d = simulate_dataset(cat, pop, 600, 10, 2, 5);
  const ScoreEnsemble e = run_cluster_dpo(d, cat, 2, 0.1, 1);
  ASSERT_EQ(e.size(), 2u);
  const std::size_t a = e.tables[0].score(0, 0) > e.tables[0].score(0, 2) ? 0 : 1;
  EXPECT_NEAR(e.eta[static_cast<Eigen::Index>(a)], 0.3, 0.05);
  EXPECT_GT(reward_margin(e.tables[a], 0, 0, 2), 0.0);
  EXPECT_LT(reward_margin(e.tables[1 - a], 0, 0, 2), 0.0);

  const ScoreEnsemble one = run_cluster_dpo(d, cat, 1, 0.1, 1);
  EXPECT_EQ(one.eta, vec({1}));
  EXPECT_LE((one.tables[0].scores(0) - run_vanilla_dpo(d, cat, 0.1).scores(0)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_THROW(run_cluster_dpo(d, cat, 0, 0.1, 1), ConfigError);
}

TEST(Metrics, EvaluateEnsembleAndCsv) {
  const Catalog cat = make_line_catalog(3, 1.0);
  const ScoreTable up({vec({1, 0, -1})}, 0.1), down({vec({-1, 0, 1})}, 0.1);
  ScoreEnsemble e{{up, down}, vec({0.5, 0.5}), cat.hash()};
  const std::vector<Dataset> groups = {records(cat, {{0, 0, 0, {2}}}), records(cat, {{0, 0, 2, {1}}})};
  const MethodMetrics m = evaluate_ensemble("mix", e, groups);
  EXPECT_EQ(m.margins, (std::vector<double>{2.0, 1.0}));
  EXPECT_EQ(m.accuracies, (std::vector<double>{1.0, 1.0}));
  const MethodMetrics v = evaluate_ensemble("vanilla", ScoreEnsemble{{up}, vec({1}), cat.hash()}, groups);
  const std::string csv = metrics_csv({m, v});
  EXPECT_EQ(csv,
            "block,method,group_1,group_2\n"
            "margin,mix,2,1\n"
            "margin,vanilla,2,-1\n"
            "accuracy,mix,1,1\n"
            "accuracy,vanilla,1,0\n");
}
