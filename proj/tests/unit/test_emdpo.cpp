#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "hetpref/emdpo.hpp"
#include "hetpref/error.hpp"
#include "hetpref/log.hpp"

using namespace hetpref;
using namespace hetpref::testing;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// one annotator, one binary record: response 0 beats response 1
Dataset single_record(const Catalog& cat) {
  Dataset d;
  d.catalog_hash = cat.hash();
  AnnotatorData a;
  a.records.push_back({0, 0, 0, {1}});
  d.annotators.push_back(a);
  d.n = d.m = 1;
  d.choice_set_size = 2;
  return d;
}

Catalog two_responses() {
  Matrix f(2, 1);
  f << 1, 0;
  return catalog_of({f});
}

}  // namespace

TEST(Compile, MergesIdenticalCells) {
  const Catalog cat = make_line_catalog(4, 1.0);
  Dataset d;
  d.catalog_hash = cat.hash();
  AnnotatorData a;
  a.records = {{0, 0, 1, {2, 3}}, {0, 0, 1, {3, 2}}, {0, 0, 2, {1}}};
  d.annotators.push_back(a);
  const CompiledData c = compile(d, cat);
  EXPECT_EQ(c.cells.size(), 2u);
  ASSERT_EQ(c.annotator_cells[0].size(), 2u);
  double total = 0.0;
  for (const auto& [cell, cnt] : c.annotator_cells[0]) total += cnt;
  EXPECT_EQ(total, 3.0);
}

TEST(EStep, SingleTypeIsCertain) {
  const Catalog cat = make_line_catalog(4, 1.0);
  Population pop;
  pop.types = {{0, vec({1}), 1.0}};
  const Dataset d = simulate_dataset(cat, pop, 20, 3, 2, 1);
  ScoreEnsemble e{{optimal_table_for_type(cat, vec({0.3}), 0.1)}, vec({1}), cat.hash()};
  const Responsibilities r = e_step(d, cat, e);
  EXPECT_TRUE(r.gamma.isOnes(0.0));
}

TEST(EStep, IdenticalTablesSplitEvenly) {
  const Catalog cat = make_line_catalog(4, 1.0);
  Population pop;
  pop.types = {{0, vec({1}), 1.0}};
  const Dataset d = simulate_dataset(cat, pop, 20, 3, 3, 1);
  const ScoreTable t = optimal_table_for_type(cat, vec({0.3}), 0.1);
  ScoreEnsemble e{{t, t}, vec({0.5, 0.5}), cat.hash()};
  const Responsibilities r = e_step(d, cat, e);
  EXPECT_LE((r.gamma.array() - 0.5).abs().maxCoeff(), 1e-15);
}

TEST(EStep, HandPosterior) {
  // P_1 = sigma(ln 3) = 0.75, P_2 = 1/2; uniform eta -> (0.6, 0.4)
  const Catalog cat = two_responses();
  ScoreEnsemble e{{ScoreTable({vec({std::log(3.0), 0})}, 0.1), ScoreTable({vec({0, 0})}, 0.1)}, vec({0.5, 0.5}),
                  cat.hash()};
  const Responsibilities r = e_step(single_record(cat), cat, e);
  EXPECT_NEAR(r.gamma(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(r.gamma(0, 1), 0.4, 1e-15);
}

TEST(EStep, LargeMStaysFinite) {
  // 2000 records per annotator would underflow a direct product
  const Catalog cat = make_line_catalog(4, 2.0);
  Population pop;
  pop.types = {{0, vec({1}), 0.5}, {1, vec({-1}), 0.5}};
  const Dataset d = simulate_dataset(cat, pop, 4, 2000, 2, 3);
  ScoreEnsemble e{{optimal_table_for_type(cat, vec({1}), 0.1), optimal_table_for_type(cat, vec({-1}), 0.1)},
                  vec({0.5, 0.5}), cat.hash()};
  const Responsibilities r = e_step(d, cat, e);
  EXPECT_TRUE(r.gamma.allFinite());
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(r.gamma.row(i).sum(), 1.0, 1e-12);
}

TEST(MStepEta, Examples) {
  Matrix g(2, 2);
  g << 1, 0, 0, 1;
  EXPECT_EQ(m_step_eta(g), vec({0.5, 0.5}));
  EXPECT_LE((m_step_eta(Matrix::Constant(5, 4, 0.25)) - Vector::Constant(4, 0.25)).cwiseAbs().maxCoeff(), 1e-15);
  Matrix h(3, 2);
  h << 1, 0, 1, 0, 0.5, 0.5;
  const Vector eta = m_step_eta(h);
  EXPECT_NEAR(eta[0], 0.8333, 1e-4);
  EXPECT_NEAR(eta[1], 0.1667, 1e-4);
  EXPECT_NEAR(eta[0], 2.5 / 3.0, 1e-15);
}

TEST(MStepPolicy, ZeroColumnKeepsTableAndWarns) {
  const Catalog cat = make_line_catalog(4, 1.0);
  Population pop;
  pop.types = {{0, vec({1}), 1.0}};
  const Dataset d = simulate_dataset(cat, pop, 50, 2, 2, 2);
  const CompiledData data = compile(d, cat);
  Matrix gamma = Matrix::Zero(50, 2);
  gamma.col(0).setOnes();
  const ScoreTable marker({vec({0.3, -0.1, 0.2, -0.4})}, 0.1);
  set_warnings_quiet(true);
  const std::size_t before = warning_count();
  const auto tables = m_step_policy(data, gamma, {marker, marker}, MStepOptions{});
  EXPECT_EQ(warning_count(), before + 1);
  set_warnings_quiet(false);
  EXPECT_EQ(tables[1].scores(0), marker.scores(0));
  EXPECT_NE(tables[0].scores(0), marker.scores(0));
}

TEST(MStepPolicy, InfiniteDataRecoversMargins) {
  const Catalog cat = make_line_catalog(5, 1.0, 2);
  const Vector theta = vec({1.3});
  Population pop;
  pop.types = {{0, theta, 1.0}};
  for (std::size_t cs : {2u, 3u}) {
    const Dataset d = expected_dataset(cat, pop, cs, 1000.0);
    const auto tables = m_step_policy(d, cat, Matrix::Ones(static_cast<Eigen::Index>(d.annotators.size()), 1), 1.0);
    for (std::size_t p = 0; p < 2; ++p) {
      for (std::size_t a = 0; a < 5; ++a) {
        for (std::size_t b = 0; b < 5; ++b) {
          EXPECT_NEAR(reward_margin(tables[0], p, a, b), theta.dot(cat.features(p, a) - cat.features(p, b)), 1e-4);
        }
      }
    }
  }
}

TEST(MStepPolicy, ScaleInvariant) {
  const Catalog cat = make_line_catalog(5, 1.0, 2);
  Population pop;
  pop.types = {{0, vec({1}), 0.5}, {1, vec({-0.5}), 0.5}};
  const Dataset d = simulate_dataset(cat, pop, 300, 2, 3, 5);
  std::mt19937_64 gen(1);
  Matrix gamma(300, 2);
  for (Eigen::Index i = 0; i < 300; ++i) gamma.row(i) = random_simplex(gen, 2).transpose();
  const auto a = m_step_policy(d, cat, gamma, 0.1);
  const auto b = m_step_policy(d, cat, 2.0 * gamma, 0.1);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t p = 0; p < 2; ++p) EXPECT_LE((a[k].scores(p) - b[k].scores(p)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(MStepPolicy, IterationCapRaisesConvergenceError) {
  const Catalog cat = make_line_catalog(6, 2.0);
  Population pop;
  pop.types = {{0, vec({1}), 1.0}};
  const Dataset d = simulate_dataset(cat, pop, 500, 1, 3, 5);
  MStepOptions opt;
  opt.max_iters = 1;
  try {
    m_step_policy(d, cat, Matrix::Ones(500, 1), 0.1, opt);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.gradient_norm(), 1e-8);
  }
}

TEST(MStepPolicy, GradientNormMeetsTolerance) {
  const Catalog cat = make_line_catalog(6, 1.0, 2);
  Population pop;
  pop.types = {{0, vec({0.8}), 1.0}};
  const Dataset d = simulate_dataset(cat, pop, 400, 2, 3, 6);
  const CompiledData data = compile(d, cat);
  std::vector<DpoReport> rep;
  m_step_policy(data, Matrix::Ones(400, 1), {ScoreTable::zeros(cat, 0.1)}, MStepOptions{}, &rep);
  EXPECT_TRUE(rep[0].converged);
  EXPECT_LE(rep[0].grad_norm, 1e-8);
}

TEST(MixtureLoglik, Examples) {
  const Catalog cat = two_responses();
  ScoreEnsemble zero{{ScoreTable::zeros(cat, 0.1)}, vec({1}), cat.hash()};
  EXPECT_NEAR(mixture_loglik(single_record(cat), cat, zero), std::log(0.5), 1e-15);

  const Catalog lc = make_line_catalog(5, 1.0, 2);
  Population pop;
  pop.types = {{0, vec({1}), 0.4}, {1, vec({-2}), 0.6}};
  const Dataset d = simulate_dataset(lc, pop, 100, 3, 3, 9);
  ScoreEnsemble e{{optimal_table_for_type(lc, vec({0.5}), 0.1), optimal_table_for_type(lc, vec({-1}), 0.1)},
                  vec({0.3, 0.7}), lc.hash()};
  ScoreEnsemble swapped{{e.tables[1], e.tables[0]}, vec({0.7, 0.3}), lc.hash()};
  const double ll = mixture_loglik(d, lc, e);
  EXPECT_NEAR(ll, mixture_loglik(d, lc, swapped), 1e-10);
  EXPECT_NEAR(ll, e_step(d, lc, e).log_evidence.sum(), 1e-10);
}

TEST(InitResponsibilities, Strategies) {
  const Catalog cat = make_line_catalog(5, 1.0);
  Population pop;
  pop.types = {{0, vec({2}), 0.5}, {1, vec({-2}), 0.5}};
  const Dataset d = simulate_dataset(cat, pop, 60, 2, 2, 1);
  const Matrix truth = init_responsibilities(d, cat, 2, InitStrategy::from_true_labels, 0);
  for (Eigen::Index i = 0; i < 60; ++i) {
    EXPECT_EQ(truth.row(i).sum(), 1.0);
    EXPECT_EQ(truth.row(i).maxCoeff(), 1.0);
  }
  EXPECT_TRUE(init_responsibilities(d, cat, 1, InitStrategy::kmeans_winner_features, 0).isOnes(0.0));
  const Matrix dir = init_responsibilities(d, cat, 3, InitStrategy::random_dirichlet, 4);
  for (Eigen::Index i = 0; i < 60; ++i) EXPECT_TRUE(on_simplex(dir.row(i).transpose(), 1e-12));
  EXPECT_THROW(parse_init_strategy("spectral"), ConfigError);
  EXPECT_EQ(parse_init_strategy("random_dirichlet"), InitStrategy::random_dirichlet);
}

TEST(InitResponsibilities, KMeansRecoversSeparatedClusters) {
  // two types that always pick responses loading on different traits
  Matrix f(4, 2);
  f << 4, 0, 3, 0, 0, 4, 0, 3;
  const Catalog cat = catalog_of({f});
  Population pop;
  pop.types = {{0, vec({10, -10}), 0.5}, {1, vec({-10, 10}), 0.5}};
  const Dataset d = simulate_dataset(cat, pop, 400, 10, 2, 12);
  const Matrix g = init_responsibilities(d, cat, 2, InitStrategy::kmeans_winner_features, 3);
  std::size_t agree = 0;
  for (Eigen::Index i = 0; i < 400; ++i) {
    Eigen::Index lab = 0;
    g.row(i).maxCoeff(&lab);
    EXPECT_NEAR(g(i, lab), 0.9, 1e-15);
    agree += lab == *d.annotators[static_cast<std::size_t>(i)].true_type;
  }
  EXPECT_GE(std::max(agree, 400 - agree), 380u);
}

TEST(RunEm, DefaultsMatchAlgorithm) {
  const EmConfig cfg;
  EXPECT_EQ(cfg.max_iters, 5u);
  EXPECT_EQ(cfg.tol, 1e-8);
  EXPECT_EQ(cfg.kappa, 0.1);
}

TEST(RunEm, TraceNonDecreasingAndEtaConsistent) {
  const Catalog cat = make_line_catalog(5, 1.5, 2);
  Population pop;
  pop.types = {{0, vec({1}), 0.5}, {1, vec({-1}), 0.5}};
  const Dataset d = simulate_dataset(cat, pop, 400, 4, 3, 21);
  EmConfig cfg;
  cfg.K = 2;
  cfg.max_iters = 30;
  const EmState s = run_em(d, cat, cfg);
  ASSERT_GE(s.trace.size(), 2u);
  EXPECT_EQ(s.trace.front().eta, vec({0.5, 0.5}));
  for (std::size_t t = 1; t < s.trace.size(); ++t) EXPECT_GE(s.trace[t].loglik - s.trace[t - 1].loglik, -1e-7);
  EXPECT_LE((s.ensemble.eta - m_step_eta(s.gamma.gamma)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(s.loglik, mixture_loglik(d, cat, s.ensemble), 1e-9);
}

TEST(RunEm, SingleTypeDataWithTwoClusters) {
  // population-level data from one type: the K = 2 fit must reproduce the
  // single type's choice distribution, whichever way it splits the mass
  const Catalog cat = make_line_catalog(5, 1.0, 2);
  const Vector theta = vec({1.5});
  Population pop;
  pop.types = {{0, theta, 1.0}};
  const Dataset d = expected_dataset(cat, pop, 3, 1000.0);
  EmConfig cfg;
  cfg.K = 2;
  cfg.max_iters = 300;
  cfg.init = InitStrategy::random_dirichlet;
  const EmState s = run_em(d, cat, cfg);
  for (std::size_t t = 1; t < s.trace.size(); ++t) EXPECT_GE(s.trace[t].loglik - s.trace[t - 1].loglik, -1e-7);
  double worst = 0.0;
  for (std::size_t p = 0; p < 2; ++p) {
    for (const auto& set : subsets(5, 3)) {
      for (std::size_t j = 0; j < 3; ++j) {
        std::vector<std::size_t> rejected;
        for (std::size_t r : set) {
          if (r != set[j]) rejected.push_back(r);
        }
        double fit = 0.0;
        for (std::size_t k = 0; k < 2; ++k) {
          fit += s.ensemble.eta[static_cast<Eigen::Index>(k)] *
                 multi_item_pref_prob(s.ensemble.tables[k], p, set[j], rejected);
        }
        worst = std::max(worst, std::abs(fit - choice_prob(cat, theta, p, set, set[j])));
      }
    }
  }
  EXPECT_LE(worst, 0.01) << "eta " << s.ensemble.eta.transpose();
}

TEST(RunEm, RestartsKeepOneTraceEachAndPickTheBest) {
  const Catalog cat = make_line_catalog(5, 1.5);
  Population pop;
  pop.types = {{0, vec({1}), 0.5}, {1, vec({-1}), 0.5}};
  const Dataset d = simulate_dataset(cat, pop, 300, 2, 3, 2);
  EmConfig cfg;
  cfg.K = 2;
  cfg.restarts = 3;
  cfg.init = InitStrategy::random_dirichlet;
  const EmRestarts r = run_em_restarts(d, cat, cfg);
  ASSERT_EQ(r.traces.size(), 3u);
  for (const auto& t : r.traces) EXPECT_LE(t.back().objective, r.best.objective);
  EXPECT_EQ(r.traces[r.best_index].back().objective, r.best.objective);
}

TEST(RunEm, PermutedInitPermutesOutput) {
  const Catalog cat = make_line_catalog(5, 1.5, 2);
  Population pop;
  pop.types = {{0, vec({1}), 0.3}, {1, vec({-1}), 0.3}, {2, vec({0.2}), 0.4}};
  const Dataset d = simulate_dataset(cat, pop, 300, 3, 3, 8);
  const CompiledData data = compile(d, cat);
  const Matrix g0 = init_responsibilities(d, cat, 3, InitStrategy::random_dirichlet, 5);
  Matrix g1(g0.rows(), 3);
  g1 << g0.col(2), g0.col(0), g0.col(1);
  EmConfig cfg;
  cfg.K = 3;
  cfg.max_iters = 10;
  const EmState a = run_em(data, cat.hash(), g0, cfg);
  const EmState b = run_em(data, cat.hash(), g1, cfg);
  const std::size_t map[3] = {1, 2, 0};  // column k of g0 is column map[k] of g1
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t p = 0; p < 2; ++p) {
      EXPECT_LE((a.ensemble.tables[k].scores(p) - b.ensemble.tables[map[k]].scores(p)).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(EmCsv, Shapes) {
  const Catalog cat = make_line_catalog(4, 1.0);
  Population pop;
  pop.types = {{0, vec({1}), 1.0}};
  const Dataset d = simulate_dataset(cat, pop, 10, 1, 2, 1);
  EmConfig cfg;
  cfg.K = 2;
  const EmState s = run_em(d, cat, cfg);
  const std::string trace = em_trace_csv(s.trace, 2);
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "iteration,loglik,objective,eta_1,eta_2,grad_norm_1,grad_norm_2");
  const std::string gamma = gamma_csv(s.gamma, compile(d, cat).annotator_ids);
  EXPECT_EQ(std::count(gamma.begin(), gamma.end(), '\n'), 11);
}
