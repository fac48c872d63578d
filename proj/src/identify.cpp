#include "hetpref/identify.hpp"

#include <cmath>
#include <limits>

#include "hetpref/error.hpp"
#include "hetpref/simulate.hpp"

namespace hetpref {

double verify_binary_flatness(const Catalog& catalog, const Vector& theta) {
  const Population pair = make_adversarial_pair(theta);
  double worst = 0.0;
  for (std::size_t p = 0; p < catalog.num_prompts(); ++p) {
    const std::size_t n = catalog.num_responses(p);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        const std::size_t set[2] = {a, b};
        worst = std::max(worst, std::abs(mixture_choice_prob(catalog, pair, p, set, a) - 0.5));
      }
    }
  }
  return worst;
}

ChoiceModel population_model(const Catalog& catalog, const Population& population) {
  return [&catalog, population](std::size_t prompt, const std::vector<std::size_t>& set) {
    return exact_choice_weights(catalog, population, prompt, set);
  };
}

ChoiceModel ensemble_model(const ScoreEnsemble& ensemble) {
  return [ensemble](std::size_t prompt, const std::vector<std::size_t>& set) {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(set.size()));
    for (std::size_t k = 0; k < ensemble.size(); ++k) {
      const Vector& s = ensemble.tables[k].scores(prompt);
      Vector r(static_cast<Eigen::Index>(set.size()));
      for (std::size_t i = 0; i < set.size(); ++i) r[static_cast<Eigen::Index>(i)] = s[static_cast<Eigen::Index>(set[i])];
      out += ensemble.eta[static_cast<Eigen::Index>(k)] * softmax(r);
    }
    return out;
  };
}

double expected_loglik(const Catalog& catalog, const Population& truth, const ChoiceModel& model,
                       std::size_t choice_set_size) {
  double total = 0.0;
  for (std::size_t p = 0; p < catalog.num_prompts(); ++p) {
    const auto sets = subsets(catalog.num_responses(p), choice_set_size);
    if (sets.empty()) {
      throw ConfigError("expected_loglik: choice set larger than a prompt");
    }
    double acc = 0.0;
    for (const auto& set : sets) {
      const Vector q = exact_choice_weights(catalog, truth, p, set);
      const Vector m = model(p, set);
      acc += q.dot(m.array().log().matrix());
    }
    total += acc / static_cast<double>(sets.size());
  }
  return total / static_cast<double>(catalog.num_prompts());
}

double binary_likelihood_flatness(const Catalog& catalog, const Population& truth,
                                  const std::vector<Population>& candidates, std::size_t choice_set_size) {
  if (candidates.empty()) {
    throw InputError("binary_likelihood_flatness: no candidates");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : candidates) {
    const double ll = expected_loglik(catalog, truth, population_model(catalog, c), choice_set_size);
    lo = std::min(lo, ll);
    hi = std::max(hi, ll);
  }
  return hi - lo;
}

std::vector<std::size_t> hungarian(const Matrix& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  if (cost.rows() != cost.cols()) {
    throw InputError("hungarian: cost matrix must be square");
  }
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; way/match over columns
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> out(n);
  for (std::size_t j = 1; j <= n; ++j) out[match[j] - 1] = j - 1;
  return out;
}

namespace {

// All within-prompt pair margins (a < b) of a score vector per prompt.
Vector pair_margins(const std::vector<Vector>& scores) {
  std::vector<double> out;
  for (const auto& s : scores) {
    for (Eigen::Index a = 0; a < s.size(); ++a) {
      for (Eigen::Index b = a + 1; b < s.size(); ++b) out.push_back(s[a] - s[b]);
    }
  }
  return Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

}  // namespace

RecoveryReport score_recovery(const Catalog& catalog, const Population& truth, const Dataset& dataset,
                              const EmState& fit) {
  const std::size_t K = truth.size();
  if (fit.ensemble.size() != K) {
    throw InputError("score_recovery: fitted K differs from the true K");
  }
  std::vector<Vector> true_m, fit_m;
  for (const auto& t : truth.types) {
    std::vector<Vector> r;
    for (std::size_t p = 0; p < catalog.num_prompts(); ++p) r.push_back(catalog.rewards(p, t.theta));
    true_m.push_back(pair_margins(r));
  }
  for (const auto& t : fit.ensemble.tables) fit_m.push_back(pair_margins(t.all_scores()));
  Matrix cost(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = 0; b < K; ++b) {
      cost(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = (true_m[a] - fit_m[b]).cwiseAbs().sum();
    }
  }
  RecoveryReport rep;
  rep.n = dataset.annotators.size();
  rep.choice_set_size = dataset.choice_set_size;
  rep.permutation = hungarian(cost);
  const auto M = true_m.front().size();
  Vector pooled_true(M * static_cast<Eigen::Index>(K)), pooled_fit(M * static_cast<Eigen::Index>(K));
  rep.min_type_correlation = 1.0;
  rep.eta_hat.resize(static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t j = rep.permutation[k];
    pooled_true.segment(static_cast<Eigen::Index>(k) * M, M) = true_m[k];
    pooled_fit.segment(static_cast<Eigen::Index>(k) * M, M) = fit_m[j];
    rep.min_type_correlation = std::min(rep.min_type_correlation, pearson(true_m[k], fit_m[j]));
    rep.eta_hat[static_cast<Eigen::Index>(k)] = fit.ensemble.eta[static_cast<Eigen::Index>(j)];
    rep.eta_error = std::max(rep.eta_error, std::abs(rep.eta_hat[static_cast<Eigen::Index>(k)] - truth.types[k].eta));
  }
  rep.margin_correlation = pearson(pooled_true, pooled_fit);

  ScoreEnsemble true_ens;
  for (const auto& t : truth.types) true_ens.tables.push_back(optimal_table_for_type(catalog, t.theta, fit.ensemble.kappa()));
  true_ens.eta = truth.etas();
  ScoreEnsemble null_ens;
  null_ens.tables.push_back(ScoreTable::zeros(catalog, fit.ensemble.kappa()));
  null_ens.eta = Vector::Ones(1);
  const CompiledData data = compile(dataset, catalog);
  rep.loglik_true = mixture_loglik(data, true_ens);
  rep.loglik_fit = mixture_loglik(data, fit.ensemble);
  rep.loglik_null = mixture_loglik(data, null_ens);
  rep.expected_loglik_true = expected_loglik(catalog, truth, ensemble_model(true_ens), dataset.choice_set_size);
  rep.expected_loglik_fit = expected_loglik(catalog, truth, ensemble_model(fit.ensemble), dataset.choice_set_size);
  rep.expected_loglik_null = -std::log(static_cast<double>(dataset.choice_set_size));
  rep.em_iterations = fit.iteration;
  return rep;
}

RecoveryReport ternary_recovery_experiment(const Catalog& catalog, const Vector& theta, std::size_t n,
                                           std::uint64_t seed, const EmConfig& em_config,
                                           std::size_t choice_set_size) {
  if (n < 1) {
    throw ConfigError("recovery experiment: n must be >= 1");
  }
  if (em_config.K != 2) {
    throw ConfigError("recovery experiment: EM must use K = 2");
  }
  const Population truth = make_adversarial_pair(theta);
  const Dataset data = simulate_dataset(catalog, truth, n, 1, choice_set_size, seed);
  const EmState fit = run_em(data, catalog, em_config);
  return score_recovery(catalog, truth, data, fit);
}

nlohmann::json recovery_to_json(const RecoveryReport& r) {
  return {{"n", r.n},
          {"choice_set_size", r.choice_set_size},
          {"eta_error", r.eta_error},
          {"margin_correlation", r.margin_correlation},
          {"min_type_correlation", r.min_type_correlation},
          {"loglik_true", r.loglik_true},
          {"loglik_fit", r.loglik_fit},
          {"loglik_null", r.loglik_null},
          {"expected_loglik_true", r.expected_loglik_true},
          {"expected_loglik_fit", r.expected_loglik_fit},
          {"expected_loglik_null", r.expected_loglik_null},
          {"permutation", r.permutation},
          {"eta_hat", std::vector<double>(r.eta_hat.data(), r.eta_hat.data() + r.eta_hat.size())},
          {"em_iterations", r.em_iterations}};
}

Vector recover_theta_from_binary(const Matrix& design, const Vector& logits) {
  if (design.rows() != logits.size()) {
    throw InputError("recover_theta: design has " + std::to_string(design.rows()) + " rows but " +
                     std::to_string(logits.size()) + " logits");
  }
  if (!design.allFinite() || !logits.allFinite()) {
    throw InputError("recover_theta: non-finite input");
  }
  const Eigen::ColPivHouseholderQR<Matrix> qr(design);
  const auto rank = qr.rank();
  if (rank < design.cols()) {
    throw RankError("recover_theta: comparison design has rank " + std::to_string(rank) + " < d = " +
                        std::to_string(design.cols()) + "; theta is not identified",
                    static_cast<long>(rank), static_cast<long>(design.cols()));
  }
  return qr.solve(logits);
}

Matrix comparison_design(const Catalog& catalog, std::size_t prompt,
                         const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  Matrix U(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(catalog.dim()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].first == pairs[i].second) {
      throw InvalidPairError("comparison_design: pair compares a response with itself");
    }
    U.row(static_cast<Eigen::Index>(i)) = catalog.features(prompt, pairs[i].first) - catalog.features(prompt, pairs[i].second);
  }
  return U;
}

}  // namespace hetpref
