#include "hetpref/evaluate.hpp"

#include "hetpref/error.hpp"
#include "hetpref/io.hpp"
#include "hetpref/kmeans.hpp"
#include "hetpref/rng.hpp"

namespace hetpref {

namespace {

template <typename Fn>
double mean_over_binary(const Dataset& eval, Fn&& fn) {
  double total = 0.0, mass = 0.0;
  for (const auto& a : eval.annotators) {
    for (const auto& r : a.records) {
      if (r.rejected.size() != 1) {
        throw InvalidRecordError("evaluation records must be binary (one rejected response)");
      }
      total += a.weight * fn(r);
      mass += a.weight;
    }
  }
  if (mass == 0.0) {
    throw InputError("evaluation dataset is empty");
  }
  return total / mass;
}

}  // namespace

double mean_reward_margin(const ScoreTable& table, const Dataset& eval) {
  return mean_over_binary(eval, [&](const PreferenceRecord& r) {
    return reward_margin(table, r.prompt, r.winner, r.rejected[0]);
  });
}

double max_mean_reward_margin(const ScoreEnsemble& ensemble, const Dataset& eval) {
  if (ensemble.tables.empty()) {
    throw InputError("max_mean_reward_margin: empty ensemble");
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& t : ensemble.tables) best = std::max(best, mean_reward_margin(t, eval));
  return best;
}

double accuracy(const ScoreTable& table, const Dataset& eval) {
  return mean_over_binary(eval, [&](const PreferenceRecord& r) {
    const double m = reward_margin(table, r.prompt, r.winner, r.rejected[0]);
    return m > 0.0 ? 1.0 : (m == 0.0 ? 0.5 : 0.0);
  });
}

double max_regret(const PolicyProbs& policy, const ScoreEnsemble& ensemble, const ReferencePolicy& ref,
                  const Vector& prompt_weights) {
  return regrets_of_policy(policy, ensemble, ref, prompt_weights).maxCoeff();
}

ScoreTable run_vanilla_dpo(const Dataset& dataset, const Catalog& catalog, double kappa, const MStepOptions& mstep,
                           std::size_t max_iters) {
  EmConfig cfg;
  cfg.K = 1;
  cfg.kappa = kappa;
  cfg.mstep = mstep;
  cfg.max_iters = max_iters;
  return run_em(dataset, catalog, cfg).ensemble.tables.front();
}

ScoreEnsemble run_cluster_dpo(const Dataset& dataset, const Catalog& catalog, std::size_t K, double kappa,
                              std::uint64_t seed, const MStepOptions& mstep) {
  check_catalog_hash(dataset, catalog);
  if (K < 1) {
    throw ConfigError("cluster DPO: K must be >= 1");
  }
  const CompiledData data = compile(dataset, catalog);
  const auto n = static_cast<Eigen::Index>(dataset.annotators.size());
  std::vector<std::size_t> labels(static_cast<std::size_t>(n), 0);
  if (K > 1) {
    Matrix X = Matrix::Zero(n, static_cast<Eigen::Index>(catalog.dim()));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& a = dataset.annotators[static_cast<std::size_t>(i)];
      for (const auto& r : a.records) X.row(i) += catalog.features(r.prompt, r.winner);
      X.row(i) /= static_cast<double>(a.records.size());
    }
    Rng rng(seed);
    labels = kmeans(X, data.weights, K, rng, 50).labels;
  }
  Matrix gamma = Matrix::Zero(n, static_cast<Eigen::Index>(K));
  for (Eigen::Index i = 0; i < n; ++i) gamma(i, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])) = 1.0;
  std::vector<ScoreTable> init(K, ScoreTable::zeros(catalog, kappa));
  ScoreEnsemble out;
  out.tables = m_step_policy(data, gamma, init, mstep);
  out.eta = m_step_eta(gamma, data.weights);
  out.catalog_hash = catalog.hash();
  return out;
}

MethodMetrics evaluate_ensemble(const std::string& method, const ScoreEnsemble& ensemble,
                                const std::vector<Dataset>& groups) {
  MethodMetrics out{method, {}, {}};
  for (const auto& g : groups) {
    std::size_t best = 0;
    double best_margin = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < ensemble.size(); ++k) {
      const double m = mean_reward_margin(ensemble.tables[k], g);
      if (m > best_margin) {
        best_margin = m;
        best = k;
      }
    }
    out.margins.push_back(best_margin);
    out.accuracies.push_back(accuracy(ensemble.tables[best], g));
  }
  return out;
}

std::string metrics_csv(const std::vector<MethodMetrics>& rows) {
  const std::size_t G = rows.empty() ? 0 : rows.front().margins.size();
  std::vector<std::string> header = {"block", "method"};
  for (std::size_t g = 1; g <= G; ++g) header.push_back("group_" + std::to_string(g));
  CsvWriter csv(header);
  for (const char* block : {"margin", "accuracy"}) {
    for (const auto& r : rows) {
      const auto& vals = std::string(block) == "margin" ? r.margins : r.accuracies;
      if (vals.size() != G) {
        throw InputError("metrics_csv: rows disagree on the group count");
      }
      csv.field(std::string_view(block)).field(std::string_view(r.method));
      for (double v : vals) csv.field(v);
      csv.end_row();
    }
  }
  return csv.str();
}

}  // namespace hetpref
