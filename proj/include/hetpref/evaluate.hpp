#pragma once

// Evaluation metrics and the single-model / cluster-then-train baselines.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hetpref/aggregate.hpp"
#include "hetpref/emdpo.hpp"

namespace hetpref {

/// Mean reward margin of one table over the binary records of `eval`.
double mean_reward_margin(const ScoreTable& table, const Dataset& eval);

/// max over ensemble members of the mean reward margin on `eval`.
double max_mean_reward_margin(const ScoreEnsemble& ensemble, const Dataset& eval);

/// Fraction of binary records with a positive margin; zero margins count 1/2.
double accuracy(const ScoreTable& table, const Dataset& eval);

/// max_k R_k(policy) in score units.
double max_regret(const PolicyProbs& policy, const ScoreEnsemble& ensemble, const ReferencePolicy& ref,
                  const Vector& prompt_weights);

/// run_em with K = 1 (no restarts; initialization is irrelevant).
ScoreTable run_vanilla_dpo(const Dataset& dataset, const Catalog& catalog, double kappa,
                           const MStepOptions& mstep = {}, std::size_t max_iters = 5);

/// Hard k-means on mean winner features, then an independent DPO per
/// cluster; eta = cluster mass fractions.
ScoreEnsemble run_cluster_dpo(const Dataset& dataset, const Catalog& catalog, std::size_t K, double kappa,
                              std::uint64_t seed, const MStepOptions& mstep = {});

struct MethodMetrics {
  std::string method;
  std::vector<double> margins;     // per group
  std::vector<double> accuracies;  // per group; best member per group
};

/// Margins block then accuracies block: method, group_1..group_G.
std::string metrics_csv(const std::vector<MethodMetrics>& rows);

/// Per-group max-mean margin and accuracy (of the member with the best
/// margin on that group) for one ensemble.
MethodMetrics evaluate_ensemble(const std::string& method, const ScoreEnsemble& ensemble,
                                const std::vector<Dataset>& groups);

}  // namespace hetpref
