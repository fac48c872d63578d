#pragma once

// Tabular policies over a finite catalog. A score table holds
// s(x, y) = kappa * log(pi(y|x) / pi_ref(y|x)) per prompt, fixed to per-prompt
// mean zero; the policy is pi_ref * exp(s / kappa), normalized.

#include <json.hpp>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hetpref/rewards.hpp"

namespace hetpref {

inline constexpr double kDefaultKappa = 0.1;

/// Per-prompt probability vectors of a policy.
using PolicyProbs = std::vector<Vector>;

class ReferencePolicy {
 public:
  explicit ReferencePolicy(std::vector<Vector> probs);
  static ReferencePolicy uniform(const Catalog& catalog);

  const Vector& probs(std::size_t prompt) const;
  std::size_t num_prompts() const { return probs_.size(); }

 private:
  std::vector<Vector> probs_;
};

class ScoreTable {
 public:
  /// Takes raw per-prompt scores and shifts each prompt to mean zero.
  ScoreTable(std::vector<Vector> scores, double kappa);
  /// All-zero table shaped like the catalog (the reference policy itself).
  static ScoreTable zeros(const Catalog& catalog, double kappa);

  double kappa() const { return kappa_; }
  std::size_t num_prompts() const { return scores_.size(); }
  const Vector& scores(std::size_t prompt) const;
  double score(std::size_t prompt, std::size_t response) const;
  const std::vector<Vector>& all_scores() const { return scores_; }

 private:
  std::vector<Vector> scores_;
  double kappa_;
};

/// Shifts v to mean zero in place.
template <typename Derived>
void center(Eigen::MatrixBase<Derived>& v) {
  if (v.size() > 0) v.array() -= v.mean();
}

struct ScoreEnsemble {
  std::vector<ScoreTable> tables;
  Vector eta;
  std::string catalog_hash;

  std::size_t size() const { return tables.size(); }
  double kappa() const;
  /// Shared kappa, matching prompt shapes, eta on the simplex within 1e-12.
  void validate() const;
};

Vector policy_probs(const ScoreTable& table, const ReferencePolicy& ref, std::size_t prompt);
PolicyProbs policy_probs(const ScoreTable& table, const ReferencePolicy& ref);

/// Exact maximizer of E_pi[theta^T psi] - kappa KL(pi || ref): centered rewards.
ScoreTable optimal_table_for_type(const Catalog& catalog, const Vector& theta, double kappa);

/// Softmax of the scores over {winner} + rejected, evaluated at the winner.
double multi_item_pref_prob(const ScoreTable& table, std::size_t prompt, std::size_t winner,
                            std::span<const std::size_t> rejected);
double log_multi_item_pref_prob(const ScoreTable& table, std::size_t prompt, std::size_t winner,
                                std::span<const std::size_t> rejected);

/// s(x, winner) - s(x, loser).
double reward_margin(const ScoreTable& table, std::size_t prompt, std::size_t winner, std::size_t loser);

/// sum_x w(x) E_pi[kappa log(pi / ref)], exact.
double kl_to_ref(const ScoreTable& table, const ReferencePolicy& ref, const Vector& prompt_weights);
double kl_to_ref(const PolicyProbs& policy, const ReferencePolicy& ref, const Vector& prompt_weights, double kappa);

/// sum_k w_k policy_probs(table_k).
Vector mixture_policy_probs(const ScoreEnsemble& ensemble, const Vector& weights, const ReferencePolicy& ref,
                            std::size_t prompt);
PolicyProbs mixture_policy_probs(const ScoreEnsemble& ensemble, const Vector& weights, const ReferencePolicy& ref);

/// Uniform distribution over prompts.
Vector uniform_prompt_weights(const Catalog& catalog);

nlohmann::json table_to_json(const ScoreTable& table, const Catalog& catalog);
ScoreTable table_from_json(const nlohmann::json& doc, const Catalog& catalog, double kappa);

// {kappa, eta, catalog_hash, tables: [{prompt_id: {response_id: score}}]}
nlohmann::json ensemble_to_json(const ScoreEnsemble& ensemble, const Catalog& catalog);
/// Validates the gauge (per-prompt mean within 1e-9) and the simplex.
ScoreEnsemble ensemble_from_json(const nlohmann::json& doc, const Catalog& catalog);

}  // namespace hetpref
