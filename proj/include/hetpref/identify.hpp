#pragma once

// Executable identifiability checks: binary flatness of the adversarial
// pair, ternary recovery by EM, and least-squares recovery of theta from
// binary logits over a full-rank comparison design.

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "hetpref/emdpo.hpp"
#include "hetpref/rewards.hpp"

namespace hetpref {

/// max |mixture_choice_prob - 1/2| of {theta, -theta} over every binary pair.
double verify_binary_flatness(const Catalog& catalog, const Vector& theta);

/// Choice distribution a model assigns to (prompt, choice set).
using ChoiceModel = std::function<Vector(std::size_t prompt, const std::vector<std::size_t>& set)>;

ChoiceModel population_model(const Catalog& catalog, const Population& population);
/// Mixture of softmaxes of the ensemble's scores with weights ensemble.eta.
ChoiceModel ensemble_model(const ScoreEnsemble& ensemble);

/// Expected per-record log-likelihood of `model` when records come from
/// `truth` with uniform prompts and uniform choice sets of the given size
/// (exact enumeration).
double expected_loglik(const Catalog& catalog, const Population& truth, const ChoiceModel& model,
                       std::size_t choice_set_size);

/// max - min expected per-record log-likelihood over the candidates.
double binary_likelihood_flatness(const Catalog& catalog, const Population& truth,
                                  const std::vector<Population>& candidates, std::size_t choice_set_size = 2);

/// Minimum-cost assignment; result[row] = column. Square cost matrices only.
std::vector<std::size_t> hungarian(const Matrix& cost);

struct RecoveryReport {
  std::size_t n = 0;
  std::size_t choice_set_size = 0;
  double eta_error = 0.0;             // max_k |eta_hat - eta|
  double margin_correlation = 0.0;    // pooled over types, best matching
  double min_type_correlation = 0.0;  // worst single type
  double loglik_true = 0.0;           // on the sample
  double loglik_fit = 0.0;
  double loglik_null = 0.0;           // point mass at theta = 0
  double expected_loglik_true = 0.0;  // per record, exact
  double expected_loglik_fit = 0.0;
  double expected_loglik_null = 0.0;
  std::vector<std::size_t> permutation;  // true type k -> fitted type
  Vector eta_hat;                        // reordered by permutation
  std::size_t em_iterations = 0;
};

/// Simulates n single-record annotators from the adversarial pair over the
/// catalog, runs EM with K = 2 and scores the fit against the truth.
RecoveryReport ternary_recovery_experiment(const Catalog& catalog, const Vector& theta, std::size_t n,
                                           std::uint64_t seed, const EmConfig& em_config,
                                           std::size_t choice_set_size = 3);

/// Scores an already fitted ensemble against a known population.
RecoveryReport score_recovery(const Catalog& catalog, const Population& truth, const Dataset& dataset,
                              const EmState& fit);

nlohmann::json recovery_to_json(const RecoveryReport& report);

/// Least-squares theta with U theta = logits; RankError if rank(U) < d.
Vector recover_theta_from_binary(const Matrix& design, const Vector& logits);

/// Rows psi(x, y1) - psi(x, y2) for the given pairs of one prompt.
Matrix comparison_design(const Catalog& catalog, std::size_t prompt,
                         const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

}  // namespace hetpref
