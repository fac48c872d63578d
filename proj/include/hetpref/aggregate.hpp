#pragma once

// Min-max regret aggregation of a policy ensemble.
//
// Regrets come in two unit systems. regret_of_policy is in score units
// (kappa * log-ratio): R_k(pi) = E_{pi*_k}[s_k] - E_pi[s_k]. The game matrix R
// is in log-ratio units, R[k][k'] = R_{k-1}(pi*_{k'}) / kappa, with the null
// row 0 on top.

#include <cstddef>
#include <string>
#include <vector>

#include "hetpref/emdpo.hpp"
#include "hetpref/policy.hpp"

namespace hetpref {

/// Exact R_k(policy) in score units.
double regret_of_policy(const PolicyProbs& policy, const ScoreEnsemble& ensemble, const ReferencePolicy& ref,
                        const Vector& prompt_weights, std::size_t k);
/// R_k for every k.
Vector regrets_of_policy(const PolicyProbs& policy, const ScoreEnsemble& ensemble, const ReferencePolicy& ref,
                         const Vector& prompt_weights);

/// (K+1) x K; L[z][z'] = E_{x, y ~ pi*_{z'}} log(pi*_z / ref); row 0 zero.
Matrix discrepancy_matrix(const ScoreEnsemble& ensemble, const ReferencePolicy& ref, const Vector& prompt_weights);

/// R[k][k'] = L[k][k-1] - L[k][k'] for k >= 1 (type k-1's own column), row 0 zero.
Matrix regret_matrix(const Matrix& L);

struct GameTracePoint {
  std::size_t iteration = 0;
  Vector w;
  Vector p;
  double gap = 0.0;  // of the running averages
};

struct GameSolution {
  Vector w;  // averaged policy-mixture weights, length K
  Vector p;  // averaged adversary weights, length K + 1
  double value = 0.0;
  double gap = 0.0;
  std::vector<GameTracePoint> trace;
};

/// max_k (R w)_k.
double game_value(const Matrix& R, const Vector& w);
/// max(R w) - min(R^T p).
double duality_gap(const Matrix& R, const Vector& w, const Vector& p);

/// Optimistic Hedge for both players, averaged iterates. step <= 0 selects
/// 0.05 / max|R| (or 0.05 when R = 0).
GameSolution mmra_ae(const Matrix& R, std::size_t T, double step = 0.0, bool keep_trace = true);

Vector uniform_mixture(const ScoreEnsemble& ensemble);

struct LwOptions {
  std::size_t iters = 20;
  double step = 0.01;
  std::size_t inner_steps = 5;  // Newton iterations per weighted DPO call
  double ridge = 0.0;
  bool clamp = false;       // use [R_k]^+ in the weight update
  bool include_kl = false;  // add kappa KL(pi || ref) to R_k in the weight update
};

struct LwResult {
  ScoreTable table;
  std::vector<Vector> w_trace;       // w^t, t = 0..iters
  std::vector<Vector> regret_trace;  // R(pi^t), t = 1..iters, score units
};

/// Alternates weighted DPO (weights sum_k w_k gamma_ik), exact regrets and a
/// multiplicative-weights step w_k <- w_k exp(step R_k).
LwResult mmra_lw(const CompiledData& data, const ScoreEnsemble& ensemble, const Matrix& gamma,
                 const ReferencePolicy& ref, const Vector& prompt_weights, const LwOptions& options);

struct OriginalOptions {
  std::size_t iters = 2000;
  double policy_step = 0.0;  // <= 0 selects kappa / 2
  double mwu_step = 0.05;
  double kappa = 0.0;        // <= 0 uses the ensemble's kappa
  bool average = false;      // return the averaged score table instead of the last iterate
};

struct OriginalTracePoint {
  std::size_t iteration = 0;
  Vector w;
  Vector regrets;  // score units
  double kl = 0.0; // kappa KL
  double loss = 0.0;
};

struct OriginalResult {
  ScoreTable table;
  std::vector<OriginalTracePoint> trace;
};

/// Gradient descent on a free score table against
/// sum_k w_k ([R_k]^+ + kappa KL) with MWU on w, all expectations exact.
/// Throws StepSizeError when the loss exceeds 10x its initial value.
OriginalResult mmra_original(const ScoreEnsemble& ensemble, const ReferencePolicy& ref, const Vector& prompt_weights,
                             const OriginalOptions& options);

// iteration, w_1..w_K, p_0..p_K, gap
std::string game_csv(const GameSolution& solution);
// header row z, then regret_1..regret_K per row
std::string regret_matrix_csv(const Matrix& R);

}  // namespace hetpref
