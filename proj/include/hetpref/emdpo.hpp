#pragma once

// EM over latent annotator types with tabular multi-item DPO M-steps.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hetpref/policy.hpp"
#include "hetpref/simulate.hpp"

namespace hetpref {

/// The dataset reduced to distinct comparison cells. A cell is
/// (prompt, winner, sorted rejected set); each annotator keeps a list of
/// (cell, count). Every likelihood below only touches cells.
struct CompiledData {
  struct Cell {
    std::size_t prompt = 0;
    std::vector<std::size_t> items;  // winner first
  };
  std::vector<Cell> cells;
  std::vector<std::vector<std::pair<std::size_t, double>>> annotator_cells;
  std::vector<std::vector<std::size_t>> cells_by_prompt;
  Vector weights;  // annotator multiplicities
  std::vector<long> annotator_ids;
  std::vector<std::size_t> prompt_sizes;

  std::size_t num_annotators() const { return annotator_cells.size(); }
};

CompiledData compile(const Dataset& dataset, const Catalog& catalog);

/// n x K posterior over types, plus each annotator's log marginal
/// likelihood log sum_k eta_k prod_j P_k(V_ij).
struct Responsibilities {
  Matrix gamma;
  Vector log_evidence;
};

struct MStepOptions {
  double tol = 1e-8;            // on the gradient norm
  std::size_t max_iters = 200;  // Newton iterations per prompt
  double ridge = 0.0;           // optional ridge / 2 * ||s||^2 penalty
  bool throw_on_cap = true;
  std::size_t dense_limit = 256;  // prompts with more responses use a sparse factorization
};

struct DpoReport {
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = true;
};

/// Maximizer of sum_i w_i sum_j log P(V_ij) - ridge/2 ||s||^2 over tabular
/// scores by damped Newton from `init`, per prompt. Throws ConvergenceError
/// at the iteration cap when options.throw_on_cap.
ScoreTable weighted_dpo(const CompiledData& data, const Vector& annotator_weights, const ScoreTable& init,
                        const MStepOptions& options, DpoReport* report = nullptr);

/// Objective of weighted_dpo at `table`.
double weighted_dpo_objective(const CompiledData& data, const Vector& annotator_weights, const ScoreTable& table,
                              double ridge);

Responsibilities e_step(const CompiledData& data, const ScoreEnsemble& ensemble);
Responsibilities e_step(const Dataset& dataset, const Catalog& catalog, const ScoreEnsemble& ensemble);

/// Weighted column means of gamma (plain means when all weights are 1).
Vector m_step_eta(const Matrix& gamma, const Vector& annotator_weights);
Vector m_step_eta(const Matrix& gamma);

/// One weighted DPO per type with weights gamma(:, k), warm-started from
/// `init`. A type whose column is exactly zero keeps its table (warning).
std::vector<ScoreTable> m_step_policy(const CompiledData& data, const Matrix& gamma,
                                      const std::vector<ScoreTable>& init, const MStepOptions& options,
                                      std::vector<DpoReport>* reports = nullptr);
std::vector<ScoreTable> m_step_policy(const Dataset& dataset, const Catalog& catalog, const Matrix& gamma,
                                      double kappa, const MStepOptions& options = {});

double mixture_loglik(const CompiledData& data, const ScoreEnsemble& ensemble);
double mixture_loglik(const Dataset& dataset, const Catalog& catalog, const ScoreEnsemble& ensemble);

/// sum_k ridge/2 ||s_k||^2.
double ridge_penalty(const ScoreEnsemble& ensemble, double ridge);

enum class InitStrategy { kmeans_winner_features, random_dirichlet, from_true_labels };

InitStrategy parse_init_strategy(const std::string& name);
std::string to_string(InitStrategy strategy);

/// Initial gamma (n x K).
Matrix init_responsibilities(const Dataset& dataset, const Catalog& catalog, std::size_t K, InitStrategy strategy,
                             std::uint64_t seed);

struct EmConfig {
  std::size_t K = 2;
  std::size_t max_iters = 5;
  double tol = 1e-8;  // on the (penalized) log-likelihood improvement
  double kappa = kDefaultKappa;
  InitStrategy init = InitStrategy::kmeans_winner_features;
  std::size_t restarts = 1;
  std::uint64_t seed = 0;
  MStepOptions mstep;
};

struct EmTracePoint {
  std::size_t iteration = 0;
  double loglik = 0.0;
  double objective = 0.0;  // loglik - ridge penalty; equals loglik when ridge = 0
  Vector eta;
  std::vector<double> grad_norms;
};

struct EmState {
  ScoreEnsemble ensemble;
  Responsibilities gamma;  // the E-step that produced ensemble.eta
  double loglik = 0.0;
  double objective = 0.0;
  std::size_t iteration = 0;
  bool converged = false;
  std::vector<EmTracePoint> trace;
};

/// Algorithm loop from a given gamma0: tables from an M-step on gamma0, eta
/// uniform, then E-step / eta / policy updates until the objective improves
/// by less than tol or max_iters iterations ran.
EmState run_em(const CompiledData& data, const std::string& catalog_hash, const Matrix& gamma0,
               const EmConfig& config);

struct EmRestarts {
  EmState best;
  std::size_t best_index = 0;
  std::vector<std::vector<EmTracePoint>> traces;  // one per restart
};

/// config.restarts runs with seeds seed, seed + 1, ...; best by objective.
EmRestarts run_em_restarts(const Dataset& dataset, const Catalog& catalog, const EmConfig& config);

/// Convenience: best-of-restarts state.
EmState run_em(const Dataset& dataset, const Catalog& catalog, const EmConfig& config);

// iteration, loglik, objective, eta_1..eta_K, grad_1..grad_K
std::string em_trace_csv(const std::vector<EmTracePoint>& trace, std::size_t K);
// annotator, gamma_1..gamma_K
std::string gamma_csv(const Responsibilities& gamma, const std::vector<long>& annotator_ids);

}  // namespace hetpref
