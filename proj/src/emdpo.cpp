#include "hetpref/emdpo.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <map>

#include "hetpref/error.hpp"
#include "hetpref/io.hpp"
#include "hetpref/kmeans.hpp"
#include "hetpref/log.hpp"
#include "hetpref/parallel.hpp"
#include "hetpref/rng.hpp"

namespace hetpref {

CompiledData compile(const Dataset& dataset, const Catalog& catalog) {
  validate_dataset(dataset, catalog);
  CompiledData out;
  out.cells_by_prompt.resize(catalog.num_prompts());
  for (std::size_t p = 0; p < catalog.num_prompts(); ++p) out.prompt_sizes.push_back(catalog.num_responses(p));
  out.weights.resize(static_cast<Eigen::Index>(dataset.annotators.size()));
  std::map<std::vector<std::size_t>, std::size_t> index;
  std::vector<std::size_t> key;
  for (std::size_t i = 0; i < dataset.annotators.size(); ++i) {
    const AnnotatorData& a = dataset.annotators[i];
    out.weights[static_cast<Eigen::Index>(i)] = a.weight;
    out.annotator_ids.push_back(a.id);
    std::map<std::size_t, double> counts;
    for (const auto& r : a.records) {
      key.assign({r.prompt, r.winner});
      key.insert(key.end(), r.rejected.begin(), r.rejected.end());
      std::sort(key.begin() + 2, key.end());
      auto [it, fresh] = index.emplace(key, out.cells.size());
      if (fresh) {
        out.cells.push_back({r.prompt, std::vector<std::size_t>(key.begin() + 1, key.end())});
        out.cells_by_prompt[r.prompt].push_back(it->second);
      }
      counts[it->second] += 1.0;
    }
    out.annotator_cells.emplace_back(counts.begin(), counts.end());
  }
  return out;
}

namespace {

// Cell weights W_c = sum_i w_i count_ic.
Vector cell_weights(const CompiledData& data, const Vector& annotator_weights) {
  if (annotator_weights.size() != static_cast<Eigen::Index>(data.num_annotators())) {
    throw InputError("weighted DPO: one weight per annotator required");
  }
  Vector W = Vector::Zero(static_cast<Eigen::Index>(data.cells.size()));
  for (std::size_t i = 0; i < data.num_annotators(); ++i) {
    const double w = annotator_weights[static_cast<Eigen::Index>(i)];
    if (w == 0.0) continue;
    for (const auto& [c, cnt] : data.annotator_cells[i]) W[static_cast<Eigen::Index>(c)] += w * cnt;
  }
  return W;
}

double cell_logprob(const std::vector<std::size_t>& items, const Vector& s) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t y : items) mx = std::max(mx, s[static_cast<Eigen::Index>(y)]);
  double z = 0.0;
  for (std::size_t y : items) z += std::exp(s[static_cast<Eigen::Index>(y)] - mx);
  return s[static_cast<Eigen::Index>(items[0])] - mx - std::log(z);
}

double prompt_objective(const CompiledData& data, const std::vector<std::size_t>& cells, const Vector& W,
                        const Vector& s, double ridge) {
  double f = 0.0;
  for (std::size_t c : cells) {
    const double w = W[static_cast<Eigen::Index>(c)];
    if (w != 0.0) f += w * cell_logprob(data.cells[c].items, s);
  }
  return f - 0.5 * ridge * s.squaredNorm();
}

// Gradient and negated Hessian of the prompt objective. The Hessian goes
// either into `dense` or into `triplets`.
void prompt_derivatives(const CompiledData& data, const std::vector<std::size_t>& cells, const Vector& W,
                        const Vector& s, double ridge, Vector& g, Matrix* dense,
                        std::vector<Eigen::Triplet<double>>* triplets) {
  const Eigen::Index n = s.size();
  g = -ridge * s;
  if (dense) *dense = ridge * Matrix::Identity(n, n);
  if (triplets) {
    triplets->clear();
    for (Eigen::Index i = 0; i < n; ++i) triplets->emplace_back(i, i, ridge);
  }
  std::vector<double> p;
  for (std::size_t c : cells) {
    const double w = W[static_cast<Eigen::Index>(c)];
    if (w == 0.0) continue;
    const auto& items = data.cells[c].items;
    p.resize(items.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t y : items) mx = std::max(mx, s[static_cast<Eigen::Index>(y)]);
    double z = 0.0;
    for (std::size_t a = 0; a < items.size(); ++a) {
      p[a] = std::exp(s[static_cast<Eigen::Index>(items[a])] - mx);
      z += p[a];
    }
    for (double& v : p) v /= z;
    g[static_cast<Eigen::Index>(items[0])] += w;
    for (std::size_t a = 0; a < items.size(); ++a) {
      const auto ia = static_cast<Eigen::Index>(items[a]);
      g[ia] -= w * p[a];
      for (std::size_t b = 0; b < items.size(); ++b) {
        const auto ib = static_cast<Eigen::Index>(items[b]);
        const double h = w * ((a == b ? p[a] : 0.0) - p[a] * p[b]);
        if (dense) (*dense)(ia, ib) += h;
        if (triplets) triplets->emplace_back(ia, ib, h);
      }
    }
  }
}

struct PromptResult {
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

PromptResult solve_prompt(const CompiledData& data, const std::vector<std::size_t>& cells, const Vector& W, Vector& s,
                          const MStepOptions& opt) {
  const Eigen::Index n = s.size();
  const bool dense = static_cast<std::size_t>(n) <= opt.dense_limit;
  double mass = 0.0;
  for (std::size_t c : cells) mass += std::abs(W[static_cast<Eigen::Index>(c)]);
  Vector g(n);
  Matrix H;
  std::vector<Eigen::Triplet<double>> triplets;
  PromptResult res;
  for (std::size_t it = 0;; ++it) {
    prompt_derivatives(data, cells, W, s, opt.ridge, g, dense ? &H : nullptr, dense ? nullptr : &triplets);
    res.grad_norm = g.norm();
    res.iterations = it;
    if (res.grad_norm <= opt.tol) {
      res.converged = true;
      return res;
    }
    if (it >= opt.max_iters) {
      return res;
    }
    Vector d;
    if (dense) {
      const double scale = std::max(H.diagonal().maxCoeff(), 1e-300);
      H.diagonal().array() += 1e-10 * scale;
      // removes the constant-shift null direction when unpenalized
      if (opt.ridge == 0.0) H.array() += scale / static_cast<double>(n);
      d = H.ldlt().solve(g);
    } else {
      Eigen::SparseMatrix<double> Hs(n, n);
      Hs.setFromTriplets(triplets.begin(), triplets.end());
      double scale = 1e-300;
      for (Eigen::Index i = 0; i < n; ++i) scale = std::max(scale, Hs.coeff(i, i));
      for (Eigen::Index i = 0; i < n; ++i) Hs.coeffRef(i, i) += 1e-10 * scale;
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(Hs);
      if (solver.info() != Eigen::Success) {
        throw NumericalError("M-step: sparse factorization failed");
      }
      d = solver.solve(g);
    }
    if (!d.allFinite()) {
      throw NumericalError("M-step: non-finite Newton direction");
    }
    const double f0 = prompt_objective(data, cells, W, s, opt.ridge);
    const double slope = g.dot(d);
    // objective is a sum of many terms; allow for its rounding noise
    const double noise = 1e-14 * (std::abs(f0) + mass);
    double a = 1.0;
    Vector trial = s + d;
    while (prompt_objective(data, cells, W, trial, opt.ridge) < f0 + 1e-4 * a * slope - noise) {
      a *= 0.5;
      if (a < 1e-12) {
        // no ascent possible at working precision
        res.iterations = it + 1;
        return res;
      }
      trial = s + a * d;
    }
    s = trial;
    center(s);
  }
}

}  // namespace

double weighted_dpo_objective(const CompiledData& data, const Vector& annotator_weights, const ScoreTable& table,
                              double ridge) {
  const Vector W = cell_weights(data, annotator_weights);
  double f = 0.0;
  for (std::size_t p = 0; p < data.cells_by_prompt.size(); ++p) {
    f += prompt_objective(data, data.cells_by_prompt[p], W, table.scores(p), ridge);
  }
  return f;
}

ScoreTable weighted_dpo(const CompiledData& data, const Vector& annotator_weights, const ScoreTable& init,
                        const MStepOptions& options, DpoReport* report) {
  if (init.num_prompts() != data.prompt_sizes.size()) {
    throw InputError("weighted DPO: initial table does not match the catalog");
  }
  const Vector W = cell_weights(data, annotator_weights);
  std::vector<Vector> scores = init.all_scores();
  double sq = 0.0;
  std::size_t iters = 0;
  bool converged = true;
  for (std::size_t p = 0; p < scores.size(); ++p) {
    const PromptResult r = solve_prompt(data, data.cells_by_prompt[p], W, scores[p], options);
    sq += r.grad_norm * r.grad_norm;
    iters = std::max(iters, r.iterations);
    converged = converged && r.converged;
  }
  const double gn = std::sqrt(sq);
  if (report) *report = {gn, iters, converged};
  if (!converged && options.throw_on_cap) {
    throw ConvergenceError("M-step did not reach gradient norm " + format_double(options.tol) + " (final " +
                               format_double(gn) + ")",
                           gn);
  }
  return ScoreTable(std::move(scores), init.kappa());
}

namespace {

// log P_k(cell) for every cell and type.
Matrix cell_logprobs(const CompiledData& data, const ScoreEnsemble& ensemble) {
  const auto K = static_cast<Eigen::Index>(ensemble.size());
  Matrix out(static_cast<Eigen::Index>(data.cells.size()), K);
  for (std::size_t c = 0; c < data.cells.size(); ++c) {
    for (Eigen::Index k = 0; k < K; ++k) {
      out(static_cast<Eigen::Index>(c), k) =
          cell_logprob(data.cells[c].items, ensemble.tables[static_cast<std::size_t>(k)].scores(data.cells[c].prompt));
    }
  }
  return out;
}

void check_shapes(const CompiledData& data, const ScoreEnsemble& ensemble) {
  ensemble.validate();
  if (ensemble.tables.front().num_prompts() != data.prompt_sizes.size()) {
    throw InputError("ensemble does not match the dataset's catalog");
  }
}

}  // namespace

Responsibilities e_step(const CompiledData& data, const ScoreEnsemble& ensemble) {
  check_shapes(data, ensemble);
  const Matrix lp = cell_logprobs(data, ensemble);
  const auto K = static_cast<Eigen::Index>(ensemble.size());
  const auto n = static_cast<Eigen::Index>(data.num_annotators());
  const Vector log_eta = ensemble.eta.array().log();
  Responsibilities out{Matrix(n, K), Vector(n)};
  parallel_for(data.num_annotators(), [&](std::size_t i) {
    Vector row = log_eta;
    for (const auto& [c, cnt] : data.annotator_cells[i]) row += cnt * lp.row(static_cast<Eigen::Index>(c)).transpose();
    const double lse = log_sum_exp(row);
    if (!std::isfinite(lse)) {
      throw NumericalError("E-step: annotator " + std::to_string(data.annotator_ids[i]) + " has zero likelihood");
    }
    const auto ii = static_cast<Eigen::Index>(i);
    out.log_evidence[ii] = lse;
    out.gamma.row(ii) = (row.array() - lse).exp().transpose();
  }, 512);
  return out;
}

Responsibilities e_step(const Dataset& dataset, const Catalog& catalog, const ScoreEnsemble& ensemble) {
  return e_step(compile(dataset, catalog), ensemble);
}

Vector m_step_eta(const Matrix& gamma, const Vector& annotator_weights) {
  if (gamma.rows() == 0 || annotator_weights.size() != gamma.rows()) {
    throw InputError("m_step_eta: one weight per gamma row required");
  }
  Vector eta = gamma.transpose() * annotator_weights / annotator_weights.sum();
  eta /= eta.sum();
  return eta;
}

Vector m_step_eta(const Matrix& gamma) { return m_step_eta(gamma, Vector::Ones(gamma.rows())); }

std::vector<ScoreTable> m_step_policy(const CompiledData& data, const Matrix& gamma,
                                      const std::vector<ScoreTable>& init, const MStepOptions& options,
                                      std::vector<DpoReport>* reports) {
  if (gamma.rows() != static_cast<Eigen::Index>(data.num_annotators())) {
    throw InputError("m_step_policy: gamma has " + std::to_string(gamma.rows()) + " rows for " +
                     std::to_string(data.num_annotators()) + " annotators");
  }
  if (static_cast<std::size_t>(gamma.cols()) != init.size()) {
    throw InputError("m_step_policy: gamma columns do not match the number of tables");
  }
  std::vector<ScoreTable> out(init);
  std::vector<DpoReport> rep(init.size());
  std::vector<std::exception_ptr> errors(init.size());
  parallel_for(init.size(), [&](std::size_t k) {
    const Vector w = gamma.col(static_cast<Eigen::Index>(k)).cwiseProduct(data.weights);
    if (w.isZero(0.0)) {
      warn("M-step: type " + std::to_string(k) + " has zero responsibility mass; keeping its table");
      return;
    }
    try {
      out[k] = weighted_dpo(data, w, init[k], options, &rep[k]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }, 1);
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (reports) *reports = std::move(rep);
  return out;
}

std::vector<ScoreTable> m_step_policy(const Dataset& dataset, const Catalog& catalog, const Matrix& gamma,
                                      double kappa, const MStepOptions& options) {
  const CompiledData data = compile(dataset, catalog);
  std::vector<ScoreTable> init(static_cast<std::size_t>(gamma.cols()), ScoreTable::zeros(catalog, kappa));
  return m_step_policy(data, gamma, init, options);
}

double mixture_loglik(const CompiledData& data, const ScoreEnsemble& ensemble) {
  check_shapes(data, ensemble);
  const auto K = ensemble.size();
  double total = 0.0;
  std::vector<double> acc(K);
  for (std::size_t i = 0; i < data.num_annotators(); ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      double s = std::log(ensemble.eta[static_cast<Eigen::Index>(k)]);
      for (const auto& [c, cnt] : data.annotator_cells[i]) {
        s += cnt * log_multi_item_pref_prob(ensemble.tables[k], data.cells[c].prompt, data.cells[c].items[0],
                                            std::span<const std::size_t>(data.cells[c].items).subspan(1));
      }
      acc[k] = s;
    }
    total += data.weights[static_cast<Eigen::Index>(i)] *
             log_sum_exp(Eigen::Map<const Vector>(acc.data(), static_cast<Eigen::Index>(K)));
  }
  return total;
}

double mixture_loglik(const Dataset& dataset, const Catalog& catalog, const ScoreEnsemble& ensemble) {
  return mixture_loglik(compile(dataset, catalog), ensemble);
}

double ridge_penalty(const ScoreEnsemble& ensemble, double ridge) {
  if (ridge == 0.0) return 0.0;
  double out = 0.0;
  for (const auto& t : ensemble.tables) {
    for (const auto& s : t.all_scores()) out += 0.5 * ridge * s.squaredNorm();
  }
  return out;
}

InitStrategy parse_init_strategy(const std::string& name) {
  if (name == "kmeans_winner_features") return InitStrategy::kmeans_winner_features;
  if (name == "random_dirichlet") return InitStrategy::random_dirichlet;
  if (name == "from_true_labels") return InitStrategy::from_true_labels;
  throw ConfigError("unknown init strategy '" + name +
                    "' (expected kmeans_winner_features | random_dirichlet | from_true_labels)");
}

std::string to_string(InitStrategy strategy) {
  switch (strategy) {
    case InitStrategy::kmeans_winner_features:
      return "kmeans_winner_features";
    case InitStrategy::random_dirichlet:
      return "random_dirichlet";
    case InitStrategy::from_true_labels:
      return "from_true_labels";
  }
  return "?";
}

Matrix init_responsibilities(const Dataset& dataset, const Catalog& catalog, std::size_t K, InitStrategy strategy,
                             std::uint64_t seed) {
  if (K < 1) {
    throw ConfigError("init: K must be >= 1");
  }
  const auto n = static_cast<Eigen::Index>(dataset.annotators.size());
  const auto k = static_cast<Eigen::Index>(K);
  Matrix gamma = Matrix::Zero(n, k);
  Rng rng(seed);
  switch (strategy) {
    case InitStrategy::kmeans_winner_features: {
      if (K == 1) return Matrix::Ones(n, 1);
      Matrix X = Matrix::Zero(n, static_cast<Eigen::Index>(catalog.dim()));
      Vector w(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& a = dataset.annotators[static_cast<std::size_t>(i)];
        for (const auto& r : a.records) X.row(i) += catalog.features(r.prompt, r.winner);
        X.row(i) /= static_cast<double>(a.records.size());
        w[i] = a.weight;
      }
      const KMeansResult km = kmeans(X, w, K, rng, 50);
      gamma.setConstant(0.1 / static_cast<double>(K - 1));
      for (Eigen::Index i = 0; i < n; ++i) gamma(i, static_cast<Eigen::Index>(km.labels[static_cast<std::size_t>(i)])) = 0.9;
      return gamma;
    }
    case InitStrategy::random_dirichlet:
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) gamma(i, j) = rng.exponential();
        gamma.row(i) /= gamma.row(i).sum();
      }
      return gamma;
    case InitStrategy::from_true_labels:
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = dataset.annotators[static_cast<std::size_t>(i)].true_type;
        if (!t || *t < 0 || *t >= static_cast<int>(K)) {
          throw InputError("init from_true_labels: annotator " + std::to_string(dataset.annotators[static_cast<std::size_t>(i)].id) +
                           " has no usable true_type");
        }
        gamma(i, *t) = 1.0;
      }
      return gamma;
  }
  throw ConfigError("unknown init strategy");
}

EmState run_em(const CompiledData& data, const std::string& catalog_hash, const Matrix& gamma0,
               const EmConfig& config) {
  if (gamma0.cols() < 1 || gamma0.rows() != static_cast<Eigen::Index>(data.num_annotators())) {
    throw InputError("run_em: gamma0 must be n x K with K >= 1");
  }
  if (config.max_iters < 1) {
    throw ConfigError("run_em: max_iters must be >= 1");
  }
  const auto K = static_cast<std::size_t>(gamma0.cols());
  std::vector<DpoReport> reports;
  std::vector<ScoreTable> zeros;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<Vector> s;
    for (std::size_t size : data.prompt_sizes) s.push_back(Vector::Zero(static_cast<Eigen::Index>(size)));
    zeros.emplace_back(std::move(s), config.kappa);
  }
  EmState state;
  state.ensemble.tables = m_step_policy(data, gamma0, zeros, config.mstep, &reports);
  state.ensemble.eta = Vector::Constant(static_cast<Eigen::Index>(K), 1.0 / static_cast<double>(K));
  state.ensemble.catalog_hash = catalog_hash;
  state.loglik = mixture_loglik(data, state.ensemble);
  state.objective = state.loglik - ridge_penalty(state.ensemble, config.mstep.ridge);

  auto record = [&](std::size_t it) {
    EmTracePoint pt{it, state.loglik, state.objective, state.ensemble.eta, {}};
    for (const auto& r : reports) pt.grad_norms.push_back(r.grad_norm);
    pt.grad_norms.resize(K, 0.0);
    state.trace.push_back(std::move(pt));
  };
  record(0);

  for (std::size_t it = 1; it <= config.max_iters; ++it) {
    state.gamma = e_step(data, state.ensemble);
    reports.assign(K, DpoReport{});
    ScoreEnsemble next;
    next.eta = m_step_eta(state.gamma.gamma, data.weights);
    next.tables = m_step_policy(data, state.gamma.gamma, state.ensemble.tables, config.mstep, &reports);
    next.catalog_hash = catalog_hash;
    const double prev = state.objective;
    state.ensemble = std::move(next);
    state.loglik = mixture_loglik(data, state.ensemble);
    state.objective = state.loglik - ridge_penalty(state.ensemble, config.mstep.ridge);
    state.iteration = it;
    record(it);
    if (state.objective - prev < config.tol) {
      state.converged = true;
      break;
    }
  }
  return state;
}

EmRestarts run_em_restarts(const Dataset& dataset, const Catalog& catalog, const EmConfig& config) {
  check_catalog_hash(dataset, catalog);
  if (config.restarts < 1) {
    throw ConfigError("run_em: restarts must be >= 1");
  }
  const CompiledData data = compile(dataset, catalog);
  EmRestarts out;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    const Matrix gamma0 = init_responsibilities(dataset, catalog, config.K, config.init, config.seed + r);
    EmState state = run_em(data, catalog.hash(), gamma0, config);
    out.traces.push_back(state.trace);
    if (r == 0 || state.objective > out.best.objective) {
      out.best = std::move(state);
      out.best_index = r;
    }
  }
  return out;
}

EmState run_em(const Dataset& dataset, const Catalog& catalog, const EmConfig& config) {
  return run_em_restarts(dataset, catalog, config).best;
}

std::string em_trace_csv(const std::vector<EmTracePoint>& trace, std::size_t K) {
  std::vector<std::string> header = {"iteration", "loglik", "objective"};
  for (std::size_t k = 1; k <= K; ++k) header.push_back("eta_" + std::to_string(k));
  for (std::size_t k = 1; k <= K; ++k) header.push_back("grad_norm_" + std::to_string(k));
  CsvWriter csv(header);
  for (const auto& pt : trace) {
    csv.field(pt.iteration).field(pt.loglik).field(pt.objective);
    for (std::size_t k = 0; k < K; ++k) csv.field(pt.eta[static_cast<Eigen::Index>(k)]);
    for (std::size_t k = 0; k < K; ++k) csv.field(pt.grad_norms.at(k));
    csv.end_row();
  }
  return csv.str();
}

std::string gamma_csv(const Responsibilities& gamma, const std::vector<long>& annotator_ids) {
  std::vector<std::string> header = {"annotator"};
  for (Eigen::Index k = 1; k <= gamma.gamma.cols(); ++k) header.push_back("gamma_" + std::to_string(k));
  CsvWriter csv(header);
  for (Eigen::Index i = 0; i < gamma.gamma.rows(); ++i) {
    csv.field(static_cast<long long>(annotator_ids.at(static_cast<std::size_t>(i))));
    for (Eigen::Index k = 0; k < gamma.gamma.cols(); ++k) csv.field(gamma.gamma(i, k));
    csv.end_row();
  }
  return csv.str();
}

}  // namespace hetpref
