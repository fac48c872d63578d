#include "hetpref/aggregate.hpp"

#include <cmath>

#include "hetpref/error.hpp"
#include "hetpref/io.hpp"

namespace hetpref {

namespace {

void check_policy(const PolicyProbs& policy, const ReferencePolicy& ref, const Vector& prompt_weights) {
  if (policy.size() != ref.num_prompts() || static_cast<std::size_t>(prompt_weights.size()) != policy.size()) {
    throw InputError("regret: policy, reference and prompt weights disagree on the prompt count");
  }
}

Vector log_policy(const ScoreTable& table, const ReferencePolicy& ref, std::size_t p) {
  const Vector logits = ref.probs(p).array().log() + table.scores(p).array() / table.kappa();
  return logits.array() - log_sum_exp(logits);
}

}  // namespace

double regret_of_policy(const PolicyProbs& policy, const ScoreEnsemble& ensemble, const ReferencePolicy& ref,
                        const Vector& prompt_weights, std::size_t k) {
  check_policy(policy, ref, prompt_weights);
  if (k >= ensemble.size()) {
    throw LookupError("regret: type index out of range");
  }
  const ScoreTable& t = ensemble.tables[k];
  double out = 0.0;
  for (std::size_t p = 0; p < policy.size(); ++p) {
    const Vector& s = t.scores(p);
    if (policy[p].size() != s.size()) {
      throw InputError("regret: policy and ensemble disagree on response count");
    }
    out += prompt_weights[static_cast<Eigen::Index>(p)] * (policy_probs(t, ref, p).dot(s) - policy[p].dot(s));
  }
  return out;
}

Vector regrets_of_policy(const PolicyProbs& policy, const ScoreEnsemble& ensemble, const ReferencePolicy& ref,
                         const Vector& prompt_weights) {
  Vector out(static_cast<Eigen::Index>(ensemble.size()));
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] = regret_of_policy(policy, ensemble, ref, prompt_weights, k);
  }
  return out;
}

Matrix discrepancy_matrix(const ScoreEnsemble& ensemble, const ReferencePolicy& ref, const Vector& prompt_weights) {
  ensemble.validate();
  const auto K = static_cast<Eigen::Index>(ensemble.size());
  const std::size_t P = ensemble.tables.front().num_prompts();
  if (static_cast<std::size_t>(prompt_weights.size()) != P) {
    throw InputError("discrepancy_matrix: prompt weights length mismatch");
  }
  Matrix L = Matrix::Zero(K + 1, K);
  for (std::size_t p = 0; p < P; ++p) {
    std::vector<Vector> log_ratio, pi;
    for (const auto& t : ensemble.tables) {
      const Vector lp = log_policy(t, ref, p);
      log_ratio.push_back(lp - ref.probs(p).array().log().matrix());
      pi.push_back(lp.array().exp());
    }
    const double rho = prompt_weights[static_cast<Eigen::Index>(p)];
    for (Eigen::Index z = 0; z < K; ++z) {
      for (Eigen::Index zp = 0; zp < K; ++zp) {
        L(z + 1, zp) += rho * pi[static_cast<std::size_t>(zp)].dot(log_ratio[static_cast<std::size_t>(z)]);
      }
    }
  }
  return L;
}

Matrix regret_matrix(const Matrix& L) {
  if (L.rows() != L.cols() + 1 || !L.allFinite()) {
    throw InputError("regret_matrix: L must be a finite (K+1) x K matrix");
  }
  Matrix R = Matrix::Zero(L.rows(), L.cols());
  for (Eigen::Index k = 1; k < L.rows(); ++k) {
    R.row(k) = (L(k, k - 1) - L.row(k).array()).matrix();
    R(k, k - 1) = 0.0;
  }
  return R;
}

double game_value(const Matrix& R, const Vector& w) { return (R * w).maxCoeff(); }

double duality_gap(const Matrix& R, const Vector& w, const Vector& p) {
  return (R * w).maxCoeff() - (R.transpose() * p).minCoeff();
}

GameSolution mmra_ae(const Matrix& R, std::size_t T, double step, bool keep_trace) {
  if (R.size() == 0 || !R.allFinite()) {
    throw InputError("mmra_ae: regret matrix must be nonempty and finite");
  }
  if (T < 2) {
    throw ConfigError("mmra_ae: T must be >= 2");
  }
  if (step <= 0.0) {
    const double scale = R.cwiseAbs().maxCoeff();
    step = scale > 0.0 ? 0.05 / scale : 0.05;
  }
  const Eigen::Index K = R.cols();
  const Eigen::Index K1 = R.rows();
  // cumulative logits; w = softmax(lw), p = softmax(lp)
  Vector lw = Vector::Zero(K), lp = Vector::Zero(K1);
  Vector w = softmax(lw), p = softmax(lp);
  Vector loss_prev = R.transpose() * p;
  Vector gain_prev = R * w;
  Vector sum_w = Vector::Zero(K), sum_p = Vector::Zero(K1);
  GameSolution out;
  if (keep_trace) out.trace.reserve(T);
  for (std::size_t t = 1; t <= T; ++t) {
    const Vector loss = R.transpose() * p;
    const Vector gain = R * w;
    lw -= step * (2.0 * loss - loss_prev);
    lp += step * (2.0 * gain - gain_prev);
    lw.array() -= lw.maxCoeff();
    lp.array() -= lp.maxCoeff();
    w = softmax(lw);
    p = softmax(lp);
    loss_prev = loss;
    gain_prev = gain;
    sum_w += w;
    sum_p += p;
    if (keep_trace) {
      const Vector aw = sum_w / sum_w.sum();
      const Vector ap = sum_p / sum_p.sum();
      out.trace.push_back({t, w, p, duality_gap(R, aw, ap)});
    }
  }
  out.w = sum_w / sum_w.sum();
  out.p = sum_p / sum_p.sum();
  out.value = game_value(R, out.w);
  out.gap = duality_gap(R, out.w, out.p);
  return out;
}

Vector uniform_mixture(const ScoreEnsemble& ensemble) {
  if (ensemble.size() < 1) {
    throw InputError("uniform_mixture: empty ensemble");
  }
  const auto K = static_cast<Eigen::Index>(ensemble.size());
  return Vector::Constant(K, 1.0 / static_cast<double>(K));
}

LwResult mmra_lw(const CompiledData& data, const ScoreEnsemble& ensemble, const Matrix& gamma,
                 const ReferencePolicy& ref, const Vector& prompt_weights, const LwOptions& options) {
  ensemble.validate();
  const auto K = static_cast<Eigen::Index>(ensemble.size());
  if (gamma.cols() != K || gamma.rows() != static_cast<Eigen::Index>(data.num_annotators())) {
    throw InputError("mmra_lw: gamma must be n x K for the given dataset and ensemble");
  }
  if (options.iters < 1 || options.inner_steps < 1) {
    throw ConfigError("mmra_lw: iters and inner_steps must be >= 1");
  }
  MStepOptions inner;
  inner.max_iters = options.inner_steps;
  inner.ridge = options.ridge;
  inner.throw_on_cap = false;
  std::vector<Vector> zeros;
  for (std::size_t size : data.prompt_sizes) zeros.push_back(Vector::Zero(static_cast<Eigen::Index>(size)));
  LwResult out{ScoreTable(std::move(zeros), ensemble.kappa()), {}, {}};
  Vector w = Vector::Constant(K, 1.0 / static_cast<double>(K));
  Vector logits = Vector::Zero(K);
  out.w_trace.push_back(w);
  for (std::size_t t = 1; t <= options.iters; ++t) {
    const Vector aw = data.weights.cwiseProduct(gamma * w);
    out.table = weighted_dpo(data, aw, out.table, inner);
    const PolicyProbs pi = policy_probs(out.table, ref);
    const Vector r = regrets_of_policy(pi, ensemble, ref, prompt_weights);
    Vector u = options.clamp ? r.cwiseMax(0.0) : r;
    if (options.include_kl) u.array() += kl_to_ref(pi, ref, prompt_weights, ensemble.kappa());
    logits += options.step * u;
    logits.array() -= logits.maxCoeff();
    w = softmax(logits);
    out.regret_trace.push_back(r);
    out.w_trace.push_back(w);
  }
  return out;
}

OriginalResult mmra_original(const ScoreEnsemble& ensemble, const ReferencePolicy& ref, const Vector& prompt_weights,
                             const OriginalOptions& options) {
  ensemble.validate();
  const double kappa = options.kappa > 0.0 ? options.kappa : ensemble.kappa();
  const double step = options.policy_step > 0.0 ? options.policy_step : 0.5 * kappa;
  if (options.iters < 1) {
    throw ConfigError("mmra_original: iters must be >= 1");
  }
  const std::size_t P = ensemble.tables.front().num_prompts();
  const auto K = static_cast<Eigen::Index>(ensemble.size());
  if (static_cast<std::size_t>(prompt_weights.size()) != P) {
    throw InputError("mmra_original: prompt weights length mismatch");
  }
  std::vector<Vector> s, s_sum;
  std::vector<Vector> star;  // pi*_k(.|x) . s_k, per prompt
  for (std::size_t p = 0; p < P; ++p) {
    s.push_back(Vector::Zero(ensemble.tables.front().scores(p).size()));
    s_sum.push_back(s.back());
    Vector e(K);
    for (Eigen::Index k = 0; k < K; ++k) {
      const ScoreTable& t = ensemble.tables[static_cast<std::size_t>(k)];
      e[k] = policy_probs(t, ref, p).dot(t.scores(p));
    }
    star.push_back(std::move(e));
  }
  Vector w = Vector::Constant(K, 1.0 / static_cast<double>(K));
  Vector logits = Vector::Zero(K);
  OriginalResult out{ScoreTable(std::vector<Vector>{}, kappa), {}};
  double initial = 0.0;
  for (std::size_t t = 0; t < options.iters; ++t) {
    // exact regrets, KL and gradient of sum_k w_k([R_k]^+ + kappa KL)
    Vector regrets = Vector::Zero(K);
    double kl = 0.0;
    std::vector<Vector> pis;
    for (std::size_t p = 0; p < P; ++p) {
      const Vector logits_p = ref.probs(p).array().log() + s[p].array() / kappa;
      const Vector logpi = logits_p.array() - log_sum_exp(logits_p);
      const Vector pi = logpi.array().exp();
      const double rho = prompt_weights[static_cast<Eigen::Index>(p)];
      for (Eigen::Index k = 0; k < K; ++k) {
        regrets[k] += rho * (star[p][k] - pi.dot(ensemble.tables[static_cast<std::size_t>(k)].scores(p)));
      }
      kl += rho * kappa * pi.dot(logpi - ref.probs(p).array().log().matrix());
      pis.push_back(pi);
    }
    const Vector pos = regrets.cwiseMax(0.0);
    const double loss = w.dot(pos) + kl;
    if (t == 0) {
      initial = loss;
    } else if (!std::isfinite(loss) || loss > 10.0 * initial + 1e-12) {
      throw StepSizeError("mmra_original: loss " + format_double(loss) + " exceeds 10x the initial loss " +
                          format_double(initial) + "; reduce policy_step");
    }
    out.trace.push_back({t, w, regrets, kl, loss});
    for (std::size_t p = 0; p < P; ++p) {
      const Vector& pi = pis[p];
      Vector direction = s[p].array() - pi.dot(s[p]);
      for (Eigen::Index k = 0; k < K; ++k) {
        if (regrets[k] <= 0.0) continue;
        const Vector& sk = ensemble.tables[static_cast<std::size_t>(k)].scores(p);
        direction -= w[k] * (sk.array() - pi.dot(sk)).matrix();
      }
      const double rho = prompt_weights[static_cast<Eigen::Index>(p)];
      s[p] -= step * (rho / kappa) * pi.cwiseProduct(direction);
      center(s[p]);
      s_sum[p] += s[p];
    }
    logits += options.mwu_step * pos;
    logits.array() -= logits.maxCoeff();
    w = softmax(logits);
  }
  if (options.average) {
    for (auto& v : s_sum) v /= static_cast<double>(options.iters);
    out.table = ScoreTable(std::move(s_sum), kappa);
  } else {
    out.table = ScoreTable(std::move(s), kappa);
  }
  return out;
}

std::string game_csv(const GameSolution& solution) {
  const auto K = solution.w.size();
  std::vector<std::string> header = {"iteration"};
  for (Eigen::Index k = 1; k <= K; ++k) header.push_back("w_" + std::to_string(k));
  for (Eigen::Index k = 0; k <= K; ++k) header.push_back("p_" + std::to_string(k));
  header.push_back("gap");
  CsvWriter csv(header);
  for (const auto& pt : solution.trace) {
    csv.field(pt.iteration);
    for (Eigen::Index k = 0; k < pt.w.size(); ++k) csv.field(pt.w[k]);
    for (Eigen::Index k = 0; k < pt.p.size(); ++k) csv.field(pt.p[k]);
    csv.field(pt.gap);
    csv.end_row();
  }
  return csv.str();
}

std::string regret_matrix_csv(const Matrix& R) {
  std::vector<std::string> header = {"z"};
  for (Eigen::Index k = 1; k <= R.cols(); ++k) header.push_back("policy_" + std::to_string(k));
  CsvWriter csv(header);
  for (Eigen::Index z = 0; z < R.rows(); ++z) {
    csv.field(static_cast<long long>(z));
    for (Eigen::Index k = 0; k < R.cols(); ++k) csv.field(R(z, k));
    csv.end_row();
  }
  return csv.str();
}

}  // namespace hetpref
