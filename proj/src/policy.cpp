#include "hetpref/policy.hpp"

#include <cmath>

#include "hetpref/error.hpp"

namespace hetpref {

ReferencePolicy::ReferencePolicy(std::vector<Vector> probs) : probs_(std::move(probs)) {
  for (const auto& p : probs_) {
    if (p.size() < 1 || !p.allFinite() || p.minCoeff() <= 0.0 || std::abs(p.sum() - 1.0) > 1e-12) {
      throw InputError("reference policy: every prompt needs a strictly positive distribution");
    }
  }
}

ReferencePolicy ReferencePolicy::uniform(const Catalog& catalog) {
  std::vector<Vector> probs;
  for (std::size_t p = 0; p < catalog.num_prompts(); ++p) {
    const auto n = static_cast<Eigen::Index>(catalog.num_responses(p));
    probs.push_back(Vector::Constant(n, 1.0 / static_cast<double>(n)));
  }
  return ReferencePolicy(std::move(probs));
}

const Vector& ReferencePolicy::probs(std::size_t prompt) const {
  if (prompt >= probs_.size()) {
    throw LookupError("reference policy: prompt index out of range");
  }
  return probs_[prompt];
}

ScoreTable::ScoreTable(std::vector<Vector> scores, double kappa) : scores_(std::move(scores)), kappa_(kappa) {
  if (!(kappa_ > 0.0) || !std::isfinite(kappa_)) {
    throw ConfigError("score table: kappa must be positive");
  }
  for (auto& s : scores_) {
    if (!s.allFinite()) {
      throw NumericalError("score table: non-finite score");
    }
    center(s);
  }
}

ScoreTable ScoreTable::zeros(const Catalog& catalog, double kappa) {
  std::vector<Vector> s;
  for (std::size_t p = 0; p < catalog.num_prompts(); ++p) {
    s.push_back(Vector::Zero(static_cast<Eigen::Index>(catalog.num_responses(p))));
  }
  return ScoreTable(std::move(s), kappa);
}

const Vector& ScoreTable::scores(std::size_t prompt) const {
  if (prompt >= scores_.size()) {
    throw LookupError("score table: prompt index out of range");
  }
  return scores_[prompt];
}

double ScoreTable::score(std::size_t prompt, std::size_t response) const {
  const Vector& s = scores(prompt);
  if (response >= static_cast<std::size_t>(s.size())) {
    throw LookupError("score table: response index out of range");
  }
  return s[static_cast<Eigen::Index>(response)];
}

double ScoreEnsemble::kappa() const {
  if (tables.empty()) {
    throw InputError("ensemble is empty");
  }
  return tables.front().kappa();
}

void ScoreEnsemble::validate() const {
  if (tables.empty()) {
    throw InputError("ensemble is empty");
  }
  if (static_cast<std::size_t>(eta.size()) != tables.size() || !on_simplex(eta, 1e-12)) {
    throw InputError("ensemble: eta must be a simplex vector of length K");
  }
  for (const auto& t : tables) {
    if (t.kappa() != tables.front().kappa()) {
      throw InputError("ensemble: tables disagree on kappa");
    }
    if (t.num_prompts() != tables.front().num_prompts()) {
      throw InputError("ensemble: tables disagree on prompt count");
    }
    for (std::size_t p = 0; p < t.num_prompts(); ++p) {
      if (t.scores(p).size() != tables.front().scores(p).size()) {
        throw InputError("ensemble: tables disagree on response count");
      }
    }
  }
}

Vector policy_probs(const ScoreTable& table, const ReferencePolicy& ref, std::size_t prompt) {
  const Vector& s = table.scores(prompt);
  const Vector& r = ref.probs(prompt);
  if (s.size() != r.size()) {
    throw InputError("policy_probs: table and reference disagree on response count");
  }
  return softmax((r.array().log() + s.array() / table.kappa()).matrix());
}

PolicyProbs policy_probs(const ScoreTable& table, const ReferencePolicy& ref) {
  PolicyProbs out;
  out.reserve(table.num_prompts());
  for (std::size_t p = 0; p < table.num_prompts(); ++p) out.push_back(policy_probs(table, ref, p));
  return out;
}

ScoreTable optimal_table_for_type(const Catalog& catalog, const Vector& theta, double kappa) {
  std::vector<Vector> s;
  for (std::size_t p = 0; p < catalog.num_prompts(); ++p) s.push_back(catalog.rewards(p, theta));
  return ScoreTable(std::move(s), kappa);
}

double log_multi_item_pref_prob(const ScoreTable& table, std::size_t prompt, std::size_t winner,
                                std::span<const std::size_t> rejected) {
  if (rejected.empty()) {
    throw InvalidRecordError("multi_item_pref_prob: empty rejected set");
  }
  const Vector& s = table.scores(prompt);
  const double sw = table.score(prompt, winner);
  double mx = sw;
  for (std::size_t y : rejected) {
    if (y == winner) {
      throw InvalidRecordError("multi_item_pref_prob: winner is in the rejected set");
    }
    mx = std::max(mx, table.score(prompt, y));
  }
  double z = std::exp(sw - mx);
  for (std::size_t y : rejected) z += std::exp(s[static_cast<Eigen::Index>(y)] - mx);
  return sw - mx - std::log(z);
}

double multi_item_pref_prob(const ScoreTable& table, std::size_t prompt, std::size_t winner,
                            std::span<const std::size_t> rejected) {
  if (rejected.size() == 1) {
    if (rejected[0] == winner) {
      throw InvalidRecordError("multi_item_pref_prob: winner is in the rejected set");
    }
    return sigmoid(table.score(prompt, winner) - table.score(prompt, rejected[0]));
  }
  return std::exp(log_multi_item_pref_prob(table, prompt, winner, rejected));
}

double reward_margin(const ScoreTable& table, std::size_t prompt, std::size_t winner, std::size_t loser) {
  return table.score(prompt, winner) - table.score(prompt, loser);
}

double kl_to_ref(const PolicyProbs& policy, const ReferencePolicy& ref, const Vector& prompt_weights, double kappa) {
  if (static_cast<std::size_t>(prompt_weights.size()) != policy.size()) {
    throw InputError("kl_to_ref: prompt weights length mismatch");
  }
  double out = 0.0;
  for (std::size_t p = 0; p < policy.size(); ++p) {
    const Vector& pi = policy[p];
    const Vector& r = ref.probs(p);
    double kl = 0.0;
    for (Eigen::Index y = 0; y < pi.size(); ++y) {
      if (pi[y] > 0.0) kl += pi[y] * std::log(pi[y] / r[y]);
    }
    out += prompt_weights[static_cast<Eigen::Index>(p)] * kappa * kl;
  }
  return out;
}

double kl_to_ref(const ScoreTable& table, const ReferencePolicy& ref, const Vector& prompt_weights) {
  return kl_to_ref(policy_probs(table, ref), ref, prompt_weights, table.kappa());
}

Vector mixture_policy_probs(const ScoreEnsemble& ensemble, const Vector& weights, const ReferencePolicy& ref,
                            std::size_t prompt) {
  if (static_cast<std::size_t>(weights.size()) != ensemble.size()) {
    throw InputError("mixture_policy_probs: weight length " + std::to_string(weights.size()) + " != K = " +
                     std::to_string(ensemble.size()));
  }
  if (!on_simplex(weights, 1e-9)) {
    throw InputError("mixture_policy_probs: weights are not on the simplex");
  }
  Vector out = Vector::Zero(ref.probs(prompt).size());
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    out += weights[static_cast<Eigen::Index>(k)] * policy_probs(ensemble.tables[k], ref, prompt);
  }
  return out;
}

PolicyProbs mixture_policy_probs(const ScoreEnsemble& ensemble, const Vector& weights, const ReferencePolicy& ref) {
  PolicyProbs out;
  for (std::size_t p = 0; p < ref.num_prompts(); ++p) out.push_back(mixture_policy_probs(ensemble, weights, ref, p));
  return out;
}

Vector uniform_prompt_weights(const Catalog& catalog) {
  const auto n = static_cast<Eigen::Index>(catalog.num_prompts());
  return Vector::Constant(n, 1.0 / static_cast<double>(n));
}

nlohmann::json table_to_json(const ScoreTable& table, const Catalog& catalog) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t p = 0; p < catalog.num_prompts(); ++p) {
    const Prompt& pr = catalog.prompt(p);
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t r = 0; r < pr.num_responses(); ++r) row[pr.response_ids[r]] = table.score(p, r);
    out[pr.id] = std::move(row);
  }
  return out;
}

ScoreTable table_from_json(const nlohmann::json& doc, const Catalog& catalog, double kappa) {
  std::vector<Vector> scores;
  for (std::size_t p = 0; p < catalog.num_prompts(); ++p) {
    const Prompt& pr = catalog.prompt(p);
    const auto& row = doc.at(pr.id);
    Vector s(static_cast<Eigen::Index>(pr.num_responses()));
    for (std::size_t r = 0; r < pr.num_responses(); ++r) s[static_cast<Eigen::Index>(r)] = row.at(pr.response_ids[r]).get<double>();
    if (std::abs(s.mean()) > 1e-9) {
      throw InputError("score table: prompt '" + pr.id + "' is not gauge-fixed (mean " + std::to_string(s.mean()) + ")");
    }
    scores.push_back(std::move(s));
  }
  return ScoreTable(std::move(scores), kappa);
}

nlohmann::json ensemble_to_json(const ScoreEnsemble& ensemble, const Catalog& catalog) {
  ensemble.validate();
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& t : ensemble.tables) tables.push_back(table_to_json(t, catalog));
  return {{"kappa", ensemble.kappa()},
          {"eta", std::vector<double>(ensemble.eta.data(), ensemble.eta.data() + ensemble.eta.size())},
          {"catalog_hash", ensemble.catalog_hash},
          {"tables", std::move(tables)}};
}

ScoreEnsemble ensemble_from_json(const nlohmann::json& doc, const Catalog& catalog) {
  try {
    ScoreEnsemble out;
    const double kappa = doc.at("kappa").get<double>();
    const auto eta = doc.at("eta").get<std::vector<double>>();
    out.eta = Eigen::Map<const Vector>(eta.data(), static_cast<Eigen::Index>(eta.size()));
    out.catalog_hash = doc.value("catalog_hash", std::string());
    for (const auto& t : doc.at("tables")) out.tables.push_back(table_from_json(t, catalog, kappa));
    out.validate();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("ensemble json: ") + e.what());
  }
}

}  // namespace hetpref
