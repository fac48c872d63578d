#include "hetpref/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "hetpref/error.hpp"
#include "hetpref/io.hpp"

namespace hetpref {

Catalog::Catalog(std::size_t dim, std::vector<Prompt> prompts) : dim_(dim), prompts_(std::move(prompts)) {
  if (dim_ < 1) {
    throw InputError("catalog: feature dimension d must be >= 1");
  }
  if (prompts_.empty()) {
    throw InputError("catalog: no prompts");
  }
  response_lookup_.resize(prompts_.size());
  for (std::size_t p = 0; p < prompts_.size(); ++p) {
    const Prompt& pr = prompts_[p];
    if (!prompt_lookup_.emplace(pr.id, p).second) {
      throw InputError("catalog: duplicate prompt id '" + pr.id + "'");
    }
    if (pr.response_ids.size() < 2) {
      throw InputError("catalog: prompt '" + pr.id + "' has fewer than 2 responses");
    }
    if (static_cast<std::size_t>(pr.features.rows()) != pr.response_ids.size() ||
        static_cast<std::size_t>(pr.features.cols()) != dim_) {
      throw InputError("catalog: prompt '" + pr.id + "' feature matrix has the wrong shape");
    }
    if (!pr.features.allFinite()) {
      throw InputError("catalog: prompt '" + pr.id + "' has non-finite features");
    }
    for (std::size_t r = 0; r < pr.response_ids.size(); ++r) {
      if (!response_lookup_[p].emplace(pr.response_ids[r], r).second) {
        throw InputError("catalog: duplicate response id '" + pr.response_ids[r] + "' in prompt '" + pr.id + "'");
      }
    }
  }
  hash_ = content_hash(catalog_to_json(*this).dump());
}

const Prompt& Catalog::prompt(std::size_t p) const {
  if (p >= prompts_.size()) {
    throw LookupError("catalog: prompt index " + std::to_string(p) + " out of range");
  }
  return prompts_[p];
}

std::size_t Catalog::checked_response(std::size_t p, std::size_t r) const {
  if (r >= prompt(p).num_responses()) {
    throw LookupError("catalog: response index " + std::to_string(r) + " out of range for prompt '" +
                      prompts_[p].id + "'");
  }
  return r;
}

std::size_t Catalog::max_responses() const {
  std::size_t out = 0;
  for (const auto& p : prompts_) out = std::max(out, p.num_responses());
  return out;
}

std::size_t Catalog::min_responses() const {
  std::size_t out = prompts_.front().num_responses();
  for (const auto& p : prompts_) out = std::min(out, p.num_responses());
  return out;
}

std::size_t Catalog::prompt_index(std::string_view id) const {
  const auto it = prompt_lookup_.find(std::string(id));
  if (it == prompt_lookup_.end()) {
    throw LookupError("catalog: unknown prompt id '" + std::string(id) + "'");
  }
  return it->second;
}

std::size_t Catalog::response_index(std::size_t p, std::string_view id) const {
  prompt(p);
  const auto it = response_lookup_[p].find(std::string(id));
  if (it == response_lookup_[p].end()) {
    throw LookupError("catalog: unknown response id '" + std::string(id) + "' for prompt '" + prompts_[p].id + "'");
  }
  return it->second;
}

Vector Catalog::rewards(std::size_t p, const Vector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != dim_) {
    throw InputError("theta has dimension " + std::to_string(theta.size()) + ", catalog has d = " + std::to_string(dim_));
  }
  return prompt(p).features * theta;
}

nlohmann::json catalog_to_json(const Catalog& catalog) {
  nlohmann::json prompts = nlohmann::json::array();
  for (const auto& p : catalog.prompts()) {
    nlohmann::json responses = nlohmann::json::array();
    for (std::size_t r = 0; r < p.num_responses(); ++r) {
      std::vector<double> f(p.features.cols());
      for (Eigen::Index j = 0; j < p.features.cols(); ++j) f[j] = p.features(static_cast<Eigen::Index>(r), j);
      responses.push_back({{"id", p.response_ids[r]}, {"features", f}});
    }
    prompts.push_back({{"id", p.id}, {"responses", std::move(responses)}});
  }
  return {{"d", catalog.dim()}, {"prompts", std::move(prompts)}};
}

Catalog catalog_from_json(const nlohmann::json& doc) {
  try {
    const auto d = doc.at("d").get<std::size_t>();
    std::vector<Prompt> prompts;
    for (const auto& jp : doc.at("prompts")) {
      Prompt p;
      p.id = jp.at("id").get<std::string>();
      const auto& jr = jp.at("responses");
      p.features.resize(static_cast<Eigen::Index>(jr.size()), static_cast<Eigen::Index>(d));
      Eigen::Index r = 0;
      for (const auto& resp : jr) {
        p.response_ids.push_back(resp.at("id").get<std::string>());
        const auto f = resp.at("features").get<std::vector<double>>();
        if (f.size() != d) {
          throw InputError("catalog: response '" + p.response_ids.back() + "' has " + std::to_string(f.size()) +
                           " features, expected " + std::to_string(d));
        }
        for (std::size_t j = 0; j < d; ++j) p.features(r, static_cast<Eigen::Index>(j)) = f[j];
        ++r;
      }
      prompts.push_back(std::move(p));
    }
    return Catalog(d, std::move(prompts));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("catalog json: ") + e.what());
  }
}

Catalog make_line_catalog(std::size_t num_responses, double half_width, std::size_t num_prompts) {
  if (num_responses < 2 || num_prompts < 1) {
    throw ConfigError("line catalog needs >= 2 responses and >= 1 prompt");
  }
  std::vector<Prompt> prompts;
  for (std::size_t p = 0; p < num_prompts; ++p) {
    Prompt pr;
    pr.id = "x" + std::to_string(p);
    pr.features = Vector::LinSpaced(static_cast<Eigen::Index>(num_responses), -half_width, half_width);
    for (std::size_t r = 0; r < num_responses; ++r) pr.response_ids.push_back("y" + std::to_string(r));
    prompts.push_back(std::move(pr));
  }
  return Catalog(1, std::move(prompts));
}

Vector Population::etas() const {
  Vector out(static_cast<Eigen::Index>(types.size()));
  for (std::size_t k = 0; k < types.size(); ++k) out[static_cast<Eigen::Index>(k)] = types[k].eta;
  return out;
}

void Population::validate(std::size_t dim) const {
  if (types.empty()) {
    throw InputError("population: K must be >= 1");
  }
  double total = 0.0;
  for (const auto& t : types) {
    if (static_cast<std::size_t>(t.theta.size()) != dim) {
      throw InputError("population: theta of type " + std::to_string(t.id) + " has dimension " +
                       std::to_string(t.theta.size()) + ", expected " + std::to_string(dim));
    }
    if (!t.theta.allFinite()) {
      throw InputError("population: theta of type " + std::to_string(t.id) + " is not finite");
    }
    if (!(t.eta >= 0.0 && t.eta <= 1.0)) {
      throw InputError("population: eta of type " + std::to_string(t.id) + " outside [0, 1]");
    }
    total += t.eta;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw InputError("population: eta sums to " + format_double(total) + ", expected 1");
  }
}

nlohmann::json population_to_json(const Population& population) {
  nlohmann::json types = nlohmann::json::array();
  for (const auto& t : population.types) {
    types.push_back({{"id", t.id}, {"eta", t.eta}, {"theta", std::vector<double>(t.theta.data(), t.theta.data() + t.theta.size())}});
  }
  return {{"types", std::move(types)}};
}

Population population_from_json(const nlohmann::json& doc) {
  try {
    Population pop;
    int next = 0;
    for (const auto& jt : doc.at("types")) {
      LatentType t;
      t.id = jt.value("id", next);
      t.eta = jt.at("eta").get<double>();
      const auto th = jt.at("theta").get<std::vector<double>>();
      t.theta = Eigen::Map<const Vector>(th.data(), static_cast<Eigen::Index>(th.size()));
      pop.types.push_back(std::move(t));
      ++next;
    }
    return pop;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("population json: ") + e.what());
  }
}

double reward(const Catalog& catalog, const Vector& theta, std::size_t prompt, std::size_t response) {
  if (static_cast<std::size_t>(theta.size()) != catalog.dim()) {
    throw InputError("theta dimension does not match catalog");
  }
  return catalog.features(prompt, response).dot(theta);
}

double reward(const Catalog& catalog, const Vector& theta, std::string_view prompt_id, std::string_view response_id) {
  const std::size_t p = catalog.prompt_index(prompt_id);
  return reward(catalog, theta, p, catalog.response_index(p, response_id));
}

double pairwise_prob(const Catalog& catalog, const Vector& theta, std::size_t prompt, std::size_t y1, std::size_t y2) {
  catalog.checked_response(prompt, y1);
  catalog.checked_response(prompt, y2);
  if (y1 == y2) {
    throw InvalidPairError("pairwise_prob: y1 == y2");
  }
  return sigmoid(reward(catalog, theta, prompt, y1) - reward(catalog, theta, prompt, y2));
}

std::size_t locate_choice(const Catalog& catalog, std::size_t prompt, std::span<const std::size_t> choice_set,
                          std::size_t chosen) {
  if (choice_set.size() < 2) {
    throw InvalidChoiceError("choice set needs >= 2 alternatives");
  }
  std::size_t pos = choice_set.size();
  for (std::size_t i = 0; i < choice_set.size(); ++i) {
    catalog.checked_response(prompt, choice_set[i]);
    for (std::size_t j = 0; j < i; ++j) {
      if (choice_set[j] == choice_set[i]) {
        throw InvalidChoiceError("choice set has a repeated response");
      }
    }
    if (choice_set[i] == chosen) pos = i;
  }
  if (pos == choice_set.size()) {
    throw InvalidChoiceError("chosen response is not in the choice set");
  }
  return pos;
}

namespace {

Vector set_rewards(const Catalog& catalog, const Vector& theta, std::size_t prompt, std::span<const std::size_t> set) {
  const Vector all = catalog.rewards(prompt, theta);
  Vector out(static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) out[static_cast<Eigen::Index>(i)] = all[static_cast<Eigen::Index>(set[i])];
  return out;
}

}  // namespace

double choice_prob(const Catalog& catalog, const Vector& theta, std::size_t prompt,
                   std::span<const std::size_t> choice_set, std::size_t chosen) {
  const std::size_t pos = locate_choice(catalog, prompt, choice_set, chosen);
  const Vector r = set_rewards(catalog, theta, prompt, choice_set);
  if (choice_set.size() == 2) {
    // keeps the 2-item case bit-identical to pairwise_prob
    return sigmoid(r[static_cast<Eigen::Index>(pos)] - r[static_cast<Eigen::Index>(1 - pos)]);
  }
  return softmax(r)[static_cast<Eigen::Index>(pos)];
}

double mixture_choice_prob(const Catalog& catalog, const Population& population, std::size_t prompt,
                           std::span<const std::size_t> choice_set, std::size_t chosen) {
  if (population.types.empty()) {
    throw InputError("population: K must be >= 1");
  }
  double out = 0.0;
  for (const auto& t : population.types) {
    out += t.eta * choice_prob(catalog, t.theta, prompt, choice_set, chosen);
  }
  return out;
}

}  // namespace hetpref
