#pragma once

// Linear reward model over a finite prompt/response catalog, with the
// Bradley-Terry (pairwise) and Plackett-Luce top-choice (multi-item)
// probabilities for one preference type or a finite mixture of types.

#include <json.hpp>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hetpref/math.hpp"

namespace hetpref {

/// One prompt with its responses. Row r of `features` is psi(x, response r).
struct Prompt {
  std::string id;
  std::vector<std::string> response_ids;
  Matrix features;

  std::size_t num_responses() const { return response_ids.size(); }
};

/// The finite prompt/response universe every other type indexes into.
///
/// Responses are addressed by (prompt index, response index); string ids
/// are only used at the serialization boundary. A catalog is immutable and
/// its content hash is computed once on construction.
class Catalog {
 public:
  Catalog(std::size_t dim, std::vector<Prompt> prompts);

  std::size_t dim() const { return dim_; }
  std::size_t num_prompts() const { return prompts_.size(); }
  const Prompt& prompt(std::size_t p) const;
  const std::vector<Prompt>& prompts() const { return prompts_; }
  std::size_t num_responses(std::size_t p) const { return prompt(p).num_responses(); }
  std::size_t max_responses() const;
  std::size_t min_responses() const;

  std::size_t prompt_index(std::string_view id) const;
  std::size_t response_index(std::size_t p, std::string_view id) const;

  /// psi(x, y) as a row of the prompt's feature matrix.
  auto features(std::size_t p, std::size_t r) const { return prompt(p).features.row(static_cast<Eigen::Index>(checked_response(p, r))); }

  /// theta^T psi(x, y) for every response of prompt p.
  Vector rewards(std::size_t p, const Vector& theta) const;

  /// Content hash of the canonical JSON form.
  const std::string& hash() const { return hash_; }

  std::size_t checked_response(std::size_t p, std::size_t r) const;

 private:
  std::size_t dim_;
  std::vector<Prompt> prompts_;
  std::unordered_map<std::string, std::size_t> prompt_lookup_;
  std::vector<std::unordered_map<std::string, std::size_t>> response_lookup_;
  std::string hash_;
};

nlohmann::json catalog_to_json(const Catalog& catalog);
Catalog catalog_from_json(const nlohmann::json& doc);

/// Single prompt whose responses have 1-D features evenly spaced on
/// [-half_width, half_width]; a compact catalog for identifiability runs.
Catalog make_line_catalog(std::size_t num_responses, double half_width, std::size_t num_prompts = 1);

/// One latent annotator type: preference weights theta and mixture weight eta.
struct LatentType {
  int id = 0;
  Vector theta;
  double eta = 0.0;
};

/// A finite mixture of latent types (the discrete preference distribution f).
struct Population {
  std::vector<LatentType> types;

  std::size_t size() const { return types.size(); }
  Vector etas() const;
  /// Throws InputError unless K >= 1, every theta has dimension `dim` and is
  /// finite, and the weights lie on the simplex within 1e-12.
  void validate(std::size_t dim) const;
};

nlohmann::json population_to_json(const Population& population);
Population population_from_json(const nlohmann::json& doc);

/// theta^T psi(x, y).
double reward(const Catalog& catalog, const Vector& theta, std::size_t prompt, std::size_t response);
double reward(const Catalog& catalog, const Vector& theta, std::string_view prompt_id,
              std::string_view response_id);

/// Bradley-Terry probability that y1 is preferred to y2.
double pairwise_prob(const Catalog& catalog, const Vector& theta, std::size_t prompt, std::size_t y1,
                     std::size_t y2);

/// Softmax probability of `chosen` among `choice_set` (Plackett-Luce top choice).
double choice_prob(const Catalog& catalog, const Vector& theta, std::size_t prompt,
                   std::span<const std::size_t> choice_set, std::size_t chosen);

/// Finite-mixture choice probability sum_k eta_k * choice_prob(theta_k, ...).
double mixture_choice_prob(const Catalog& catalog, const Population& population, std::size_t prompt,
                           std::span<const std::size_t> choice_set, std::size_t chosen);

/// Validates a choice set (size >= 2, distinct, in range) and returns the
/// position of `chosen` inside it.
std::size_t locate_choice(const Catalog& catalog, std::size_t prompt, std::span<const std::size_t> choice_set,
                          std::size_t chosen);

}  // namespace hetpref
