#pragma once

// Data-generating process: latent types, prompt/choice-set assignment that
// ignores the type, and top-choice winners from the type's softmax.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hetpref/rewards.hpp"

namespace hetpref {

/// One observation: the winner and the rejected alternatives of a choice set.
/// Responses are indices into the prompt's response list.
struct PreferenceRecord {
  long annotator = 0;
  std::size_t prompt = 0;
  std::size_t winner = 0;
  std::vector<std::size_t> rejected;
};

/// All records of one annotator. `weight` is a multiplicity: an annotator of
/// weight w counts as w identical annotators (1 for sampled data; fractional
/// for exact "infinite-data" datasets). `true_type` is ground truth for
/// evaluation only.
struct AnnotatorData {
  long id = 0;
  std::vector<PreferenceRecord> records;
  std::optional<int> true_type;
  double weight = 1.0;
};

struct Dataset {
  std::vector<AnnotatorData> annotators;
  std::string catalog_hash;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t choice_set_size = 0;

  std::size_t num_records() const;
  double total_weight() const;
};

/// Checks every record against the catalog (ids in range, winner not
/// rejected, rejected distinct and nonempty) and the annotator-id invariants.
void validate_dataset(const Dataset& dataset, const Catalog& catalog);

/// Throws HashMismatchError unless the dataset was generated from `catalog`.
void check_catalog_hash(const Dataset& dataset, const Catalog& catalog);

/// Synthetic personality population: three types over a phrase catalog with
/// d = 5 trait features, one shared instruction prompt.
std::pair<Population, Catalog> make_mpi_population(std::size_t num_phrases = 990, std::uint64_t seed = 0);

/// The phrase catalog alone: phrase j loads on trait j mod 5 with sign +1 or
/// -1. Signs alternate per trait; the seed picks the starting sign of each trait.
Catalog make_mpi_catalog(std::size_t num_phrases, std::uint64_t seed = 0);

/// {(theta, 1/2), (-theta, 1/2)}; throws DegeneratePopulationError for theta = 0.
Population make_adversarial_pair(const Vector& theta);

/// Samples n annotators with m records each. Deterministic in `seed`; each
/// annotator draws from its own derived stream.
Dataset simulate_dataset(const Catalog& catalog, const Population& population, std::size_t n, std::size_t m,
                         std::size_t choice_set_size, std::uint64_t seed);

/// Full choice distribution over `choice_set` for one type.
Vector exact_choice_weights(const Catalog& catalog, const Vector& theta, std::size_t prompt,
                            std::span<const std::size_t> choice_set);
/// Mixture choice distribution over `choice_set`.
Vector exact_choice_weights(const Catalog& catalog, const Population& population, std::size_t prompt,
                            std::span<const std::size_t> choice_set);

/// Infinite-data dataset: one single-record annotator per (prompt, choice
/// set of the given size, winner) with weight P(prompt) P(set) P(winner),
/// scaled so the weights sum to `total_weight`. Prompts and sets uniform, as
/// in simulate_dataset.
Dataset expected_dataset(const Catalog& catalog, const Population& population, std::size_t choice_set_size,
                         double total_weight = 1.0);

/// All size-k subsets of [0, n) in lexicographic order.
std::vector<std::vector<std::size_t>> subsets(std::size_t n, std::size_t k);

/// Annotators grouped by true_type (index = type); annotators without a
/// label are dropped.
std::vector<Dataset> split_by_true_type(const Dataset& dataset, std::size_t num_types);

// JSON-lines form: a header line {catalog_hash, seed, n, m, choice_set_size}
// then one annotator object per line, responses written by id.
std::string dataset_to_jsonl(const Dataset& dataset, const Catalog& catalog);
Dataset dataset_from_jsonl(const std::string& text, const Catalog& catalog);

}  // namespace hetpref
