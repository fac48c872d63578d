#include "hetpref/simulate.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "hetpref/error.hpp"
#include "hetpref/parallel.hpp"
#include "hetpref/rng.hpp"

namespace hetpref {

std::size_t Dataset::num_records() const {
  std::size_t out = 0;
  for (const auto& a : annotators) out += a.records.size();
  return out;
}

double Dataset::total_weight() const {
  double out = 0.0;
  for (const auto& a : annotators) out += a.weight;
  return out;
}

void validate_dataset(const Dataset& dataset, const Catalog& catalog) {
  std::unordered_set<long> ids;
  for (const auto& a : dataset.annotators) {
    if (!ids.insert(a.id).second) {
      throw InvalidRecordError("dataset: duplicate annotator id " + std::to_string(a.id));
    }
    if (a.records.empty()) {
      throw InvalidRecordError("dataset: annotator " + std::to_string(a.id) + " has no records");
    }
    if (!(a.weight > 0.0) || !std::isfinite(a.weight)) {
      throw InvalidRecordError("dataset: annotator " + std::to_string(a.id) + " has a non-positive weight");
    }
    for (const auto& r : a.records) {
      if (r.annotator != a.id) {
        throw InvalidRecordError("dataset: record carries annotator " + std::to_string(r.annotator) +
                                 " inside annotator " + std::to_string(a.id));
      }
      if (r.rejected.empty()) {
        throw InvalidRecordError("dataset: record with an empty rejected set");
      }
      catalog.checked_response(r.prompt, r.winner);
      for (std::size_t i = 0; i < r.rejected.size(); ++i) {
        catalog.checked_response(r.prompt, r.rejected[i]);
        if (r.rejected[i] == r.winner) {
          throw InvalidRecordError("dataset: winner appears in its own rejected set");
        }
        for (std::size_t j = 0; j < i; ++j) {
          if (r.rejected[j] == r.rejected[i]) {
            throw InvalidRecordError("dataset: repeated rejected response");
          }
        }
      }
    }
  }
}

void check_catalog_hash(const Dataset& dataset, const Catalog& catalog) {
  if (dataset.catalog_hash != catalog.hash()) {
    throw HashMismatchError("dataset was generated from a different catalog (dataset " + dataset.catalog_hash +
                                ", catalog " + catalog.hash() + ")",
                            catalog.hash(), dataset.catalog_hash);
  }
}

Catalog make_mpi_catalog(std::size_t num_phrases, std::uint64_t seed) {
  if (num_phrases < 2) {
    throw ConfigError("mpi catalog needs >= 2 phrases");
  }
  constexpr std::size_t d = 5;
  const std::uint64_t bits = splitmix64(seed);
  Prompt p;
  p.id = "instruction";
  p.features = Matrix::Zero(static_cast<Eigen::Index>(num_phrases), d);
  for (std::size_t j = 0; j < num_phrases; ++j) {
    const std::size_t trait = j % d;
    const std::size_t occurrence = j / d;
    const std::size_t start = (bits >> trait) & 1U;
    p.features(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(trait)) =
        ((occurrence + start) % 2 == 0) ? 1.0 : -1.0;
    std::string id = std::to_string(j);
    p.response_ids.push_back("phrase_" + std::string(4 - std::min<std::size_t>(4, id.size()), '0') + id);
  }
  std::vector<Prompt> prompts;
  prompts.push_back(std::move(p));
  return Catalog(d, std::move(prompts));
}

std::pair<Population, Catalog> make_mpi_population(std::size_t num_phrases, std::uint64_t seed) {
  Vector p1(5);
  p1 << 3.0, 0.0, 2.0, 0.0, -2.5;
  Vector p3(5);
  p3 << 0.0, 2.0, 0.0, 2.0, 0.0;
  Population pop;
  pop.types = {{0, p1, 0.3}, {1, -p1, 0.3}, {2, p3, 0.4}};
  return {pop, make_mpi_catalog(num_phrases, seed)};
}

Population make_adversarial_pair(const Vector& theta) {
  if (theta.size() == 0 || theta.isZero(0.0)) {
    throw DegeneratePopulationError("adversarial pair: theta = 0 makes both types identical");
  }
  Population pop;
  pop.types = {{0, theta, 0.5}, {1, -theta, 0.5}};
  return pop;
}

namespace {

// Types in a canonical order (eta, then theta lexicographically) so the draw
// does not depend on how the caller indexed them.
std::vector<std::size_t> canonical_type_order(const Population& population) {
  std::vector<std::size_t> order(population.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ta = population.types[a];
    const auto& tb = population.types[b];
    if (ta.eta != tb.eta) return ta.eta < tb.eta;
    return std::lexicographical_compare(ta.theta.data(), ta.theta.data() + ta.theta.size(), tb.theta.data(),
                                        tb.theta.data() + tb.theta.size());
  });
  return order;
}

}  // namespace

Dataset simulate_dataset(const Catalog& catalog, const Population& population, std::size_t n, std::size_t m,
                         std::size_t choice_set_size, std::uint64_t seed) {
  population.validate(catalog.dim());
  if (n < 1 || m < 1) {
    throw ConfigError("simulate: n and m must be >= 1");
  }
  if (choice_set_size < 2) {
    throw ConfigError("simulate: choice_set_size must be >= 2");
  }
  if (choice_set_size > catalog.min_responses()) {
    throw ConfigError("simulate: choice_set_size " + std::to_string(choice_set_size) +
                      " exceeds the smallest prompt's response count " + std::to_string(catalog.min_responses()));
  }
  const auto order = canonical_type_order(population);
  std::vector<double> eta(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) eta[i] = population.types[order[i]].eta;

  // rewards per (type, prompt), shared by every annotator
  std::vector<std::vector<Vector>> rewards(population.size());
  for (std::size_t k = 0; k < population.size(); ++k) {
    for (std::size_t p = 0; p < catalog.num_prompts(); ++p) {
      rewards[k].push_back(catalog.rewards(p, population.types[k].theta));
    }
  }

  Dataset out;
  out.catalog_hash = catalog.hash();
  out.seed = seed;
  out.n = n;
  out.m = m;
  out.choice_set_size = choice_set_size;
  out.annotators.resize(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    const std::size_t z = order[rng.categorical(eta)];
    AnnotatorData& a = out.annotators[i];
    a.id = static_cast<long>(i);
    a.true_type = static_cast<int>(z);
    a.records.reserve(m);
    std::vector<double> probs(choice_set_size);
    for (std::size_t j = 0; j < m; ++j) {
      PreferenceRecord rec;
      rec.annotator = a.id;
      rec.prompt = rng.uniform_index(catalog.num_prompts());
      const auto set = rng.sample_without_replacement(catalog.num_responses(rec.prompt), choice_set_size);
      const Vector& r = rewards[z][rec.prompt];
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t s : set) mx = std::max(mx, r[static_cast<Eigen::Index>(s)]);
      for (std::size_t s = 0; s < set.size(); ++s) probs[s] = std::exp(r[static_cast<Eigen::Index>(set[s])] - mx);
      const std::size_t w = rng.categorical(probs);
      rec.winner = set[w];
      for (std::size_t s = 0; s < set.size(); ++s) {
        if (s != w) rec.rejected.push_back(set[s]);
      }
      a.records.push_back(std::move(rec));
    }
  }, 64);
  return out;
}

Vector exact_choice_weights(const Catalog& catalog, const Vector& theta, std::size_t prompt,
                            std::span<const std::size_t> choice_set) {
  locate_choice(catalog, prompt, choice_set, choice_set[0]);
  const Vector all = catalog.rewards(prompt, theta);
  Vector r(static_cast<Eigen::Index>(choice_set.size()));
  for (std::size_t i = 0; i < choice_set.size(); ++i) r[static_cast<Eigen::Index>(i)] = all[static_cast<Eigen::Index>(choice_set[i])];
  return softmax(r);
}

Vector exact_choice_weights(const Catalog& catalog, const Population& population, std::size_t prompt,
                            std::span<const std::size_t> choice_set) {
  if (population.types.empty()) {
    throw InputError("population: K must be >= 1");
  }
  Vector out = Vector::Zero(static_cast<Eigen::Index>(choice_set.size()));
  for (const auto& t : population.types) {
    out += t.eta * exact_choice_weights(catalog, t.theta, prompt, choice_set);
  }
  return out;
}

std::vector<std::vector<std::size_t>> subsets(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  if (k > n) return out;
  std::vector<std::size_t> cur(k);
  std::iota(cur.begin(), cur.end(), 0);
  while (true) {
    out.push_back(cur);
    std::size_t i = k;
    while (i > 0 && cur[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

Dataset expected_dataset(const Catalog& catalog, const Population& population, std::size_t choice_set_size,
                         double total_weight) {
  population.validate(catalog.dim());
  if (choice_set_size < 2 || choice_set_size > catalog.min_responses()) {
    throw ConfigError("expected_dataset: choice_set_size out of range");
  }
  Dataset out;
  out.catalog_hash = catalog.hash();
  out.m = 1;
  out.choice_set_size = choice_set_size;
  long id = 0;
  const double prompt_w = total_weight / static_cast<double>(catalog.num_prompts());
  for (std::size_t p = 0; p < catalog.num_prompts(); ++p) {
    const auto sets = subsets(catalog.num_responses(p), choice_set_size);
    const double set_w = prompt_w / static_cast<double>(sets.size());
    for (const auto& set : sets) {
      const Vector probs = exact_choice_weights(catalog, population, p, set);
      for (std::size_t w = 0; w < set.size(); ++w) {
        AnnotatorData a;
        a.id = id++;
        a.weight = set_w * probs[static_cast<Eigen::Index>(w)];
        PreferenceRecord rec{a.id, p, set[w], {}};
        for (std::size_t s = 0; s < set.size(); ++s) {
          if (s != w) rec.rejected.push_back(set[s]);
        }
        a.records.push_back(std::move(rec));
        out.annotators.push_back(std::move(a));
      }
    }
  }
  out.n = out.annotators.size();
  return out;
}

std::vector<Dataset> split_by_true_type(const Dataset& dataset, std::size_t num_types) {
  std::vector<Dataset> out(num_types);
  for (auto& d : out) {
    d.catalog_hash = dataset.catalog_hash;
    d.seed = dataset.seed;
    d.m = dataset.m;
    d.choice_set_size = dataset.choice_set_size;
  }
  for (const auto& a : dataset.annotators) {
    if (a.true_type && *a.true_type >= 0 && static_cast<std::size_t>(*a.true_type) < num_types) {
      out[static_cast<std::size_t>(*a.true_type)].annotators.push_back(a);
    }
  }
  for (auto& d : out) d.n = d.annotators.size();
  return out;
}

std::string dataset_to_jsonl(const Dataset& dataset, const Catalog& catalog) {
  std::string out;
  nlohmann::json header = {{"catalog_hash", dataset.catalog_hash},
                           {"seed", dataset.seed},
                           {"n", dataset.n},
                           {"m", dataset.m},
                           {"choice_set_size", dataset.choice_set_size}};
  out += header.dump();
  out += '\n';
  for (const auto& a : dataset.annotators) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : a.records) {
      const Prompt& p = catalog.prompt(r.prompt);
      nlohmann::json rej = nlohmann::json::array();
      for (std::size_t y : r.rejected) rej.push_back(p.response_ids.at(y));
      records.push_back({{"prompt", p.id}, {"winner", p.response_ids.at(r.winner)}, {"rejected", std::move(rej)}});
    }
    nlohmann::json line = {{"annotator", a.id}, {"records", std::move(records)}};
    line["true_type"] = a.true_type ? nlohmann::json(*a.true_type) : nlohmann::json(nullptr);
    if (a.weight != 1.0) line["weight"] = a.weight;
    out += line.dump();
    out += '\n';
  }
  return out;
}

Dataset dataset_from_jsonl(const std::string& text, const Catalog& catalog) {
  std::istringstream in(text);
  std::string line;
  Dataset out;
  bool header = false;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (!header) {
        out.catalog_hash = j.at("catalog_hash").get<std::string>();
        out.seed = j.at("seed").get<std::uint64_t>();
        out.n = j.at("n").get<std::size_t>();
        out.m = j.at("m").get<std::size_t>();
        out.choice_set_size = j.at("choice_set_size").get<std::size_t>();
        header = true;
        continue;
      }
      AnnotatorData a;
      a.id = j.at("annotator").get<long>();
      if (j.contains("true_type") && !j["true_type"].is_null()) a.true_type = j["true_type"].get<int>();
      a.weight = j.value("weight", 1.0);
      for (const auto& jr : j.at("records")) {
        PreferenceRecord r;
        r.annotator = a.id;
        r.prompt = catalog.prompt_index(jr.at("prompt").get<std::string>());
        r.winner = catalog.response_index(r.prompt, jr.at("winner").get<std::string>());
        for (const auto& y : jr.at("rejected")) r.rejected.push_back(catalog.response_index(r.prompt, y.get<std::string>()));
        a.records.push_back(std::move(r));
      }
      out.annotators.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("dataset line " + std::to_string(lineno) + ": " + e.what());
  }
  if (!header) {
    throw InputError("dataset: missing header line");
  }
  validate_dataset(out, catalog);
  return out;
}

}  // namespace hetpref
