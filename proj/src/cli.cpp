#include "hetpref/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "hetpref/aggregate.hpp"
#include "hetpref/error.hpp"
#include "hetpref/evaluate.hpp"
#include "hetpref/identify.hpp"
#include "hetpref/io.hpp"
#include "hetpref/rng.hpp"
#include "hetpref/simulate.hpp"

namespace hetpref {

using nlohmann::json;
namespace fs = std::filesystem;

json default_config() {
  return json::parse(R"({
    "preset": "paper_defaults",
    "seed": 0,
    "kappa": 0.1,
    "catalog": {"type": "mpi", "num_phrases": 990, "n": 6, "half_width": 2.0, "prompts": 1, "path": ""},
    "population": {"type": "mpi", "theta": [1.0], "types": []},
    "simulate": {"n": 1500, "m": 1, "choice_set_size": 2},
    "emdpo": {"K": 2, "max_iters": 5, "tol": 1e-8, "init": "kmeans", "restarts": 1, "ridge": 0.0,
              "newton_tol": 1e-8, "newton_max_iters": 200},
    "aggregate": {
      "method": "lw",
      "ae": {"T": 100000, "step": 0.0},
      "lw": {"iters": 20, "step": 0.01, "inner_steps": 5, "ridge": 0.0, "clamp": false, "include_kl": false},
      "original": {"iters": 2000, "policy_step": 0.0, "mwu_step": 0.05, "average": false}
    },
    "identify": {
      "theta": [1.0],
      "catalog": {"n": 6, "half_width": 2.0, "prompts": 1},
      "ns": [1000],
      "seeds": 3,
      "em": {"max_iters": 500, "ridge": 3.0, "init": "kmeans", "restarts": 1},
      "design_dims": [2, 5, 10]
    },
    "evaluate": {"num_groups": 0, "baselines": [], "cluster_K": 2},
    "sweep": {"Ks": [2, 3, 4, 5, 6]}
  })");
}

json preset_config(const std::string& name) {
  if (name == "paper_defaults") {
    return json::parse(R"({
      "kappa": 0.1,
      "emdpo": {"max_iters": 5},
      "aggregate": {"lw": {"iters": 20, "step": 0.01}}
    })");
  }
  if (name == "none") return json::object();
  throw ConfigError("config field 'preset' must be one of paper_defaults, none (got '" + name + "')");
}

namespace {

void reject_unknown(const json& user, const json& known, const std::string& prefix) {
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!known.contains(key)) {
      throw ConfigError("config field '" + path + "' is not recognized");
    }
    if (value.is_object() && known[key].is_object()) reject_unknown(value, known[key], path);
  }
}

}  // namespace

json resolve_config(const std::string& text) {
  json user;
  try {
    user = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!user.is_object()) {
    throw ConfigError("config must be a JSON object");
  }
  json out = default_config();
  reject_unknown(user, out, "");
  const std::string preset = user.value("preset", std::string("paper_defaults"));
  out.merge_patch(preset_config(preset));
  out.merge_patch(user);
  return out;
}

namespace {

// ---- typed config access; every failure names the field and its domain

const json& field(const json& cfg, const std::string& path) {
  const json* node = &cfg;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) {
      throw ConfigError("config field '" + path + "' is missing");
    }
    node = &(*node)[part];
  }
  return *node;
}

double number(const json& cfg, const std::string& path, double lo, double hi) {
  const json& v = field(cfg, path);
  if (!v.is_number() || !(v.get<double>() >= lo) || !(v.get<double>() <= hi)) {
    throw ConfigError("config field '" + path + "' must be a number in [" + format_double(lo) + ", " +
                      format_double(hi) + "] (got " + v.dump() + ")");
  }
  return v.get<double>();
}

double positive(const json& cfg, const std::string& path) {
  const json& v = field(cfg, path);
  if (!v.is_number() || !(v.get<double>() > 0.0) || !std::isfinite(v.get<double>())) {
    throw ConfigError("config field '" + path + "' must be a positive number (got " + v.dump() + ")");
  }
  return v.get<double>();
}

std::size_t count(const json& cfg, const std::string& path, std::size_t lo) {
  const json& v = field(cfg, path);
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(lo)) {
    throw ConfigError("config field '" + path + "' must be an integer >= " + std::to_string(lo) + " (got " +
                      v.dump() + ")");
  }
  return static_cast<std::size_t>(v.get<long long>());
}

bool flag(const json& cfg, const std::string& path) {
  const json& v = field(cfg, path);
  if (!v.is_boolean()) {
    throw ConfigError("config field '" + path + "' must be true or false (got " + v.dump() + ")");
  }
  return v.get<bool>();
}

std::string choice(const json& cfg, const std::string& path, const std::vector<std::string>& options) {
  const json& v = field(cfg, path);
  std::string all;
  for (const auto& o : options) all += (all.empty() ? "" : ", ") + o;
  if (v.is_string()) {
    for (const auto& o : options) {
      if (o == v.get<std::string>()) return o;
    }
  }
  throw ConfigError("config field '" + path + "' must be one of " + all + " (got " + v.dump() + ")");
}

Vector vector_field(const json& cfg, const std::string& path) {
  const json& v = field(cfg, path);
  if (!v.is_array() || v.empty()) {
    throw ConfigError("config field '" + path + "' must be a nonempty array of numbers");
  }
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
      throw ConfigError("config field '" + path + "' must be a nonempty array of finite numbers");
    }
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

std::vector<std::size_t> counts(const json& cfg, const std::string& path, std::size_t lo) {
  const json& v = field(cfg, path);
  if (!v.is_array() || v.empty()) {
    throw ConfigError("config field '" + path + "' must be a nonempty array of integers >= " + std::to_string(lo));
  }
  std::vector<std::size_t> out;
  for (const auto& x : v) {
    if (!x.is_number_integer() || x.get<long long>() < static_cast<long long>(lo)) {
      throw ConfigError("config field '" + path + "' must be a nonempty array of integers >= " + std::to_string(lo));
    }
    out.push_back(static_cast<std::size_t>(x.get<long long>()));
  }
  return out;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// ---- builders

Catalog build_catalog(const json& cfg, std::uint64_t seed) {
  const std::string type = choice(cfg, "catalog.type", {"mpi", "line", "file"});
  if (type == "mpi") return make_mpi_catalog(count(cfg, "catalog.num_phrases", 1), seed);
  if (type == "line") {
    return make_line_catalog(count(cfg, "catalog.n", 2), positive(cfg, "catalog.half_width"),
                             count(cfg, "catalog.prompts", 1));
  }
  const json& path = field(cfg, "catalog.path");
  if (!path.is_string() || path.get<std::string>().empty()) {
    throw ConfigError("config field 'catalog.path' must name a catalog JSON file");
  }
  return catalog_from_json(json::parse(read_file(path.get<std::string>())));
}

Population build_population(const json& cfg, const Catalog& catalog, std::uint64_t seed) {
  const std::string type = choice(cfg, "population.type", {"mpi", "adversarial", "custom"});
  Population pop;
  if (type == "mpi") {
    if (field(cfg, "catalog.type") != "mpi") {
      throw ConfigError("config field 'population.type' = mpi requires catalog.type = mpi");
    }
    pop = make_mpi_population(count(cfg, "catalog.num_phrases", 1), seed).first;
  } else if (type == "adversarial") {
    pop = make_adversarial_pair(vector_field(cfg, "population.theta"));
  } else {
    try {
      pop = population_from_json(json{{"types", field(cfg, "population.types")}});
    } catch (const InputError& e) {
      throw ConfigError(std::string("config field 'population.types': ") + e.what());
    }
  }
  try {
    pop.validate(catalog.dim());
  } catch (const InputError& e) {
    throw ConfigError(std::string("config field 'population': ") + e.what());
  }
  return pop;
}

InitStrategy init_field(const json& cfg, const std::string& path) {
  const std::string name = choice(cfg, path, {"kmeans", "kmeans_winner_features", "random_dirichlet",
                                              "from_true_labels"});
  return parse_init_strategy(name == "kmeans" ? "kmeans_winner_features" : name);
}

EmConfig em_config(const json& cfg, std::uint64_t seed) {
  EmConfig c;
  c.K = count(cfg, "emdpo.K", 1);
  c.max_iters = count(cfg, "emdpo.max_iters", 1);
  c.tol = number(cfg, "emdpo.tol", 0.0, 1e300);
  c.kappa = positive(cfg, "kappa");
  c.init = init_field(cfg, "emdpo.init");
  c.restarts = count(cfg, "emdpo.restarts", 1);
  c.seed = seed;
  c.mstep.ridge = number(cfg, "emdpo.ridge", 0.0, 1e300);
  c.mstep.tol = positive(cfg, "emdpo.newton_tol");
  c.mstep.max_iters = count(cfg, "emdpo.newton_max_iters", 1);
  return c;
}

// ---- files and manifests

struct Outputs {
  fs::path dir;
  json files = json::object();

  void write(const std::string& name, const std::string& contents) {
    write_file(dir / name, contents);
    files[name] = content_hash(contents);
  }
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

struct Input {
  std::string text;
  std::string hash;
};

Input load(const std::string& path, const std::string& role) {
  if (path.empty()) {
    throw ConfigError("--" + role + " is required");
  }
  Input in;
  in.text = read_file(path);
  in.hash = content_hash(in.text);
  return in;
}

json parse_input(const Input& in, const std::string& role) {
  try {
    return json::parse(in.text);
  } catch (const json::parse_error& e) {
    throw InputError(role + " file is not valid JSON: " + e.what());
  }
}

void write_manifest(Outputs& out, const std::string& command, const json& cfg, const json& inputs,
                    const json& extra = json::object()) {
  json m = {{"command", command},
            {"seed", cfg["seed"]},
            {"config", cfg},
            {"config_hash", content_hash(cfg.dump())},
            {"inputs", inputs},
            {"outputs", out.files}};
  m.update(extra);
  write_file(out.dir / "manifest.json", dump(m));
}

// Ensemble file: ensemble JSON plus the hash of the dataset it was fitted on.
struct LoadedEnsemble {
  ScoreEnsemble ensemble;
  std::string dataset_hash;
  std::string hash;
};

LoadedEnsemble load_ensemble(const std::string& path, const Catalog& catalog) {
  const Input in = load(path, "ensemble");
  const json doc = parse_input(in, "ensemble");
  LoadedEnsemble out;
  const std::string cat_hash = doc.value("catalog_hash", std::string());
  if (cat_hash != catalog.hash()) {
    throw HashMismatchError("ensemble was fitted on a different catalog", catalog.hash(), cat_hash);
  }
  out.ensemble = ensemble_from_json(doc, catalog);
  out.dataset_hash = doc.value("dataset_hash", std::string());
  out.hash = in.hash;
  return out;
}

std::size_t infer_groups(const Dataset& d, std::size_t configured) {
  if (configured > 0) return configured;
  std::size_t g = 0;
  for (const auto& a : d.annotators) {
    if (a.true_type) g = std::max(g, static_cast<std::size_t>(*a.true_type) + 1);
  }
  return g;
}

// ---- commands

struct Common {
  std::string config_path;
  std::optional<long long> seed;
  std::string out;
};

json load_config(const Common& c) {
  json cfg = c.config_path.empty() ? resolve_config("{}") : resolve_config(read_file(c.config_path));
  if (c.seed) cfg["seed"] = *c.seed;
  if (!cfg["seed"].is_number_integer() || cfg["seed"].get<long long>() < 0) {
    throw ConfigError("config field 'seed' must be an integer >= 0 (got " + cfg["seed"].dump() + ")");
  }
  if (c.out.empty()) {
    throw ConfigError("--out is required");
  }
  return cfg;
}

std::uint64_t seed_of(const json& cfg) { return cfg["seed"].get<std::uint64_t>(); }

void cmd_simulate(const Common& c) {
  const json cfg = load_config(c);
  const std::uint64_t seed = seed_of(cfg);
  const Catalog catalog = build_catalog(cfg, seed);
  const Population pop = build_population(cfg, catalog, seed);
  const std::size_t n = count(cfg, "simulate.n", 1);
  const std::size_t m = count(cfg, "simulate.m", 1);
  const std::size_t cs = count(cfg, "simulate.choice_set_size", 2);
  if (cs > catalog.min_responses()) {
    throw ConfigError("config field 'simulate.choice_set_size' must be <= the smallest prompt size (" +
                      std::to_string(catalog.min_responses()) + ")");
  }
  const Dataset data = simulate_dataset(catalog, pop, n, m, cs, seed);
  Outputs out{c.out};
  out.write("catalog.json", dump(catalog_to_json(catalog)));
  out.write("population.json", dump(population_to_json(pop)));
  const std::string text = dataset_to_jsonl(data, catalog);
  out.write("dataset.jsonl", text);
  write_manifest(out, "simulate", cfg, json::object(),
                 {{"catalog_hash", catalog.hash()}, {"dataset_hash", content_hash(text)}});
}

struct DataInputs {
  std::string catalog;
  std::string dataset;
};

struct LoadedData {
  Catalog catalog;
  Dataset dataset;
  std::string dataset_hash;
};

// The header line carries the catalog hash; compare it before resolving any ids.
Dataset parse_dataset(const Input& in, const Catalog& catalog, const std::string& role) {
  json header;
  try {
    header = json::parse(in.text.substr(0, in.text.find('\n')));
  } catch (const json::parse_error& e) {
    throw InputError(role + " header is not valid JSON: " + e.what());
  }
  const std::string hash = header.is_object() ? header.value("catalog_hash", std::string()) : std::string();
  if (hash != catalog.hash()) {
    throw HashMismatchError(role + " was generated from a different catalog", catalog.hash(), hash);
  }
  Dataset d = dataset_from_jsonl(in.text, catalog);
  check_catalog_hash(d, catalog);
  return d;
}

LoadedData load_data(const DataInputs& in) {
  const Input cat = load(in.catalog, "catalog");
  Catalog catalog = catalog_from_json(parse_input(cat, "catalog"));
  const Input ds = load(in.dataset, "dataset");
  Dataset d = parse_dataset(ds, catalog, "dataset");
  return {std::move(catalog), std::move(d), ds.hash};
}

void cmd_emdpo(const Common& c, const DataInputs& in) {
  const json cfg = load_config(c);
  const EmConfig ec = em_config(cfg, seed_of(cfg));
  const LoadedData ld = load_data(in);
  const EmRestarts r = run_em_restarts(ld.dataset, ld.catalog, ec);
  Outputs out{c.out};
  json ens = ensemble_to_json(r.best.ensemble, ld.catalog);
  ens["dataset_hash"] = ld.dataset_hash;
  const std::string ens_text = dump(ens);
  out.write("ensemble.json", ens_text);
  std::vector<long> ids;
  for (const auto& a : ld.dataset.annotators) ids.push_back(a.id);
  out.write("gamma.csv", gamma_csv(r.best.gamma, ids));
  std::string trace;
  for (std::size_t k = 0; k < r.traces.size(); ++k) {
    std::istringstream lines(em_trace_csv(r.traces[k], ec.K));
    std::string line;
    bool header = true;
    while (std::getline(lines, line)) {
      if (header) {
        if (k == 0) trace += "restart," + line + "\n";
        header = false;
      } else {
        trace += std::to_string(k) + "," + line + "\n";
      }
    }
  }
  out.write("trace.csv", trace);
  write_manifest(out, "emdpo", cfg,
                 {{"catalog", ld.catalog.hash()}, {"dataset", ld.dataset_hash}},
                 {{"catalog_hash", ld.catalog.hash()},
                  {"dataset_hash", ld.dataset_hash},
                  {"ensemble_hash", content_hash(ens_text)},
                  {"best_restart", r.best_index},
                  {"loglik", r.best.loglik},
                  {"objective", r.best.objective}});
}

void cmd_aggregate(const Common& c, const DataInputs& in, const std::string& ensemble_path) {
  const json cfg = load_config(c);
  const LoadedData ld = load_data(in);
  const LoadedEnsemble le = load_ensemble(ensemble_path, ld.catalog);
  if (!le.dataset_hash.empty() && le.dataset_hash != ld.dataset_hash) {
    throw HashMismatchError("ensemble was fitted on a different dataset", ld.dataset_hash, le.dataset_hash);
  }
  const ScoreEnsemble& e = le.ensemble;
  const std::string method = choice(cfg, "aggregate.method", {"ae", "lw", "original", "uniform"});
  const ReferencePolicy ref = ReferencePolicy::uniform(ld.catalog);
  const Vector rho = uniform_prompt_weights(ld.catalog);
  Outputs out{c.out};
  json solution = {{"method", method}};
  PolicyProbs policy;
  if (method == "uniform" || method == "ae") {
    Vector w = uniform_mixture(e);
    if (method == "ae") {
      const Matrix R = regret_matrix(discrepancy_matrix(e, ref, rho));
      const GameSolution g =
          mmra_ae(R, count(cfg, "aggregate.ae.T", 2), number(cfg, "aggregate.ae.step", 0.0, 1e300), true);
      w = g.w;
      out.write("regret_matrix.csv", regret_matrix_csv(R));
      out.write("game.csv", game_csv(g));
      solution["value"] = g.value;
      solution["gap"] = g.gap;
      solution["p"] = to_std(g.p);
    }
    solution["w"] = to_std(w);
    policy = mixture_policy_probs(e, w, ref);
  } else if (method == "lw") {
    LwOptions o;
    o.iters = count(cfg, "aggregate.lw.iters", 1);
    o.step = number(cfg, "aggregate.lw.step", 0.0, 1e300);
    o.inner_steps = count(cfg, "aggregate.lw.inner_steps", 1);
    o.ridge = number(cfg, "aggregate.lw.ridge", 0.0, 1e300);
    o.clamp = flag(cfg, "aggregate.lw.clamp");
    o.include_kl = flag(cfg, "aggregate.lw.include_kl");
    const CompiledData data = compile(ld.dataset, ld.catalog);
    const Matrix gamma = e_step(data, e).gamma;
    const LwResult r = mmra_lw(data, e, gamma, ref, rho, o);
    const auto K = static_cast<std::size_t>(e.size());
    std::vector<std::string> header = {"iteration"};
    for (std::size_t k = 1; k <= K; ++k) header.push_back("w_" + std::to_string(k));
    for (std::size_t k = 1; k <= K; ++k) header.push_back("regret_" + std::to_string(k));
    CsvWriter csv(header);
    for (std::size_t t = 1; t < r.w_trace.size(); ++t) {
      csv.field(t);
      for (Eigen::Index k = 0; k < r.w_trace[t].size(); ++k) csv.field(r.w_trace[t][k]);
      for (Eigen::Index k = 0; k < r.regret_trace[t - 1].size(); ++k) csv.field(r.regret_trace[t - 1][k]);
      csv.end_row();
    }
    out.write("lw_trace.csv", csv.str());
    solution["w"] = to_std(r.w_trace.back());
    solution["table"] = table_to_json(r.table, ld.catalog);
    solution["kappa"] = r.table.kappa();
    policy = policy_probs(r.table, ref);
  } else {
    OriginalOptions o;
    o.iters = count(cfg, "aggregate.original.iters", 1);
    o.policy_step = number(cfg, "aggregate.original.policy_step", 0.0, 1e300);
    o.mwu_step = number(cfg, "aggregate.original.mwu_step", 0.0, 1e300);
    o.average = flag(cfg, "aggregate.original.average");
    const OriginalResult r = mmra_original(e, ref, rho, o);
    const auto K = static_cast<std::size_t>(e.size());
    std::vector<std::string> header = {"iteration"};
    for (std::size_t k = 1; k <= K; ++k) header.push_back("w_" + std::to_string(k));
    for (std::size_t k = 1; k <= K; ++k) header.push_back("regret_" + std::to_string(k));
    header.push_back("kl");
    header.push_back("loss");
    CsvWriter csv(header);
    for (const auto& pt : r.trace) {
      csv.field(pt.iteration);
      for (Eigen::Index k = 0; k < pt.w.size(); ++k) csv.field(pt.w[k]);
      for (Eigen::Index k = 0; k < pt.regrets.size(); ++k) csv.field(pt.regrets[k]);
      csv.field(pt.kl).field(pt.loss);
      csv.end_row();
    }
    out.write("original_trace.csv", csv.str());
    solution["table"] = table_to_json(r.table, ld.catalog);
    solution["kappa"] = r.table.kappa();
    policy = policy_probs(r.table, ref);
  }
  const Vector regrets = regrets_of_policy(policy, e, ref, rho);
  CsvWriter rc({"type", "regret"});
  for (Eigen::Index k = 0; k < regrets.size(); ++k) {
    rc.field(std::to_string(k + 1)).field(regrets[k]);
    rc.end_row();
  }
  rc.field(std::string_view("max")).field(max_regret(policy, e, ref, rho));
  rc.end_row();
  out.write("regrets.csv", rc.str());
  solution["regrets"] = to_std(regrets);
  solution["max_regret"] = max_regret(policy, e, ref, rho);
  out.write("solution.json", dump(solution));
  write_manifest(out, "aggregate", cfg,
                 {{"catalog", ld.catalog.hash()}, {"dataset", ld.dataset_hash}, {"ensemble", le.hash}},
                 {{"catalog_hash", ld.catalog.hash()}, {"dataset_hash", ld.dataset_hash}, {"ensemble_hash", le.hash}});
}

void cmd_identify(const Common& c) {
  const json cfg = load_config(c);
  const std::uint64_t seed = seed_of(cfg);
  const Vector theta = vector_field(cfg, "identify.theta");
  if (theta.size() != 1) {
    throw ConfigError("config field 'identify.theta' must have one entry (the line catalog is one-dimensional)");
  }
  const Catalog catalog = make_line_catalog(count(cfg, "identify.catalog.n", 3),
                                            positive(cfg, "identify.catalog.half_width"),
                                            count(cfg, "identify.catalog.prompts", 1));
  const Population truth = make_adversarial_pair(theta);
  Population null_pop;
  null_pop.types = {{0, Vector::Zero(1), 1.0}};
  const std::vector<Population> cands = {truth, null_pop};

  json report;
  report["flatness"] = verify_binary_flatness(catalog, theta);
  report["binary_loglik_spread"] = binary_likelihood_flatness(catalog, truth, cands, 2);
  report["ternary_loglik_spread"] = binary_likelihood_flatness(catalog, truth, cands, 3);

  // exact recovery from noiseless logits, then a rank-deficient design
  Rng rng(seed);
  json recovery_rows = json::array();
  for (std::size_t d : counts(cfg, "identify.design_dims", 1)) {
    const std::size_t m = 3 * d;
    Matrix f(static_cast<Eigen::Index>(m + 1), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
    Vector th(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < th.size(); ++i) th[i] = rng.normal();
    std::vector<Prompt> prompts(1);
    prompts[0].id = "x";
    prompts[0].features = f;
    for (std::size_t r = 0; r <= m; ++r) prompts[0].response_ids.push_back("y" + std::to_string(r));
    const Catalog dc(d, std::move(prompts));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t r = 0; r < m; ++r) pairs.emplace_back(r, r + 1);
    const Matrix U = comparison_design(dc, 0, pairs);
    const Vector est = recover_theta_from_binary(U, U * th);
    bool rejected = false;
    if (d >= 2) {
      Matrix low = U;
      low.col(static_cast<Eigen::Index>(d) - 1) = low.col(0);
      try {
        recover_theta_from_binary(low, low * th);
      } catch (const RankError&) {
        rejected = true;
      }
    }
    recovery_rows.push_back({{"d", d}, {"rows", m}, {"max_abs_error", (est - th).cwiseAbs().maxCoeff()},
                     {"rank_deficient_rejected", rejected}});
  }
  report["theta_recovery"] = recovery_rows;

  EmConfig ec;
  ec.K = 2;
  ec.kappa = positive(cfg, "kappa");
  ec.max_iters = count(cfg, "identify.em.max_iters", 1);
  ec.init = init_field(cfg, "identify.em.init");
  ec.restarts = count(cfg, "identify.em.restarts", 1);
  ec.mstep.ridge = number(cfg, "identify.em.ridge", 0.0, 1e300);
  const std::size_t seeds = count(cfg, "identify.seeds", 1);
  CsvWriter csv({"n", "choice_set_size", "seed", "margin_correlation", "eta_error", "expected_loglik_fit",
                 "expected_loglik_null", "expected_loglik_gap", "em_iterations"});
  json rows = json::array();
  for (std::size_t n : counts(cfg, "identify.ns", 1)) {
    for (std::size_t cs : {3u, 2u}) {
      for (std::size_t s = 0; s < seeds; ++s) {
        ec.seed = seed + s;
        const RecoveryReport r = ternary_recovery_experiment(catalog, theta, n, seed + s, ec, cs);
        csv.field(n).field(cs).field(s).field(r.margin_correlation).field(r.eta_error);
        csv.field(r.expected_loglik_fit).field(r.expected_loglik_null);
        csv.field(r.expected_loglik_fit - r.expected_loglik_null).field(r.em_iterations);
        csv.end_row();
        json j = recovery_to_json(r);
        j["seed"] = s;
        rows.push_back(j);
      }
    }
  }
  report["recovery"] = rows;
  Outputs out{c.out};
  out.write("report.json", dump(report));
  out.write("recovery.csv", csv.str());
  write_manifest(out, "identify", cfg, json::object(), {{"catalog_hash", catalog.hash()}});
}

void cmd_evaluate(const Common& c, const DataInputs& in, const std::vector<std::string>& ensembles,
                  const std::string& train_path) {
  const json cfg = load_config(c);
  const LoadedData ld = load_data(in);
  const std::size_t G = infer_groups(ld.dataset, count(cfg, "evaluate.num_groups", 0));
  if (G == 0) {
    throw InputError("evaluation dataset has no true_type labels; set evaluate.num_groups");
  }
  const std::vector<Dataset> groups = split_by_true_type(ld.dataset, G);
  std::vector<MethodMetrics> rows;
  json inputs = {{"catalog", ld.catalog.hash()}, {"dataset", ld.dataset_hash}};
  for (const auto& spec : ensembles) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--ensemble expects NAME=PATH (got '" + spec + "')");
    }
    const std::string name = spec.substr(0, eq);
    const LoadedEnsemble le = load_ensemble(spec.substr(eq + 1), ld.catalog);
    inputs["ensemble:" + name] = le.hash;
    rows.push_back(evaluate_ensemble(name, le.ensemble, groups));
  }
  const json& baselines = field(cfg, "evaluate.baselines");
  if (!baselines.is_array()) {
    throw ConfigError("config field 'evaluate.baselines' must be an array of vanilla, cluster");
  }
  if (!baselines.empty()) {
    if (train_path.empty()) {
      throw ConfigError("evaluate.baselines needs --train");
    }
    const Input tr = load(train_path, "train");
    const Dataset train = parse_dataset(tr, ld.catalog, "train");
    inputs["train"] = tr.hash;
    const double kappa = positive(cfg, "kappa");
    const EmConfig ec = em_config(cfg, seed_of(cfg));
    for (std::size_t i = 0; i < baselines.size(); ++i) {
      const std::string b = choice(json{{"baseline", baselines[i]}}, "baseline", {"vanilla", "cluster"});
      if (b == "vanilla") {
        const ScoreTable t = run_vanilla_dpo(train, ld.catalog, kappa, ec.mstep, ec.max_iters);
        rows.push_back(evaluate_ensemble("vanilla", ScoreEnsemble{{t}, Vector::Ones(1), ld.catalog.hash()}, groups));
      } else {
        rows.push_back(evaluate_ensemble(
            "cluster",
            run_cluster_dpo(train, ld.catalog, count(cfg, "evaluate.cluster_K", 1), kappa, seed_of(cfg), ec.mstep),
            groups));
      }
    }
  }
  if (rows.empty()) {
    throw ConfigError("evaluate needs at least one --ensemble or a configured baseline");
  }
  Outputs out{c.out};
  out.write("metrics.csv", metrics_csv(rows));
  write_manifest(out, "evaluate", cfg, inputs);
}

void cmd_sweep(const Common& c, const DataInputs& in, const std::string& eval_path) {
  const json cfg = load_config(c);
  const LoadedData ld = load_data(in);
  std::optional<Dataset> eval;
  json inputs = {{"catalog", ld.catalog.hash()}, {"dataset", ld.dataset_hash}};
  std::size_t G = 0;
  if (!eval_path.empty()) {
    const Input ev = load(eval_path, "eval");
    eval = parse_dataset(ev, ld.catalog, "eval");
    inputs["eval"] = ev.hash;
    G = infer_groups(*eval, count(cfg, "evaluate.num_groups", 0));
  }
  std::vector<std::string> header = {"K", "loglik", "objective", "iterations"};
  for (std::size_t g = 1; g <= G; ++g) header.push_back("margin_group_" + std::to_string(g));
  CsvWriter csv(header);
  for (std::size_t K : counts(cfg, "sweep.Ks", 1)) {
    EmConfig ec = em_config(cfg, seed_of(cfg));
    ec.K = K;
    const EmState s = run_em(ld.dataset, ld.catalog, ec);
    csv.field(K).field(s.loglik).field(s.objective).field(s.iteration);
    if (eval) {
      for (const auto& grp : split_by_true_type(*eval, G)) csv.field(max_mean_reward_margin(s.ensemble, grp));
    }
    csv.end_row();
  }
  Outputs out{c.out};
  out.write("sweep.csv", csv.str());
  write_manifest(out, "sweep-k", cfg, inputs);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Heterogeneous preference alignment experiments", "hetpref"};
  app.require_subcommand(1);
  Common common;
  DataInputs data;
  std::string ensemble, train, eval;
  std::vector<std::string> ensembles;
  long long seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--out", common.out, "output directory")->required();
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--catalog", data.catalog, "catalog JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--dataset", data.dataset, "dataset JSON lines")->required()->check(CLI::ExistingFile);
  };
  CLI::App* sim = app.add_subcommand("simulate", "simulate a preference dataset");
  add_common(sim);
  CLI::App* em = app.add_subcommand("emdpo", "fit a policy ensemble by EM-DPO");
  add_common(em);
  add_data(em);
  CLI::App* agg = app.add_subcommand("aggregate", "combine an ensemble into one policy");
  add_common(agg);
  add_data(agg);
  agg->add_option("--ensemble", ensemble, "ensemble JSON")->required()->check(CLI::ExistingFile);
  CLI::App* ident = app.add_subcommand("identify", "binary vs ternary identifiability checks");
  add_common(ident);
  CLI::App* ev = app.add_subcommand("evaluate", "per-group margins and accuracies");
  add_common(ev);
  add_data(ev);
  ev->add_option("--ensemble", ensembles, "NAME=PATH, repeatable");
  ev->add_option("--train", train, "training dataset for baselines")->check(CLI::ExistingFile);
  CLI::App* sweep = app.add_subcommand("sweep-k", "EM-DPO over a range of K");
  add_common(sweep);
  add_data(sweep);
  sweep->add_option("--eval", eval, "labelled binary dataset for per-group margins")->check(CLI::ExistingFile);

  std::vector<std::string> storage = {"hetpref"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->count("--seed") > 0) common.seed = seed;
  }

  try {
    if (sim->parsed()) cmd_simulate(common);
    if (em->parsed()) cmd_emdpo(common, data);
    if (agg->parsed()) cmd_aggregate(common, data, ensemble);
    if (ident->parsed()) cmd_identify(common);
    if (ev->parsed()) cmd_evaluate(common, data, ensembles, train);
    if (sweep->parsed()) cmd_sweep(common, data, eval);
  } catch (const ConfigError& e) {
    std::cerr << "hetpref: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const HashMismatchError& e) {
    std::cerr << "hetpref: " << e.what() << "\n  expected hash: " << e.expected() << "\n  actual hash:   "
              << e.actual() << "\n";
    return kExitHashMismatch;
  } catch (const ConvergenceError& e) {
    std::cerr << "hetpref: convergence failure: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const std::exception& e) {
    std::cerr << "hetpref: error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace hetpref
