#pragma once

// JSON configuration files: model specification, chain settings, simulation
// designs and replicate studies. Unknown keys are rejected so that typos do
// not silently fall back to defaults.

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "zinbhmm/errors.hpp"
#include "zinbhmm/mcmc.hpp"
#include "zinbhmm/simulation.hpp"
#include "zinbhmm/types.hpp"

namespace zinbhmm::io {

using Json = nlohmann::ordered_json;

inline Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // nlohmann reports "parse error at line L, column C: ..."
    throw ConfigError(origin + ": " + e.what());
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json load_json(const std::string& path) { return parse_json_text(read_text_file(path), path); }

/// Typed, path-aware access to one JSON object.
class ObjectReader {
 public:
  ObjectReader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_number()) throw ConfigError(where(key) + "expected a number");
    return v.get<double>();
  }

  long long integer(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_number_integer() && !v.is_number_unsigned())
      throw ConfigError(where(key) + "expected an integer");
    return v.get<long long>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0)
      return static_cast<std::uint64_t>(v.get<long long>());
    throw ConfigError(where(key) + "expected a non-negative integer");
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_string()) throw ConfigError(where(key) + "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_array()) throw ConfigError(where(key) + "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(where(key) + "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::optional<ObjectReader> object(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return ObjectReader(obj_.at(key), child(key));
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  /// Throws on any key that was never asked for.
  void finish() const {
    for (const auto& item : obj_.items())
      if (!seen_.count(item.key())) throw ConfigError(where(item.key()) + "unknown field");
  }

 private:
  std::string where(const std::string& key = {}) const {
    const std::string p = key.empty() ? path_ : child(key);
    return p.empty() ? std::string("config: ") : "field '" + p + "': ";
  }

  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Model specification

inline void read_beta_prior(std::optional<ObjectReader> r, BetaPrior& out) {
  if (!r) return;
  out.a = r->number("a", out.a);
  out.b = r->number("b", out.b);
  r->finish();
}
inline void read_slab(std::optional<ObjectReader> r, SlabPrior& out) {
  if (!r) return;
  out.mean = r->number("mean", out.mean);
  out.variance = r->number("variance", out.variance);
  r->finish();
}

inline void read_priors(ObjectReader& r, HyperPriors& pri) {
  read_beta_prior(r.object("zero_inflation"), pri.zero_inflation);
  if (auto d = r.object("dispersion")) {
    pri.dispersion.shape = d->number("shape", pri.dispersion.shape);
    pri.dispersion.rate = d->number("rate", pri.dispersion.rate);
    d->finish();
  }
  if (auto s = r.object("initial_state")) {
    pri.initial_concentration = s->numbers("concentration", pri.initial_concentration);
    s->finish();
  }
  read_slab(r.object("transition_slab"), pri.transition_slab);
  read_slab(r.object("emission_slab"), pri.emission_slab);
  read_beta_prior(r.object("transition_inclusion"), pri.transition_inclusion);
  read_beta_prior(r.object("emission_inclusion"), pri.emission_inclusion);
  r.finish();
}

/// `baseline_state` in the file is 1-based and defaults to the last state.
inline HmmSpec model_spec_from_json(const Json& j, HmmSpec base = {}) {
  ObjectReader r(j, "");
  const int old_states = base.n_states;
  base.n_states = static_cast<int>(r.integer("states", base.n_states));
  if (r.has("baseline_state"))
    base.baseline_state = static_cast<int>(r.integer("baseline_state", 0)) - 1;
  else if (base.n_states != old_states)
    base.baseline_state = base.n_states - 1;
  base.include_intercept = r.boolean("include_intercept", base.include_intercept);
  if (auto p = r.object("priors")) read_priors(*p, base.priors);
  r.finish();
  return base;
}

inline Json to_json(const BetaPrior& b) { return Json{{"a", b.a}, {"b", b.b}}; }
inline Json to_json(const SlabPrior& s) { return Json{{"mean", s.mean}, {"variance", s.variance}}; }

inline Json to_json(const HmmSpec& spec) {
  const auto& p = spec.priors;
  Json priors{{"zero_inflation", to_json(p.zero_inflation)},
              {"dispersion", Json{{"shape", p.dispersion.shape}, {"rate", p.dispersion.rate}}}};
  // an empty concentration means Dirichlet(1, ..., 1) for whatever K is used
  if (!p.initial_concentration.empty())
    priors["initial_state"] = Json{{"concentration", p.initial_concentration}};
  priors.update(Json{{"transition_slab", to_json(p.transition_slab)},
              {"emission_slab", to_json(p.emission_slab)},
              {"transition_inclusion", to_json(p.transition_inclusion)},
              {"emission_inclusion", to_json(p.emission_inclusion)}});
  return Json{{"states", spec.n_states},
              {"baseline_state", spec.baseline_state + 1},
              {"include_intercept", spec.include_intercept},
              {"priors", priors}};
}

// ---------------------------------------------------------------------------
// Chain settings

inline ChainConfig chain_config_from_json(const Json& j, ChainConfig base = {}) {
  ObjectReader r(j, "");
  base.iterations = static_cast<int>(r.integer("iterations", base.iterations));
  base.burn_in = static_cast<int>(r.integer("burn_in", base.burn_in));
  base.thin = static_cast<int>(r.integer("thin", base.thin));
  base.seed = r.unsigned_integer("seed", base.seed);
  base.homogeneous = r.boolean("homogeneous", base.homogeneous);
  base.update_selection = r.boolean("update_selection", base.update_selection);
  base.relabel = r.boolean("relabel", base.relabel);
  base.xi_storage_budget = r.unsigned_integer("xi_storage_budget", base.xi_storage_budget);
  r.finish();
  return base;
}

inline Json to_json(const ChainConfig& c) {
  return Json{{"iterations", c.iterations},
              {"burn_in", c.burn_in},
              {"thin", c.thin},
              {"seed", c.seed},
              {"homogeneous", c.homogeneous},
              {"update_selection", c.update_selection},
              {"relabel", c.relabel},
              {"xi_storage_budget", c.xi_storage_budget}};
}

// ---------------------------------------------------------------------------
// Simulation designs

struct SimulationConfig {
  std::string preset = "paper_default";
  int n_patients = 100;
  int min_days = 100;
  int max_days = 110;
  double effect_scale = 1.0;
  int noise_covariates = 0;
  std::optional<std::vector<double>> r, p_zero, pi;
  std::uint64_t seed = 1;
  int replicates = 1;

  SimulationSpec build() const {
    SimulationSpec s;
    if (preset == "paper_default") {
      s = paper_default_spec();
    } else if (preset == "poisson") {
      s = poisson_default_spec();
    } else {
      throw ConfigError("field 'preset': unknown preset '" + preset +
                        "' (expected paper_default or poisson)");
    }
    s.n_patients = n_patients;
    s.min_days = min_days;
    s.max_days = max_days;
    auto assign = [&](const std::optional<std::vector<double>>& v, Eigen::VectorXd& target,
                      const char* name) {
      if (!v) return;
      if (static_cast<Eigen::Index>(v->size()) != target.size())
        throw ConfigError(std::string("field '") + name + "': expected " +
                          std::to_string(target.size()) + " values");
      target = Eigen::Map<const Eigen::VectorXd>(v->data(), target.size());
    };
    assign(r, s.truth.r, "r");
    assign(p_zero, s.truth.p_zero, "p_zero");
    assign(pi, s.truth.pi, "pi");
    if (effect_scale != 1.0) s = scale_effects(std::move(s), effect_scale);
    s = add_noise_covariates(std::move(s), noise_covariates);
    s.validate();
    return s;
  }
};

inline void read_simulation_fields(ObjectReader& r, SimulationConfig& c) {
  c.preset = r.string("preset", c.preset);
  c.n_patients = static_cast<int>(r.integer("patients", c.n_patients));
  c.min_days = static_cast<int>(r.integer("min_days", c.min_days));
  c.max_days = static_cast<int>(r.integer("max_days", c.max_days));
  c.effect_scale = r.number("effect_scale", c.effect_scale);
  c.noise_covariates = static_cast<int>(r.integer("noise_covariates", c.noise_covariates));
  if (r.has("r")) c.r = r.numbers("r", {});
  if (r.has("p_zero")) c.p_zero = r.numbers("p_zero", {});
  if (r.has("pi")) c.pi = r.numbers("pi", {});
}

inline SimulationConfig simulation_config_from_json(const Json& j) {
  ObjectReader r(j, "");
  SimulationConfig c;
  read_simulation_fields(r, c);
  c.seed = r.unsigned_integer("seed", c.seed);
  c.replicates = static_cast<int>(r.integer("replicates", c.replicates));
  r.finish();
  if (c.replicates < 1) throw ConfigError("field 'replicates': must be at least 1");
  return c;
}

inline Json to_json(const SimulationConfig& c) {
  Json j{{"preset", c.preset},          {"patients", c.n_patients},
         {"min_days", c.min_days},      {"max_days", c.max_days},
         {"effect_scale", c.effect_scale}, {"noise_covariates", c.noise_covariates}};
  if (c.r) j["r"] = *c.r;
  if (c.p_zero) j["p_zero"] = *c.p_zero;
  if (c.pi) j["pi"] = *c.pi;
  j["seed"] = c.seed;
  j["replicates"] = c.replicates;
  return j;
}

// ---------------------------------------------------------------------------
// Replicate studies

struct Scenario {
  std::string name;
  SimulationConfig simulation;
  HmmSpec model;
  bool homogeneous = false;
};

struct StudyConfig {
  std::uint64_t seed = 1;
  int replicates = 20;
  ChainConfig chain;
  std::vector<Scenario> scenarios;
};

/// A study file holds shared "simulation", "model" and "chain" sections and a
/// list of scenarios. Each scenario may override any simulation field, the
/// model (including partial prior sections) and the homogeneous flag.
inline StudyConfig study_config_from_json(const Json& j) {
  ObjectReader r(j, "");
  StudyConfig c;
  c.seed = r.unsigned_integer("seed", c.seed);
  c.replicates = static_cast<int>(r.integer("replicates", c.replicates));
  if (c.replicates < 1) throw ConfigError("field 'replicates': must be at least 1");
  SimulationConfig shared_sim;
  if (auto s = r.object("simulation")) {
    read_simulation_fields(*s, shared_sim);
    s->finish();
  }
  const Json empty = Json::object();
  const Json& shared_model = r.has("model") ? r.raw("model") : empty;
  const HmmSpec base_model = model_spec_from_json(shared_model);
  if (r.has("chain")) c.chain = chain_config_from_json(r.raw("chain"));
  if (!r.has("scenarios")) {
    c.scenarios.push_back({"default", shared_sim, base_model, c.chain.homogeneous});
  } else {
    const Json& list = r.raw("scenarios");
    if (!list.is_array() || list.empty())
      throw ConfigError("field 'scenarios': expected a non-empty array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      ObjectReader s(list[i], "scenarios[" + std::to_string(i) + "]");
      Scenario sc;
      sc.name = s.string("name", "scenario_" + std::to_string(i + 1));
      sc.simulation = shared_sim;
      if (auto sim = s.object("simulation")) {
        read_simulation_fields(*sim, sc.simulation);
        sim->finish();
      }
      sc.model = s.has("model") ? model_spec_from_json(s.raw("model"), base_model) : base_model;
      sc.homogeneous = s.boolean("homogeneous", c.chain.homogeneous);
      s.finish();
      c.scenarios.push_back(std::move(sc));
    }
  }
  r.finish();
  return c;
}

}  // namespace zinbhmm::io
