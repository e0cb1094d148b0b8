#pragma once

// Command implementations behind the zinbhmm executable: simulate, fit,
// replicate-study and report. Each command resolves its full configuration
// into JSON first; that JSON is what the run manifest stores and what a
// replay reads back.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "zinbhmm/io/chain_file.hpp"
#include "zinbhmm/io/config.hpp"
#include "zinbhmm/io/dataset.hpp"
#include "zinbhmm/io/manifest.hpp"
#include "zinbhmm/io/report.hpp"
#include "zinbhmm/mcmc.hpp"
#include "zinbhmm/parallel.hpp"
#include "zinbhmm/posterior.hpp"
#include "zinbhmm/scoring.hpp"
#include "zinbhmm/simulation.hpp"

namespace zinbhmm::cli {

namespace fs = std::filesystem;
using io::Json;

inline void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Parses "a:b" (inclusive) or a comma separated list.
inline std::vector<int> parse_k_grid(const std::string& text) {
  std::vector<int> out;
  auto to_int = [&](const std::string& s) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != s.size()) throw ConfigError("--k-grid: cannot parse '" + text + "'");
    return v;
  };
  if (const auto colon = text.find(':'); colon != std::string::npos) {
    const int lo = to_int(text.substr(0, colon));
    const int hi = to_int(text.substr(colon + 1));
    if (lo > hi) throw ConfigError("--k-grid: empty range '" + text + "'");
    for (int k = lo; k <= hi; ++k) out.push_back(k);
  } else {
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ',');) out.push_back(to_int(part));
  }
  for (int k : out)
    if (k < 1 || k > 255) throw ConfigError("--k-grid: state counts must be in 1..255");
  return out;
}

// ---------------------------------------------------------------------------
// fit

inline std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return io::hex64(io::fnv1a64(ss.str()));
}

struct FitRequest {
  std::string data_path;
  std::optional<std::string> truth_path;
  HmmSpec model;
  ChainConfig chain;
  /// One fit per entry; empty means a single fit with model.n_states.
  std::vector<int> k_grid;
  /// Baseline (0-based) applied to every grid fit; otherwise the last state.
  std::optional<int> grid_baseline;
  bool mae_unconditional = true;
  bool progress = false;
  int threads = 1;
};

inline Json to_json(const FitRequest& r) {
  return Json{{"data", r.data_path},
              {"data_hash", file_hash(r.data_path)},
              {"truth", r.truth_path ? Json(*r.truth_path) : Json(nullptr)},
              {"model", io::to_json(r.model)},
              {"chain", io::to_json(r.chain)},
              {"k_grid", r.k_grid},
              {"grid_baseline", r.grid_baseline ? Json(*r.grid_baseline + 1) : Json(nullptr)},
              {"mae", r.mae_unconditional ? "unconditional" : "conditional"},
              {"progress", r.progress}};
}

inline FitRequest fit_request_from_json(const Json& j) {
  io::ObjectReader r(j, "config");
  FitRequest f;
  f.data_path = r.string("data", "");
  const std::string hash = r.string("data_hash", "");
  if (r.has("truth") && !r.raw("truth").is_null()) f.truth_path = r.string("truth", "");
  if (r.has("model")) f.model = io::model_spec_from_json(r.raw("model"));
  if (r.has("chain")) f.chain = io::chain_config_from_json(r.raw("chain"));
  if (r.has("k_grid")) {
    for (const auto& v : r.raw("k_grid")) f.k_grid.push_back(v.get<int>());
  }
  if (r.has("grid_baseline") && !r.raw("grid_baseline").is_null())
    f.grid_baseline = static_cast<int>(r.integer("grid_baseline", 1)) - 1;
  f.mae_unconditional = r.string("mae", "unconditional") != "conditional";
  f.progress = r.boolean("progress", false);
  r.finish();
  if (f.data_path.empty()) throw ConfigError("manifest config has no data path");
  if (!hash.empty() && hash != file_hash(f.data_path))
    throw DataError(f.data_path + " changed since the manifest was written");
  return f;
}

struct FitOutcome {
  int n_states = 0;
  fs::path report_path;
  fs::path chain_path;
  DicResult dic;
  double mae = 0.0;
  std::optional<TruthScores> scores;
};

/// Data as the model sees it: with a leading intercept when requested or
/// when fitting the homogeneous model.
inline PanelDataset prepare_data(const PanelDataset& data, const HmmSpec& spec,
                                 const ChainConfig& chain) {
  return spec.include_intercept || chain.homogeneous ? with_intercept(data) : data;
}

/// Fits one model and writes chain + report into `dir`.
inline FitOutcome fit_one(const PanelDataset& data, const HmmSpec& spec, const ChainConfig& chain,
                          const std::optional<GroundTruth>& truth, bool mae_unconditional,
                          bool progress, const fs::path& dir) {
  ensure_directory(dir);
  std::ofstream progress_out;
  RunOptions options;
  if (progress) {
    progress_out.open(dir / "progress.jsonl", std::ios::binary);
    options.progress = &progress_out;
  }
  const ChainSamples samples = run_chain(data, spec, chain, options);
  const PosteriorReport report = build_report(samples, data, spec, mae_unconditional);
  FitOutcome out;
  out.n_states = spec.n_states;
  out.chain_path = dir / "chain.bin";
  out.report_path = dir / "report.json";
  if (truth) out.scores = score_against_truth(report, *truth);
  io::write_chain(out.chain_path.string(), samples);
  io::write_json(out.report_path.string(), io::report_to_json(report, out.scores));
  out.dic = report.dic_result;
  out.mae = report.mae;
  return out;
}

inline std::vector<FitOutcome> run_fit(const FitRequest& req, const fs::path& out_dir,
                                       std::ostream& log) {
  io::RunManifest manifest;
  manifest.command = "fit";
  manifest.config = to_json(req);
  manifest.seed = req.chain.seed;
  manifest.started_at = io::utc_timestamp();

  const PanelDataset raw = io::read_dataset(req.data_path);
  std::optional<GroundTruth> truth;
  if (req.truth_path) truth = io::read_ground_truth(*req.truth_path);
  req.chain.validate();

  std::vector<HmmSpec> specs;
  if (req.k_grid.empty()) {
    specs.push_back(req.model);
  } else {
    for (int k : req.k_grid) {
      HmmSpec s = req.model;
      s.n_states = k;
      s.baseline_state = req.grid_baseline ? *req.grid_baseline : k - 1;
      specs.push_back(s);
    }
  }
  for (const auto& s : specs) s.validate();
  const PanelDataset data = prepare_data(raw, req.model, req.chain);
  ensure_directory(out_dir);

  std::vector<FitOutcome> outcomes(specs.size());
  const bool grid = !req.k_grid.empty();
  const auto errors = parallel_for(specs.size(), req.threads, [&](std::size_t i) {
    const fs::path dir = grid ? out_dir / ("k" + std::to_string(specs[i].n_states)) : out_dir;
    outcomes[i] = fit_one(data, specs[i], req.chain, truth, req.mae_unconditional, req.progress, dir);
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (const auto& o : outcomes) {
    log << "K=" << o.n_states << "  DIC " << fixed(o.dic.dic, 2) << "  p_DIC "
        << fixed(o.dic.p_dic, 2) << "  MAE " << fixed(o.mae) << "\n";
    if (o.dic.negative_p_dic) log << "  warning: negative p_DIC for K=" << o.n_states << "\n";
    if (truth && !o.scores)
      log << "  truth not scored: state count or baseline differs from the fit\n";
    if (o.scores)
      log << "  states: accuracy " << fixed(o.scores->states.accuracy) << "  F1 "
          << fixed(o.scores->states.f1) << "\n";
    manifest.outputs.push_back(o.chain_path.string());
    manifest.outputs.push_back(o.report_path.string());
  }
  if (grid) {
    Json rows = Json::array();
    std::size_t best = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      rows.push_back(Json{{"states", outcomes[i].n_states},
                          {"dic", outcomes[i].dic.dic},
                          {"p_dic", outcomes[i].dic.p_dic},
                          {"mean_absolute_error", outcomes[i].mae}});
      if (outcomes[i].dic.dic < outcomes[best].dic.dic) best = i;
    }
    const fs::path summary = out_dir / "k_grid.json";
    io::write_json(summary.string(), Json{{"fits", rows}, {"best_states", outcomes[best].n_states}});
    manifest.outputs.push_back(summary.string());
    log << "lowest DIC at K=" << outcomes[best].n_states << "\n";
  }
  manifest.finished_at = io::utc_timestamp();
  io::write_manifest((out_dir / "manifest.json").string(), manifest);
  return outcomes;
}

// ---------------------------------------------------------------------------
// report

struct ReportRequest {
  std::string chain_path;
  std::string data_path;
  std::optional<std::string> truth_path;
  bool mae_unconditional = true;
};

inline PosteriorReport run_report(const ReportRequest& req, const fs::path& out_path,
                                  std::ostream& log) {
  const ChainSamples samples = io::read_chain(req.chain_path);
  PanelDataset data = io::read_dataset(req.data_path);
  if (!samples.covariate_names.empty() && samples.covariate_names.front() == kInterceptName &&
      !data.has_intercept())
    data = with_intercept(data);
  if (data.n_covariates() != samples.n_covariates)
    throw DataError("chain has " + std::to_string(samples.n_covariates) +
                    " covariates but the dataset has " + std::to_string(data.n_covariates()));
  if (samples.n_days() != data.n_days())
    throw DataError("chain covers " + std::to_string(samples.n_days()) +
                    " patient-days but the dataset has " + std::to_string(data.n_days()));
  HmmSpec spec;
  spec.n_states = samples.n_states;
  spec.baseline_state = samples.baseline_state;
  const PosteriorReport report = build_report(samples, data, spec, req.mae_unconditional);
  std::optional<TruthScores> scores;
  if (req.truth_path) scores = score_against_truth(report, io::read_ground_truth(*req.truth_path));
  if (out_path.has_parent_path()) ensure_directory(out_path.parent_path());
  io::write_json(out_path.string(), io::report_to_json(report, scores));
  log << "K=" << report.n_states << "  draws " << report.n_draws << "  DIC "
      << fixed(report.dic_result.dic, 2) << "  MAE " << fixed(report.mae) << "\n";
  return report;
}

// ---------------------------------------------------------------------------
// simulate

inline void run_simulate(const io::SimulationConfig& config, const fs::path& out_dir,
                         std::ostream& log) {
  io::RunManifest manifest;
  manifest.command = "simulate";
  manifest.config = io::to_json(config);
  manifest.seed = config.seed;
  manifest.started_at = io::utc_timestamp();
  const SimulationSpec spec = config.build();
  ensure_directory(out_dir);
  for (int rep = 0; rep < config.replicates; ++rep) {
    RngHandle rng(config.seed, static_cast<std::uint64_t>(rep));
    const SimulatedData sim = generate_dataset(spec, rng);
    char name[32];
    std::snprintf(name, sizeof name, "replicate_%03d", rep + 1);
    const fs::path dir = config.replicates == 1 ? out_dir : out_dir / name;
    ensure_directory(dir);
    io::write_dataset((dir / "data.txt").string(), sim.data);
    io::write_json((dir / "truth.json").string(), io::ground_truth_to_json(sim.truth, sim.data));
    manifest.outputs.push_back((dir / "data.txt").string());
    manifest.outputs.push_back((dir / "truth.json").string());

    std::vector<long> per_state(static_cast<std::size_t>(spec.n_states()), 0);
    long zeros = 0;
    for (std::size_t g = 0; g < sim.data.n_days(); ++g) {
      ++per_state[sim.truth.xi[g]];
      zeros += sim.data.counts[g] == 0;
    }
    log << (config.replicates == 1 ? std::string("dataset") : std::string(name)) << ": "
        << sim.data.n_patients() << " patients, " << sim.data.n_days() << " patient-days, "
        << sim.data.n_covariates() << " covariates, zero fraction "
        << fixed(static_cast<double>(zeros) / std::max<std::size_t>(sim.data.n_days(), 1))
        << ", days per state";
    for (long c : per_state) log << ' ' << c;
    log << "\n";
  }
  manifest.finished_at = io::utc_timestamp();
  io::write_manifest((out_dir / "manifest.json").string(), manifest);
}

// ---------------------------------------------------------------------------
// replicate-study

struct ReplicateResult {
  std::string scenario;
  int replicate = 0;
  bool ok = false;
  std::string error;
  std::optional<TruthScores> scores;
  DicResult dic;
  double mae = 0.0;
  double seconds = 0.0;
};

inline Json to_json(const io::StudyConfig& c) {
  Json scenarios = Json::array();
  for (const auto& s : c.scenarios) {
    Json sim = io::to_json(s.simulation);
    sim.erase("seed");
    sim.erase("replicates");
    scenarios.push_back(Json{{"name", s.name},
                             {"simulation", sim},
                             {"model", io::to_json(s.model)},
                             {"homogeneous", s.homogeneous}});
  }
  return Json{{"seed", c.seed},
              {"replicates", c.replicates},
              {"chain", io::to_json(c.chain)},
              {"scenarios", scenarios}};
}

/// Seed of the chain for one (scenario, replicate) pair.
inline std::uint64_t replicate_chain_seed(std::uint64_t study_seed, std::size_t scenario,
                                          int replicate) {
  return io::fnv1a64(std::to_string(study_seed) + "/" + std::to_string(scenario) + "/" +
                     std::to_string(replicate));
}

inline ReplicateResult run_replicate(const io::StudyConfig& config, std::size_t scenario_index,
                                     int replicate) {
  const auto& sc = config.scenarios[scenario_index];
  ReplicateResult res;
  res.scenario = sc.name;
  res.replicate = replicate + 1;
  const auto t0 = std::chrono::steady_clock::now();
  const SimulationSpec sim_spec = sc.simulation.build();
  // replicate datasets are shared by scenarios with the same design
  RngHandle data_rng(config.seed, static_cast<std::uint64_t>(replicate));
  const SimulatedData sim = generate_dataset(sim_spec, data_rng);
  ChainConfig chain = config.chain;
  chain.homogeneous = sc.homogeneous;
  chain.seed = replicate_chain_seed(config.seed, scenario_index, replicate);
  const PanelDataset data = prepare_data(sim.data, sc.model, chain);
  const ChainSamples samples = run_chain(data, sc.model, chain);
  const PosteriorReport report = build_report(samples, data, sc.model);
  res.scores = score_against_truth(report, sim.truth);
  res.dic = report.dic_result;
  res.mae = report.mae;
  res.ok = true;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

namespace detail {

inline void add_into(MacroMetrics& a, const MacroMetrics& b, double w) {
  a.accuracy += w * b.accuracy;
  a.precision += w * b.precision;
  a.sensitivity += w * b.sensitivity;
  a.specificity += w * b.specificity;
  a.f1 += w * b.f1;
}
// n_selected is averaged separately since it is an integer field
inline void add_into(SelectionMetrics& a, const SelectionMetrics& b, double w) {
  a.fnr += w * b.fnr;
  a.fpr += w * b.fpr;
  a.precision += w * b.precision;
  a.sensitivity += w * b.sensitivity;
  a.specificity += w * b.specificity;
  a.f1 += w * b.f1;
}
inline void add_into(BlockScores& a, const BlockScores& b, double w) {
  add_into(a.transition, b.transition, w);
  add_into(a.emission, b.emission, w);
}

}  // namespace detail

inline Json to_json(const ReplicateResult& r) {
  Json j{{"scenario", r.scenario}, {"replicate", r.replicate}, {"ok", r.ok}};
  if (!r.ok) {
    j["error"] = r.error;
    return j;
  }
  j["dic"] = r.dic.dic;
  j["p_dic"] = r.dic.p_dic;
  j["mean_absolute_error"] = r.mae;
  j["seconds"] = r.seconds;
  if (r.scores) j["truth_scores"] = io::to_json(*r.scores);
  return j;
}

inline std::vector<ReplicateResult> run_study(const io::StudyConfig& config, int threads,
                                              const fs::path& out_dir, std::ostream& log) {
  io::RunManifest manifest;
  manifest.command = "replicate-study";
  manifest.config = to_json(config);
  manifest.seed = config.seed;
  manifest.started_at = io::utc_timestamp();
  config.chain.validate();
  for (const auto& sc : config.scenarios) {
    sc.model.validate();
    const SimulationSpec s = sc.simulation.build();
    if (sc.model.n_states == s.n_states() && sc.model.baseline_state != s.baseline_state)
      throw ConfigError("scenario '" + sc.name + "': model baseline_state " +
                        std::to_string(sc.model.baseline_state + 1) +
                        " differs from the simulation design's baseline " +
                        std::to_string(s.baseline_state + 1));
  }
  ensure_directory(out_dir);

  const std::size_t n_tasks = config.scenarios.size() * static_cast<std::size_t>(config.replicates);
  std::vector<ReplicateResult> results(n_tasks);
  std::mutex log_mutex;
  const auto errors = parallel_for(n_tasks, threads, [&](std::size_t t) {
    const std::size_t s = t / static_cast<std::size_t>(config.replicates);
    const int rep = static_cast<int>(t % static_cast<std::size_t>(config.replicates));
    results[t].scenario = config.scenarios[s].name;
    results[t].replicate = rep + 1;
    results[t] = run_replicate(config, s, rep);
    std::lock_guard lock(log_mutex);
    log << config.scenarios[s].name << " replicate " << rep + 1 << " done in "
        << fixed(results[t].seconds, 1) << " s\n";
  });
  for (std::size_t t = 0; t < n_tasks; ++t) {
    if (!errors[t]) continue;
    try {
      std::rethrow_exception(errors[t]);
    } catch (const std::exception& e) {
      results[t].ok = false;
      results[t].error = e.what();
      log << results[t].scenario << " replicate " << results[t].replicate
          << " failed: " << e.what() << "\n";
    }
  }

  // aggregate per scenario over completed replicates
  Json summaries = Json::array();
  std::ostringstream latent, selection;
  latent << "scenario\ttransition_prior_pct\temission_prior_pct\taccuracy\tprecision\tsensitivity"
            "\tspecificity\tf1\tdic\tmae\tcompleted\tfailed\n";
  selection << "scenario\tmethod\tblock\tprior_pct\tselected\tfnr\tfpr\tprecision\tsensitivity"
               "\tspecificity\tf1\tscored\n";
  for (std::size_t s = 0; s < config.scenarios.size(); ++s) {
    const auto& sc = config.scenarios[s];
    int completed = 0, failed = 0, scored = 0;
    double dic = 0, mae = 0;
    TruthScores mean{};
    double selected[4][2] = {};
    for (int rep = 0; rep < config.replicates; ++rep) {
      const auto& r = results[s * static_cast<std::size_t>(config.replicates) + rep];
      if (!r.ok) {
        ++failed;
        continue;
      }
      ++completed;
      dic += r.dic.dic;
      mae += r.mae;
      if (!r.scores) continue;
      ++scored;
      detail::add_into(mean.states, r.scores->states, 1.0);
      const BlockScores* blocks[4] = {&r.scores->median, &r.scores->most_probable, &r.scores->aic,
                                      &r.scores->bic};
      BlockScores* targets[4] = {&mean.median, &mean.most_probable, &mean.aic, &mean.bic};
      for (int m = 0; m < 4; ++m) {
        detail::add_into(*targets[m], *blocks[m], 1.0);
        selected[m][0] += blocks[m]->transition.n_selected;
        selected[m][1] += blocks[m]->emission.n_selected;
      }
    }
    const double wc = completed > 0 ? 1.0 / completed : 0.0;
    const double ws = scored > 0 ? 1.0 / scored : 0.0;
    dic *= wc;
    mae *= wc;
    MacroMetrics states{};
    detail::add_into(states, mean.states, ws);
    const auto& pri = sc.model.priors;
    const double t_pct =
        100.0 * pri.transition_inclusion.a / (pri.transition_inclusion.a + pri.transition_inclusion.b);
    const double e_pct =
        100.0 * pri.emission_inclusion.a / (pri.emission_inclusion.a + pri.emission_inclusion.b);
    latent << sc.name << '\t' << fixed(t_pct, 1) << '\t' << fixed(e_pct, 1) << '\t'
           << fixed(states.accuracy) << '\t' << fixed(states.precision) << '\t'
           << fixed(states.sensitivity) << '\t' << fixed(states.specificity) << '\t'
           << fixed(states.f1) << '\t' << fixed(dic, 2) << '\t' << fixed(mae) << '\t' << completed
           << '\t' << failed << '\n';

    Json methods = Json::object();
    const char* names[4] = {"median_model", "most_probable_model", "aic", "bic"};
    const BlockScores* sums[4] = {&mean.median, &mean.most_probable, &mean.aic, &mean.bic};
    for (int m = 0; m < 4; ++m) {
      Json blocks = Json::object();
      for (int b = 0; b < 2; ++b) {
        SelectionMetrics avg{};
        detail::add_into(avg, b == 0 ? sums[m]->transition : sums[m]->emission, ws);
        const double n_sel = selected[m][b] * ws;
        Json mj = io::to_json(avg);
        mj["selected"] = n_sel;
        blocks[b == 0 ? "transition" : "emission"] = mj;
        selection << sc.name << '\t' << names[m] << '\t' << (b == 0 ? "transition" : "emission")
                  << '\t' << fixed(b == 0 ? t_pct : e_pct, 1) << '\t' << fixed(n_sel, 2) << '\t'
                  << fixed(avg.fnr) << '\t' << fixed(avg.fpr) << '\t' << fixed(avg.precision)
                  << '\t' << fixed(avg.sensitivity) << '\t' << fixed(avg.specificity) << '\t'
                  << fixed(avg.f1) << '\t' << scored << '\n';
      }
      methods[names[m]] = blocks;
    }
    summaries.push_back(Json{{"scenario", sc.name},
                             {"completed", completed},
                             {"failed", failed},
                             {"scored", scored},
                             {"mean_dic", dic},
                             {"mean_absolute_error", mae},
                             {"states", io::to_json(states)},
                             {"selection", methods}});
  }

  Json rows = Json::array();
  for (const auto& r : results) rows.push_back(to_json(r));
  const fs::path study_json = out_dir / "study.json";
  io::write_json(study_json.string(), Json{{"summaries", summaries}, {"replicates", rows}});
  const fs::path latent_tsv = out_dir / "latent_states.tsv";
  const fs::path selection_tsv = out_dir / "selection.tsv";
  for (const auto& [path, text] : {std::pair{latent_tsv, latent.str()}, {selection_tsv, selection.str()}}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
  }
  manifest.outputs = {study_json.string(), latent_tsv.string(), selection_tsv.string()};
  manifest.finished_at = io::utc_timestamp();
  io::write_manifest((out_dir / "manifest.json").string(), manifest);
  log << latent.str();
  return results;
}

}  // namespace zinbhmm::cli
