// zinbhmm: simulate, fit, replicate-study and report.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numerical failure, 1 anything else.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "zinbhmm/commands.hpp"

namespace {

using namespace zinbhmm;
namespace fs = std::filesystem;

struct ChainFlags {
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<int> burn_in;
  std::optional<int> thin;

  void add(CLI::App* app) {
    app->add_option("--seed", seed, "RNG seed");
    app->add_option("--iterations", iterations, "MCMC iterations");
    app->add_option("--burn-in", burn_in, "Iterations discarded as burn-in");
    app->add_option("--thin", thin, "Keep every n-th post-burn-in draw");
  }
  void apply(ChainConfig& c) const {
    if (seed) c.seed = *seed;
    if (iterations) c.iterations = *iterations;
    if (burn_in) c.burn_in = *burn_in;
    if (thin) c.thin = *thin;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Bayesian ZINB non-homogeneous hidden Markov models with variable selection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate synthetic datasets with ground truth");
  std::string sim_config, sim_out, sim_manifest;
  std::optional<std::uint64_t> sim_seed;
  std::optional<int> sim_replicates, sim_patients;
  sim->add_option("--config", sim_config, "Simulation config (JSON); default design if omitted");
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--replicates", sim_replicates, "Number of datasets");
  sim->add_option("--patients", sim_patients, "Patients per dataset");
  sim->add_option("--manifest", sim_manifest, "Replay the configuration of a manifest");

  // fit
  auto* fit = app.add_subcommand("fit", "Run the sampler and summarise the posterior");
  std::string data_path, model_path, chain_path, truth_path, fit_out, fit_manifest, k_grid;
  std::optional<int> k, baseline, threads;
  bool homogeneous = false, intercept = false, progress = false, conditional_mae = false;
  ChainFlags fit_flags;
  fit->add_option("--data", data_path, "Dataset file");
  fit->add_option("--model", model_path, "Model specification (JSON)");
  fit->add_option("--chain", chain_path, "Chain settings (JSON)");
  fit->add_option("--truth", truth_path, "Ground truth (JSON) to score against");
  fit->add_option("--out", fit_out, "Output directory")->required();
  fit->add_option("--k", k, "Number of hidden states");
  fit->add_option("--k-grid", k_grid, "Fit every K in a range (2:7) or list (2,3,4)");
  fit->add_option("--baseline-state", baseline, "Baseline state (1-based; default: last state)");
  fit->add_flag("--homogeneous", homogeneous, "Fit the intercept-only homogeneous model");
  fit->add_flag("--intercept", intercept, "Prepend an intercept column");
  fit->add_flag("--progress", progress, "Write per-sweep progress records");
  fit->add_flag("--conditional-mae", conditional_mae,
                "Use the NB mean without the zero-inflation factor for MAE");
  fit->add_option("--threads", threads, "Worker threads for K-grid fits");
  fit->add_option("--manifest", fit_manifest, "Replay the configuration of a manifest");
  fit_flags.add(fit);

  // replicate-study
  auto* study = app.add_subcommand("replicate-study", "Simulate, fit and score replicate datasets");
  std::string study_config, study_out, study_manifest;
  std::optional<int> study_replicates, study_threads;
  ChainFlags study_flags;
  study->add_option("--config", study_config, "Study config (JSON)");
  study->add_option("--out", study_out, "Output directory")->required();
  study->add_option("--replicates", study_replicates, "Replicates per scenario");
  study->add_option("--threads", study_threads, "Worker threads");
  study->add_option("--manifest", study_manifest, "Replay the configuration of a manifest");
  study_flags.add(study);

  // report
  auto* rep = app.add_subcommand("report", "Re-summarise an existing chain file");
  std::string rep_chain, rep_data, rep_truth, rep_out;
  bool rep_conditional = false;
  rep->add_option("--chain", rep_chain, "Chain file")->required();
  rep->add_option("--data", rep_data, "Dataset the chain was fitted to")->required();
  rep->add_option("--truth", rep_truth, "Ground truth (JSON) to score against");
  rep->add_option("--out", rep_out, "Report path (JSON)")->required();
  rep->add_flag("--conditional-mae", rep_conditional,
                "Use the NB mean without the zero-inflation factor for MAE");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (sim->parsed()) {
    io::SimulationConfig config;
    if (!sim_manifest.empty()) {
      const auto m = io::read_manifest(sim_manifest);
      if (m.command != "simulate") throw ConfigError("manifest is not from 'simulate'");
      config = io::simulation_config_from_json(m.config);
    } else if (!sim_config.empty()) {
      config = io::simulation_config_from_json(io::load_json(sim_config));
    }
    if (sim_seed) config.seed = *sim_seed;
    if (sim_replicates) config.replicates = *sim_replicates;
    if (sim_patients) config.n_patients = *sim_patients;
    if (config.replicates < 1) throw ConfigError("--replicates must be at least 1");
    cli::run_simulate(config, sim_out, std::cout);
    return 0;
  }

  if (fit->parsed()) {
    cli::FitRequest req;
    if (!fit_manifest.empty()) {
      const auto m = io::read_manifest(fit_manifest);
      if (m.command != "fit") throw ConfigError("manifest is not from 'fit'");
      req = cli::fit_request_from_json(m.config);
    } else {
      if (data_path.empty()) throw ConfigError("fit needs --data (or --manifest)");
      req.data_path = data_path;
      if (!truth_path.empty()) req.truth_path = truth_path;
      if (!model_path.empty()) req.model = io::model_spec_from_json(io::load_json(model_path));
      if (!chain_path.empty()) req.chain = io::chain_config_from_json(io::load_json(chain_path));
    }
    if (k) {
      req.model.n_states = *k;
      req.model.baseline_state = *k - 1;
    }
    if (baseline) {
      req.model.baseline_state = *baseline - 1;
      req.grid_baseline = *baseline - 1;
    }
    if (!k_grid.empty()) req.k_grid = cli::parse_k_grid(k_grid);
    if (homogeneous) req.chain.homogeneous = true;
    if (intercept) req.model.include_intercept = true;
    if (progress) req.progress = true;
    if (conditional_mae) req.mae_unconditional = false;
    fit_flags.apply(req.chain);
    req.threads = threads ? *threads : default_thread_count();
    if (req.threads < 1) throw ConfigError("--threads must be at least 1");
    cli::run_fit(req, fit_out, std::cout);
    return 0;
  }

  if (study->parsed()) {
    io::StudyConfig config;
    if (!study_manifest.empty()) {
      const auto m = io::read_manifest(study_manifest);
      if (m.command != "replicate-study") throw ConfigError("manifest is not from 'replicate-study'");
      config = io::study_config_from_json(m.config);
    } else {
      if (study_config.empty()) throw ConfigError("replicate-study needs --config (or --manifest)");
      config = io::study_config_from_json(io::load_json(study_config));
    }
    if (study_replicates) config.replicates = *study_replicates;
    if (config.replicates < 1) throw ConfigError("--replicates must be at least 1");
    if (study_flags.seed) config.seed = *study_flags.seed;
    study_flags.apply(config.chain);
    config.chain.seed = ChainConfig{}.seed;  // per-replicate seeds derive from the study seed
    const int n_threads = study_threads ? *study_threads : default_thread_count();
    if (n_threads < 1) throw ConfigError("--threads must be at least 1");
    cli::run_study(config, n_threads, study_out, std::cout);
    return 0;
  }

  if (rep->parsed()) {
    cli::ReportRequest req{rep_chain, rep_data, std::nullopt, !rep_conditional};
    if (!rep_truth.empty()) req.truth_path = rep_truth;
    cli::run_report(req, rep_out, std::cout);
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const zinbhmm::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const zinbhmm::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const zinbhmm::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
