#include "cli.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include <CLI11.hpp>

#include "fedsim/error.hpp"
#include "fedsim/experiment.hpp"

namespace fedsim::cli {

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> rounds;
  std::optional<std::string> output;
};

ExperimentConfig load_with(const std::string& path, const Overrides& o) {
  ExperimentConfig cfg = load_config(path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.rounds) cfg.hp.rounds = *o.rounds;
  if (o.output) cfg.output_dir = *o.output;
  cfg.validate();
  return cfg;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deterministic federated-learning simulator"};
  app.require_subcommand(1);

  Overrides o;
  bool parallel = false;
  std::string config_path, dir;

  auto* run = app.add_subcommand("run", "Run an experiment and write its results bundle");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--seed", o.seed, "Override the config seed");
  run->add_option("--rounds", o.rounds, "Override hyperparams.rounds");
  run->add_option("--output", o.output, "Override output_dir");
  run->add_flag("--parallel", parallel, "Run client updates on worker threads");

  auto* rep = app.add_subcommand("report", "Summarize a results bundle");
  rep->add_option("dir", dir, "Results directory")->required();

  auto* gen = app.add_subcommand("generate-data", "Write the synthetic federation as CSV");
  gen->add_option("config", config_path, "Experiment config (JSON)")->required();
  gen->add_option("dir", dir, "Destination directory")->required();
  gen->add_option("--seed", o.seed, "Override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      const ExperimentConfig cfg = load_with(config_path, o);
      const RunResult r = run_experiment(cfg, {parallel});
      out << "wrote " << r.records.size() << " round(s) to " << r.output_dir.string() << "\n";
      if (r.halted) err << "warning: every client exhausted its access budget; run stopped early\n";
    } else if (*rep) {
      out << report(dir).to_text();
    } else if (*gen) {
      const ExperimentConfig cfg = load_with(config_path, o);
      generate_data(cfg, dir);
      out << "wrote federation to " << dir << "\n";
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const MissingArtifactError& e) {
    err << "error: " << e.what() << "\n";
    return kMissingArtifacts;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace fedsim::cli
