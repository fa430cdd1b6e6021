#pragma once

// Config-driven experiment runs and their on-disk results bundle.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/engine.hpp"

namespace fedsim {

struct ModelConfig {
  ModelKind kind = ModelKind::logistic;
  std::vector<std::size_t> hidden;  // MLP hidden widths, or autoencoder encoder widths ending in the bottleneck
  Activation activation = Activation::tanh;
};

struct ExperimentConfig {
  FederationConfig federation;
  ModelConfig model;
  std::string strategy = "fedavg";
  Hyperparams hp;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "results";

  // Throws ConfigError naming the offending field.
  void validate() const;
  // Fully resolved JSON object; parsing it back yields an equal config.
  std::string to_json() const;
  ModelSpec model_spec() const;
  FederationConfig resolved_federation() const;  // data seed derived from `seed`
};

// Strict parser: unknown keys and wrong types are ConfigErrors naming the field.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunOptions {
  bool parallel = false;
};

struct RunResult {
  std::vector<RoundRecord> records;
  std::size_t rounds_requested = 0;
  bool halted = false;  // budget exhaustion stopped the run early
  std::filesystem::path output_dir;
};

// Runs the experiment and writes the bundle into cfg.output_dir:
// config.json, rounds.jsonl, metrics.csv, federation.json, run.json, plus
// assignments.jsonl (clustered), personal/ (personalized), predictions.csv
// (distill), scores.csv and oneclass.json (oneclass), warnings.jsonl (halt).
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

// Writes the synthetic federation as CSV files plus federation.json.
void generate_data(const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct Summary {
  std::string strategy;
  std::size_t rounds_completed = 0;
  double global_loss = 0.0;
  double mean_client_loss = 0.0;
  std::optional<double> mean_test_accuracy;
  std::optional<double> purity;
  std::optional<double> auc;
  std::optional<double> fpr;
  std::optional<double> target_fpr;

  std::string to_json() const;
  std::string to_text() const;
};

// Reads a bundle and writes summary.json next to it. Throws MissingArtifactError.
Summary report(const std::filesystem::path& dir);

}  // namespace fedsim
