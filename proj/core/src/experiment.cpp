#include "fedsim/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "fedsim/distill.hpp"
#include "fedsim/error.hpp"
#include "fedsim/io.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/one_class.hpp"
#include "fedsim/strategies.hpp"

namespace fedsim {

using json = nlohmann::ordered_json;

namespace {

// Typed access to one JSON object that remembers which keys were read, so
// leftovers can be rejected by name.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "must be an object");
  }

  std::string field(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const json* find(std::string_view key) {
    auto it = j_.find(std::string(key));
    if (it == j_.end()) return nullptr;
    seen_.insert(std::string(key));
    return &*it;
  }

  bool number(std::string_view key, double& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_number()) throw ConfigError(field(key), "must be a number");
    out = v->get<double>();
    if (!std::isfinite(out)) throw ConfigError(field(key), "must be finite");
    return true;
  }

  bool count(std::string_view key, std::size_t& out) {
    const json* v = find(key);
    if (!v) return false;
    out = as_count(*v, field(key));
    return true;
  }

  bool uint64(std::string_view key, std::uint64_t& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_number_unsigned()) throw ConfigError(field(key), "must be a non-negative integer");
    out = v->get<std::uint64_t>();
    return true;
  }

  bool boolean(std::string_view key, bool& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_boolean()) throw ConfigError(field(key), "must be true or false");
    out = v->get<bool>();
    return true;
  }

  bool string(std::string_view key, std::string& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_string()) throw ConfigError(field(key), "must be a string");
    out = v->get<std::string>();
    return true;
  }

  bool counts(std::string_view key, std::vector<std::size_t>& out) {
    const json* v = find(key);
    if (!v) return false;
    out = as_counts(*v, field(key));
    return true;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
  }

  static std::size_t as_count(const json& v, const std::string& name) {
    if (!v.is_number_unsigned()) throw ConfigError(name, "must be a non-negative integer");
    return v.get<std::size_t>();
  }

  static std::vector<std::size_t> as_counts(const json& v, const std::string& name) {
    if (!v.is_array()) throw ConfigError(name, "must be an array of non-negative integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_count(v[i], name + "[" + std::to_string(i) + "]"));
    return out;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
auto as_config_error(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(field, e.what());
  }
}

void parse_federation(const json& j, FederationConfig& f) {
  Section s(j, "federation");
  s.count("num_clients", f.num_clients);
  s.count("num_clusters", f.num_clusters);
  if (const json* v = s.find("samples_per_client")) {
    if (v->is_array()) {
      const auto r = Section::as_counts(*v, "federation.samples_per_client");
      if (r.size() != 2) throw ConfigError("federation.samples_per_client", "range must be [min, max]");
      f.samples_min = r[0];
      f.samples_max = r[1];
    } else {
      f.samples_min = f.samples_max = Section::as_count(*v, "federation.samples_per_client");
    }
  }
  s.count("test_samples_per_client", f.test_samples);
  s.count("input_dim", f.input_dim);
  s.count("num_classes", f.num_classes);
  std::string skew;
  if (s.string("skew_kind", skew)) f.skew = parse_skew_kind(skew);
  s.number("anomaly_fraction", f.anomaly_fraction);
  s.number("separation", f.separation);
  s.number("noise_std", f.noise_std);
  s.number("dirichlet_alpha", f.dirichlet_alpha);
  s.count("public_size", f.public_size);
  s.finish();
}

void parse_model(const json& j, ModelConfig& m) {
  Section s(j, "model");
  std::string text;
  if (s.string("kind", text)) m.kind = as_config_error("model.kind", [&] { return parse_model_kind(text); });
  s.counts("hidden", m.hidden);
  if (s.string("activation", text))
    m.activation = as_config_error("model.activation", [&] { return parse_activation(text); });
  s.finish();
}

void parse_hyperparams(const json& j, Hyperparams& hp) {
  Section s(j, "hyperparams");
  s.number("lr", hp.lr);
  s.count("local_epochs", hp.local_epochs);
  s.count("batch_size", hp.batch_size);
  s.count("rounds", hp.rounds);
  std::size_t n = 0;
  double x = 0.0;
  if (s.count("K", n)) hp.clusters = n;
  if (s.number("lambda", x)) hp.lambda = x;
  if (s.number("alpha", x)) hp.alpha = x;
  s.number("temperature", hp.temperature);
  s.number("sample_fraction", hp.sample_fraction);
  if (s.count("budget", n)) hp.budget = n;
  s.number("split_threshold", hp.split_threshold);
  s.count("min_cluster_size", hp.min_cluster_size);
  if (s.count("k_select", n)) hp.k_select = n;
  if (s.number("target_fpr", x)) hp.target_fpr = x;
  s.boolean("leave_one_out", hp.leave_one_out);
  s.number("validation_fraction", hp.validation_fraction);
  if (const json* v = s.find("architectures")) {
    if (!v->is_array()) throw ConfigError("hyperparams.architectures", "must be an array of hidden-width lists");
    hp.architectures.clear();
    for (std::size_t i = 0; i < v->size(); ++i)
      hp.architectures.push_back(
          Section::as_counts((*v)[i], "hyperparams.architectures[" + std::to_string(i) + "]"));
  }
  s.finish();
}

bool is_classifier_strategy(std::string_view name) { return name != "oneclass"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing artifact '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json federation_json(const Federation& fed, std::span<const ClientData> clients) {
  json j;
  j["num_clients"] = clients.size();
  j["input_dim"] = fed.input_dim;
  j["num_classes"] = fed.num_classes;
  json ids = json::array(), sizes = json::array(), weights = json::array();
  for (const auto& c : clients) {
    ids.push_back(c.client_id);
    sizes.push_back(c.size());
    weights.push_back(c.weight);
  }
  j["client_ids"] = ids;
  j["train_sizes"] = sizes;
  j["weights"] = weights;
  j["true_clusters"] = fed.true_clusters;
  j["public_size"] = fed.public_holdout.size();
  return j;
}

std::string optional_number(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

// ---------------------------------------------------------------------------

ExperimentConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Section s(j, "");
  if (const json* v = s.find("federation")) parse_federation(*v, cfg.federation);
  if (const json* v = s.find("model")) parse_model(*v, cfg.model);
  if (!s.string("strategy", cfg.strategy)) throw ConfigError("strategy", "is required");
  if (!is_known_strategy(cfg.strategy)) throw ConfigError("strategy", "unknown strategy '" + cfg.strategy + "'");
  if (const json* v = s.find("hyperparams")) parse_hyperparams(*v, cfg.hp);
  s.uint64("seed", cfg.seed);
  std::string out;
  if (s.string("output_dir", out)) cfg.output_dir = out;
  s.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ModelSpec ExperimentConfig::model_spec() const {
  const std::size_t d = federation.input_dim;
  return as_config_error("model.hidden", [&] {
    switch (model.kind) {
      case ModelKind::logistic:
        if (!model.hidden.empty()) throw ConfigError("model.hidden", "logistic models take no hidden layers");
        return ModelSpec::logistic(d, federation.num_classes);
      case ModelKind::mlp:
        return ModelSpec::mlp(d, model.hidden, federation.num_classes, model.activation);
      case ModelKind::autoencoder:
        return ModelSpec::autoencoder(d, model.hidden, model.activation);
    }
    throw ConfigError("model.kind", "unsupported");
  });
}

FederationConfig ExperimentConfig::resolved_federation() const {
  FederationConfig f = federation;
  f.seed = derive_seed(seed, {stream::data});
  return f;
}

void ExperimentConfig::validate() const {
  federation.validate();
  if (!is_known_strategy(strategy)) throw ConfigError("strategy", "unknown strategy '" + strategy + "'");
  const ModelSpec spec = model_spec();
  if (is_classifier_strategy(strategy) && !spec.is_classifier())
    throw ConfigError("model.kind", "strategy '" + strategy + "' needs a classifier model");
  if (!is_classifier_strategy(strategy) && model.kind != ModelKind::autoencoder)
    throw ConfigError("model.kind", "strategy 'oneclass' needs an autoencoder");

  auto fail = [](const char* f, const std::string& msg) { throw ConfigError(std::string("hyperparams.") + f, msg); };
  auto need = [&](bool present, const char* f) {
    if (!present) fail(f, "required for strategy '" + strategy + "'");
  };
  if (hp.rounds < 1) fail("rounds", "must be at least 1");
  if (!(hp.lr > 0.0)) fail("lr", "must be positive");
  if (hp.batch_size < 1) fail("batch_size", "must be at least 1");
  if (hp.local_epochs < 1) fail("local_epochs", "must be at least 1");
  if (!(hp.sample_fraction > 0.0 && hp.sample_fraction <= 1.0)) fail("sample_fraction", "must lie in (0, 1]");
  if (!(hp.temperature > 0.0)) fail("temperature", "must be positive");
  if (hp.min_cluster_size < 1) fail("min_cluster_size", "must be at least 1");
  if (!(hp.split_threshold >= -1.0 && hp.split_threshold <= 1.0)) fail("split_threshold", "must lie in [-1, 1]");
  if (!(hp.validation_fraction > 0.0 && hp.validation_fraction < 1.0)) fail("validation_fraction", "must lie in (0, 1)");
  if (hp.clusters && (*hp.clusters < 1 || *hp.clusters > federation.num_clients))
    fail("K", "must lie in [1, num_clients]");
  if (hp.lambda && !(*hp.lambda >= 0.0)) fail("lambda", "must be >= 0");
  if (hp.alpha && !(*hp.alpha > 0.0)) fail("alpha", "must be positive");
  if (hp.k_select && (*hp.k_select < 1 || *hp.k_select > federation.num_clients))
    fail("k_select", "must lie in [1, num_clients]");
  if (hp.target_fpr && !(*hp.target_fpr > 0.0 && *hp.target_fpr < 1.0)) fail("target_fpr", "must lie in (0, 1)");
  for (std::size_t i = 0; i < hp.architectures.size(); ++i) {
    const auto& h = hp.architectures[i];
    as_config_error("hyperparams.architectures[" + std::to_string(i) + "]", [&] {
      if (!h.empty()) ModelSpec::mlp(federation.input_dim, h, federation.num_classes, model.activation);
      return 0;
    });
  }

  if (strategy == "multicenter" || strategy == "hypothesis") need(hp.clusters.has_value(), "K");
  if (strategy == "mixture" || strategy == "proximal" || strategy == "distill") need(hp.lambda.has_value(), "lambda");
  if (strategy == "onestep") need(hp.alpha.has_value(), "alpha");
  if (strategy == "oneshot") {
    need(hp.k_select.has_value(), "k_select");
    if (hp.rounds != 1) fail("rounds", "strategy 'oneshot' runs exactly 1 round");
  }
  if (strategy == "oneclass") need(hp.target_fpr.has_value(), "target_fpr");
}

std::string ExperimentConfig::to_json() const {
  json j;
  const FederationConfig& f = federation;
  j["federation"] = {{"num_clients", f.num_clients},
                     {"num_clusters", f.num_clusters},
                     {"samples_per_client", {f.samples_min, f.samples_max}},
                     {"test_samples_per_client", f.test_samples},
                     {"input_dim", f.input_dim},
                     {"num_classes", f.num_classes},
                     {"skew_kind", std::string(to_string(f.skew))},
                     {"anomaly_fraction", f.anomaly_fraction},
                     {"separation", f.separation},
                     {"noise_std", f.noise_std},
                     {"dirichlet_alpha", f.dirichlet_alpha},
                     {"public_size", f.public_size}};
  j["model"] = {{"kind", std::string(to_string(model.kind))},
                {"hidden", model.hidden},
                {"activation", std::string(to_string(model.activation))}};
  j["strategy"] = strategy;
  json h;
  h["lr"] = hp.lr;
  h["local_epochs"] = hp.local_epochs;
  h["batch_size"] = hp.batch_size;
  h["rounds"] = hp.rounds;
  if (hp.clusters) h["K"] = *hp.clusters;
  if (hp.lambda) h["lambda"] = *hp.lambda;
  if (hp.alpha) h["alpha"] = *hp.alpha;
  h["temperature"] = hp.temperature;
  h["sample_fraction"] = hp.sample_fraction;
  if (hp.budget) h["budget"] = *hp.budget;
  h["split_threshold"] = hp.split_threshold;
  h["min_cluster_size"] = hp.min_cluster_size;
  if (hp.k_select) h["k_select"] = *hp.k_select;
  if (hp.target_fpr) h["target_fpr"] = *hp.target_fpr;
  h["leave_one_out"] = hp.leave_one_out;
  h["validation_fraction"] = hp.validation_fraction;
  h["architectures"] = hp.architectures;
  j["hyperparams"] = h;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();

  const Federation fed = generate_federation(cfg.resolved_federation());
  std::vector<ClientData> clients = fed.clients;
  if (cfg.strategy == "oneclass") {
    for (auto& c : clients) c = strip_anomalies(c);
    normalize_weights(clients);
  }

  const ModelSpec spec = cfg.model_spec();
  std::unique_ptr<Strategy> strategy = make_strategy(cfg.strategy, spec, cfg.hp);
  auto* distill = dynamic_cast<DistillStrategy*>(strategy.get());
  if (distill) distill->set_public_data(fed.public_holdout.X);

  FederationState state = make_state(clients, cfg.seed, cfg.hp.budget);
  strategy->initialize(state, clients);

  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  write_text(dir / "config.json", cfg.to_json());
  write_text(dir / "federation.json", federation_json(fed, clients).dump(2) + "\n");

  RunResult result;
  result.rounds_requested = cfg.hp.rounds;
  result.output_dir = dir;
  std::string rounds_text, assignments_text, warnings_text;
  std::vector<PredictionMatrix> predictions;
  const RoundOptions round_opts{cfg.hp.sample_fraction, options.parallel};

  for (std::size_t r = 0; r < cfg.hp.rounds; ++r) {
    auto rec = run_round(state, *strategy, clients, round_opts);
    if (!rec) {
      result.halted = true;
      json w;
      w["round"] = state.round + 1;
      w["event"] = "halt";
      w["reason"] = "no client has access budget left";
      warnings_text += w.dump() + "\n";
      break;
    }
    rounds_text += rec->to_json_line() + "\n";
    if (strategy->uses_clusters()) {
      json a;
      a["round"] = rec->round;
      json m = json::object();
      for (const auto& [id, k] : state.assignments) m[std::to_string(id)] = k;
      a["assignments"] = m;
      a["num_models"] = state.global_params.size();
      assignments_text += a.dump() + "\n";
    }
    if (distill)
      for (int id : rec->participants)
        predictions.push_back({state.public_predictions.at(id), id, rec->round});
    result.records.push_back(std::move(*rec));
  }

  write_text(dir / "rounds.jsonl", rounds_text);
  if (strategy->uses_clusters()) write_text(dir / "assignments.jsonl", assignments_text);
  if (result.halted) write_text(dir / "warnings.jsonl", warnings_text);
  if (distill) write_predictions_csv(dir / "predictions.csv", predictions);

  // Final per-client metrics under the deployed models.
  std::vector<ClientEval> evals(clients.size());
  parallel_for(clients.size(), options.parallel,
               [&](std::size_t i) { evals[i] = strategy->evaluate(state, clients[i]); });
  std::string metrics = "client_id,cluster,train_loss,test_loss,test_accuracy,accesses_used\n";
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const int id = clients[i].client_id;
    auto a = state.assignments.find(id);
    metrics += fmt::format("{},{},{},{},{},{}\n", id, a != state.assignments.end() ? std::to_string(a->second) : "",
                           format_double(evals[i].train_loss), format_double(evals[i].test_loss),
                           optional_number(evals[i].test_accuracy), state.budgets.at(id).used);
  }
  write_text(dir / "metrics.csv", metrics);

  bool wrote_personal = false;
  for (const auto& c : clients) {
    auto p = strategy->personal_model(state, c);
    if (!p) continue;
    if (!wrote_personal) std::filesystem::create_directories(dir / "personal");
    wrote_personal = true;
    const ModelSpec& s = distill ? distill->registry().spec_for(c.client_id) : spec;
    write_personal_model(dir / "personal" / fmt::format("client_{}.bin", c.client_id),
                         {s.hash(), c.client_id, static_cast<std::int64_t>(state.round), std::move(*p)});
  }

  if (auto* oc = dynamic_cast<OneClassStrategy*>(strategy.get())) {
    const DetectionReport rep = oc->report(state, clients);
    write_scores_csv(dir / "scores.csv", rep.rows);
    json o;
    o["threshold"] = rep.threshold;
    o["target_fpr"] = rep.target_fpr;
    o["auc"] = rep.auc;
    o["fpr"] = rep.fpr;
    o["tpr"] = rep.tpr;
    o["calibration_rows"] = rep.calibration_rows;
    o["evaluated_rows"] = rep.rows.size();
    write_text(dir / "oneclass.json", o.dump(2) + "\n");
  }

  json run;
  run["rounds_completed"] = result.records.size();
  run["halted"] = result.halted;
  run["parallel"] = options.parallel;
  run["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_text(dir / "run.json", run.dump(2) + "\n");
  return result;
}

void generate_data(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  cfg.federation.validate();
  const Federation fed = generate_federation(cfg.resolved_federation());
  std::filesystem::create_directories(dir);
  for (const auto& c : fed.clients) {
    save_csv(c.client_id, c.train, dir / fmt::format("client_{}_train.csv", c.client_id));
    save_csv(c.client_id, c.test, dir / fmt::format("client_{}_test.csv", c.client_id));
  }
  save_csv(-1, fed.public_holdout, dir / "public.csv");
  write_text(dir / "federation.json", federation_json(fed, fed.clients).dump(2) + "\n");
}

// ---------------------------------------------------------------------------

std::string Summary::to_json() const {
  json j;
  j["strategy"] = strategy;
  j["rounds_completed"] = rounds_completed;
  j["global_loss"] = global_loss;
  j["mean_client_loss"] = mean_client_loss;
  if (mean_test_accuracy) j["mean_test_accuracy"] = *mean_test_accuracy;
  if (purity) j["purity"] = *purity;
  if (auc) j["auc"] = *auc;
  if (fpr) j["fpr"] = *fpr;
  if (target_fpr) j["target_fpr"] = *target_fpr;
  return j.dump(2) + "\n";
}

std::string Summary::to_text() const {
  std::string out;
  auto line = [&](std::string_view key, const std::string& value) { out += fmt::format("{:<20}{}\n", key, value); };
  line("strategy", strategy);
  line("rounds", std::to_string(rounds_completed));
  line("global_loss", fmt::format("{:.6f}", global_loss));
  line("mean_client_loss", fmt::format("{:.6f}", mean_client_loss));
  if (mean_test_accuracy) line("mean_test_accuracy", fmt::format("{:.4f}", *mean_test_accuracy));
  if (purity) line("cluster_purity", fmt::format("{:.4f}", *purity));
  if (auc) line("roc_auc", fmt::format("{:.4f}", *auc));
  if (fpr) line("fpr", fmt::format("{:.4f} (target {:.4f})", *fpr, target_fpr.value_or(0.0)));
  return out;
}

Summary report(const std::filesystem::path& dir) {
  Summary s;
  const json config = json::parse(read_text(dir / "config.json"));
  s.strategy = config.value("strategy", "");

  std::istringstream rounds(read_text(dir / "rounds.jsonl"));
  std::string line, last;
  while (std::getline(rounds, line))
    if (!line.empty()) {
      last = line;
      ++s.rounds_completed;
    }
  if (s.rounds_completed == 0) throw MissingArtifactError("rounds.jsonl holds no rounds");
  s.global_loss = json::parse(last).at("global_loss").get<double>();

  std::istringstream metrics(read_text(dir / "metrics.csv"));
  std::getline(metrics, line);
  double loss_sum = 0.0, acc_sum = 0.0;
  std::size_t n = 0, n_acc = 0;
  while (std::getline(metrics, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() < 5) throw ParseError(n + 2, "metrics.csv row has too few columns");
    loss_sum += std::stod(f[3]);
    ++n;
    if (!f[4].empty()) {
      acc_sum += std::stod(f[4]);
      ++n_acc;
    }
  }
  if (n > 0) s.mean_client_loss = loss_sum / static_cast<double>(n);
  if (n_acc > 0) s.mean_test_accuracy = acc_sum / static_cast<double>(n_acc);

  const auto fed_path = dir / "federation.json";
  const auto assign_path = dir / "assignments.jsonl";
  if (std::filesystem::exists(fed_path) && std::filesystem::exists(assign_path)) {
    const json fed = json::parse(read_text(fed_path));
    std::istringstream as(read_text(assign_path));
    std::string last_assign;
    while (std::getline(as, line))
      if (!line.empty()) last_assign = line;
    if (fed.contains("true_clusters") && !last_assign.empty()) {
      const auto ids = fed.at("client_ids").get<std::vector<int>>();
      const auto truth = fed.at("true_clusters").get<std::vector<int>>();
      const json a = json::parse(last_assign).at("assignments");
      std::vector<int> learned, planted;
      for (std::size_t i = 0; i < ids.size() && i < truth.size(); ++i) {
        const std::string key = std::to_string(ids[i]);
        if (!a.contains(key)) continue;
        learned.push_back(a.at(key).get<int>());
        planted.push_back(truth[i]);
      }
      if (!learned.empty()) s.purity = cluster_purity(learned, planted);
    }
  }

  const auto oc_path = dir / "oneclass.json";
  if (std::filesystem::exists(oc_path)) {
    const json oc = json::parse(read_text(oc_path));
    s.auc = oc.at("auc").get<double>();
    s.fpr = oc.at("fpr").get<double>();
    s.target_fpr = oc.at("target_fpr").get<double>();
  }

  write_text(dir / "summary.json", s.to_json());
  return s;
}

}  // namespace fedsim
