#include "fedsim/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsim/error.hpp"

namespace fedsim {

void PredictionMatrix::validate() const {
  for (std::size_t r = 0; r < rows.rows; ++r) {
    double s = 0.0;
    for (double v : rows.row(r)) {
      if (!(v >= 0.0)) throw DomainError("prediction row " + std::to_string(r) + " has a negative entry");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw DomainError("prediction row " + std::to_string(r) + " does not sum to 1");
  }
}

HeteroModelRegistry::HeteroModelRegistry(std::span<const ModelSpec> architectures, std::span<const int> client_ids) {
  if (architectures.empty()) throw DomainError("registry needs at least one architecture");
  std::vector<int> ids(client_ids.begin(), client_ids.end());
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) set(ids[i], architectures[i % architectures.size()]);
}

void HeteroModelRegistry::set(int client_id, ModelSpec spec) {
  spec.validate();
  if (!spec.is_classifier()) throw DomainError("registry architectures must be classifiers");
  if (!specs_.empty()) {
    const ModelSpec& ref = specs_.begin()->second;
    if (spec.input_dim() != ref.input_dim() || spec.output_dim() != ref.output_dim())
      throw ShapeError("registry architectures must share input_dim and num_classes");
  }
  specs_.insert_or_assign(client_id, std::move(spec));
}

const ModelSpec& HeteroModelRegistry::spec_for(int client_id) const {
  auto it = specs_.find(client_id);
  if (it == specs_.end()) throw DomainError("no architecture registered for client " + std::to_string(client_id));
  return it->second;
}

PredictionMatrix public_predictions(const ModelSpec& spec, const ParamVector& params, const Matrix& public_X,
                                    int model_id, std::size_t round) {
  if (!spec.is_classifier()) throw DomainError("public predictions need a classifier model");
  return {forward(spec, params, public_X), model_id, round};
}

PredictionMatrix average_predictions(std::span<const PredictionMatrix> mats, std::span<const double> weights) {
  if (mats.empty()) throw DomainError("no prediction matrices to average");
  if (weights.size() != mats.size()) throw ShapeError("one weight per prediction matrix required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw DomainError("prediction weights must be positive");
    total += w;
  }
  const std::size_t rows = mats[0].rows.rows, cols = mats[0].rows.cols;
  for (const auto& m : mats)
    if (m.rows.rows != rows || m.rows.cols != cols) throw ShapeError("prediction matrices differ in shape");

  PredictionMatrix out{Matrix(rows, cols), -1, mats[0].round};
  for (std::size_t i = 0; i < mats.size(); ++i) {
    const double w = weights[i] / total;
    for (std::size_t j = 0; j < out.rows.data.size(); ++j) out.rows.data[j] += w * mats[i].rows.data[j];
  }
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.rows.row(r);
    const double s = std::accumulate(row.begin(), row.end(), 0.0);
    if (std::abs(s - 1.0) > 1e-12 && s > 0.0)
      for (double& v : row) v /= s;
  }
  return out;
}

LossGrad distill_loss_grad(const ModelSpec& spec, const ParamVector& params, const Batch& public_batch,
                           const Batch& private_data, double lambda, double temperature,
                           std::span<const std::size_t> public_rows, std::span<const std::size_t> private_rows) {
  if (!(lambda >= 0.0)) throw DomainError("lambda must be >= 0");
  if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
  LossGrad out = loss_and_grad(spec, params, public_batch, LossKind::soft_kl, public_rows, temperature);
  if (lambda > 0.0) {
    const LossGrad h = loss_and_grad(spec, params, private_data, LossKind::cross_entropy, private_rows);
    out.loss += lambda * h.loss;
    axpy(lambda, h.grad, out.grad);
  }
  return out;
}

namespace {

Batch consensus_batch(const Matrix& public_X, const PredictionMatrix& consensus) {
  if (consensus.rows.rows != public_X.rows) throw ShapeError("consensus must have one row per public example");
  Batch b;
  b.X = public_X;
  b.soft_targets = consensus.rows;
  return b;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

LossGrad distill_loss_grad(const ModelSpec& spec, const ParamVector& params, const Matrix& public_X,
                           const PredictionMatrix& consensus, const Batch& private_data, double lambda,
                           double temperature) {
  const Batch pub = consensus_batch(public_X, consensus);
  const auto pub_rows = iota_rows(pub.size());
  const auto priv_rows = iota_rows(private_data.size());
  return distill_loss_grad(spec, params, pub, private_data, lambda, temperature, pub_rows, priv_rows);
}

ParamVector distill_update(const ModelSpec& spec, const ParamVector& params, const Matrix& public_X,
                           const PredictionMatrix& consensus, const Batch& private_data, const DistillOptions& opts) {
  if (!(opts.lambda >= 0.0)) throw DomainError("lambda must be >= 0");
  if (!(opts.temperature > 0.0)) throw DomainError("temperature must be positive");
  if (!(opts.lr > 0.0)) throw DomainError("learning rate must be positive");
  const Batch pub = consensus_batch(public_X, consensus);
  ParamVector w = params;
  if (opts.steps == 0) return w;
  if (opts.lambda > 0.0 && private_data.size() == 0) throw DomainError("private data is empty");

  MiniBatchSampler pub_sampler(pub.size(), opts.batch_size, derive_seed(opts.seed, {1}));
  MiniBatchSampler priv_sampler(std::max<std::size_t>(private_data.size(), 1), opts.batch_size,
                                derive_seed(opts.seed, {2}));
  for (std::size_t s = 0; s < opts.steps; ++s) {
    const auto pub_rows = pub_sampler.next();
    const std::vector<std::size_t> pr(pub_rows.begin(), pub_rows.end());
    std::vector<std::size_t> vr;
    if (opts.lambda > 0.0) {
      const auto priv_rows = priv_sampler.next();
      vr.assign(priv_rows.begin(), priv_rows.end());
    }
    const LossGrad lg = distill_loss_grad(spec, w, pub, private_data, opts.lambda, opts.temperature, pr, vr);
    axpy(-opts.lr, lg.grad, w);
  }
  if (!w.all_finite()) throw DomainError("distillation diverged to non-finite parameters; lower the learning rate");
  return w;
}

Matrix EnsembleModel::predict_proba(const Matrix& X) const {
  if (params.empty()) throw DomainError("ensemble has no members");
  Matrix out(X.rows, specs.front().output_dim());
  const double w = 1.0 / static_cast<double>(params.size());
  for (std::size_t m = 0; m < params.size(); ++m) {
    const Matrix p = forward(specs[m], params[m], X);
    for (std::size_t j = 0; j < out.data.size(); ++j) out.data[j] += w * p.data[j];
  }
  return out;
}

std::vector<int> EnsembleModel::predict(const Matrix& X) const { return argmax_rows(predict_proba(X)); }

namespace {

double mean_nll(const Matrix& proba, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t r = 0; r < proba.rows; ++r)
    total -= std::log(std::max(proba(r, static_cast<std::size_t>(labels[r])), 1e-300));
  return total / static_cast<double>(proba.rows);
}

}  // namespace

ClientEval EnsembleModel::evaluate(const ClientData& client) const {
  ClientEval e;
  if (client.train.size() > 0) e.train_loss = mean_nll(predict_proba(client.train.X), client.train.labels);
  if (client.test.size() > 0) {
    const Matrix p = predict_proba(client.test.X);
    e.test_loss = mean_nll(p, client.test.labels);
    const auto pred = argmax_rows(p);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < pred.size(); ++r) hits += pred[r] == client.test.labels[r];
    e.test_accuracy = static_cast<double>(hits) / static_cast<double>(pred.size());
  }
  return e;
}

EnsembleModel one_shot_ensemble(const HeteroModelRegistry& registry, const std::map<int, ParamVector>& client_params,
                                const std::map<int, double>& validation_loss, std::size_t k_select) {
  if (k_select < 1 || k_select > client_params.size())
    throw DomainError("k_select must lie in [1, " + std::to_string(client_params.size()) + "]");
  std::vector<std::pair<double, int>> ranked;
  for (const auto& [id, p] : client_params) {
    auto it = validation_loss.find(id);
    if (it == validation_loss.end()) throw DomainError("client " + std::to_string(id) + " reported no validation loss");
    ranked.emplace_back(std::isnan(it->second) ? HUGE_VAL : it->second, id);
  }
  std::sort(ranked.begin(), ranked.end());
  ranked.resize(k_select);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second < b.second; });

  EnsembleModel e;
  for (const auto& [loss, id] : ranked) {
    e.member_ids.push_back(id);
    e.specs.push_back(registry.spec_for(id));
    e.params.push_back(client_params.at(id));
  }
  return e;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> validation_split(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("validation fraction must lie in (0, 1)");
  std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n >= 2) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  else n_val = 0;
  std::vector<std::size_t> fit(n - n_val), val(n_val);
  std::iota(fit.begin(), fit.end(), std::size_t{0});
  std::iota(val.begin(), val.end(), n - n_val);
  return {fit, val};
}

// ---------------------------------------------------------------------------

namespace {

std::vector<int> ids_of(std::span<const ClientData> clients) {
  std::vector<int> ids;
  for (const auto& c : clients) ids.push_back(c.client_id);
  return ids;
}

void init_personal(FederationState& state, const HeteroModelRegistry& reg) {
  state.global_params.clear();
  state.assignments.clear();
  state.personal_params.clear();
  state.public_predictions.clear();
  for (const auto& [id, spec] : reg.entries())
    state.personal_params[id] = init_params(spec, derive_seed(state.rng_seed, {stream::init, static_cast<std::uint64_t>(id)}));
}

}  // namespace

DistillStrategy::DistillStrategy(std::vector<ModelSpec> architectures, Hyperparams hp)
    : architectures_(std::move(architectures)), hp_(std::move(hp)), lambda_(hp_.lambda.value_or(1.0)) {
  if (architectures_.empty()) throw ConfigError("hyperparams.architectures", "needs at least one entry");
  if (!(lambda_ >= 0.0)) throw ConfigError("hyperparams.lambda", "must be >= 0");
  if (!(hp_.temperature > 0.0)) throw ConfigError("hyperparams.temperature", "must be positive");
}

void DistillStrategy::set_public_data(Matrix public_X) {
  if (public_X.rows == 0) throw DomainError("public dataset is empty");
  public_X_ = std::move(public_X);
}

void DistillStrategy::initialize(FederationState& state, std::span<const ClientData> clients) {
  if (public_X_.rows == 0) throw ContractViolation("distillation needs a public dataset before initialization");
  const auto ids = ids_of(clients);
  registry_ = HeteroModelRegistry(architectures_, ids);
  init_personal(state, registry_);
}

std::optional<PredictionMatrix> DistillStrategy::consensus_for(const FederationState& state, int client_id) const {
  std::vector<PredictionMatrix> mats;
  for (const auto& [id, m] : state.public_predictions) {
    if (hp_.leave_one_out && id == client_id) continue;
    mats.push_back({m, id, state.round});
  }
  if (mats.empty()) return std::nullopt;
  const std::vector<double> w(mats.size(), 1.0);
  return average_predictions(mats, w);
}

ClientMessage DistillStrategy::local_update(const ClientData& client, const FederationState& state,
                                            const LocalContext& ctx) const {
  const ModelSpec& spec = registry_.spec_for(client.client_id);
  const ParamVector& current = state.personal_params.at(client.client_id);
  const std::size_t steps = local_steps(client, hp_);

  ClientMessage m;
  m.client_id = client.client_id;
  m.weight = client.weight;
  if (auto consensus = consensus_for(state, client.client_id)) {
    const DistillOptions opts{lambda_, hp_.temperature, steps, hp_.lr, hp_.batch_size, ctx.seed};
    m.params.push_back(distill_update(spec, current, public_X_, *consensus, client.train, opts));
  } else {
    m.params.push_back(sgd_train(spec, current, client.train, {steps, hp_.lr, hp_.batch_size, ctx.seed}));
  }
  m.predictions = forward(spec, m.params.back(), public_X_);
  return m;
}

void DistillStrategy::aggregate(FederationState& state, std::span<const ClientMessage> messages) {
  for (const auto& m : messages) {
    state.personal_params[m.client_id] = m.params.at(0);
    state.public_predictions[m.client_id] = m.predictions;
  }
}

ClientEval DistillStrategy::evaluate(const FederationState& state, const ClientData& client) const {
  return evaluate_model(registry_.spec_for(client.client_id), state.personal_params.at(client.client_id), client);
}

std::optional<ParamVector> DistillStrategy::personal_model(const FederationState& state,
                                                           const ClientData& client) const {
  return state.personal_params.at(client.client_id);
}

OneShotStrategy::OneShotStrategy(std::vector<ModelSpec> architectures, Hyperparams hp)
    : architectures_(std::move(architectures)), hp_(std::move(hp)) {
  if (architectures_.empty()) throw ConfigError("hyperparams.architectures", "needs at least one entry");
  if (!hp_.k_select || *hp_.k_select < 1) throw ConfigError("hyperparams.k_select", "must be at least 1");
  if (!(hp_.validation_fraction > 0.0 && hp_.validation_fraction < 1.0))
    throw ConfigError("hyperparams.validation_fraction", "must lie in (0, 1)");
}

void OneShotStrategy::initialize(FederationState& state, std::span<const ClientData> clients) {
  if (*hp_.k_select > clients.size())
    throw ConfigError("hyperparams.k_select", "exceeds the number of clients (" + std::to_string(clients.size()) + ")");
  registry_ = HeteroModelRegistry(architectures_, ids_of(clients));
  init_personal(state, registry_);
  ensemble_ = {};
}

ClientMessage OneShotStrategy::local_update(const ClientData& client, const FederationState& state,
                                            const LocalContext& ctx) const {
  const ModelSpec& spec = registry_.spec_for(client.client_id);
  const auto [fit, val] = validation_split(client.size(), hp_.validation_fraction);
  if (fit.empty() || val.empty()) throw DomainError("client " + std::to_string(client.client_id) +
                                                    " has too few rows for a validation split");
  const Batch fit_batch = client.train.select(fit);
  const Batch val_batch = client.train.select(val);

  ClientMessage m;
  m.client_id = client.client_id;
  m.weight = client.weight;
  m.params.push_back(sgd_train(spec, state.personal_params.at(client.client_id), fit_batch,
                               {steps_for_epochs(fit.size(), hp_.batch_size, hp_.local_epochs), hp_.lr,
                                hp_.batch_size, ctx.seed}));
  m.report = evaluate_loss(spec, m.params.back(), val_batch, LossKind::cross_entropy);
  return m;
}

void OneShotStrategy::aggregate(FederationState& state, std::span<const ClientMessage> messages) {
  if (has_ensemble()) throw ContractViolation("one-shot federation runs a single round");
  std::map<int, ParamVector> params;
  std::map<int, double> losses;
  for (const auto& m : messages) {
    state.personal_params[m.client_id] = m.params.at(0);
    params[m.client_id] = m.params.at(0);
    losses[m.client_id] = m.report;
  }
  ensemble_ = one_shot_ensemble(registry_, params, losses, std::min(*hp_.k_select, params.size()));
}

ClientEval OneShotStrategy::evaluate(const FederationState& state, const ClientData& client) const {
  if (has_ensemble()) return ensemble_.evaluate(client);
  return evaluate_model(registry_.spec_for(client.client_id), state.personal_params.at(client.client_id), client);
}

}  // namespace fedsim
