#include "fedsim/personalized.hpp"

#include <cmath>

#include "fedsim/error.hpp"

namespace fedsim {

MixtureLossGrad mixture_objective_grad(const ModelSpec& spec, const Batch& data, const ParamVector& global,
                                       const ParamVector& personal, double lambda, std::span<const std::size_t> rows) {
  if (!(lambda >= 0.0)) throw DomainError("mixing weight lambda must be >= 0");
  if (personal.size() != global.size()) throw ShapeError("global and personal models differ in length");
  LossGrad g = loss_and_grad(spec, global, data, LossKind::cross_entropy, rows);
  MixtureLossGrad out{g.loss, std::move(g.grad), ParamVector(personal.size())};
  if (lambda > 0.0) {
    LossGrad p = loss_and_grad(spec, personal, data, LossKind::cross_entropy, rows);
    out.loss += lambda * p.loss;
    for (std::size_t j = 0; j < p.grad.size(); ++j) out.grad_personal[j] = lambda * p.grad[j];
  }
  return out;
}

MixtureLossGrad mixture_objective_grad(const ClientData& client, const ModelSpec& spec, const ParamVector& global,
                                       const ParamVector& personal, double lambda) {
  std::vector<std::size_t> all(client.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return mixture_objective_grad(spec, client.train, global, personal, lambda, all);
}

ParamVector proximal_minimize(const BatchObjective& objective, std::size_t n_examples, const ParamVector& anchor,
                              double lambda, const SgdOptions& opts) {
  if (!(lambda >= 0.0)) throw DomainError("proximal weight lambda must be >= 0");
  if (!(opts.lr > 0.0)) throw DomainError("learning rate must be positive");
  ParamVector w = anchor;
  if (opts.steps == 0) return w;
  MiniBatchSampler sampler(n_examples, opts.batch_size, opts.seed);
  const double shrink = opts.lr * lambda;
  for (std::size_t s = 0; s < opts.steps; ++s) {
    const LossGrad lg = objective(w, sampler.next());
    axpy(-opts.lr, lg.grad, w);
    if (shrink != 0.0)
      for (std::size_t j = 0; j < w.size(); ++j) w[j] = (w[j] + shrink * anchor[j]) / (1.0 + shrink);
  }
  if (!w.all_finite()) throw DomainError("proximal SGD diverged to non-finite parameters");
  return w;
}

ParamVector proximal_personalize(const ClientData& client, const ModelSpec& spec, const ParamVector& global,
                                 double lambda, const SgdOptions& opts) {
  return proximal_minimize(
      [&](const ParamVector& p, std::span<const std::size_t> rows) {
        return loss_and_grad(spec, p, client.train, LossKind::cross_entropy, rows);
      },
      client.size(), global, lambda, opts);
}

LossGrad one_step_meta_loss_grad(const GradientFn& gradient, const ParamVector& params, double alpha) {
  if (!(alpha > 0.0)) throw DomainError("inner step size alpha must be positive");
  const LossGrad at_w = gradient(params);
  ParamVector inner = params;
  axpy(-alpha, at_w.grad, inner);
  LossGrad at_inner = gradient(inner);

  // (I - alpha H) v with H v ~ (g(W + h v) - g(W - h v)) / 2h.
  const ParamVector& v = at_inner.grad;
  const double vnorm = norm(v);
  LossGrad out{at_inner.loss, v};
  if (vnorm == 0.0) return out;
  const double h = 1e-5 * (1.0 + norm(params)) / vnorm;
  ParamVector plus = params, minus = params;
  axpy(h, v, plus);
  axpy(-h, v, minus);
  const ParamVector gp = gradient(plus).grad;
  const ParamVector gm = gradient(minus).grad;
  for (std::size_t j = 0; j < v.size(); ++j) out.grad[j] = v[j] - alpha * (gp[j] - gm[j]) / (2.0 * h);
  return out;
}

LossGrad one_step_meta_loss_grad(const ClientData& client, const ModelSpec& spec, const ParamVector& params,
                                 double alpha) {
  return one_step_meta_loss_grad(
      [&](const ParamVector& p) { return loss_and_grad(spec, p, client.train, LossKind::cross_entropy); }, params,
      alpha);
}

ParamVector one_step_personalize(const ClientData& client, const ModelSpec& spec, const ParamVector& params,
                                 double alpha) {
  if (!(alpha > 0.0)) throw DomainError("inner step size alpha must be positive");
  ParamVector out = params;
  axpy(-alpha, loss_and_grad(spec, params, client.train, LossKind::cross_entropy).grad, out);
  return out;
}

ParamVector finetune_baseline(const ClientData& client, const ModelSpec& spec, const ParamVector& global,
                              const SgdOptions& opts) {
  return sgd_train(spec, global, client.train, opts);
}

// ---------------------------------------------------------------------------
// Mixture

MixtureStrategy::MixtureStrategy(ModelSpec spec, Hyperparams hp)
    : FedAvgStrategy(std::move(spec), std::move(hp)), lambda_(hp_.lambda.value_or(0.0)) {
  if (!(lambda_ >= 0.0)) throw ConfigError("hyperparams.lambda", "must be >= 0");
}

ClientMessage MixtureStrategy::local_update(const ClientData& client, const FederationState& state,
                                            const LocalContext& ctx) const {
  ParamVector global = state.global_params.at(0);
  auto it = state.personal_params.find(client.client_id);
  ParamVector personal = it != state.personal_params.end() ? it->second : global;

  const std::size_t steps = local_steps(client, hp_);
  if (steps > 0) {
    if (!(hp_.lr > 0.0)) throw DomainError("learning rate must be positive");
    MiniBatchSampler sampler(client.size(), hp_.batch_size, ctx.seed);
    for (std::size_t s = 0; s < steps; ++s) {
      const MixtureLossGrad g = mixture_objective_grad(spec_, client.train, global, personal, lambda_, sampler.next());
      axpy(-hp_.lr, g.grad_global, global);
      if (lambda_ > 0.0) axpy(-hp_.lr, g.grad_personal, personal);
    }
    if (!global.all_finite() || !personal.all_finite())
      throw DomainError("SGD diverged to non-finite parameters; lower the learning rate");
  }
  ClientMessage m;
  m.client_id = client.client_id;
  m.weight = client.weight;
  m.params = {std::move(global), std::move(personal)};
  return m;
}

void MixtureStrategy::aggregate(FederationState& state, std::span<const ClientMessage> messages) {
  state.global_params.at(0) = average_messages(messages, 0);
  if (lambda_ > 0.0)
    for (const auto& m : messages) state.personal_params[m.client_id] = m.params.at(1);
}

std::optional<ParamVector> MixtureStrategy::personal_model(const FederationState& state,
                                                           const ClientData& client) const {
  if (lambda_ == 0.0) return std::nullopt;
  auto it = state.personal_params.find(client.client_id);
  if (it == state.personal_params.end()) return std::nullopt;
  return it->second;
}

ClientEval MixtureStrategy::evaluate(const FederationState& state, const ClientData& client) const {
  if (auto p = personal_model(state, client)) return evaluate_model(spec_, *p, client);
  return evaluate_model(spec_, state.global_params.at(0), client);
}

// ---------------------------------------------------------------------------
// Proximal

ProximalStrategy::ProximalStrategy(ModelSpec spec, Hyperparams hp)
    : FedAvgStrategy(std::move(spec), std::move(hp)), lambda_(hp_.lambda.value_or(0.0)) {
  if (!(lambda_ >= 0.0)) throw ConfigError("hyperparams.lambda", "must be >= 0");
}

ClientMessage ProximalStrategy::local_update(const ClientData& client, const FederationState& state,
                                             const LocalContext& ctx) const {
  ClientMessage m = FedAvgStrategy::local_update(client, state, ctx);
  const SgdOptions opts{local_steps(client, hp_), hp_.lr, hp_.batch_size, derive_seed(ctx.seed, {stream::personal})};
  m.params.push_back(proximal_personalize(client, spec_, state.global_params.at(0), lambda_, opts));
  return m;
}

void ProximalStrategy::aggregate(FederationState& state, std::span<const ClientMessage> messages) {
  state.global_params.at(0) = average_messages(messages, 0);
  for (const auto& m : messages) state.personal_params[m.client_id] = m.params.at(1);
}

std::optional<ParamVector> ProximalStrategy::personal_model(const FederationState& state,
                                                            const ClientData& client) const {
  auto it = state.personal_params.find(client.client_id);
  if (it == state.personal_params.end()) return std::nullopt;
  return it->second;
}

ClientEval ProximalStrategy::evaluate(const FederationState& state, const ClientData& client) const {
  if (auto p = personal_model(state, client)) return evaluate_model(spec_, *p, client);
  return evaluate_model(spec_, state.global_params.at(0), client);
}

// ---------------------------------------------------------------------------
// One-step meta

OneStepStrategy::OneStepStrategy(ModelSpec spec, Hyperparams hp)
    : FedAvgStrategy(std::move(spec), std::move(hp)), alpha_(hp_.alpha.value_or(1.0)) {
  if (!(alpha_ > 0.0)) throw ConfigError("hyperparams.alpha", "must be positive");
}

ClientMessage OneStepStrategy::local_update(const ClientData& client, const FederationState& state,
                                            const LocalContext& ctx) const {
  ClientMessage m;
  m.client_id = client.client_id;
  m.weight = client.weight;
  m.params.push_back(sgd_minimize(
      [&](const ParamVector& p, std::span<const std::size_t> rows) {
        return one_step_meta_loss_grad(
            [&](const ParamVector& q) { return loss_and_grad(spec_, q, client.train, LossKind::cross_entropy, rows); },
            p, alpha_);
      },
      state.global_params.at(0), client.size(), {local_steps(client, hp_), hp_.lr, hp_.batch_size, ctx.seed}));
  return m;
}

std::optional<ParamVector> OneStepStrategy::personal_model(const FederationState& state,
                                                           const ClientData& client) const {
  return one_step_personalize(client, spec_, state.global_params.at(0), alpha_);
}

ClientEval OneStepStrategy::evaluate(const FederationState& state, const ClientData& client) const {
  return evaluate_model(spec_, *personal_model(state, client), client);
}

}  // namespace fedsim
