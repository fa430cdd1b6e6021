#pragma once

// Per-client personalization: global/local mixture objective, proximal
// personal models, one-step meta personalization and plain fine-tuning.

#include <functional>

#include "fedsim/strategies.hpp"

namespace fedsim {

struct MixtureLossGrad {
  double loss = 0.0;
  ParamVector grad_global;
  ParamVector grad_personal;
};

// loss = L(D, W) + lambda * L(D, W_i) with exact partials in both arguments.
// lambda = 0 yields an all-zero grad_personal without evaluating W_i.
MixtureLossGrad mixture_objective_grad(const ModelSpec& spec, const Batch& data, const ParamVector& global,
                                       const ParamVector& personal, double lambda, std::span<const std::size_t> rows);
MixtureLossGrad mixture_objective_grad(const ClientData& client, const ModelSpec& spec, const ParamVector& global,
                                       const ParamVector& personal, double lambda);

// Proximal SGD on f(w) + (lambda/2)||w - anchor||^2 starting at the anchor.
// Each step takes a gradient step on f and then applies the penalty's exact
// proximal map, so large lambda stays stable for any learning rate.
ParamVector proximal_minimize(const BatchObjective& objective, std::size_t n_examples, const ParamVector& anchor,
                              double lambda, const SgdOptions& opts);
ParamVector proximal_personalize(const ClientData& client, const ModelSpec& spec, const ParamVector& global,
                                 double lambda, const SgdOptions& opts);

// Full-batch loss and gradient at a point.
using GradientFn = std::function<LossGrad(const ParamVector&)>;

// loss = L(W - alpha * grad L(W)); grad = (I - alpha * H(W)) grad L(W').
// The Hessian-vector product is a central difference of gradients.
LossGrad one_step_meta_loss_grad(const GradientFn& gradient, const ParamVector& params, double alpha);
LossGrad one_step_meta_loss_grad(const ClientData& client, const ModelSpec& spec, const ParamVector& params,
                                 double alpha);

// W - alpha * grad L_i(W) on the client's train split.
ParamVector one_step_personalize(const ClientData& client, const ModelSpec& spec, const ParamVector& params,
                                 double alpha);

// Local fine-tuning of the global model (plain SGD from W).
ParamVector finetune_baseline(const ClientData& client, const ModelSpec& spec, const ParamVector& global,
                              const SgdOptions& opts);

// Global model trained by FedAvg on L(W); personal W_i trained alongside on
// lambda * L(W_i). Deployed model is W_i (W when lambda = 0).
class MixtureStrategy : public FedAvgStrategy {
 public:
  MixtureStrategy(ModelSpec spec, Hyperparams hp);

  std::string_view name() const override { return "mixture"; }
  ClientMessage local_update(const ClientData& client, const FederationState& state,
                             const LocalContext& ctx) const override;
  void aggregate(FederationState& state, std::span<const ClientMessage> messages) override;
  ClientEval evaluate(const FederationState& state, const ClientData& client) const override;
  std::optional<ParamVector> personal_model(const FederationState& state, const ClientData& client) const override;

 private:
  double lambda_;
};

// FedAvg global model plus a proximal personal model recomputed from the
// received global model at every participation.
class ProximalStrategy : public FedAvgStrategy {
 public:
  ProximalStrategy(ModelSpec spec, Hyperparams hp);

  std::string_view name() const override { return "proximal"; }
  ClientMessage local_update(const ClientData& client, const FederationState& state,
                             const LocalContext& ctx) const override;
  void aggregate(FederationState& state, std::span<const ClientMessage> messages) override;
  ClientEval evaluate(const FederationState& state, const ClientData& client) const override;
  std::optional<ParamVector> personal_model(const FederationState& state, const ClientData& client) const override;

 private:
  double lambda_;
};

// Clients train the global model on the one-step meta objective; deployment
// applies the same inner step on local data.
class OneStepStrategy : public FedAvgStrategy {
 public:
  OneStepStrategy(ModelSpec spec, Hyperparams hp);

  std::string_view name() const override { return "onestep"; }
  ClientMessage local_update(const ClientData& client, const FederationState& state,
                             const LocalContext& ctx) const override;
  ClientEval evaluate(const FederationState& state, const ClientData& client) const override;
  std::optional<ParamVector> personal_model(const FederationState& state, const ClientData& client) const override;

 private:
  double alpha_;
};

}  // namespace fedsim
