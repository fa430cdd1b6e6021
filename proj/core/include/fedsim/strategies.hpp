#pragma once

#include <array>
#include <memory>
#include <string_view>

#include "fedsim/engine.hpp"

namespace fedsim {

inline constexpr std::array<std::string_view, 10> kStrategyNames = {
    "fedavg",   "multicenter", "hierarchical", "hypothesis", "mixture",
    "proximal", "onestep",     "distill",      "oneshot",    "oneclass"};

bool is_known_strategy(std::string_view name);

// Train/test loss and test accuracy (classifiers) of one model on one client.
ClientEval evaluate_model(const ModelSpec& spec, const ParamVector& params, const ClientData& client,
                          LossKind kind = LossKind::cross_entropy);

// Local SGD step count for a client: local_epochs passes over its train split.
std::size_t local_steps(const ClientData& client, const Hyperparams& hp);

// p_i-weighted average of payload slot `slot` across messages.
ParamVector average_messages(std::span<const ClientMessage> messages, std::size_t slot = 0);

// Vanilla federated averaging: local SGD from the global model, p_i-weighted mean.
class FedAvgStrategy : public Strategy {
 public:
  FedAvgStrategy(ModelSpec spec, Hyperparams hp, LossKind kind = LossKind::cross_entropy);

  std::string_view name() const override { return "fedavg"; }
  void initialize(FederationState& state, std::span<const ClientData> clients) override;
  ClientMessage local_update(const ClientData& client, const FederationState& state,
                             const LocalContext& ctx) const override;
  void aggregate(FederationState& state, std::span<const ClientMessage> messages) override;
  ClientEval evaluate(const FederationState& state, const ClientData& client) const override;
  LossKind loss_kind() const override { return kind_; }

  const ModelSpec& spec() const { return spec_; }
  const Hyperparams& hyperparams() const { return hp_; }

 protected:
  ModelSpec spec_;
  Hyperparams hp_;
  LossKind kind_;
};

// Builds the named strategy around `spec`. Heterogeneous strategies (distill,
// oneshot) derive their per-client architectures from hp.architectures using
// the spec's input/output dims and activation. Throws ConfigError for unknown
// names or missing strategy-specific hyper-parameters.
std::unique_ptr<Strategy> make_strategy(std::string_view name, const ModelSpec& spec, const Hyperparams& hp);

}  // namespace fedsim
