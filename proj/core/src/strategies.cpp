#include "fedsim/strategies.hpp"

#include <algorithm>

#include "fedsim/clustered.hpp"
#include "fedsim/distill.hpp"
#include "fedsim/error.hpp"
#include "fedsim/one_class.hpp"
#include "fedsim/personalized.hpp"

namespace fedsim {

bool is_known_strategy(std::string_view name) {
  return std::find(kStrategyNames.begin(), kStrategyNames.end(), name) != kStrategyNames.end();
}

ClientEval evaluate_model(const ModelSpec& spec, const ParamVector& params, const ClientData& client, LossKind kind) {
  ClientEval e;
  e.train_loss = evaluate_loss(spec, params, client.train, kind);
  if (client.test.size() > 0) {
    e.test_loss = evaluate_loss(spec, params, client.test, kind);
    if (spec.is_classifier()) {
      const auto pred = argmax_rows(forward(spec, params, client.test.X));
      std::size_t hits = 0;
      for (std::size_t r = 0; r < pred.size(); ++r) hits += pred[r] == client.test.labels[r];
      e.test_accuracy = static_cast<double>(hits) / static_cast<double>(pred.size());
    }
  }
  return e;
}

std::size_t local_steps(const ClientData& client, const Hyperparams& hp) {
  return steps_for_epochs(client.size(), hp.batch_size, hp.local_epochs);
}

ParamVector average_messages(std::span<const ClientMessage> messages, std::size_t slot) {
  std::vector<WeightedParams> entries;
  entries.reserve(messages.size());
  for (const auto& m : messages) entries.push_back({&m.params.at(slot), m.weight});
  return weighted_average(entries);
}

FedAvgStrategy::FedAvgStrategy(ModelSpec spec, Hyperparams hp, LossKind kind)
    : spec_(std::move(spec)), hp_(std::move(hp)), kind_(kind) {
  spec_.validate();
}

void FedAvgStrategy::initialize(FederationState& state, std::span<const ClientData>) {
  state.global_params = {init_params(spec_, derive_seed(state.rng_seed, {stream::init}))};
  state.assignments.clear();
}

ClientMessage FedAvgStrategy::local_update(const ClientData& client, const FederationState& state,
                                           const LocalContext& ctx) const {
  ClientMessage m;
  m.client_id = client.client_id;
  m.weight = client.weight;
  m.params.push_back(
      sgd_train(spec_, state.global_params.at(0), client.train, {local_steps(client, hp_), hp_.lr, hp_.batch_size, ctx.seed},
                kind_));
  return m;
}

void FedAvgStrategy::aggregate(FederationState& state, std::span<const ClientMessage> messages) {
  state.global_params.at(0) = average_messages(messages);
}

ClientEval FedAvgStrategy::evaluate(const FederationState& state, const ClientData& client) const {
  return evaluate_model(spec_, state.global_params.at(0), client, kind_);
}

namespace {

template <typename T>
const T& require(const std::optional<T>& v, const char* field, std::string_view strategy) {
  if (!v)
    throw ConfigError(std::string("hyperparams.") + field,
                      "required for strategy '" + std::string(strategy) + "'");
  return *v;
}

std::vector<ModelSpec> architectures_from(const ModelSpec& spec, const Hyperparams& hp) {
  std::vector<ModelSpec> out;
  if (hp.architectures.empty()) {
    out.push_back(spec);
    return out;
  }
  for (const auto& hidden : hp.architectures) {
    if (hidden.empty())
      out.push_back(ModelSpec::logistic(spec.input_dim(), spec.output_dim()));
    else
      out.push_back(ModelSpec::mlp(spec.input_dim(), hidden, spec.output_dim(), spec.activation));
  }
  return out;
}

}  // namespace

std::unique_ptr<Strategy> make_strategy(std::string_view name, const ModelSpec& spec, const Hyperparams& hp) {
  if (name == "fedavg") return std::make_unique<FedAvgStrategy>(spec, hp);
  if (name == "multicenter") {
    require(hp.clusters, "K", name);
    return std::make_unique<MultiCenterStrategy>(spec, hp);
  }
  if (name == "hypothesis") {
    require(hp.clusters, "K", name);
    return std::make_unique<HypothesisStrategy>(spec, hp);
  }
  if (name == "hierarchical") return std::make_unique<HierarchicalStrategy>(spec, hp);
  if (name == "mixture") {
    require(hp.lambda, "lambda", name);
    return std::make_unique<MixtureStrategy>(spec, hp);
  }
  if (name == "proximal") {
    require(hp.lambda, "lambda", name);
    return std::make_unique<ProximalStrategy>(spec, hp);
  }
  if (name == "onestep") {
    require(hp.alpha, "alpha", name);
    return std::make_unique<OneStepStrategy>(spec, hp);
  }
  if (name == "distill") {
    require(hp.lambda, "lambda", name);
    return std::make_unique<DistillStrategy>(architectures_from(spec, hp), hp);
  }
  if (name == "oneshot") {
    require(hp.k_select, "k_select", name);
    return std::make_unique<OneShotStrategy>(architectures_from(spec, hp), hp);
  }
  if (name == "oneclass") {
    require(hp.target_fpr, "target_fpr", name);
    return std::make_unique<OneClassStrategy>(spec, hp);
  }
  throw ConfigError("strategy", "unknown strategy '" + std::string(name) + "'");
}

}  // namespace fedsim
