#pragma once

// Model-heterogeneous federation by distillation over a shared public set, and
// one-shot ensembling of locally trained models.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "fedsim/strategies.hpp"

namespace fedsim {

// Class-probability rows, one per public example.
struct PredictionMatrix {
  Matrix rows;
  int model_id = 0;
  std::size_t round = 0;

  std::size_t size() const noexcept { return rows.rows; }
  std::size_t num_classes() const noexcept { return rows.cols; }
  // Throws DomainError unless every row is a probability vector (sum within 1e-9).
  void validate() const;
};

// client_id -> architecture. All entries share input and output dimensions.
class HeteroModelRegistry {
 public:
  HeteroModelRegistry() = default;
  // Cycles through `architectures` in ascending client_id order.
  HeteroModelRegistry(std::span<const ModelSpec> architectures, std::span<const int> client_ids);

  void set(int client_id, ModelSpec spec);
  const ModelSpec& spec_for(int client_id) const;
  bool contains(int client_id) const { return specs_.count(client_id) != 0; }
  std::size_t size() const noexcept { return specs_.size(); }
  const std::map<int, ModelSpec>& entries() const noexcept { return specs_; }

 private:
  std::map<int, ModelSpec> specs_;
};

PredictionMatrix public_predictions(const ModelSpec& spec, const ParamVector& params, const Matrix& public_X,
                                    int model_id = 0, std::size_t round = 0);

// Per-row weighted mean; rows are renormalized only when rounding pushes a
// sum more than 1e-12 away from 1.
PredictionMatrix average_predictions(std::span<const PredictionMatrix> mats, std::span<const double> weights);

struct DistillOptions {
  double lambda = 1.0;
  double temperature = 2.0;
  std::size_t steps = 0;
  double lr = 0.1;
  std::size_t batch_size = 10;
  std::uint64_t seed = 0;
};

// Soft KL against the consensus on the selected public rows plus lambda times
// cross-entropy on the selected private rows. lambda = 0 skips the private term.
LossGrad distill_loss_grad(const ModelSpec& spec, const ParamVector& params, const Batch& public_batch,
                           const Batch& private_data, double lambda, double temperature,
                           std::span<const std::size_t> public_rows, std::span<const std::size_t> private_rows);
// Full-batch form with the consensus packed into the public batch.
LossGrad distill_loss_grad(const ModelSpec& spec, const ParamVector& params, const Matrix& public_X,
                           const PredictionMatrix& consensus, const Batch& private_data, double lambda,
                           double temperature);

// SGD on the objective above. Public and private mini-batches come from
// independent seeded samplers.
ParamVector distill_update(const ModelSpec& spec, const ParamVector& params, const Matrix& public_X,
                           const PredictionMatrix& consensus, const Batch& private_data, const DistillOptions& opts);

// Uniform-average probability ensemble.
struct EnsembleModel {
  std::vector<int> member_ids;
  std::vector<ModelSpec> specs;
  std::vector<ParamVector> params;

  Matrix predict_proba(const Matrix& X) const;
  std::vector<int> predict(const Matrix& X) const;
  // Mean -log p(y) of the averaged distribution, and accuracy.
  ClientEval evaluate(const ClientData& client) const;
};

// Keeps the k_select models with lowest reported validation loss (ties to
// the lowest client id). Throws DomainError when k_select is out of range.
EnsembleModel one_shot_ensemble(const HeteroModelRegistry& registry, const std::map<int, ParamVector>& client_params,
                                const std::map<int, double>& validation_loss, std::size_t k_select);

// Rows [0, n - round(fraction * n)) for fitting, the rest for validation.
// The validation part keeps at least one row when n >= 2.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> validation_split(std::size_t n, double fraction);

// Each client keeps its own architecture. The first round is private-only
// training; later rounds distill from the average of the other clients' last
// public predictions (all clients when leave_one_out is off).
class DistillStrategy : public Strategy {
 public:
  DistillStrategy(std::vector<ModelSpec> architectures, Hyperparams hp);

  std::string_view name() const override { return "distill"; }
  void set_public_data(Matrix public_X);
  const Matrix& public_data() const { return public_X_; }
  const HeteroModelRegistry& registry() const { return registry_; }

  void initialize(FederationState& state, std::span<const ClientData> clients) override;
  ClientMessage local_update(const ClientData& client, const FederationState& state,
                             const LocalContext& ctx) const override;
  void aggregate(FederationState& state, std::span<const ClientMessage> messages) override;
  ClientEval evaluate(const FederationState& state, const ClientData& client) const override;
  std::optional<ParamVector> personal_model(const FederationState& state, const ClientData& client) const override;

  // Consensus seen by `client_id`, or nullopt when no other client has reported yet.
  std::optional<PredictionMatrix> consensus_for(const FederationState& state, int client_id) const;

 private:
  std::vector<ModelSpec> architectures_;
  Hyperparams hp_;
  double lambda_;
  HeteroModelRegistry registry_;
  Matrix public_X_;
};

// Single round: every participant trains on the head of its train split and
// reports the loss on the tail; the coordinator ensembles the best k_select.
class OneShotStrategy : public Strategy {
 public:
  OneShotStrategy(std::vector<ModelSpec> architectures, Hyperparams hp);

  std::string_view name() const override { return "oneshot"; }
  const HeteroModelRegistry& registry() const { return registry_; }
  const EnsembleModel& ensemble() const { return ensemble_; }
  bool has_ensemble() const { return !ensemble_.member_ids.empty(); }

  void initialize(FederationState& state, std::span<const ClientData> clients) override;
  ClientMessage local_update(const ClientData& client, const FederationState& state,
                             const LocalContext& ctx) const override;
  void aggregate(FederationState& state, std::span<const ClientMessage> messages) override;
  ClientEval evaluate(const FederationState& state, const ClientData& client) const override;

 private:
  std::vector<ModelSpec> architectures_;
  Hyperparams hp_;
  HeteroModelRegistry registry_;
  EnsembleModel ensemble_;
};

}  // namespace fedsim
