#pragma once

// Federated round orchestration: client sampling, local-update dispatch,
// aggregation, access-budget accounting and per-round metrics.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

// Pay-per-access meter. One access = one round of local training on the client.
struct AccessBudget {
  std::size_t max_accesses = std::numeric_limits<std::size_t>::max();
  std::size_t used = 0;

  bool exhausted() const noexcept { return used >= max_accesses; }
  std::size_t remaining() const noexcept { return exhausted() ? 0 : max_accesses - used; }
};

struct FederationState {
  std::size_t round = 0;
  std::vector<ParamVector> global_params;           // one per global model
  std::map<int, std::size_t> assignments;          // client -> index into global_params
  std::map<int, ParamVector> personal_params;       // per-client models (personalized / heterogeneous)
  std::map<int, Matrix> public_predictions;         // last reported public-set predictions (distillation)
  std::map<int, AccessBudget> budgets;
  std::uint64_t rng_seed = 0;

  // Throws ContractViolation when an invariant is broken.
  void check_invariants() const;
};

// Fresh state with one budget per client. `max_accesses` unset means unlimited.
FederationState make_state(std::span<const ClientData> clients, std::uint64_t seed,
                           std::optional<std::size_t> max_accesses = std::nullopt);

// Increments the client's used count. Throws BudgetExhaustedError past the cap
// and DomainError for unknown clients.
void charge_access(FederationState& state, int client_id);

struct RoundRecord {
  std::size_t round = 0;
  double global_loss = 0.0;
  std::map<int, double> per_client_loss;
  std::map<int, double> per_client_accuracy;
  std::size_t accesses_charged = 0;
  std::vector<int> participants;

  // One JSON object, no trailing newline.
  std::string to_json_line() const;
};

// All strategy hyper-parameters in one flat block. Optional fields are
// required by specific strategies (validated by the experiment config).
struct Hyperparams {
  double lr = 0.1;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 10;
  std::size_t rounds = 30;
  std::optional<std::size_t> clusters;  // K
  std::optional<double> lambda;
  std::optional<double> alpha;
  double temperature = 2.0;
  double sample_fraction = 1.0;
  std::optional<std::size_t> budget;
  double split_threshold = 0.0;
  std::size_t min_cluster_size = 2;
  std::optional<std::size_t> k_select;
  std::optional<double> target_fpr;
  bool leave_one_out = true;
  double validation_fraction = 0.2;  // one-shot: tail of each client's train split
  std::vector<std::vector<std::size_t>> architectures;  // hidden widths per registry entry
};

struct WeightedParams {
  const ParamVector* params;
  double weight;
};

// result_j = sum_i w_i v_ij / sum_i w_i, clamped into [min_i v_ij, max_i v_ij].
// Weights are normalized before the sum, so any rescaling that leaves the
// normalized weights bit-identical (integer or power-of-two factors) leaves
// the result bit-identical too.
ParamVector weighted_average(std::span<const WeightedParams> entries);
ParamVector weighted_average(std::span<const std::pair<ParamVector, double>> entries);

// sum_i p_i L(D_i, W) over train splits.
double global_loss(std::span<const ClientData> clients, const ModelSpec& spec, const ParamVector& params,
                   LossKind kind = LossKind::cross_entropy);

struct ClientMessage {
  int client_id = 0;
  double weight = 0.0;              // p_i
  std::vector<ParamVector> params;  // strategy-defined payload
  std::size_t cluster = 0;
  Matrix predictions;               // public-set predictions (distillation)
  double report = 0.0;              // scalar report (e.g. validation loss)
};

struct ClientEval {
  double train_loss = 0.0;
  double test_loss = 0.0;
  std::optional<double> test_accuracy;
};

struct LocalContext {
  std::size_t round = 0;
  std::uint64_t seed = 0;
};

// Uniform strategy interface. local_update must be a pure function of its
// arguments (it may run concurrently); aggregate folds messages that arrive
// in ascending client_id order.
class Strategy {
 public:
  virtual ~Strategy() = default;

  virtual std::string_view name() const = 0;
  virtual void initialize(FederationState& state, std::span<const ClientData> clients) = 0;
  virtual ClientMessage local_update(const ClientData& client, const FederationState& state,
                                     const LocalContext& ctx) const = 0;
  virtual void aggregate(FederationState& state, std::span<const ClientMessage> messages) = 0;
  virtual ClientEval evaluate(const FederationState& state, const ClientData& client) const = 0;
  virtual LossKind loss_kind() const { return LossKind::cross_entropy; }
  virtual bool uses_clusters() const { return false; }
  // Deployed per-client model, for strategies that personalize.
  virtual std::optional<ParamVector> personal_model(const FederationState&, const ClientData&) const {
    return std::nullopt;
  }
};

struct RoundOptions {
  double sample_fraction = 1.0;
  bool parallel = false;
};

// Seed handed to client `client_id`'s local update in `round`.
std::uint64_t local_seed(std::uint64_t state_seed, std::size_t round, int client_id);

// Clients still allowed to participate, ascending id.
std::vector<int> eligible_clients(const FederationState& state, std::span<const ClientData> clients);

// ceil(fraction * eligible) clients, seeded, without replacement, ascending id.
std::vector<int> sample_clients(const FederationState& state, std::span<const ClientData> clients,
                                double sample_fraction);

// Runs one round. Returns nullopt (the halt signal) when no client has budget
// left; nothing is charged or changed in that case.
std::optional<RoundRecord> run_round(FederationState& state, Strategy& strategy, std::span<const ClientData> clients,
                                     const RoundOptions& options);

// Evaluates every client under the strategy's deployed models and fills the
// loss/accuracy fields of a record (global_loss = sum p_i * train loss).
void fill_metrics(RoundRecord& record, const FederationState& state, const Strategy& strategy,
                  std::span<const ClientData> clients, bool parallel);

// Runs fn(i) for i in [0, n), on worker threads when `parallel` is set.
void parallel_for(std::size_t n, bool parallel, const std::function<void(std::size_t)>& fn);

}  // namespace fedsim
