#include "fedsim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "fedsim/error.hpp"
#include "fedsim/random.hpp"

namespace fedsim {

void FederationState::check_invariants() const {
  for (const auto& [id, k] : assignments)
    if (k >= global_params.size())
      throw ContractViolation("client " + std::to_string(id) + " assigned to missing global model " +
                              std::to_string(k));
  for (const auto& [id, b] : budgets)
    if (b.used > b.max_accesses)
      throw ContractViolation("client " + std::to_string(id) + " charged beyond its access budget");
}

FederationState make_state(std::span<const ClientData> clients, std::uint64_t seed,
                           std::optional<std::size_t> max_accesses) {
  FederationState s;
  s.rng_seed = seed;
  for (const auto& c : clients) {
    AccessBudget b;
    if (max_accesses) b.max_accesses = *max_accesses;
    s.budgets[c.client_id] = b;
  }
  return s;
}

void charge_access(FederationState& state, int client_id) {
  auto it = state.budgets.find(client_id);
  if (it == state.budgets.end()) throw DomainError("no access budget for client " + std::to_string(client_id));
  if (it->second.exhausted()) throw BudgetExhaustedError(client_id);
  ++it->second.used;
}

std::string RoundRecord::to_json_line() const {
  nlohmann::ordered_json j;
  j["round"] = round;
  j["global_loss"] = global_loss;
  auto& losses = j["per_client_loss"] = nlohmann::ordered_json::object();
  for (const auto& [id, v] : per_client_loss) losses[std::to_string(id)] = v;
  auto& accs = j["per_client_accuracy"] = nlohmann::ordered_json::object();
  for (const auto& [id, v] : per_client_accuracy) accs[std::to_string(id)] = v;
  j["accesses_charged"] = accesses_charged;
  j["participants"] = participants;
  return j.dump();
}

ParamVector weighted_average(std::span<const WeightedParams> entries) {
  if (entries.empty()) throw DomainError("weighted_average needs at least one entry");
  const std::size_t n = entries.front().params->size();
  double total = 0.0;
  for (const auto& e : entries) {
    if (e.params->size() != n) throw ShapeError("weighted_average: parameter vectors differ in length");
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) throw DomainError("weighted_average: weights must be >= 0");
    total += e.weight;
  }
  if (!(total > 0.0)) throw DomainError("weighted_average: all weights are zero");

  ParamVector out(n);
  ParamVector lo = *entries.front().params, hi = lo;
  for (const auto& e : entries) {
    const double w = e.weight / total;
    const auto& v = e.params->values;
    for (std::size_t j = 0; j < n; ++j) {
      out[j] += w * v[j];
      lo[j] = std::min(lo[j], v[j]);
      hi[j] = std::max(hi[j], v[j]);
    }
  }
  for (std::size_t j = 0; j < n; ++j) out[j] = std::clamp(out[j], lo[j], hi[j]);
  return out;
}

ParamVector weighted_average(std::span<const std::pair<ParamVector, double>> entries) {
  std::vector<WeightedParams> view;
  view.reserve(entries.size());
  for (const auto& [p, w] : entries) view.push_back({&p, w});
  return weighted_average(view);
}

double global_loss(std::span<const ClientData> clients, const ModelSpec& spec, const ParamVector& params,
                   LossKind kind) {
  double total = 0.0;
  for (const auto& c : clients) total += c.weight * evaluate_loss(spec, params, c.train, kind);
  return total;
}

std::uint64_t local_seed(std::uint64_t state_seed, std::size_t round, int client_id) {
  return derive_seed(state_seed, {stream::local, round, static_cast<std::uint64_t>(client_id)});
}

std::vector<int> eligible_clients(const FederationState& state, std::span<const ClientData> clients) {
  std::vector<int> out;
  for (const auto& c : clients) {
    auto it = state.budgets.find(c.client_id);
    if (it == state.budgets.end()) throw DomainError("no access budget for client " + std::to_string(c.client_id));
    if (!it->second.exhausted()) out.push_back(c.client_id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> sample_clients(const FederationState& state, std::span<const ClientData> clients,
                                double sample_fraction) {
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0))
    throw DomainError("sample_fraction must lie in (0, 1]");
  std::vector<int> pool = eligible_clients(state, clients);
  if (pool.empty()) return pool;
  const double want = std::ceil(sample_fraction * static_cast<double>(pool.size()) - 1e-9);
  const std::size_t m = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, pool.size());
  Rng rng(derive_seed(state.rng_seed, {stream::sample, state.round}));
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(m);
  std::sort(pool.begin(), pool.end());
  return pool;
}

void parallel_for(std::size_t n, bool parallel, const std::function<void(std::size_t)>& fn) {
  if (!parallel || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(n, std::max(2u, std::thread::hardware_concurrency()));
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

void fill_metrics(RoundRecord& record, const FederationState& state, const Strategy& strategy,
                  std::span<const ClientData> clients, bool parallel) {
  std::vector<ClientEval> evals(clients.size());
  parallel_for(clients.size(), parallel, [&](std::size_t i) { evals[i] = strategy.evaluate(state, clients[i]); });
  record.per_client_loss.clear();
  record.per_client_accuracy.clear();
  record.global_loss = 0.0;
  std::vector<std::size_t> order(clients.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return clients[a].client_id < clients[b].client_id; });
  for (std::size_t i : order) {
    const auto& c = clients[i];
    record.per_client_loss[c.client_id] = evals[i].train_loss;
    if (evals[i].test_accuracy) record.per_client_accuracy[c.client_id] = *evals[i].test_accuracy;
    record.global_loss += c.weight * evals[i].train_loss;
  }
}

std::optional<RoundRecord> run_round(FederationState& state, Strategy& strategy, std::span<const ClientData> clients,
                                     const RoundOptions& options) {
  const std::vector<int> chosen = sample_clients(state, clients, options.sample_fraction);
  if (chosen.empty()) return std::nullopt;

  std::vector<const ClientData*> participants;
  for (int id : chosen) {
    auto it = std::find_if(clients.begin(), clients.end(), [&](const ClientData& c) { return c.client_id == id; });
    participants.push_back(&*it);
  }
  for (int id : chosen) charge_access(state, id);

  std::vector<ClientMessage> messages(participants.size());
  const FederationState& snapshot = state;
  parallel_for(participants.size(), options.parallel, [&](std::size_t i) {
    const LocalContext ctx{snapshot.round, local_seed(snapshot.rng_seed, snapshot.round, participants[i]->client_id)};
    messages[i] = strategy.local_update(*participants[i], snapshot, ctx);
  });
  strategy.aggregate(state, messages);

  ++state.round;
  RoundRecord rec;
  rec.round = state.round;  // 1-based: number of completed rounds
  rec.accesses_charged = chosen.size();
  rec.participants = chosen;
  fill_metrics(rec, state, strategy, clients, options.parallel);
  state.check_invariants();
  return rec;
}

}  // namespace fedsim
