#include "fedsim/clustered.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedsim/error.hpp"

namespace fedsim {

std::size_t nearest_center(const ParamVector& w, std::span<const ParamVector> centers) {
  if (centers.empty()) throw DomainError("no cluster centers to assign to");
  std::size_t best = 0;
  double best_d = squared_distance(w, centers[0]);
  for (std::size_t k = 1; k < centers.size(); ++k) {
    const double d = squared_distance(w, centers[k]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::vector<std::size_t> assign_by_weights(std::span<const ParamVector> client_params,
                                           std::span<const ParamVector> centers) {
  if (centers.empty()) throw DomainError("no cluster centers to assign to");
  std::vector<std::size_t> out;
  out.reserve(client_params.size());
  for (const auto& w : client_params) out.push_back(nearest_center(w, centers));
  return out;
}

double multicenter_objective(std::span<const ParamVector> client_params, std::span<const double> weights,
                             std::span<const std::size_t> assignment, std::span<const ParamVector> centers) {
  if (client_params.size() != weights.size() || client_params.size() != assignment.size())
    throw ShapeError("objective inputs differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < client_params.size(); ++i) {
    if (assignment[i] >= centers.size()) throw DomainError("assignment refers to a missing center");
    total += weights[i] * squared_distance(client_params[i], centers[assignment[i]]);
  }
  return total;
}

std::vector<std::size_t> farthest_point_indices(std::span<const ParamVector> points, std::span<const double> weights,
                                                std::size_t k) {
  if (k == 0 || k > points.size()) throw DomainError("farthest-point sampling needs 1 <= k <= number of points");
  std::vector<WeightedParams> entries;
  for (std::size_t i = 0; i < points.size(); ++i) entries.push_back({&points[i], weights[i]});
  const ParamVector mean = weighted_average(entries);

  std::vector<double> closest(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) closest[i] = squared_distance(points[i], mean);
  std::vector<std::size_t> picked;
  std::vector<bool> taken(points.size(), false);
  while (picked.size() < k) {
    std::size_t best = points.size();
    for (std::size_t i = 0; i < points.size(); ++i)
      if (!taken[i] && (best == points.size() || closest[i] > closest[best])) best = i;
    picked.push_back(best);
    taken[best] = true;
    for (std::size_t i = 0; i < points.size(); ++i)
      closest[i] = picked.size() == 1 ? squared_distance(points[i], points[best])
                                      : std::min(closest[i], squared_distance(points[i], points[best]));
  }
  return picked;
}

EmStep em_aggregate(std::span<const ParamVector> client_params, std::span<const double> weights,
                    std::span<const ParamVector> previous, const std::vector<bool>& occupied) {
  const std::size_t K = previous.size();
  if (K == 0) throw DomainError("no cluster centers to assign to");
  EmStep step;
  step.assignment = assign_by_weights(client_params, previous);

  std::vector<std::vector<std::size_t>> members(K);
  for (std::size_t i = 0; i < step.assignment.size(); ++i) members[step.assignment[i]].push_back(i);

  auto center_of = [&](std::size_t k) {
    std::vector<WeightedParams> entries;
    for (std::size_t i : members[k]) entries.push_back({&client_params[i], weights[i]});
    return weighted_average(entries);
  };

  step.centers.assign(previous.begin(), previous.end());
  for (std::size_t k = 0; k < K; ++k)
    if (!members[k].empty()) step.centers[k] = center_of(k);

  // Repair: an unoccupied empty cluster takes the worst-fitting point of a
  // cluster that can spare one.
  for (std::size_t k = 0; k < K; ++k) {
    if (!members[k].empty() || (k < occupied.size() && occupied[k])) continue;
    std::size_t donor = client_params.size();
    double worst = -1.0;
    for (std::size_t i = 0; i < client_params.size(); ++i) {
      const std::size_t a = step.assignment[i];
      if (members[a].size() < 2) continue;
      const double d = squared_distance(client_params[i], step.centers[a]);
      if (d > worst) {
        worst = d;
        donor = i;
      }
    }
    if (donor == client_params.size()) continue;
    const std::size_t from = step.assignment[donor];
    std::erase(members[from], donor);
    members[k].push_back(donor);
    step.assignment[donor] = k;
    step.centers[from] = center_of(from);
    step.centers[k] = client_params[donor];
  }
  return step;
}

ClusterModelSet em_round(std::span<const ClientData> clients, const ClusterModelSet& state, const ModelSpec& spec,
                         const Hyperparams& hp, std::uint64_t seed, std::size_t round) {
  if (state.centers.empty()) throw DomainError("cluster model set has no centers");
  const ParamVector neutral = [&] {
    std::vector<WeightedParams> e;
    for (const auto& c : state.centers) e.push_back({&c, 1.0});
    return weighted_average(e);
  }();

  std::vector<ParamVector> trained;
  std::vector<double> weights;
  for (const auto& c : clients) {
    auto it = state.assignment.find(c.client_id);
    const ParamVector& start = it != state.assignment.end() ? state.centers.at(it->second)
                               : state.centers.size() == 1 ? state.centers[0]
                                                           : neutral;
    trained.push_back(sgd_train(spec, start, c.train,
                                {local_steps(c, hp), hp.lr, hp.batch_size, local_seed(seed, round, c.client_id)}));
    weights.push_back(c.weight);
  }
  // Full participation: every cluster's membership is decided this round.
  EmStep step = em_aggregate(trained, weights, state.centers, std::vector<bool>(state.centers.size(), false));

  ClusterModelSet out;
  out.centers = std::move(step.centers);
  for (std::size_t i = 0; i < clients.size(); ++i) out.assignment[clients[i].client_id] = step.assignment[i];
  return out;
}

double gradient_cosine(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw ShapeError("gradient_cosine: vectors differ in length");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw UndefinedSimilarityError("cosine similarity of a zero vector is undefined");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

SimilarityMatrix::SimilarityMatrix(std::size_t n) : n_(n), values_(n * n, 0.0) {
  for (std::size_t i = 0; i < n; ++i) values_[i * n + i] = 1.0;
}

SimilarityMatrix SimilarityMatrix::from_updates(std::span<const ParamVector> updates) {
  SimilarityMatrix m(updates.size());
  for (std::size_t i = 0; i < updates.size(); ++i)
    for (std::size_t j = i + 1; j < updates.size(); ++j) m.set(i, j, gradient_cosine(updates[i], updates[j]));
  return m;
}

SimilarityMatrix SimilarityMatrix::from_values(std::size_t n, std::vector<double> values) {
  if (values.size() != n * n) throw ShapeError("similarity matrix needs n*n values");
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(values[i * n + i] - 1.0) > 1e-12) throw DomainError("similarity diagonal must be 1");
    for (std::size_t j = 0; j < n; ++j) {
      const double v = values[i * n + j];
      if (!(v >= -1.0 - 1e-12 && v <= 1.0 + 1e-12)) throw DomainError("similarity outside [-1, 1]");
      if (std::abs(v - values[j * n + i]) > 1e-12) throw DomainError("similarity matrix is not symmetric");
    }
  }
  SimilarityMatrix m(n);
  m.values_ = std::move(values);
  return m;
}

void SimilarityMatrix::set(std::size_t i, std::size_t j, double v) {
  values_[i * n_ + j] = v;
  values_[j * n_ + i] = v;
}

namespace {

// Complete-linkage agglomeration of `group` on distance 1 - sim down to two clusters.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> bipartition(const SimilarityMatrix& sim,
                                                                          const std::vector<std::size_t>& group) {
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t g : group) clusters.push_back({g});
  auto linkage = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double d = 0.0;
    for (std::size_t i : a)
      for (std::size_t j : b) d = std::max(d, 1.0 - sim(i, j));
    return d;
  };
  while (clusters.size() > 2) {
    std::size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < clusters.size(); ++i)
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        const double d = linkage(clusters[i], clusters[j]);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  for (auto& c : clusters) std::sort(c.begin(), c.end());
  if (clusters[1].front() < clusters[0].front()) std::swap(clusters[0], clusters[1]);
  return {clusters[0], clusters[1]};
}

void split_recursive(const SimilarityMatrix& sim, std::vector<std::size_t> group, double threshold,
                     std::size_t min_size, Partition& out) {
  if (group.size() < 2) {
    out.push_back(std::move(group));
    return;
  }
  auto [a, b] = bipartition(sim, group);
  double cross = -1.0;
  for (std::size_t i : a)
    for (std::size_t j : b) cross = std::max(cross, sim(i, j));
  if (cross >= threshold || a.size() < min_size || b.size() < min_size) {
    out.push_back(std::move(group));
    return;
  }
  split_recursive(sim, std::move(a), threshold, min_size, out);
  split_recursive(sim, std::move(b), threshold, min_size, out);
}

}  // namespace

Partition hierarchical_split(const SimilarityMatrix& sim, double split_threshold, std::size_t min_cluster_size) {
  std::vector<std::size_t> all(sim.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  Partition out;
  split_recursive(sim, std::move(all), split_threshold, std::max<std::size_t>(min_cluster_size, 1), out);
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    if (x.empty() || y.empty()) return !x.empty() && y.empty();
    return x.front() < y.front();
  });
  return out;
}

std::size_t assign_by_loss(const ClientData& client, std::span<const ParamVector> centers, const ModelSpec& spec,
                           LossKind kind) {
  if (centers.empty()) throw DomainError("no cluster centers to assign to");
  std::size_t best = 0;
  double best_loss = evaluate_loss(spec, centers[0], client.train, kind);
  for (std::size_t k = 1; k < centers.size(); ++k) {
    const double l = evaluate_loss(spec, centers[k], client.train, kind);
    if (l < best_loss) {
      best_loss = l;
      best = k;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Multi-center

MultiCenterStrategy::MultiCenterStrategy(ModelSpec spec, Hyperparams hp)
    : FedAvgStrategy(std::move(spec), std::move(hp)), k_(hp_.clusters.value_or(1)) {
  if (k_ == 0) throw ConfigError("hyperparams.K", "must be at least 1");
}

void MultiCenterStrategy::initialize(FederationState& state, std::span<const ClientData> clients) {
  FedAvgStrategy::initialize(state, clients);
  warm_ = k_ == 1;
}

namespace {

const ParamVector& start_point(const FederationState& state, int client_id, ParamVector& scratch) {
  if (auto it = state.assignments.find(client_id); it != state.assignments.end())
    return state.global_params.at(it->second);
  if (state.global_params.size() == 1) return state.global_params[0];
  std::vector<WeightedParams> e;
  for (const auto& c : state.global_params) e.push_back({&c, 1.0});
  scratch = weighted_average(e);
  return scratch;
}

}  // namespace

ClientMessage MultiCenterStrategy::local_update(const ClientData& client, const FederationState& state,
                                                const LocalContext& ctx) const {
  ParamVector scratch;
  const ParamVector& start = start_point(state, client.client_id, scratch);
  ClientMessage m;
  m.client_id = client.client_id;
  m.weight = client.weight;
  m.params.push_back(
      sgd_train(spec_, start, client.train, {local_steps(client, hp_), hp_.lr, hp_.batch_size, ctx.seed}, kind_));
  return m;
}

void MultiCenterStrategy::aggregate(FederationState& state, std::span<const ClientMessage> messages) {
  std::vector<ParamVector> trained;
  std::vector<double> weights;
  for (const auto& m : messages) {
    trained.push_back(m.params.at(0));
    weights.push_back(m.weight);
  }

  std::vector<ParamVector> previous = state.global_params;
  std::vector<bool> occupied(k_, false);
  if (!warm_) {
    if (messages.size() < k_) {
      // Not enough participants to seed K centers yet; keep averaging.
      state.global_params.at(0) = average_messages(messages);
      return;
    }
    previous.clear();
    for (std::size_t i : farthest_point_indices(trained, weights, k_)) previous.push_back(trained[i]);
    state.assignments.clear();
    warm_ = true;
  } else {
    std::vector<int> sent;
    for (const auto& m : messages) sent.push_back(m.client_id);
    for (const auto& [id, k] : state.assignments)
      if (!std::binary_search(sent.begin(), sent.end(), id)) occupied[k] = true;
  }

  EmStep step = em_aggregate(trained, weights, previous, occupied);

  objective_before_ = multicenter_objective(trained, weights, assign_by_weights(trained, previous), previous);
  objective_after_ = multicenter_objective(trained, weights, step.assignment, step.centers);

  state.global_params = std::move(step.centers);
  for (std::size_t i = 0; i < messages.size(); ++i) state.assignments[messages[i].client_id] = step.assignment[i];
}

ClientEval MultiCenterStrategy::evaluate(const FederationState& state, const ClientData& client) const {
  auto it = state.assignments.find(client.client_id);
  const std::size_t k = it != state.assignments.end() ? it->second : 0;
  return evaluate_model(spec_, state.global_params.at(k), client, kind_);
}

// ---------------------------------------------------------------------------
// Hypothesis

ClientMessage HypothesisStrategy::local_update(const ClientData& client, const FederationState& state,
                                               const LocalContext& ctx) const {
  if (state.global_params.size() < k_) return MultiCenterStrategy::local_update(client, state, ctx);
  ClientMessage m;
  m.client_id = client.client_id;
  m.weight = client.weight;
  m.cluster = assign_by_loss(client, state.global_params, spec_, kind_);
  m.params.push_back(sgd_train(spec_, state.global_params[m.cluster], client.train,
                               {local_steps(client, hp_), hp_.lr, hp_.batch_size, ctx.seed}, kind_));
  return m;
}

void HypothesisStrategy::aggregate(FederationState& state, std::span<const ClientMessage> messages) {
  if (state.global_params.size() < k_) {
    MultiCenterStrategy::aggregate(state, messages);
    return;
  }
  std::vector<std::vector<WeightedParams>> members(k_);
  for (const auto& m : messages) members.at(m.cluster).push_back({&m.params.at(0), m.weight});
  for (std::size_t k = 0; k < k_; ++k)
    if (!members[k].empty()) state.global_params[k] = weighted_average(members[k]);
  for (const auto& m : messages) state.assignments[m.client_id] = m.cluster;
}

ClientEval HypothesisStrategy::evaluate(const FederationState& state, const ClientData& client) const {
  auto it = state.assignments.find(client.client_id);
  const std::size_t k = it != state.assignments.end() ? it->second
                                                      : assign_by_loss(client, state.global_params, spec_, kind_);
  return evaluate_model(spec_, state.global_params.at(k), client, kind_);
}

// ---------------------------------------------------------------------------
// Hierarchical

HierarchicalStrategy::HierarchicalStrategy(ModelSpec spec, Hyperparams hp)
    : FedAvgStrategy(std::move(spec), std::move(hp)) {}

ClientMessage HierarchicalStrategy::local_update(const ClientData& client, const FederationState& state,
                                                 const LocalContext& ctx) const {
  auto it = state.assignments.find(client.client_id);
  const std::size_t g = it != state.assignments.end() ? it->second : 0;
  const ParamVector& start = state.global_params.at(g);
  ClientMessage m;
  m.client_id = client.client_id;
  m.weight = client.weight;
  m.cluster = g;
  m.params.push_back(
      sgd_train(spec_, start, client.train, {local_steps(client, hp_), hp_.lr, hp_.batch_size, ctx.seed}, kind_));
  m.params.push_back(m.params[0] - start);
  return m;
}

void HierarchicalStrategy::aggregate(FederationState& state, std::span<const ClientMessage> messages) {
  const std::size_t groups_before = state.global_params.size();
  std::vector<std::vector<std::size_t>> by_group(groups_before);
  for (std::size_t i = 0; i < messages.size(); ++i) by_group.at(messages[i].cluster).push_back(i);

  auto average_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<WeightedParams> e;
    for (std::size_t i : idx) e.push_back({&messages[i].params[0], messages[i].weight});
    return weighted_average(e);
  };

  for (std::size_t g = 0; g < groups_before; ++g) {
    const auto& idx = by_group[g];
    if (idx.empty()) continue;
    state.global_params[g] = average_of(idx);
    for (std::size_t i : idx) state.assignments[messages[i].client_id] = g;

    if (idx.size() < 2 * std::max<std::size_t>(hp_.min_cluster_size, 1)) continue;
    std::vector<ParamVector> updates;
    bool degenerate = false;
    for (std::size_t i : idx) {
      updates.push_back(messages[i].params[1]);
      degenerate = degenerate || norm(updates.back()) == 0.0;
    }
    if (degenerate) continue;
    const Partition parts =
        hierarchical_split(SimilarityMatrix::from_updates(updates), hp_.split_threshold, hp_.min_cluster_size);
    if (parts.size() < 2) continue;
    if (hp_.clusters && state.global_params.size() + parts.size() - 1 > *hp_.clusters) continue;

    for (std::size_t p = 0; p < parts.size(); ++p) {
      std::vector<std::size_t> member_idx;
      for (std::size_t local : parts[p]) member_idx.push_back(idx[local]);
      std::size_t target = g;
      if (p > 0) {
        target = state.global_params.size();
        state.global_params.push_back(ParamVector{});
      }
      state.global_params[target] = average_of(member_idx);
      for (std::size_t i : member_idx) state.assignments[messages[i].client_id] = target;
    }
  }
}

ClientEval HierarchicalStrategy::evaluate(const FederationState& state, const ClientData& client) const {
  auto it = state.assignments.find(client.client_id);
  const std::size_t g = it != state.assignments.end() ? it->second : 0;
  return evaluate_model(spec_, state.global_params.at(g), client, kind_);
}

}  // namespace fedsim
