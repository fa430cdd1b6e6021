#pragma once

// Clustered federated learning: multi-center EM on parameter distance,
// hierarchical splitting on gradient-update cosine similarity, and
// hypothesis (minimal-loss) cluster assignment.

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "fedsim/strategies.hpp"

namespace fedsim {

struct ClusterModelSet {
  std::vector<ParamVector> centers;
  std::map<int, std::size_t> assignment;
};

// argmin_k ||w - centers[k]||^2, ties to the lowest k.
std::size_t nearest_center(const ParamVector& w, std::span<const ParamVector> centers);
std::vector<std::size_t> assign_by_weights(std::span<const ParamVector> client_params,
                                           std::span<const ParamVector> centers);

// sum_i p_i ||W_i - W^(a_i)||^2
double multicenter_objective(std::span<const ParamVector> client_params, std::span<const double> weights,
                             std::span<const std::size_t> assignment, std::span<const ParamVector> centers);

// Indices of k points chosen by farthest-point sampling. The first pick is the
// point farthest from the weighted mean; ties go to the lowest index.
std::vector<std::size_t> farthest_point_indices(std::span<const ParamVector> points, std::span<const double> weights,
                                                std::size_t k);

struct EmStep {
  std::vector<ParamVector> centers;
  std::vector<std::size_t> assignment;  // per input point
};

// Assignment by weights followed by the per-cluster p_i-weighted mean.
// `previous` supplies centers for clusters that receive no point; a cluster
// with no member at all (`occupied[k]` false) is re-seeded with the point
// that fits its own new center worst, taken from a cluster of size >= 2.
EmStep em_aggregate(std::span<const ParamVector> client_params, std::span<const double> weights,
                    std::span<const ParamVector> previous, const std::vector<bool>& occupied);

// Full-participation EM round: local SGD from each client's assigned center
// (unassigned clients start from the mean of the centers), then em_aggregate.
ClusterModelSet em_round(std::span<const ClientData> clients, const ClusterModelSet& state, const ModelSpec& spec,
                         const Hyperparams& hp, std::uint64_t seed, std::size_t round = 0);

// <a,b> / (|a| |b|), clamped to [-1, 1]. Throws UndefinedSimilarityError on zero vectors.
double gradient_cosine(const ParamVector& a, const ParamVector& b);

class SimilarityMatrix {
 public:
  explicit SimilarityMatrix(std::size_t n);
  // Pairwise gradient_cosine of the given updates.
  static SimilarityMatrix from_updates(std::span<const ParamVector> updates);
  // Validates symmetry (1e-12), bounds and unit diagonal.
  static SimilarityMatrix from_values(std::size_t n, std::vector<double> values);

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, double v);

 private:
  std::size_t n_;
  std::vector<double> values_;
};

using Partition = std::vector<std::vector<std::size_t>>;

// Recursive bi-partitioning. Each group is split into two by complete-linkage
// agglomeration on distance 1 - alpha; the split is kept only when the largest
// cross-group similarity is below `split_threshold` and both sides hold at
// least `min_cluster_size` members. Groups come back sorted, ordered by their
// smallest member.
Partition hierarchical_split(const SimilarityMatrix& sim, double split_threshold, std::size_t min_cluster_size);

// argmin_k L(D_i, W_k) on the full train split, ties to the lowest k.
std::size_t assign_by_loss(const ClientData& client, std::span<const ParamVector> centers, const ModelSpec& spec,
                           LossKind kind = LossKind::cross_entropy);

// Multi-center FL (parameter-space K-means / EM). The first round is a warm-up:
// clients train from the shared init and K centers are picked among the
// resulting models by farthest-point sampling.
class MultiCenterStrategy : public FedAvgStrategy {
 public:
  MultiCenterStrategy(ModelSpec spec, Hyperparams hp);

  std::string_view name() const override { return "multicenter"; }
  void initialize(FederationState& state, std::span<const ClientData> clients) override;
  ClientMessage local_update(const ClientData& client, const FederationState& state,
                             const LocalContext& ctx) const override;
  void aggregate(FederationState& state, std::span<const ClientMessage> messages) override;
  ClientEval evaluate(const FederationState& state, const ClientData& client) const override;
  bool uses_clusters() const override { return true; }

  // Objective values around the last M-step: before (old centers, new
  // assignment) and after (new centers).
  double last_objective_before() const { return objective_before_; }
  double last_objective_after() const { return objective_after_; }

 protected:
  std::size_t k_;
  bool warm_ = false;
  double objective_before_ = 0.0;
  double objective_after_ = 0.0;
};

// Hypothesis clustering: each participant picks the center with minimal loss
// on its own data, trains from it, and centers average their members.
class HypothesisStrategy : public MultiCenterStrategy {
 public:
  using MultiCenterStrategy::MultiCenterStrategy;

  std::string_view name() const override { return "hypothesis"; }
  ClientMessage local_update(const ClientData& client, const FederationState& state,
                             const LocalContext& ctx) const override;
  void aggregate(FederationState& state, std::span<const ClientMessage> messages) override;
  ClientEval evaluate(const FederationState& state, const ClientData& client) const override;
};

// Hierarchical clustering on client updates: groups train with FedAvg and are
// recursively split when their members' updates point in conflicting directions.
class HierarchicalStrategy : public FedAvgStrategy {
 public:
  HierarchicalStrategy(ModelSpec spec, Hyperparams hp);

  std::string_view name() const override { return "hierarchical"; }
  ClientMessage local_update(const ClientData& client, const FederationState& state,
                             const LocalContext& ctx) const override;
  void aggregate(FederationState& state, std::span<const ClientMessage> messages) override;
  ClientEval evaluate(const FederationState& state, const ClientData& client) const override;
  bool uses_clusters() const override { return true; }
};

}  // namespace fedsim
