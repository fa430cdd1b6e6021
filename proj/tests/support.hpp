#pragma once

// Shared helpers for the unit and acceptance tests: random batches,
// finite-difference oracles and small federations.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "fedsim/data.hpp"
#include "fedsim/engine.hpp"
#include "fedsim/model.hpp"

namespace fedsim::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.data) v = n(rng);
  return m;
}

inline ParamVector random_params(std::size_t n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  ParamVector p(n);
  for (double& v : p.values) v = d(rng);
  return p;
}

// Random inputs with hard labels and soft target rows for a classifier spec
// (inputs only for an autoencoder).
inline Batch random_batch(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Batch b;
  b.X = random_matrix(n, spec.input_dim(), rng);
  if (spec.is_classifier()) {
    std::uniform_int_distribution<int> label(0, static_cast<int>(spec.output_dim()) - 1);
    std::gamma_distribution<double> g(1.0, 1.0);
    b.soft_targets = Matrix(n, spec.output_dim());
    for (std::size_t r = 0; r < n; ++r) {
      b.labels.push_back(label(rng));
      double s = 0.0;
      for (double& v : b.soft_targets.row(r)) s += (v = g(rng) + 1e-3);
      for (double& v : b.soft_targets.row(r)) v /= s;
    }
  }
  return b;
}

// Central differences of a scalar function of the parameters.
inline ParamVector fd_gradient(const std::function<double(const ParamVector&)>& f, const ParamVector& w,
                               double h = 1e-5) {
  ParamVector g(w.size());
  ParamVector p = w;
  for (std::size_t j = 0; j < w.size(); ++j) {
    p[j] = w[j] + h;
    const double up = f(p);
    p[j] = w[j] - h;
    const double down = f(p);
    p[j] = w[j];
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

// max_j |a_j - b_j| / max(|a_j|, |b_j|, floor)
inline double max_relative_error(const ParamVector& a, const ParamVector& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = std::abs(a[j] - b[j]);
    worst = std::max(worst, d / std::max({std::abs(a[j]), std::abs(b[j]), floor}));
  }
  return worst;
}

inline double cosine(const ParamVector& a, const ParamVector& b) { return dot(a, b) / (norm(a) * norm(b)); }

inline FederationConfig small_federation(std::size_t clients, std::size_t clusters, SkewKind skew,
                                         std::uint64_t seed) {
  FederationConfig c;
  c.num_clients = clients;
  c.num_clusters = clusters;
  c.samples_min = c.samples_max = 60;
  c.test_samples = 60;
  c.input_dim = 4;
  c.num_classes = 2;
  c.skew = skew;
  c.public_size = 50;
  c.seed = seed;
  return c;
}

inline double mean_accuracy(const std::vector<ClientEval>& evals) {
  double s = 0.0;
  for (const auto& e : evals) s += e.test_accuracy.value_or(0.0);
  return s / static_cast<double>(evals.size());
}

// Runs `rounds` rounds (fewer if the federation halts) and returns the records.
inline std::vector<RoundRecord> run_rounds(FederationState& state, Strategy& strategy,
                                           std::span<const ClientData> clients, std::size_t rounds,
                                           RoundOptions opts = {}) {
  std::vector<RoundRecord> out;
  for (std::size_t r = 0; r < rounds; ++r) {
    auto rec = run_round(state, strategy, clients, opts);
    if (!rec) break;
    out.push_back(std::move(*rec));
  }
  return out;
}

}  // namespace fedsim::testing
