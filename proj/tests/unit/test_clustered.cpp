#include <doctest.h>

#include "fedsim/clustered.hpp"
#include "fedsim/error.hpp"
#include "fedsim/metrics.hpp"
#include "support.hpp"

using namespace fedsim;
using namespace fedsim::testing;

namespace {

ParamVector pv(std::initializer_list<double> v) {
  ParamVector p(v.size());
  std::copy(v.begin(), v.end(), p.values.begin());
  return p;
}

double sq_dist(const ParamVector& a, const ParamVector& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

// Two blocks of size a and b: `within` inside a block, `across` between.
SimilarityMatrix block_matrix(std::size_t a, std::size_t b, double within, double across) {
  const std::size_t n = a + b;
  std::vector<double> v(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) v[i * n + j] = i == j ? 1.0 : ((i < a) == (j < a) ? within : across);
  return SimilarityMatrix::from_values(n, v);
}

}  // namespace

TEST_CASE("nearest_center: examples, ties and a brute-force oracle") {
  const std::vector<ParamVector> centers{pv({0, 0}), pv({2, 0}), pv({0, 2})};
  CHECK(nearest_center(pv({1.9, 0.1}), centers) == 1);
  CHECK(nearest_center(pv({1, 0}), centers) == 0);  // equidistant from 0 and 1
  CHECK(nearest_center(pv({1, 1}), centers) == 0);  // equidistant from all three
  CHECK_THROWS_AS(nearest_center(pv({1, 1}), std::vector<ParamVector>{}), DomainError);

  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<ParamVector> cs;
    for (int k = 0; k < 5; ++k) cs.push_back(random_params(3, rng));
    const ParamVector w = random_params(3, rng);
    std::size_t best = 0;
    for (std::size_t k = 1; k < cs.size(); ++k)
      if (sq_dist(w, cs[k]) < sq_dist(w, cs[best])) best = k;
    CHECK(nearest_center(w, cs) == best);
  }
}

TEST_CASE("em_aggregate never increases the objective") {
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 12, k = 3;
    std::vector<ParamVector> pts;
    std::vector<double> w;
    for (std::size_t i = 0; i < n; ++i) {
      pts.push_back(random_params(4, rng));
      w.push_back(1.0 + double(i % 3));
    }
    std::vector<ParamVector> centers{pts[0], pts[1], pts[2]};
    std::vector<std::size_t> assignment = assign_by_weights(pts, centers);
    double prev = multicenter_objective(pts, w, assignment, centers);
    for (int it = 0; it < 6; ++it) {
      const EmStep step = em_aggregate(pts, w, centers, std::vector<bool>(k, true));
      const double before = multicenter_objective(pts, w, step.assignment, centers);
      const double after = multicenter_objective(pts, w, step.assignment, step.centers);
      CHECK(before <= prev + 1e-12);  // reassignment step
      CHECK(after <= before + 1e-12);  // center step
      prev = after;
      centers = step.centers;
    }
  }
}

TEST_CASE("multicenter_objective rejects mismatched inputs") {
  const std::vector<ParamVector> pts{pv({1})}, centers{pv({0})};
  const std::vector<double> w{1.0};
  CHECK(multicenter_objective(pts, w, std::vector<std::size_t>{0}, centers) == 1.0);
  CHECK_THROWS(multicenter_objective(pts, w, std::vector<std::size_t>{1}, centers));
  CHECK_THROWS(multicenter_objective(pts, std::vector<double>{}, std::vector<std::size_t>{0}, centers));
}

TEST_CASE("multicenter recovers well separated clusters on label-swap data") {
  const Federation fed = generate_federation(small_federation(8, 2, SkewKind::label_swap, 21));
  Hyperparams hp;
  hp.lr = 0.2;
  hp.clusters = 2;
  hp.local_epochs = 2;
  MultiCenterStrategy mc(ModelSpec::logistic(4, 2), hp);
  FederationState s = make_state(fed.clients, 4);
  mc.initialize(s, fed.clients);
  run_rounds(s, mc, fed.clients, 10);
  std::vector<int> predicted;
  for (const auto& c : fed.clients) predicted.push_back(static_cast<int>(s.assignments.at(c.client_id)));
  CHECK(cluster_purity(predicted, fed.true_clusters) == 1.0);
  CHECK(mc.last_objective_after() <= mc.last_objective_before() + 1e-12);
}

TEST_CASE("gradient_cosine: examples and errors") {
  CHECK(gradient_cosine(pv({1, 0}), pv({0, 3})) == 0.0);
  CHECK(gradient_cosine(pv({1, 1}), pv({2, 2})) == doctest::Approx(1.0));
  CHECK(gradient_cosine(pv({1, 1}), pv({-2, -2})) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(gradient_cosine(pv({0, 0}), pv({1, 0})), UndefinedSimilarityError);
  CHECK_THROWS_AS(gradient_cosine(pv({1}), pv({1, 0})), ShapeError);
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const double c = gradient_cosine(random_params(6, rng), random_params(6, rng));
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("similarity matrix validation") {
  CHECK_THROWS_AS(SimilarityMatrix::from_values(2, {1, 0.5, 0.4, 1}), DomainError);
  CHECK_THROWS_AS(SimilarityMatrix::from_values(2, {0.9, 0.5, 0.5, 1}), DomainError);
  CHECK_THROWS_AS(SimilarityMatrix::from_values(2, {1, 1.5, 1.5, 1}), DomainError);
  CHECK_THROWS_AS(SimilarityMatrix::from_values(2, {1, 0.5, 0.5}), ShapeError);
  const auto m = SimilarityMatrix::from_updates(std::vector<ParamVector>{pv({1, 0}), pv({1, 1}), pv({0, 1})});
  CHECK(m(0, 0) == 1.0);
  CHECK(m(0, 2) == 0.0);
  CHECK(m(0, 1) == doctest::Approx(std::sqrt(0.5)));
  CHECK(m(1, 0) == m(0, 1));
}

TEST_CASE("hierarchical_split: planted blocks, homogeneous groups, minimum size") {
  CHECK(hierarchical_split(block_matrix(3, 4, 0.9, -0.6), 0.0, 2) == Partition{{0, 1, 2}, {3, 4, 5, 6}});
  CHECK(hierarchical_split(block_matrix(3, 4, 0.9, 0.8), 0.0, 2) == Partition{{0, 1, 2, 3, 4, 5, 6}});
  // A split leaving a singleton is refused.
  CHECK(hierarchical_split(block_matrix(1, 4, 0.9, -0.6), 0.0, 2) == Partition{{0, 1, 2, 3, 4}});
  CHECK(hierarchical_split(block_matrix(1, 4, 0.9, -0.6), 0.0, 1) == Partition{{0}, {1, 2, 3, 4}});
}

TEST_CASE("hierarchical_split: three update directions give three groups") {
  Rng rng(5);
  std::normal_distribution<double> noise(0.0, 0.05);
  const std::vector<ParamVector> dirs{pv({1, 0, 0}), pv({-0.5, 0.87, 0}), pv({-0.5, -0.87, 0})};
  std::vector<ParamVector> updates;
  for (int i = 0; i < 9; ++i) {
    ParamVector u = dirs[i % 3];
    for (double& v : u.values) v += noise(rng);
    updates.push_back(u);
  }
  const Partition p = hierarchical_split(SimilarityMatrix::from_updates(updates), 0.0, 2);
  CHECK(p == Partition{{0, 3, 6}, {1, 4, 7}, {2, 5, 8}});
}

TEST_CASE("assign_by_loss picks the lowest-loss center, ties to the lowest index") {
  const Federation fed = generate_federation(small_federation(2, 1, SkewKind::label_swap, 6));
  const ModelSpec spec = ModelSpec::logistic(4, 2);
  const ClientData& c = fed.clients[0];
  const ParamVector good = sgd_train(spec, init_params(spec, 1), c.train, {300, 0.2, 10, 1});
  ParamVector bad = good;
  for (double& v : bad.values) v = -v;
  CHECK(assign_by_loss(c, std::vector<ParamVector>{bad, good}, spec) == 1);
  CHECK(assign_by_loss(c, std::vector<ParamVector>{good, bad}, spec) == 0);
  CHECK(assign_by_loss(c, std::vector<ParamVector>{bad, good, good}, spec) == 1);
  CHECK_THROWS_AS(assign_by_loss(c, std::vector<ParamVector>{}, spec), DomainError);
}

TEST_CASE("hypothesis and hierarchical strategies separate label-swap clusters") {
  const Federation fed = generate_federation(small_federation(8, 2, SkewKind::label_swap, 13));
  const ModelSpec spec = ModelSpec::logistic(4, 2);
  Hyperparams hp;
  hp.lr = 0.2;
  hp.clusters = 2;
  hp.alpha = 0.0;
  hp.split_threshold = 0.0;
  for (const char* name : {"hypothesis", "hierarchical"}) {
    CAPTURE(name);
    auto strat = make_strategy(name, spec, hp);
    FederationState s = make_state(fed.clients, 3);
    strat->initialize(s, fed.clients);
    run_rounds(s, *strat, fed.clients, 12);
    std::vector<int> predicted;
    for (const auto& c : fed.clients) predicted.push_back(static_cast<int>(s.assignments.at(c.client_id)));
    CHECK(cluster_purity(predicted, fed.true_clusters) == 1.0);
  }
}
