#include <doctest.h>

#include "fedsim/distill.hpp"
#include "fedsim/error.hpp"
#include "fedsim/metrics.hpp"
#include "support.hpp"

using namespace fedsim;
using namespace fedsim::testing;

namespace {

PredictionMatrix rows_of(std::vector<std::vector<double>> rows, int id = 0) {
  PredictionMatrix p;
  p.rows = Matrix(0, rows.front().size());
  for (const auto& r : rows) p.rows.append_row(r);
  p.model_id = id;
  return p;
}

Hyperparams distill_hp() {
  Hyperparams hp;
  hp.lr = 0.2;
  hp.lambda = 1.0;
  hp.temperature = 2.0;
  hp.k_select = 2;
  return hp;
}

}  // namespace

TEST_CASE("public predictions are probability rows tagged with model and round") {
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 3);
  Rng rng(2);
  const Matrix X = random_matrix(7, 4, rng);
  const PredictionMatrix p = public_predictions(spec, init_params(spec, 1), X, 4, 2);
  CHECK(p.size() == 7);
  CHECK(p.num_classes() == 3);
  CHECK(p.model_id == 4);
  CHECK(p.round == 2);
  p.validate();
  CHECK(p.rows == forward(spec, init_params(spec, 1), X));
  CHECK_THROWS_AS(public_predictions(spec, init_params(spec, 1), random_matrix(3, 5, rng)), ShapeError);
  CHECK_THROWS_AS(public_predictions(ModelSpec::autoencoder(4, {2}), init_params(ModelSpec::autoencoder(4, {2}), 1), X),
                  DomainError);
}

TEST_CASE("average_predictions: worked example and errors") {
  const auto a = rows_of({{1.0, 0.0}, {0.5, 0.5}});
  const auto b = rows_of({{0.0, 1.0}, {0.5, 0.5}});
  const auto avg = average_predictions(std::vector<PredictionMatrix>{a, b}, std::vector<double>{3.0, 1.0});
  CHECK(avg.rows(0, 0) == doctest::Approx(0.75));
  CHECK(avg.rows(0, 1) == doctest::Approx(0.25));
  CHECK(avg.rows(1, 0) == 0.5);

  CHECK_THROWS_AS(average_predictions(std::vector<PredictionMatrix>{}, std::vector<double>{}), DomainError);
  CHECK_THROWS_AS(average_predictions(std::vector<PredictionMatrix>{a, b}, std::vector<double>{1.0}), ShapeError);
  CHECK_THROWS_AS(average_predictions(std::vector<PredictionMatrix>{a, rows_of({{1.0, 0.0}})},
                                      std::vector<double>{1.0, 1.0}),
                  ShapeError);
  CHECK_THROWS_AS(rows_of({{0.7, 0.7}}).validate(), DomainError);
}

TEST_CASE("average_predictions against a direct oracle stays row-stochastic") {
  Rng rng(6);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int t = 0; t < 30; ++t) {
    const ModelSpec spec = ModelSpec::logistic(3, 2 + t % 4);
    const Matrix X = random_matrix(9, 3, rng);
    std::vector<PredictionMatrix> mats;
    std::vector<double> w;
    for (int m = 0; m < 1 + t % 5; ++m) {
      mats.push_back(public_predictions(spec, random_params(spec.parameter_count(), rng), X, m));
      w.push_back(u(rng));
    }
    const PredictionMatrix avg = average_predictions(mats, w);
    avg.validate();
    double total = 0.0;
    for (double x : w) total += x;
    for (std::size_t r = 0; r < avg.size(); ++r)
      for (std::size_t c = 0; c < avg.num_classes(); ++c) {
        double expect = 0.0;
        for (std::size_t m = 0; m < mats.size(); ++m) expect += w[m] * mats[m].rows(r, c);
        CHECK(avg.rows(r, c) == doctest::Approx(expect / total).epsilon(1e-12));
      }
  }
}

TEST_CASE("distillation gradient matches finite differences") {
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 3);
  Rng rng(3);
  const Matrix X = random_matrix(10, 4, rng);
  const PredictionMatrix consensus = public_predictions(spec, random_params(spec.parameter_count(), rng), X);
  const Batch priv = random_batch(spec, 8, 9);
  const ParamVector w = init_params(spec, 4);
  for (double lambda : {0.0, 0.7})
    for (double T : {1.0, 3.0}) {
      const LossGrad lg = distill_loss_grad(spec, w, X, consensus, priv, lambda, T);
      const auto fd = fd_gradient(
          [&](const ParamVector& p) { return distill_loss_grad(spec, p, X, consensus, priv, lambda, T).loss; }, w);
      CHECK(max_relative_error(lg.grad, fd) < 1e-5);
    }
}

TEST_CASE("distilling towards one's own predictions is a fixed point") {
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 2);
  Rng rng(1);
  const Matrix X = random_matrix(20, 4, rng);
  const ParamVector w = random_params(spec.parameter_count(), rng);
  const PredictionMatrix self = public_predictions(spec, w, X);
  const Batch priv = random_batch(spec, 5, 2);
  const LossGrad lg = distill_loss_grad(spec, w, X, self, priv, 0.0, 1.0);
  CHECK(lg.loss == 0.0);
  CHECK(std::all_of(lg.grad.values.begin(), lg.grad.values.end(), [](double g) { return g == 0.0; }));
  CHECK(distill_update(spec, w, X, self, priv, {0.0, 1.0, 20, 0.3, 5, 1}) == w);
}

TEST_CASE("with a dominant private term the update follows the private gradient") {
  const ModelSpec spec = ModelSpec::logistic(4, 2);
  Rng rng(2);
  const Matrix X = random_matrix(20, 4, rng);
  const PredictionMatrix consensus = public_predictions(spec, random_params(spec.parameter_count(), rng), X);
  const Batch priv = random_batch(spec, 30, 3);
  const ParamVector w = init_params(spec, 5);
  const LossGrad big = distill_loss_grad(spec, w, X, consensus, priv, 1e8, 1.0);
  const LossGrad ce = loss_and_grad(spec, w, priv, LossKind::cross_entropy);
  CHECK(cosine(big.grad, ce.grad) > 1.0 - 1e-6);
}

TEST_CASE("registry cycles architectures and validates shared dimensions") {
  const std::vector<ModelSpec> archs{ModelSpec::mlp(4, {3}, 2), ModelSpec::mlp(4, {8, 4}, 2)};
  const std::vector<int> ids{5, 1, 3};
  HeteroModelRegistry reg(archs, ids);
  CHECK(reg.size() == 3);
  CHECK(reg.spec_for(1) == archs[0]);
  CHECK(reg.spec_for(3) == archs[1]);
  CHECK(reg.spec_for(5) == archs[0]);
  CHECK_THROWS(reg.spec_for(2));
  CHECK_THROWS_AS(reg.set(7, ModelSpec::mlp(5, {3}, 2)), ShapeError);
  CHECK_THROWS_AS(reg.set(7, ModelSpec::mlp(4, {3}, 3)), ShapeError);
  CHECK_THROWS_AS(reg.set(7, ModelSpec::autoencoder(4, {2})), DomainError);
  reg.set(7, ModelSpec::logistic(4, 2));
  CHECK(reg.contains(7));
}

TEST_CASE("validation_split keeps the tail for validation") {
  const auto [fit, val] = validation_split(10, 0.2);
  CHECK(fit == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(val == std::vector<std::size_t>{8, 9});
  const auto [f2, v2] = validation_split(2, 0.01);
  CHECK(f2.size() == 1);
  CHECK(v2.size() == 1);
}

TEST_CASE("one-shot ensemble: selection by validation loss and probability averaging") {
  const ModelSpec spec = ModelSpec::logistic(1, 2);
  const std::vector<int> ids{0, 1, 2};
  HeteroModelRegistry reg(std::vector<ModelSpec>{spec}, ids);
  // Bias-only models: softmax(b) with zero weight on the single input.
  auto model = [&](double p0) {
    ParamVector w(spec.parameter_count());
    w[2] = std::log(p0);
    w[3] = std::log(1.0 - p0);
    return w;
  };
  const std::map<int, ParamVector> params{{0, model(0.55)}, {1, model(0.45)}, {2, model(0.1)}};
  const std::map<int, double> val{{0, 0.3}, {1, 0.3}, {2, 0.9}};

  const EnsembleModel top2 = one_shot_ensemble(reg, params, val, 2);
  CHECK(top2.member_ids == std::vector<int>{0, 1});
  Matrix X(1, 1);
  const Matrix p = top2.predict_proba(X);
  CHECK(p(0, 0) == doctest::Approx(0.5));
  const EnsembleModel top1 = one_shot_ensemble(reg, params, val, 1);
  CHECK(top1.member_ids == std::vector<int>{0});  // tie goes to the lower id
  CHECK(top1.predict(X) == std::vector<int>{0});
  const EnsembleModel all = one_shot_ensemble(reg, params, val, 3);
  CHECK(all.predict_proba(X)(0, 0) == doctest::Approx((0.55 + 0.45 + 0.1) / 3.0));
  CHECK(all.predict(X) == std::vector<int>{1});

  CHECK_THROWS_AS(one_shot_ensemble(reg, params, val, 0), DomainError);
  CHECK_THROWS_AS(one_shot_ensemble(reg, params, val, 4), DomainError);
}

TEST_CASE("one-shot ensemble does at least as well as the median member") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    FederationConfig cfg = small_federation(6, 1, SkewKind::label_skew, seed);
    cfg.dirichlet_alpha = 0.3;
    const Federation fed = generate_federation(cfg);
    Hyperparams hp = distill_hp();
    hp.k_select = 6;
    hp.local_epochs = 5;
    OneShotStrategy oneshot({ModelSpec::mlp(4, {6}, 2), ModelSpec::logistic(4, 2)}, hp);
    FederationState st = make_state(fed.clients, seed);
    oneshot.initialize(st, fed.clients);
    REQUIRE(run_round(st, oneshot, fed.clients, {}));
    CHECK_THROWS_AS(oneshot.aggregate(st, std::vector<ClientMessage>{}), ContractViolation);

    Batch pooled_test;
    pooled_test.X = Matrix(0, 4);
    for (const auto& c : fed.clients)
      for (std::size_t r = 0; r < c.test.size(); ++r) {
        pooled_test.X.append_row(c.test.X.row(r));
        pooled_test.labels.push_back(c.test.labels[r]);
      }
    std::vector<double> member;
    for (const auto& c : fed.clients) {
      const ModelSpec& spec = oneshot.registry().spec_for(c.client_id);
      member.push_back(accuracy(argmax_rows(forward(spec, st.personal_params.at(c.client_id), pooled_test.X)),
                                pooled_test.labels));
    }
    std::sort(member.begin(), member.end());
    const double median = 0.5 * (member[2] + member[3]);
    CHECK(accuracy(oneshot.ensemble().predict(pooled_test.X), pooled_test.labels) >= median);
  }
}

TEST_CASE("distillation strategy: contract, leave-one-out consensus, heterogeneous benefit") {
  const Federation fed = generate_federation(small_federation(4, 1, SkewKind::label_skew, 2));
  const std::vector<ModelSpec> archs{ModelSpec::mlp(4, {6}, 2), ModelSpec::logistic(4, 2)};

  DistillStrategy no_public(archs, distill_hp());
  FederationState st0 = make_state(fed.clients, 1);
  CHECK_THROWS_AS(no_public.initialize(st0, fed.clients), ContractViolation);

  DistillStrategy d(archs, distill_hp());
  d.set_public_data(fed.public_holdout.X);
  FederationState st = make_state(fed.clients, 1);
  d.initialize(st, fed.clients);
  CHECK_FALSE(d.consensus_for(st, 0).has_value());
  run_rounds(st, d, fed.clients, 1);
  const auto cons = d.consensus_for(st, 0);
  REQUIRE(cons);
  // Leave-one-out: uniform mean of clients 1..3.
  for (std::size_t r = 0; r < cons->size(); ++r) {
    double expect = 0.0;
    for (int id : {1, 2, 3}) expect += st.public_predictions.at(id)(r, 0) / 3.0;
    CHECK(cons->rows(r, 0) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("distillation beats local-only training on label-skewed clients") {
  // Scored on the pooled test rows: local-only models never learn the classes
  // their own prior rarely shows, while distillation transfers them.
  double distill_acc = 0.0, local_acc = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    FederationConfig cfg = small_federation(6, 1, SkewKind::label_skew, seed);
    cfg.dirichlet_alpha = 0.2;
    const Federation fed = generate_federation(cfg);
    const std::vector<ModelSpec> archs{ModelSpec::mlp(4, {6}, 2), ModelSpec::logistic(4, 2)};
    Hyperparams hp = distill_hp();
    const std::size_t rounds = 8;

    DistillStrategy d(archs, hp);
    d.set_public_data(fed.public_holdout.X);
    FederationState st = make_state(fed.clients, seed);
    d.initialize(st, fed.clients);
    const auto init = st.personal_params;
    run_rounds(st, d, fed.clients, rounds);

    Batch pooled;
    pooled.X = Matrix(0, 4);
    for (const auto& c : fed.clients)
      for (std::size_t r = 0; r < c.test.size(); ++r) {
        pooled.X.append_row(c.test.X.row(r));
        pooled.labels.push_back(c.test.labels[r]);
      }
    for (const auto& c : fed.clients) {
      const ModelSpec& spec = d.registry().spec_for(c.client_id);
      const ParamVector local =
          sgd_train(spec, init.at(c.client_id), c.train, {rounds * local_steps(c, hp), hp.lr, hp.batch_size, seed});
      distill_acc += accuracy(argmax_rows(forward(spec, st.personal_params.at(c.client_id), pooled.X)), pooled.labels);
      local_acc += accuracy(argmax_rows(forward(spec, local, pooled.X)), pooled.labels);
    }
  }
  MESSAGE("pooled accuracy: distill " << distill_acc / 30 << ", local-only " << local_acc / 30);
  CHECK(distill_acc >= local_acc);
}
