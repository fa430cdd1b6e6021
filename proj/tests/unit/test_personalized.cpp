#include <doctest.h>

#include <numeric>

#include "fedsim/error.hpp"
#include "fedsim/personalized.hpp"
#include "support.hpp"

using namespace fedsim;
using namespace fedsim::testing;

namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

double test_loss(const ModelSpec& spec, const ParamVector& w, const ClientData& c) {
  return evaluate_loss(spec, w, c.test, LossKind::cross_entropy);
}

double train_loss(const ModelSpec& spec, const ParamVector& w, const ClientData& c) {
  return evaluate_loss(spec, w, c.train, LossKind::cross_entropy);
}

}  // namespace

TEST_CASE("mixture objective: value and both partials") {
  const ModelSpec spec = ModelSpec::mlp(4, {3}, 2);
  const Batch data = random_batch(spec, 12, 2);
  const auto rows = all_rows(12);
  const ParamVector g = init_params(spec, 1), p = init_params(spec, 2);
  for (double lambda : {0.0, 0.3, 2.0}) {
    CAPTURE(lambda);
    const MixtureLossGrad m = mixture_objective_grad(spec, data, g, p, lambda, rows);
    const double lg = evaluate_loss(spec, g, data, LossKind::cross_entropy);
    const double lp = evaluate_loss(spec, p, data, LossKind::cross_entropy);
    CHECK(m.loss == doctest::Approx(lg + lambda * lp).epsilon(1e-12));

    const auto fd_g = fd_gradient(
        [&](const ParamVector& w) { return mixture_objective_grad(spec, data, w, p, lambda, rows).loss; }, g);
    const auto fd_p = fd_gradient(
        [&](const ParamVector& w) { return mixture_objective_grad(spec, data, g, w, lambda, rows).loss; }, p);
    CHECK(max_relative_error(m.grad_global, fd_g) < 1e-5);
    if (lambda == 0.0) {
      CHECK(std::all_of(m.grad_personal.values.begin(), m.grad_personal.values.end(),
                        [](double v) { return v == 0.0; }));
    } else {
      CHECK(max_relative_error(m.grad_personal, fd_p) < 1e-5);
    }
  }
}

TEST_CASE("mixture objective rejects mismatched shapes") {
  const ModelSpec spec = ModelSpec::logistic(4, 2);
  const Batch data = random_batch(spec, 5, 1);
  CHECK_THROWS_AS(mixture_objective_grad(spec, data, init_params(spec, 1), ParamVector(3), 1.0, all_rows(5)),
                  ShapeError);
}

TEST_CASE("proximal personalization: limits in lambda") {
  const Federation fed = generate_federation(small_federation(3, 1, SkewKind::label_swap, 4));
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 2);
  const ParamVector w = init_params(spec, 9);
  for (const auto& c : fed.clients) {
    const SgdOptions opts{40, 0.2, 8, 5u + static_cast<std::uint64_t>(c.client_id)};
    CHECK(proximal_personalize(c, spec, w, 0.0, opts) == finetune_baseline(c, spec, w, opts));
    const ParamVector tight = proximal_personalize(c, spec, w, 1e6, opts);
    double drift = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) drift = std::max(drift, std::abs(tight[j] - w[j]));
    CHECK(drift < 1e-5);
    CHECK(proximal_personalize(c, spec, w, 1.0, {0, 0.2, 8, 1}) == w);
  }
}

TEST_CASE("proximal minimizer: quadratic closed form and monotone shrinkage") {
  // f(w) = 1/2 ||w - c||^2, anchor a: minimizer (c + lambda a) / (1 + lambda).
  const ParamVector c{2.0, -1.0, 0.5};
  const ParamVector a{-1.0, 3.0, 0.0};
  const BatchObjective f = [&](const ParamVector& w, std::span<const std::size_t>) {
    ParamVector d = w;
    for (std::size_t j = 0; j < d.size(); ++j) d[j] -= c[j];
    return LossGrad{0.5 * dot(d, d), d};
  };
  double prev_dist = -1.0;
  for (double lambda : {0.0, 0.5, 2.0, 50.0}) {
    const ParamVector w = proximal_minimize(f, 1, a, lambda, {3000, 0.05, 1, 0});
    for (std::size_t j = 0; j < w.size(); ++j) CHECK(w[j] == doctest::Approx((c[j] + lambda * a[j]) / (1 + lambda)));
    double dist = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) dist += (w[j] - c[j]) * (w[j] - c[j]);
    CHECK(dist > prev_dist);  // pulled further from the local optimum as lambda grows
    prev_dist = dist;
  }
}

TEST_CASE("one-step meta objective: toy value, gradient and small-alpha limit") {
  const GradientFn quad = [](const ParamVector& w) { return LossGrad{0.5 * dot(w, w), w}; };
  const LossGrad toy = one_step_meta_loss_grad(quad, ParamVector{1.0}, 0.5);
  CHECK(toy.loss == 0.125);
  CHECK(toy.grad[0] == doctest::Approx(0.25).epsilon(1e-8));  // (1 - alpha)^2 w

  const Federation fed = generate_federation(small_federation(1, 1, SkewKind::label_swap, 2));
  const ClientData& c = fed.clients[0];
  const ModelSpec spec = ModelSpec::mlp(4, {4}, 2);
  const ParamVector w = init_params(spec, 3);
  const LossGrad plain = loss_and_grad(spec, w, c.train, LossKind::cross_entropy);
  const LossGrad tiny = one_step_meta_loss_grad(c, spec, w, 1e-9);
  CHECK(tiny.loss == doctest::Approx(plain.loss).epsilon(1e-8));
  CHECK(max_relative_error(tiny.grad, plain.grad, 1e-4) < 1e-4);

  CHECK_THROWS_AS(one_step_personalize(c, spec, w, 0.0), DomainError);
  const ParamVector stepped = one_step_personalize(c, spec, w, 0.3);
  for (std::size_t j = 0; j < w.size(); ++j) CHECK(stepped[j] == doctest::Approx(w[j] - 0.3 * plain.grad[j]));
}

TEST_CASE("fine-tuning with zero steps returns the global model") {
  const Federation fed = generate_federation(small_federation(1, 1, SkewKind::label_swap, 2));
  const ModelSpec spec = ModelSpec::logistic(4, 2);
  const ParamVector w = init_params(spec, 1);
  CHECK(finetune_baseline(fed.clients[0], spec, w, {0, 0.1, 10, 0}) == w);
}

TEST_CASE("long fine-tuning on a tiny client overfits more than short fine-tuning") {
  double gap_short = 0.0, gap_long = 0.0;
  double drift_ft = 0.0, drift_prox = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    FederationConfig cfg = small_federation(1, 1, SkewKind::label_swap, seed);
    cfg.samples_min = cfg.samples_max = 8;
    cfg.input_dim = 10;
    cfg.test_samples = 400;
    cfg.separation = 1.0;
    const Federation fed = generate_federation(cfg);
    const ClientData& c = fed.clients[0];
    const ModelSpec spec = ModelSpec::mlp(10, {16}, 2);
    const ParamVector w = init_params(spec, seed);
    const ParamVector short_ft = finetune_baseline(c, spec, w, {20, 0.3, 4, seed});
    const ParamVector long_ft = finetune_baseline(c, spec, w, {500, 0.3, 4, seed});
    gap_short += test_loss(spec, short_ft, c) - train_loss(spec, short_ft, c);
    gap_long += test_loss(spec, long_ft, c) - train_loss(spec, long_ft, c);

    const ParamVector prox = proximal_personalize(c, spec, w, 1.0, {500, 0.3, 4, seed});
    drift_ft += std::sqrt(std::inner_product(long_ft.values.begin(), long_ft.values.end(), w.values.begin(), 0.0,
                                             std::plus<>(), [](double x, double y) { return (x - y) * (x - y); }));
    drift_prox += std::sqrt(std::inner_product(prox.values.begin(), prox.values.end(), w.values.begin(), 0.0,
                                               std::plus<>(), [](double x, double y) { return (x - y) * (x - y); }));
  }
  CHECK(gap_long > gap_short);
  CHECK(drift_prox < drift_ft);
}

TEST_CASE("personalized strategies beat the shared model on label-swap clusters") {
  const Federation fed = generate_federation(small_federation(6, 2, SkewKind::label_swap, 31));
  const ModelSpec spec = ModelSpec::logistic(4, 2);
  Hyperparams hp;
  hp.lr = 0.2;
  hp.local_epochs = 2;
  hp.lambda = 1.0;
  hp.alpha = 0.1;

  auto deployed_accuracy = [&](Strategy& s) {
    FederationState st = make_state(fed.clients, 7);
    s.initialize(st, fed.clients);
    run_rounds(st, s, fed.clients, 10);
    std::vector<ClientEval> evals;
    for (const auto& c : fed.clients) evals.push_back(s.evaluate(st, c));
    return mean_accuracy(evals);
  };
  FedAvgStrategy fedavg(spec, hp);
  MixtureStrategy mixture(spec, hp);
  ProximalStrategy proximal(spec, hp);
  const double base = deployed_accuracy(fedavg);
  CHECK(deployed_accuracy(mixture) >= base);
  CHECK(deployed_accuracy(proximal) >= base);
}

TEST_CASE("personal_model is exposed only when a personal model is deployed") {
  const Federation fed = generate_federation(small_federation(2, 1, SkewKind::label_swap, 3));
  const ModelSpec spec = ModelSpec::logistic(4, 2);
  Hyperparams hp;
  hp.lambda = 0.0;
  MixtureStrategy off(spec, hp);
  hp.lambda = 0.5;
  MixtureStrategy on(spec, hp);
  for (Strategy* s : {static_cast<Strategy*>(&off), static_cast<Strategy*>(&on)}) {
    FederationState st = make_state(fed.clients, 1);
    s->initialize(st, fed.clients);
    run_rounds(st, *s, fed.clients, 1);
    CHECK(s->personal_model(st, fed.clients[0]).has_value() == (s == &on));
  }
}
