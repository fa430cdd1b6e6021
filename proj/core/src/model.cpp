#include "fedsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsim/error.hpp"

namespace fedsim {

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::logistic: return "logistic";
    case ModelKind::mlp: return "mlp";
    case ModelKind::autoencoder: return "autoencoder";
  }
  return "?";
}

std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

std::string_view to_string(OutputHead h) {
  return h == OutputHead::softmax_classifier ? "softmax-classifier" : "linear-reconstruction";
}

ModelKind parse_model_kind(std::string_view s) {
  if (s == "logistic") return ModelKind::logistic;
  if (s == "mlp") return ModelKind::mlp;
  if (s == "autoencoder") return ModelKind::autoencoder;
  throw DomainError("unknown model kind '" + std::string(s) + "'");
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw DomainError("unknown activation '" + std::string(s) + "'");
}

ModelSpec ModelSpec::logistic(std::size_t input_dim, std::size_t num_classes) {
  ModelSpec s{ModelKind::logistic, {input_dim, num_classes}, Activation::tanh, OutputHead::softmax_classifier};
  s.validate();
  return s;
}

ModelSpec ModelSpec::mlp(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t num_classes,
                         Activation act) {
  ModelSpec s;
  s.kind = ModelKind::mlp;
  s.activation = act;
  s.output = OutputHead::softmax_classifier;
  s.layer_dims.push_back(input_dim);
  s.layer_dims.insert(s.layer_dims.end(), hidden.begin(), hidden.end());
  s.layer_dims.push_back(num_classes);
  s.validate();
  return s;
}

ModelSpec ModelSpec::autoencoder(std::size_t input_dim, std::vector<std::size_t> encoder, Activation act) {
  ModelSpec s;
  s.kind = ModelKind::autoencoder;
  s.activation = act;
  s.output = OutputHead::linear_reconstruction;
  if (encoder.empty()) throw DomainError("autoencoder needs at least one encoder layer");
  s.layer_dims.push_back(input_dim);
  s.layer_dims.insert(s.layer_dims.end(), encoder.begin(), encoder.end());
  for (auto it = encoder.rbegin() + 1; it < encoder.rend(); ++it) s.layer_dims.push_back(*it);
  s.layer_dims.push_back(input_dim);
  s.validate();
  return s;
}

void ModelSpec::validate() const {
  if (layer_dims.size() < 2) throw DomainError("model spec needs at least two layer dims");
  for (std::size_t d : layer_dims)
    if (d == 0) throw DomainError("layer dims must be positive");
  switch (kind) {
    case ModelKind::logistic:
      if (layer_dims.size() != 2) throw DomainError("logistic model has exactly [input, classes] dims");
      break;
    case ModelKind::mlp:
      if (layer_dims.size() < 3 || layer_dims.size() > 5)
        throw DomainError("mlp needs between 1 and 3 hidden layers");
      break;
    case ModelKind::autoencoder: {
      if (layer_dims.size() < 3 || layer_dims.size() % 2 == 0)
        throw DomainError("autoencoder needs an odd number (>= 3) of layer dims");
      if (!std::equal(layer_dims.begin(), layer_dims.end(), layer_dims.rbegin()))
        throw DomainError("autoencoder dims must be symmetric");
      const std::size_t bottleneck = layer_dims[layer_dims.size() / 2];
      if (bottleneck >= layer_dims.front())
        throw DomainError("autoencoder bottleneck must be smaller than the input dim");
      if (output != OutputHead::linear_reconstruction)
        throw DomainError("autoencoder uses a linear reconstruction head");
      return;
    }
  }
  if (output != OutputHead::softmax_classifier) throw DomainError("classifier models use a softmax head");
  if (layer_dims.back() < 2) throw DomainError("classifier needs at least two classes");
}

std::size_t ModelSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) n += layer_dims[l + 1] * (layer_dims[l] + 1);
  return n;
}

std::string ModelSpec::canonical() const {
  std::string s(to_string(kind));
  s += ':';
  for (std::size_t i = 0; i < layer_dims.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(layer_dims[i]);
  }
  s += ':';
  s += to_string(activation);
  s += ':';
  s += to_string(output);
  return s;
}

std::uint64_t ModelSpec::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Batch Batch::select(std::span<const std::size_t> rows) const {
  Batch out;
  out.X = X.select_rows(rows);
  if (!labels.empty()) {
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.labels.push_back(labels.at(r));
  }
  if (!soft_targets.empty()) out.soft_targets = soft_targets.select_rows(rows);
  return out;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector p(spec.parameter_count());
  Rng rng(seed);
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.layer_dims[l], out = spec.layer_dims[l + 1];
    const double r = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-r, r);
    for (std::size_t i = 0; i < in * out; ++i) p[off + i] = u(rng);
    off += in * out + out;  // biases start at zero
  }
  return p;
}

namespace {

struct Layer {
  std::size_t in, out, w, b;  // dims and offsets of weights / biases
};

std::vector<Layer> layers_of(const ModelSpec& spec) {
  std::vector<Layer> ls;
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.layer_dims[l], out = spec.layer_dims[l + 1];
    ls.push_back({in, out, off, off + in * out});
    off += in * out + out;
  }
  return ls;
}

void check_shapes(const ModelSpec& spec, const ParamVector& params, const Matrix& X) {
  spec.validate();
  if (params.size() != spec.parameter_count())
    throw ShapeError("parameter vector has " + std::to_string(params.size()) + " entries, spec '" +
                     spec.canonical() + "' needs " + std::to_string(spec.parameter_count()));
  if (X.cols != spec.input_dim())
    throw ShapeError("input has " + std::to_string(X.cols) + " columns, model expects " +
                     std::to_string(spec.input_dim()));
}

double activate(Activation a, double z) { return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z); }

// Derivative expressed through the pre-activation z and activation value h.
double activate_grad(Activation a, double z, double h) {
  return a == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - h * h;
}

// Activations of every layer for the given rows. acts[0] is the input, acts[L]
// the raw output (logits or reconstruction). pre[l] is layer l's pre-activation.
struct Trace {
  std::vector<Matrix> pre;
  std::vector<Matrix> acts;
};

Trace run_layers(const ModelSpec& spec, const std::vector<Layer>& ls, const ParamVector& params, const Matrix& X,
                 std::span<const std::size_t> rows) {
  Trace t;
  t.acts.push_back(X.select_rows(rows));
  for (std::size_t l = 0; l < ls.size(); ++l) {
    const Layer& L = ls[l];
    const Matrix& a = t.acts.back();
    Matrix z(a.rows, L.out);
    for (std::size_t r = 0; r < a.rows; ++r) {
      auto ar = a.row(r);
      for (std::size_t o = 0; o < L.out; ++o) {
        double s = params[L.b + o];
        const double* w = params.values.data() + L.w + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) s += w[i] * ar[i];
        z(r, o) = s;
      }
    }
    Matrix h = z;
    if (l + 1 < ls.size())
      for (double& v : h.data) v = activate(spec.activation, v);
    t.pre.push_back(std::move(z));
    t.acts.push_back(std::move(h));
  }
  return t;
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

// Computed exactly as the loss path does (exp(z - lse)) so a model distilled
// against its own forward output sees a bit-exact zero gradient.
void softmax_inplace(std::span<double> z) {
  const double lse = log_sum_exp(z);
  for (double& v : z) v = std::exp(v - lse);
}

void check_batch(const ModelSpec& spec, const Batch& batch, LossKind kind, std::span<const std::size_t> rows,
                 double temperature) {
  if (rows.empty()) throw DomainError("loss requested on an empty batch");
  for (std::size_t r : rows)
    if (r >= batch.X.rows) throw ShapeError("batch row index out of range");
  for (double v : batch.X.data)
    if (std::isnan(v)) throw DomainError("batch contains NaN features");
  switch (kind) {
    case LossKind::cross_entropy: {
      if (!spec.is_classifier()) throw DomainError("cross-entropy needs a classifier model");
      if (batch.labels.size() != batch.X.rows) throw ShapeError("label count does not match example count");
      const int c = static_cast<int>(spec.output_dim());
      for (std::size_t r : rows)
        if (batch.labels[r] < 0 || batch.labels[r] >= c)
          throw DomainError("label " + std::to_string(batch.labels[r]) + " out of range [0, " + std::to_string(c) +
                            ")");
      break;
    }
    case LossKind::soft_kl:
      if (!spec.is_classifier()) throw DomainError("soft-kl needs a classifier model");
      if (batch.soft_targets.rows != batch.X.rows || batch.soft_targets.cols != spec.output_dim())
        throw ShapeError("soft-kl needs one target probability row per example");
      if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
      break;
    case LossKind::squared_error:
      if (spec.is_classifier()) throw DomainError("squared-error reconstruction needs an autoencoder");
      break;
  }
}

// Teacher distribution softened by temperature: q_T proportional to q^(1/T).
void temper_targets(std::span<const double> q, double temperature, std::vector<double>& out) {
  out.assign(q.begin(), q.end());
  if (temperature == 1.0) return;
  double total = 0.0;
  for (double& v : out) {
    v = v > 0.0 ? std::pow(v, 1.0 / temperature) : 0.0;
    total += v;
  }
  if (total <= 0.0) throw DomainError("soft target row has no mass");
  for (double& v : out) v /= total;
}

}  // namespace

Matrix forward(const ModelSpec& spec, const ParamVector& params, const Matrix& X) {
  check_shapes(spec, params, X);
  const auto ls = layers_of(spec);
  std::vector<std::size_t> all(X.rows);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Trace t = run_layers(spec, ls, params, X, all);
  Matrix out = std::move(t.acts.back());
  if (spec.is_classifier())
    for (std::size_t r = 0; r < out.rows; ++r) softmax_inplace(out.row(r));
  return out;
}

LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch, LossKind kind,
                       std::span<const std::size_t> rows, double temperature) {
  check_shapes(spec, params, batch.X);
  check_batch(spec, batch, kind, rows, temperature);
  const auto ls = layers_of(spec);
  Trace t = run_layers(spec, ls, params, batch.X, rows);

  const std::size_t n = rows.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t out_dim = spec.output_dim();
  Matrix delta(n, out_dim);
  double total = 0.0;
  std::vector<double> logits(out_dim), q;

  for (std::size_t r = 0; r < n; ++r) {
    auto z = t.acts.back().row(r);
    auto d = delta.row(r);
    switch (kind) {
      case LossKind::cross_entropy: {
        const int y = batch.labels[rows[r]];
        const double lse = log_sum_exp(z);
        total += lse - z[y];
        for (std::size_t c = 0; c < out_dim; ++c) d[c] = std::exp(z[c] - lse) * inv_n;
        d[y] -= inv_n;
        break;
      }
      case LossKind::soft_kl: {
        for (std::size_t c = 0; c < out_dim; ++c) logits[c] = z[c] / temperature;
        const double lse = log_sum_exp(logits);
        temper_targets(batch.soft_targets.row(rows[r]), temperature, q);
        double kl = 0.0;
        for (std::size_t c = 0; c < out_dim; ++c) {
          const double logp = logits[c] - lse;
          const double p = std::exp(logp);
          // Equal probabilities contribute exactly nothing, so identical
          // distributions give a loss of exactly 0.
          if (q[c] > 0.0 && q[c] != p) kl += q[c] * (std::log(q[c]) - logp);
          d[c] = temperature * (p - q[c]) * inv_n;
        }
        // KL is non-negative; clamp rounding noise at the identity point.
        total += temperature * temperature * std::max(kl, 0.0);
        break;
      }
      case LossKind::squared_error: {
        auto x = t.acts.front().row(r);
        const double inv_d = 1.0 / static_cast<double>(out_dim);
        double se = 0.0;
        for (std::size_t c = 0; c < out_dim; ++c) {
          const double e = z[c] - x[c];
          se += e * e;
          d[c] = 2.0 * e * inv_d * inv_n;
        }
        total += se * inv_d;
        break;
      }
    }
  }

  LossGrad out{total * inv_n, ParamVector(params.size())};
  for (std::size_t l = ls.size(); l-- > 0;) {
    const Layer& L = ls[l];
    const Matrix& a = t.acts[l];
    for (std::size_t r = 0; r < n; ++r) {
      auto ar = a.row(r);
      auto dr = delta.row(r);
      for (std::size_t o = 0; o < L.out; ++o) {
        const double g = dr[o];
        if (g == 0.0) continue;
        double* gw = out.grad.values.data() + L.w + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) gw[i] += g * ar[i];
        out.grad[L.b + o] += g;
      }
    }
    if (l == 0) break;
    Matrix prev(n, L.in);
    for (std::size_t r = 0; r < n; ++r) {
      auto dr = delta.row(r);
      for (std::size_t i = 0; i < L.in; ++i) {
        double s = 0.0;
        for (std::size_t o = 0; o < L.out; ++o) s += params[L.w + o * L.in + i] * dr[o];
        prev(r, i) = s * activate_grad(spec.activation, t.pre[l - 1](r, i), a(r, i));
      }
    }
    delta = std::move(prev);
  }
  return out;
}

LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch, LossKind kind,
                       double temperature) {
  std::vector<std::size_t> all(batch.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return loss_and_grad(spec, params, batch, kind, all, temperature);
}

double evaluate_loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch, LossKind kind,
                     double temperature) {
  return loss_and_grad(spec, params, batch, kind, temperature).loss;
}

MiniBatchSampler::MiniBatchSampler(std::size_t n_examples, std::size_t batch_size, std::uint64_t seed)
    : order_(n_examples), batch_size_(batch_size), rng_(seed) {
  if (n_examples == 0) throw DomainError("cannot sample batches from an empty dataset");
  if (batch_size == 0) throw DomainError("batch size must be at least 1");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void MiniBatchSampler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::span<const std::size_t> MiniBatchSampler::next() {
  if (cursor_ >= order_.size()) reshuffle();
  const std::size_t take = std::min(batch_size_, order_.size() - cursor_);
  std::span<const std::size_t> out(order_.data() + cursor_, take);
  cursor_ += take;
  return out;
}

ParamVector sgd_minimize(const BatchObjective& objective, ParamVector init, std::size_t n_examples,
                         const SgdOptions& opts) {
  if (!(opts.lr > 0.0)) throw DomainError("learning rate must be positive");
  if (opts.batch_size == 0) throw DomainError("batch size must be at least 1");
  if (opts.steps == 0) return init;
  MiniBatchSampler sampler(n_examples, opts.batch_size, opts.seed);
  for (std::size_t s = 0; s < opts.steps; ++s) {
    const LossGrad lg = objective(init, sampler.next());
    axpy(-opts.lr, lg.grad, init);
  }
  if (!init.all_finite()) throw DomainError("SGD diverged to non-finite parameters; lower the learning rate");
  return init;
}

ParamVector sgd_train(const ModelSpec& spec, const ParamVector& init, const Batch& data, const SgdOptions& opts,
                      LossKind kind) {
  if (opts.steps == 0) return init;
  return sgd_minimize(
      [&](const ParamVector& p, std::span<const std::size_t> rows) {
        return loss_and_grad(spec, p, data, kind, rows);
      },
      init, data.size(), opts);
}

std::size_t steps_for_epochs(std::size_t n_examples, std::size_t batch_size, std::size_t epochs) {
  if (batch_size == 0) throw DomainError("batch size must be at least 1");
  return epochs * ((n_examples + batch_size - 1) / batch_size);
}

std::vector<int> argmax_rows(const Matrix& probabilities) {
  std::vector<int> out(probabilities.rows);
  for (std::size_t r = 0; r < probabilities.rows; ++r) {
    auto row = probabilities.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace fedsim
