#pragma once

// Small from-scratch differentiable models (logistic regression, MLP,
// autoencoder), their losses and analytic gradients, and seeded mini-batch SGD.
//
// Parameter layout: for each dense layer l (in -> out), the out x in weight
// matrix in row-major order followed by the out biases.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsim/random.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

enum class ModelKind { logistic, mlp, autoencoder };
enum class Activation { relu, tanh };
enum class OutputHead { softmax_classifier, linear_reconstruction };
enum class LossKind { cross_entropy, squared_error, soft_kl };

std::string_view to_string(ModelKind k);
std::string_view to_string(Activation a);
std::string_view to_string(OutputHead h);
ModelKind parse_model_kind(std::string_view s);
Activation parse_activation(std::string_view s);

struct ModelSpec {
  ModelKind kind = ModelKind::logistic;
  std::vector<std::size_t> layer_dims;
  Activation activation = Activation::tanh;
  OutputHead output = OutputHead::softmax_classifier;

  static ModelSpec logistic(std::size_t input_dim, std::size_t num_classes);
  static ModelSpec mlp(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t num_classes,
                       Activation act = Activation::tanh);
  // `encoder` lists the encoder hidden widths ending with the bottleneck; the
  // decoder mirrors it.
  static ModelSpec autoencoder(std::size_t input_dim, std::vector<std::size_t> encoder,
                               Activation act = Activation::tanh);

  // Throws DomainError when the spec breaks an invariant.
  void validate() const;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t num_layers() const { return layer_dims.size() - 1; }
  std::size_t parameter_count() const;
  bool is_classifier() const { return output == OutputHead::softmax_classifier; }

  // Stable textual form, e.g. "mlp:4-8-3:tanh:softmax-classifier".
  std::string canonical() const;
  // FNV-1a 64 of canonical().
  std::uint64_t hash() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Examples with either hard labels, soft target rows, or neither (autoencoder).
struct Batch {
  Matrix X;
  std::vector<int> labels;
  Matrix soft_targets;

  std::size_t size() const noexcept { return X.rows; }
  Batch select(std::span<const std::size_t> rows) const;
};

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Class probabilities (classifier) or reconstructions (autoencoder), one row per input row.
Matrix forward(const ModelSpec& spec, const ParamVector& params, const Matrix& X);

// Mean loss over the selected rows and its gradient. `temperature` applies to
// soft_kl only: both distributions are softened by 1/T and the loss is scaled
// by T^2 so gradient magnitudes stay comparable across temperatures.
LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch, LossKind kind,
                       std::span<const std::size_t> rows, double temperature = 1.0);
LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch, LossKind kind,
                       double temperature = 1.0);

// Loss only, full batch. Same value as loss_and_grad(...).loss.
double evaluate_loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch, LossKind kind,
                     double temperature = 1.0);

// Yields mini-batches of row indices. The order is reshuffled at every epoch
// start; the last batch of an epoch may be short.
class MiniBatchSampler {
 public:
  MiniBatchSampler(std::size_t n_examples, std::size_t batch_size, std::uint64_t seed);

  std::span<const std::size_t> next();

 private:
  void reshuffle();

  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

struct SgdOptions {
  std::size_t steps = 0;
  double lr = 0.1;
  std::size_t batch_size = 10;
  std::uint64_t seed = 0;
};

// Objective evaluated on a subset of example rows.
using BatchObjective = std::function<LossGrad(const ParamVector&, std::span<const std::size_t>)>;

// Plain mini-batch SGD over `n_examples` rows. Deterministic for a given seed.
ParamVector sgd_minimize(const BatchObjective& objective, ParamVector init, std::size_t n_examples,
                         const SgdOptions& opts);

ParamVector sgd_train(const ModelSpec& spec, const ParamVector& init, const Batch& data, const SgdOptions& opts,
                      LossKind kind = LossKind::cross_entropy);

// Number of SGD steps that covers `epochs` passes over n examples.
std::size_t steps_for_epochs(std::size_t n_examples, std::size_t batch_size, std::size_t epochs);

// argmax per row, ties to the lowest class.
std::vector<int> argmax_rows(const Matrix& probabilities);

}  // namespace fedsim
