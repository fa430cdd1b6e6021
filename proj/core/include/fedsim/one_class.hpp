#pragma once

// Federated one-class anomaly detection: autoencoders trained by FedAvg on
// normal rows only, scored by reconstruction error.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "fedsim/strategies.hpp"

namespace fedsim {

struct AnomalyScore {
  std::size_t example_index = 0;
  double score = 0.0;  // mean squared reconstruction error
  bool anomaly = false;
};

// Per-dimension z-score from pooled sufficient statistics. Dimensions with
// zero spread are only centered.
class Standardizer {
 public:
  Standardizer() = default;
  // Sums x and x^2 client by client, then combines (train splits).
  static Standardizer fit(std::span<const ClientData> clients);
  static Standardizer from_moments(std::vector<double> mean, std::vector<double> stddev);

  Matrix apply(const Matrix& X) const;
  ClientData apply(const ClientData& client) const;
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return std_; }

 private:
  std::vector<double> mean_, std_;
};

// anomaly iff score > threshold. Throws DomainError for negative thresholds.
std::vector<AnomalyScore> score(const ModelSpec& spec, const ParamVector& params, const Matrix& X, double threshold);
std::vector<double> reconstruction_errors(const ModelSpec& spec, const ParamVector& params, const Matrix& X);

// Empirical (1 - target_fpr) quantile of normal scores: with n sorted scores
// and m = floor(target_fpr * n), the (n - m)-th smallest, so exactly m of the
// calibration scores lie strictly above it when there are no ties.
double calibrate_threshold(std::span<const double> normal_scores, double target_fpr);

// One FedAvg round on squared reconstruction error. Throws ContractViolation
// when any client still holds anomaly rows in its train split. Initializes
// the state when it has no global model yet.
std::optional<RoundRecord> train_one_class_round(std::span<const ClientData> clients, const ModelSpec& spec,
                                                 FederationState& state, const Hyperparams& hp,
                                                 bool parallel = false);

struct ScoredRow {
  int client_id = 0;
  std::size_t example_index = 0;  // position in the pooled evaluation set
  double score = 0.0;
  bool predicted_anomaly = false;
  bool true_anomaly = false;
};

struct DetectionReport {
  double threshold = 0.0;
  double target_fpr = 0.0;
  double auc = 0.0;
  double fpr = 0.0;  // on held-out normals
  double tpr = 0.0;  // on held-out anomalies (0 when there are none)
  std::size_t calibration_rows = 0;
  std::vector<ScoredRow> rows;
};

// Splits each client's test split in half: normal rows of the first halves
// calibrate one shared threshold; the second halves are scored.
DetectionReport detect(const ModelSpec& spec, const ParamVector& params, std::span<const ClientData> clients,
                       double target_fpr);

// FedAvg on squared reconstruction error over standardized features. The
// standardizer is fitted once at initialization from all clients.
class OneClassStrategy : public FedAvgStrategy {
 public:
  OneClassStrategy(ModelSpec spec, Hyperparams hp);

  std::string_view name() const override { return "oneclass"; }
  void initialize(FederationState& state, std::span<const ClientData> clients) override;
  ClientMessage local_update(const ClientData& client, const FederationState& state,
                             const LocalContext& ctx) const override;
  ClientEval evaluate(const FederationState& state, const ClientData& client) const override;

  const Standardizer& standardizer() const { return standardizer_; }
  DetectionReport report(const FederationState& state, std::span<const ClientData> clients) const;

 private:
  ClientData standardized(const ClientData& client) const;

  double target_fpr_;
  Standardizer standardizer_;
  std::map<int, ClientData> cache_;
};

}  // namespace fedsim
