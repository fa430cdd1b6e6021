#include "fedsim/one_class.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/error.hpp"
#include "fedsim/metrics.hpp"

namespace fedsim {

Standardizer Standardizer::fit(std::span<const ClientData> clients) {
  if (clients.empty()) throw DomainError("standardizer needs at least one client");
  const std::size_t d = clients.front().train.X.cols;
  std::vector<double> sum(d, 0.0), sq(d, 0.0);
  double n = 0.0;
  for (const auto& c : clients) {
    if (c.train.X.cols != d) throw ShapeError("clients disagree on the feature count");
    std::vector<double> s(d, 0.0), q(d, 0.0);
    for (std::size_t r = 0; r < c.train.X.rows; ++r)
      for (std::size_t j = 0; j < d; ++j) {
        const double v = c.train.X(r, j);
        s[j] += v;
        q[j] += v * v;
      }
    for (std::size_t j = 0; j < d; ++j) {
      sum[j] += s[j];
      sq[j] += q[j];
    }
    n += static_cast<double>(c.train.X.rows);
  }
  if (n == 0.0) throw DomainError("standardizer needs at least one row");
  std::vector<double> mean(d), sd(d);
  for (std::size_t j = 0; j < d; ++j) {
    mean[j] = sum[j] / n;
    sd[j] = std::sqrt(std::max(sq[j] / n - mean[j] * mean[j], 0.0));
  }
  return from_moments(std::move(mean), std::move(sd));
}

Standardizer Standardizer::from_moments(std::vector<double> mean, std::vector<double> stddev) {
  if (mean.size() != stddev.size()) throw ShapeError("mean and stddev lengths differ");
  Standardizer s;
  s.mean_ = std::move(mean);
  s.std_ = std::move(stddev);
  for (double& v : s.std_)
    if (!(v > 1e-12)) v = 1.0;
  return s;
}

Matrix Standardizer::apply(const Matrix& X) const {
  if (X.cols != mean_.size()) throw ShapeError("standardizer fitted on a different feature count");
  Matrix out = X;
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t j = 0; j < out.cols; ++j) out(r, j) = (out(r, j) - mean_[j]) / std_[j];
  return out;
}

ClientData Standardizer::apply(const ClientData& client) const {
  ClientData out = client;
  out.train.X = apply(client.train.X);
  if (client.test.size() > 0) out.test.X = apply(client.test.X);
  return out;
}

std::vector<double> reconstruction_errors(const ModelSpec& spec, const ParamVector& params, const Matrix& X) {
  if (spec.is_classifier()) throw DomainError("reconstruction scores need an autoencoder");
  const Matrix recon = forward(spec, params, X);
  std::vector<double> out(X.rows);
  for (std::size_t r = 0; r < X.rows; ++r) {
    double se = 0.0;
    for (std::size_t j = 0; j < X.cols; ++j) {
      const double e = recon(r, j) - X(r, j);
      se += e * e;
    }
    out[r] = se / static_cast<double>(X.cols);
  }
  return out;
}

std::vector<AnomalyScore> score(const ModelSpec& spec, const ParamVector& params, const Matrix& X, double threshold) {
  if (!(threshold >= 0.0)) throw DomainError("threshold must be >= 0");
  const auto errs = reconstruction_errors(spec, params, X);
  std::vector<AnomalyScore> out(errs.size());
  for (std::size_t i = 0; i < errs.size(); ++i) out[i] = {i, errs[i], errs[i] > threshold};
  return out;
}

double calibrate_threshold(std::span<const double> normal_scores, double target_fpr) {
  if (normal_scores.empty()) throw DomainError("threshold calibration needs at least one score");
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) throw DomainError("target_fpr must lie in (0, 1)");
  std::vector<double> s(normal_scores.begin(), normal_scores.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const auto m = static_cast<std::size_t>(std::floor(target_fpr * static_cast<double>(n) + 1e-9));
  return s[n - std::min(m, n - 1) - 1];
}

std::optional<RoundRecord> train_one_class_round(std::span<const ClientData> clients, const ModelSpec& spec,
                                                 FederationState& state, const Hyperparams& hp, bool parallel) {
  for (const auto& c : clients)
    if (c.has_train_anomalies())
      throw ContractViolation("client " + std::to_string(c.client_id) + " trains on rows flagged as anomalies");
  FedAvgStrategy fedavg(spec, hp, LossKind::squared_error);
  if (state.global_params.empty()) fedavg.initialize(state, clients);
  return run_round(state, fedavg, clients, {hp.sample_fraction, parallel});
}

DetectionReport detect(const ModelSpec& spec, const ParamVector& params, std::span<const ClientData> clients,
                       double target_fpr) {
  DetectionReport rep;
  rep.target_fpr = target_fpr;
  std::vector<double> calib;
  for (const auto& c : clients) {
    const std::size_t half = c.test.size() / 2;
    const auto errs = reconstruction_errors(spec, params, c.test.X);
    for (std::size_t r = 0; r < half; ++r)
      if (c.test_anomaly.empty() || c.test_anomaly[r] == 0) calib.push_back(errs[r]);
  }
  rep.calibration_rows = calib.size();
  rep.threshold = calibrate_threshold(calib, target_fpr);

  std::size_t normals = 0, false_pos = 0, anomalies = 0, true_pos = 0;
  for (const auto& c : clients) {
    const std::size_t half = c.test.size() / 2;
    const auto errs = reconstruction_errors(spec, params, c.test.X);
    for (std::size_t r = half; r < c.test.size(); ++r) {
      ScoredRow row{c.client_id, rep.rows.size(), errs[r], errs[r] > rep.threshold,
                    !c.test_anomaly.empty() && c.test_anomaly[r] != 0};
      if (row.true_anomaly) {
        ++anomalies;
        true_pos += row.predicted_anomaly;
      } else {
        ++normals;
        false_pos += row.predicted_anomaly;
      }
      rep.rows.push_back(row);
    }
  }
  if (normals > 0) rep.fpr = static_cast<double>(false_pos) / static_cast<double>(normals);
  if (anomalies > 0) rep.tpr = static_cast<double>(true_pos) / static_cast<double>(anomalies);
  if (normals > 0 && anomalies > 0) {
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (const auto& r : rep.rows) {
      s.push_back(r.score);
      y.push_back(r.true_anomaly ? 1 : 0);
    }
    rep.auc = roc_auc(s, y);
  }
  return rep;
}

OneClassStrategy::OneClassStrategy(ModelSpec spec, Hyperparams hp)
    : FedAvgStrategy(std::move(spec), std::move(hp), LossKind::squared_error), target_fpr_(hp_.target_fpr.value_or(0.05)) {
  if (spec_.kind != ModelKind::autoencoder) throw ConfigError("model.kind", "strategy 'oneclass' needs an autoencoder");
  if (!(target_fpr_ > 0.0 && target_fpr_ < 1.0)) throw ConfigError("hyperparams.target_fpr", "must lie in (0, 1)");
}

void OneClassStrategy::initialize(FederationState& state, std::span<const ClientData> clients) {
  for (const auto& c : clients)
    if (c.has_train_anomalies())
      throw ContractViolation("client " + std::to_string(c.client_id) + " trains on rows flagged as anomalies");
  standardizer_ = Standardizer::fit(clients);
  cache_.clear();
  for (const auto& c : clients) cache_.emplace(c.client_id, standardizer_.apply(c));
  FedAvgStrategy::initialize(state, clients);
}

ClientData OneClassStrategy::standardized(const ClientData& client) const {
  auto it = cache_.find(client.client_id);
  if (it != cache_.end() && it->second.train.size() == client.train.size() &&
      it->second.test.size() == client.test.size())
    return it->second;
  return standardizer_.apply(client);
}

ClientMessage OneClassStrategy::local_update(const ClientData& client, const FederationState& state,
                                             const LocalContext& ctx) const {
  if (client.has_train_anomalies())
    throw ContractViolation("client " + std::to_string(client.client_id) + " trains on rows flagged as anomalies");
  return FedAvgStrategy::local_update(standardized(client), state, ctx);
}

ClientEval OneClassStrategy::evaluate(const FederationState& state, const ClientData& client) const {
  return FedAvgStrategy::evaluate(state, standardized(client));
}

DetectionReport OneClassStrategy::report(const FederationState& state, std::span<const ClientData> clients) const {
  std::vector<ClientData> z;
  z.reserve(clients.size());
  for (const auto& c : clients) z.push_back(standardized(c));
  return detect(spec_, state.global_params.at(0), z, target_fpr_);
}

}  // namespace fedsim
