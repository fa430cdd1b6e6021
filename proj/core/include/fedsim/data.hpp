#pragma once

// Synthetic non-IID federations with planted client clusters, plus CSV ingestion.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "fedsim/model.hpp"

namespace fedsim {

enum class SkewKind { feature_shift, label_swap, label_skew };

std::string_view to_string(SkewKind k);
SkewKind parse_skew_kind(std::string_view s);

struct FederationConfig {
  std::size_t num_clients = 10;
  std::size_t num_clusters = 1;
  std::size_t samples_min = 100;  // training rows per client, drawn uniformly in [min, max]
  std::size_t samples_max = 100;
  std::size_t test_samples = 100;  // held-out rows per client, same distribution
  std::size_t input_dim = 10;
  std::size_t num_classes = 2;
  SkewKind skew = SkewKind::label_swap;
  double anomaly_fraction = 0.0;
  double separation = 3.0;  // distance of class / cluster means from the origin, in noise std units
  double noise_std = 1.0;
  double dirichlet_alpha = 0.5;
  std::size_t public_size = 200;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the field.
  void validate() const;
};

// What a strategy may see of a participant. The planted cluster is kept
// outside this type (Federation::true_clusters) so no strategy can read it.
struct ClientData {
  int client_id = 0;
  Batch train;
  Batch test;
  std::vector<std::uint8_t> train_anomaly;  // 1 marks an injected anomaly row
  std::vector<std::uint8_t> test_anomaly;
  double weight = 1.0;  // p_i, proportional to train size, sums to 1 over a federation

  std::size_t size() const noexcept { return train.size(); }
  bool has_train_anomalies() const noexcept;
};

struct Federation {
  std::vector<ClientData> clients;   // ascending client_id
  std::vector<int> true_clusters;    // planted cluster per client, same order
  Batch public_holdout;              // labels are for scoring only
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
};

Federation generate_federation(const FederationConfig& config);

// Sets p_i = |D_i| / sum_j |D_j|.
void normalize_weights(std::span<ClientData> clients);

// Copy of `client` whose train split keeps only rows not flagged as
// anomalies. The test split is left intact for evaluation.
ClientData strip_anomalies(const ClientData& client);

// CSV with header "client_id,label,f0,...,f{d-1}". Loads into the train split
// with weight 1. Every row must carry the same client id.
ClientData load_csv(const std::filesystem::path& path);
void save_csv(int client_id, const Batch& rows, const std::filesystem::path& path);
inline void save_csv(const ClientData& client, const std::filesystem::path& path) {
  save_csv(client.client_id, client.train, path);
}

}  // namespace fedsim
