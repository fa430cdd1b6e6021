#pragma once

// On-disk formats: personal model files, prediction matrices, anomaly scores.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedsim/distill.hpp"
#include "fedsim/one_class.hpp"

namespace fedsim {

// Binary layout (little-endian): "FSPV", u32 version, u64 spec hash,
// i64 client_id, i64 round, u64 count, count x f64.
struct PersonalModelFile {
  std::uint64_t spec_hash = 0;
  std::int64_t client_id = 0;
  std::int64_t round = 0;
  ParamVector params;
};

inline constexpr std::uint32_t kPersonalModelVersion = 1;

void write_personal_model(const std::filesystem::path& path, const PersonalModelFile& model);
// Throws ParseError on bad magic, unknown version or truncation.
PersonalModelFile read_personal_model(const std::filesystem::path& path);

// CSV "round,model_id,example_index,p0,...". Matrices are appended in order.
void write_predictions_csv(const std::filesystem::path& path, std::span<const PredictionMatrix> mats);
std::vector<PredictionMatrix> read_predictions_csv(const std::filesystem::path& path);

// CSV "example_index,score,label_pred,true_label" with labels normal/anomaly.
void write_scores_csv(const std::filesystem::path& path, std::span<const ScoredRow> rows);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace fedsim
