#include "fedsim/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "fedsim/error.hpp"

namespace fedsim {

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("prediction and label counts differ");
  if (truth.empty()) throw DomainError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double cluster_purity(std::span<const int> learned, std::span<const int> truth) {
  if (learned.size() != truth.size()) throw ShapeError("cluster label counts differ");
  if (truth.empty()) throw DomainError("purity of an empty set");
  std::map<int, std::map<int, std::size_t>> overlap;
  for (std::size_t i = 0; i < truth.size(); ++i) ++overlap[learned[i]][truth[i]];
  std::size_t matched = 0;
  for (const auto& [cluster, counts] : overlap) {
    std::size_t best = 0;
    for (const auto& [t, n] : counts) best = std::max(best, n);
    matched += best;
  }
  return static_cast<double>(matched) / static_cast<double>(truth.size());
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw ShapeError("score and label counts differ");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney U with mid-ranks for ties.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) {
        rank_sum += mid_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DomainError("ROC-AUC needs both positive and negative examples");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

}  // namespace fedsim
