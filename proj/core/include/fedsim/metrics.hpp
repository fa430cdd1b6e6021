#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fedsim {

// Fraction of equal entries. Throws ShapeError on length mismatch, DomainError when empty.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

// Fraction of items whose learned cluster maps to their true cluster when each
// learned cluster is relabeled to the true cluster it overlaps most.
double cluster_purity(std::span<const int> learned, std::span<const int> truth);

// Area under the ROC curve for `positive` scored higher; ties count one half.
// Throws DomainError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

}  // namespace fedsim
