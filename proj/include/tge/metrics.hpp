#pragma once

#include <optional>
#include <span>

namespace tge {

struct ScoredPair {
  double score = 0.0;  // probability-scale score in [0, 1]
  int label = 0;       // 1 positive, 0 negative
};

/// Area under the precision-recall curve by step interpolation, descending
/// score order. Tied scores are treated as one group. nullopt when there are
/// no positives.
std::optional<double> average_precision(std::span<const ScoredPair> pairs);

/// Rank-statistic AUC with average ranks for ties. nullopt when either class
/// is missing.
std::optional<double> auc_roc(std::span<const ScoredPair> pairs);

/// Fraction of pairs classified correctly at threshold 0.5 (score > 0.5 is a
/// positive prediction).
double accuracy_at_half(std::span<const ScoredPair> pairs);

}  // namespace tge
