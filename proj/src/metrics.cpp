#include "tge/metrics.hpp"

#include <algorithm>
#include <vector>

namespace tge {

std::optional<double> average_precision(std::span<const ScoredPair> pairs) {
  std::size_t total_pos = 0;
  for (const ScoredPair& p : pairs) total_pos += p.label != 0;
  if (total_pos == 0) return std::nullopt;

  std::vector<ScoredPair> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredPair& a, const ScoredPair& b) { return a.score > b.score; });

  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    // one step per group of tied scores
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      group_pos += sorted[j].label != 0;
      ++j;
    }
    const double recall_before = static_cast<double>(tp) / static_cast<double>(total_pos);
    tp += group_pos;
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - recall_before) * precision;
    i = j;
  }
  return ap;
}

std::optional<double> auc_roc(std::span<const ScoredPair> pairs) {
  std::size_t pos = 0, neg = 0;
  for (const ScoredPair& p : pairs) (p.label != 0 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) return std::nullopt;

  std::vector<ScoredPair> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredPair& a, const ScoredPair& b) { return a.score < b.score; });

  // Mann-Whitney U from the positive rank sum, with average ranks on ties
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      group_pos += sorted[j].label != 0;
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    rank_sum_pos += avg_rank * static_cast<double>(group_pos);
    i = j;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  const double u = rank_sum_pos - p * (p + 1.0) / 2.0;
  return u / (p * n);
}

double accuracy_at_half(std::span<const ScoredPair> pairs) {
  if (pairs.empty()) return 0.0;
  std::size_t correct = 0;
  for (const ScoredPair& p : pairs) {
    const int predicted = p.score > 0.5 ? 1 : 0;
    correct += predicted == p.label;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

}  // namespace tge
