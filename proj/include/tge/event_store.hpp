#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

namespace tge {

/// One timestamped interaction. Self-loops are tolerated; the stream is a
/// multigraph, so repeated (src, dst) pairs at different times are distinct.
struct TemporalEvent {
  std::int64_t src = 0;
  std::int64_t dst = 0;
  std::vector<double> edge_feat;
  double timestamp = 0.0;
  std::optional<int> label;
};

struct EventLog {
  std::vector<TemporalEvent> events;
  std::int64_t num_nodes = 0;
  std::int64_t d_e = 0;
  // For bipartite logs, ids in [0, num_users) are source-side and
  // [num_users, num_nodes) are destination-side. 0 means not bipartite.
  std::int64_t num_users = 0;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reads the interaction-log CSV layout: a header line, then
/// `user_id,item_id,timestamp,state_label,f_1,...,f_de` rows sorted by
/// timestamp. Item ids are remapped into the shared node-id space as
/// item_id + num_users.
EventLog parse_interaction_csv(std::istream& in);
void write_interaction_csv(const EventLog& log, std::ostream& out);
/// Sidecar metadata written on ingest: plain key=value lines.
void write_metadata(const EventLog& log, std::ostream& out);

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
};

struct DataSplit {
  IndexRange train, val, test;
  std::unordered_set<std::int64_t> seen_nodes;  // nodes appearing in train
};

/// Boundary indices at floor(train_frac*M) and floor((train_frac+val_frac)*M).
DataSplit split_chronological(const EventLog& log, double train_frac, double val_frac);

/// Consecutive slices of at most batch_size events; the last may be short.
std::vector<IndexRange> batches(IndexRange range, std::size_t batch_size);

/// Per-node append-only interaction index; each list is timestamp-sorted as
/// long as events are recorded in stream order.
class TemporalAdjacency {
 public:
  TemporalAdjacency() = default;
  explicit TemporalAdjacency(std::size_t num_nodes) : lists_(num_nodes) {}

  void record(std::int64_t u, std::int64_t v, double t);

  /// The up-to-n most recent (neighbor, timestamp) entries strictly before t,
  /// most recent first. Unknown node -> empty (cold node).
  std::vector<std::pair<std::int64_t, double>> recent_neighbors(std::int64_t node,
                                                                std::size_t n,
                                                                double t) const;

  std::size_t num_nodes() const { return lists_.size(); }
  const std::vector<std::pair<std::int64_t, double>>& list(std::int64_t node) const {
    return lists_.at(static_cast<std::size_t>(node));
  }

  bool operator==(const TemporalAdjacency& other) const { return lists_ == other.lists_; }

 private:
  std::vector<std::vector<std::pair<std::int64_t, double>>> lists_;
};

}  // namespace tge
