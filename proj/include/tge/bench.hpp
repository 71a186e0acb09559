#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tge/event_store.hpp"
#include "tge/model.hpp"
#include "tge/propagator.hpp"

namespace tge {

/// Per-query latency model for the mock graph database: fixed mu_ms, or
/// lognormal with median mu_ms when sigma_log > 0.
struct LatencyModel {
  double mu_ms = 2.0;
  double sigma_log = 0.0;
};

/// Simulated time, in milliseconds; nothing sleeps in virtual-time mode.
struct VirtualClock {
  double ms = 0.0;
  void advance(double delta) { ms += delta; }
};

/// Wraps the adjacency index behind a latency-modeled query. Results are
/// identical to direct adjacency access; only timing accounting differs.
class MockGraphDb {
 public:
  MockGraphDb(const TemporalAdjacency& adj, LatencyModel model, std::uint64_t seed,
              bool wall_clock = false);

  std::vector<std::pair<std::int64_t, double>> query(std::int64_t node, std::size_t n,
                                                     double t, VirtualClock& clock);
  std::uint64_t query_count() const { return count_; }

 private:
  const TemporalAdjacency& adj_;
  LatencyModel model_;
  std::mt19937_64 rng_;
  bool wall_clock_;
  std::uint64_t count_ = 0;
};

struct ScenarioConfig {
  double mu_ms = 2.0;
  double sigma_log = 0.0;
  int hops = 2;
  int fanout = 10;
  std::size_t batch = 200;
  std::uint64_t seed = 7;
  std::size_t events = 5000;        // synthetic log size when no dataset is given
  std::size_t warmup_batches = 5;   // excluded from the latency samples
  std::size_t queue_capacity = 4;
  bool lag0 = false;        // async pipeline waits per batch (accuracy checks)
  bool wall_clock = false;  // opt-in: queries really sleep
};

/// Plain key=value scenario file. Unknown or malformed keys raise
/// std::invalid_argument naming the key.
ScenarioConfig parse_scenario(std::istream& in);
void write_scenario(const ScenarioConfig& cfg, std::ostream& out);

struct PipelineStats {
  std::string pipeline;
  int hops = 0;
  int fanout = 0;
  std::size_t batch = 0;
  std::vector<double> batch_ms;  // inference-path latency per measured batch
  std::vector<std::uint64_t> batch_queries;  // critical-path db queries (sync)
  double inference_db_wait_ms = 0.0;  // must stay 0 for the async pipeline
  double producer_blocked_ms = 0.0;   // async backpressure, reported separately
  double events_per_s = 0.0;
  std::uint64_t lag_batches = 0;  // max observed worker lag
  std::uint64_t mails_delivered = 0;
  std::uint64_t db_queries = 0;

  double p50() const;
  double p95() const;
  double p99() const;
};

/// Nearest-rank percentile on a copy of the samples; pct in (0, 100].
double percentile_nearest_rank(std::span<const double> samples, double pct);

/// Final mutable state of a benchmark run, for value-equivalence checks.
struct BenchStateSnapshot {
  MailboxStore mailboxes{1, 1, 1};
  TemporalAdjacency adjacency;
  NodeStateStore node_states{1, 1};
};

/// Query-then-infer baseline: per batch, expand the hop frontier through the
/// mock database on the critical path, assemble the fetched neighbors' latest
/// mails into the attention matrix, then encode and decode.
PipelineStats run_sync(const EventLog& log, ModelParams& params, const ScenarioConfig& scenario,
                       BenchStateSnapshot* final_state = nullptr);

/// Decoupled pipeline: the inference path reads mailboxes, encodes and
/// decodes; recipient sampling and mailbox updates run on the worker, which
/// alone pays the database latency.
PipelineStats run_async(const EventLog& log, ModelParams& params, const ScenarioConfig& scenario,
                        BenchStateSnapshot* final_state = nullptr);

/// CSV: pipeline,hops,fanout,batch,p50_ms,p95_ms,p99_ms,events_per_s,lag_batches
void write_bench_csv(std::ostream& out, std::span<const PipelineStats> stats);
std::string format_bench_table(std::span<const PipelineStats> stats);

}  // namespace tge
