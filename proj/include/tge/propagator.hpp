#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <thread>
#include <vector>

#include "tge/event_store.hpp"
#include "tge/mailbox.hpp"

namespace tge {

struct PropagationConfig {
  int hops = 2;       // frontier expansions counted including hop 0
  int fanout = 10;    // most-recent neighbors sampled per expansion
  bool hops_as_distance = false;  // variant: deliver out to distance `hops`
  bool deterministic = true;      // producer waits for each batch to apply
  std::size_t queue_capacity = 4;  // async mode: max unapplied batches
};

/// Mailbox stores and the adjacency index share one lock so a batch
/// application is atomic with respect to inference-path readers.
struct SharedStores {
  MailboxStore mailboxes;
  TemporalAdjacency adjacency;
  mutable std::shared_mutex mutex;

  SharedStores(std::size_t num_nodes, std::size_t slots, std::size_t dim)
      : mailboxes(num_nodes, slots, dim), adjacency(num_nodes) {}
};

struct JobItem {
  TemporalEvent event;
  std::vector<double> z_src;  // value snapshots, no gradient linkage
  std::vector<double> z_dst;
};

struct PropagationJob {
  std::vector<JobItem> items;
  std::uint64_t seq = 0;
};

using NeighborQueryFn = std::function<std::vector<std::pair<std::int64_t, double>>(
    std::int64_t node, std::size_t n, double t)>;

/// mail = z_i + e_ij + z_j, stamped with the event time.
Mail generate_mail(std::span<const double> z_i, std::span<const double> e_ij,
                   std::span<const double> z_j, double t);

/// Identity mail passing: the delivered mail is the generated mail.
inline const Mail& pass_mail(const Mail& mail) { return mail; }

/// Elementwise mean; timestamp is the max of the inputs. Throws on empty.
Mail reduce_mails(std::span<const Mail> mails);

/// Recipient set: the endpoints plus their sampled temporal neighbors out to
/// the configured number of expansions. Sorted ascending, deduplicated.
std::vector<std::int64_t> recipients(const NeighborQueryFn& query, const TemporalEvent& event,
                                     const PropagationConfig& cfg);
std::vector<std::int64_t> recipients(const TemporalAdjacency& adj, const TemporalEvent& event,
                                     const PropagationConfig& cfg);

struct PropagatorCounters {
  std::uint64_t jobs_applied = 0;
  std::uint64_t mails_delivered = 0;
  std::uint64_t max_lag_batches = 0;
};

/// The asynchronous link. Exactly one consumer mutates the stores; a batch is
/// applied under the stores' unique lock. In deterministic mode submit()
/// returns only after the batch is applied; in async mode submit() blocks only
/// while `queue_capacity` batches are outstanding (bounded staleness).
class Propagator {
 public:
  Propagator(SharedStores& stores, PropagationConfig cfg,
             NeighborQueryFn query = nullptr);
  ~Propagator();

  Propagator(const Propagator&) = delete;
  Propagator& operator=(const Propagator&) = delete;

  /// Jobs must arrive with consecutive sequence numbers starting at 0.
  void submit(PropagationJob job);
  /// Blocks until every submitted job has been applied.
  void drain();
  /// Drains and stops the worker. Called by the destructor if needed.
  void close();

  /// produced - applied, in batches.
  std::uint64_t lag() const;
  PropagatorCounters counters() const;

 private:
  void apply_batch(const PropagationJob& job);
  void worker_loop();

  SharedStores& stores_;
  PropagationConfig cfg_;
  NeighborQueryFn query_;

  mutable std::mutex mu_;
  std::condition_variable cv_producer_;
  std::condition_variable cv_worker_;
  std::deque<PropagationJob> queue_;
  std::uint64_t next_submit_seq_ = 0;
  std::uint64_t applied_seq_ = 0;  // count of applied jobs
  bool closed_ = false;
  PropagatorCounters counters_;
  std::thread worker_;
};

}  // namespace tge
