#include "tge/propagator.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace tge {

Mail generate_mail(std::span<const double> z_i, std::span<const double> e_ij,
                   std::span<const double> z_j, double t) {
  if (z_i.size() != e_ij.size() || z_i.size() != z_j.size())
    throw std::invalid_argument("generate_mail: dimension mismatch (" +
                                std::to_string(z_i.size()) + ", " + std::to_string(e_ij.size()) +
                                ", " + std::to_string(z_j.size()) + ")");
  Mail mail;
  mail.timestamp = t;
  mail.vec.resize(z_i.size());
  for (std::size_t k = 0; k < z_i.size(); ++k) mail.vec[k] = z_i[k] + e_ij[k] + z_j[k];
  return mail;
}

Mail reduce_mails(std::span<const Mail> mails) {
  if (mails.empty()) throw std::invalid_argument("reduce_mails: empty input");
  const std::size_t d = mails[0].vec.size();
  Mail out;
  out.vec.assign(d, 0.0);
  out.timestamp = mails[0].timestamp;
  for (const Mail& m : mails) {
    if (m.vec.size() != d) throw std::invalid_argument("reduce_mails: dimension mismatch");
    for (std::size_t k = 0; k < d; ++k) out.vec[k] += m.vec[k];
    out.timestamp = std::max(out.timestamp, m.timestamp);
  }
  const double inv = 1.0 / static_cast<double>(mails.size());
  for (double& x : out.vec) x *= inv;
  return out;
}

std::vector<std::int64_t> recipients(const NeighborQueryFn& query, const TemporalEvent& event,
                                     const PropagationConfig& cfg) {
  const int expansions = cfg.hops_as_distance ? cfg.hops : cfg.hops - 1;
  std::vector<std::int64_t> result = {event.src, event.dst};
  std::vector<std::int64_t> frontier = result;
  const std::size_t fanout = static_cast<std::size_t>(cfg.fanout);
  for (int h = 0; h < expansions; ++h) {
    std::vector<std::int64_t> next;
    for (std::int64_t v : frontier)
      for (const auto& [nb, t] : query(v, fanout, event.timestamp)) {
        (void)t;
        next.push_back(nb);
      }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    result.insert(result.end(), next.begin(), next.end());
    frontier = std::move(next);
    if (frontier.empty()) break;
  }
  std::sort(result.begin(), result.end());
  result.erase(std::unique(result.begin(), result.end()), result.end());
  return result;
}

std::vector<std::int64_t> recipients(const TemporalAdjacency& adj, const TemporalEvent& event,
                                     const PropagationConfig& cfg) {
  return recipients(
      [&adj](std::int64_t node, std::size_t n, double t) {
        return adj.recent_neighbors(node, n, t);
      },
      event, cfg);
}

Propagator::Propagator(SharedStores& stores, PropagationConfig cfg, NeighborQueryFn query)
    : stores_(stores), cfg_(cfg), query_(std::move(query)) {
  if (cfg_.hops < 1 || cfg_.fanout < 1)
    throw std::invalid_argument("Propagator: hops and fanout must be >= 1");
  if (!query_)
    query_ = [this](std::int64_t node, std::size_t n, double t) {
      return stores_.adjacency.recent_neighbors(node, n, t);
    };
  if (!cfg_.deterministic) {
    if (cfg_.queue_capacity == 0)
      throw std::invalid_argument("Propagator: queue_capacity must be >= 1");
    worker_ = std::thread([this] { worker_loop(); });
  }
}

Propagator::~Propagator() { close(); }

void Propagator::apply_batch(const PropagationJob& job) {
  // Mails are generated and grouped per recipient across the whole batch using
  // the pre-batch adjacency; only then are the batch's edges recorded.
  std::map<std::int64_t, std::vector<Mail>> inbox;
  {
    for (const JobItem& item : job.items) {
      Mail mail = generate_mail(item.z_src, item.event.edge_feat, item.z_dst,
                                item.event.timestamp);
      for (std::int64_t r : recipients(query_, item.event, cfg_))
        inbox[r].push_back(pass_mail(mail));
    }
  }
  std::unique_lock lock(stores_.mutex);
  for (auto& [node, mails] : inbox) {
    stores_.mailboxes.at(node).push(reduce_mails(mails));
    ++counters_.mails_delivered;
  }
  for (const JobItem& item : job.items)
    stores_.adjacency.record(item.event.src, item.event.dst, item.event.timestamp);
}

void Propagator::submit(PropagationJob job) {
  {
    std::unique_lock lock(mu_);
    if (closed_) throw std::logic_error("Propagator::submit: already closed");
    if (job.seq != next_submit_seq_)
      throw std::logic_error("Propagator::submit: out-of-order job sequence " +
                             std::to_string(job.seq) + ", expected " +
                             std::to_string(next_submit_seq_));
    ++next_submit_seq_;
  }
  if (cfg_.deterministic) {
    apply_batch(job);
    std::unique_lock lock(mu_);
    ++applied_seq_;
    ++counters_.jobs_applied;
    return;
  }
  std::unique_lock lock(mu_);
  cv_producer_.wait(lock, [this] {
    return next_submit_seq_ - 1 - applied_seq_ < cfg_.queue_capacity;
  });
  const std::uint64_t lag = next_submit_seq_ - applied_seq_;
  counters_.max_lag_batches = std::max(counters_.max_lag_batches, lag);
  queue_.push_back(std::move(job));
  cv_worker_.notify_one();
}

void Propagator::worker_loop() {
  while (true) {
    PropagationJob job;
    {
      std::unique_lock lock(mu_);
      cv_worker_.wait(lock, [this] { return !queue_.empty() || closed_; });
      if (queue_.empty()) return;  // closed with nothing pending
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    apply_batch(job);
    {
      std::unique_lock lock(mu_);
      ++applied_seq_;
      ++counters_.jobs_applied;
    }
    cv_producer_.notify_all();
  }
}

void Propagator::drain() {
  std::unique_lock lock(mu_);
  cv_producer_.wait(lock, [this] { return applied_seq_ == next_submit_seq_; });
}

void Propagator::close() {
  {
    std::unique_lock lock(mu_);
    if (closed_) {
      if (worker_.joinable()) worker_.join();
      return;
    }
    closed_ = true;
  }
  cv_worker_.notify_all();
  if (worker_.joinable()) {
    // worker drains the queue before exiting
    worker_.join();
  }
}

std::uint64_t Propagator::lag() const {
  std::unique_lock lock(mu_);
  return next_submit_seq_ - applied_seq_;
}

PropagatorCounters Propagator::counters() const {
  std::unique_lock lock(mu_);
  return counters_;
}

}  // namespace tge
