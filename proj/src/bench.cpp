#include "tge/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace tge {

MockGraphDb::MockGraphDb(const TemporalAdjacency& adj, LatencyModel model, std::uint64_t seed,
                         bool wall_clock)
    : adj_(adj), model_(model), rng_(seed), wall_clock_(wall_clock) {}

std::vector<std::pair<std::int64_t, double>> MockGraphDb::query(std::int64_t node,
                                                                std::size_t n, double t,
                                                                VirtualClock& clock) {
  ++count_;
  double latency = model_.mu_ms;
  if (model_.sigma_log > 0.0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    latency = model_.mu_ms * std::exp(model_.sigma_log * gauss(rng_));
  }
  if (wall_clock_)
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(latency));
  clock.advance(latency);
  return adj_.recent_neighbors(node, n, t);
}

namespace {

std::uint64_t parse_u64(const std::string& value, const std::string& key) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), x);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw std::invalid_argument("scenario key '" + key + "': bad integer '" + value + "'");
  return x;
}

double parse_f64(const std::string& value, const std::string& key) {
  double x = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), x);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw std::invalid_argument("scenario key '" + key + "': bad number '" + value + "'");
  return x;
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw std::invalid_argument("scenario key '" + key + "': bad flag '" + value + "'");
}

void append_num(std::string& out, double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  out.append(buf, ptr);
}

}  // namespace

ScenarioConfig parse_scenario(std::istream& in) {
  ScenarioConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("scenario line " + std::to_string(line_no) +
                                  ": expected key=value, got '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "mu_ms")
      cfg.mu_ms = parse_f64(value, key);
    else if (key == "sigma_log")
      cfg.sigma_log = parse_f64(value, key);
    else if (key == "hops")
      cfg.hops = static_cast<int>(parse_u64(value, key));
    else if (key == "fanout")
      cfg.fanout = static_cast<int>(parse_u64(value, key));
    else if (key == "batch")
      cfg.batch = parse_u64(value, key);
    else if (key == "seed")
      cfg.seed = parse_u64(value, key);
    else if (key == "events")
      cfg.events = parse_u64(value, key);
    else if (key == "warmup_batches")
      cfg.warmup_batches = parse_u64(value, key);
    else if (key == "queue_capacity")
      cfg.queue_capacity = parse_u64(value, key);
    else if (key == "lag0")
      cfg.lag0 = parse_bool(value, key);
    else if (key == "wall_clock")
      cfg.wall_clock = parse_bool(value, key);
    else
      throw std::invalid_argument("scenario key '" + key + "' is not recognized");
  }
  if (cfg.batch == 0) throw std::invalid_argument("scenario key 'batch': must be >= 1");
  if (cfg.fanout < 1) throw std::invalid_argument("scenario key 'fanout': must be >= 1");
  if (cfg.hops < 0) throw std::invalid_argument("scenario key 'hops': must be >= 0");
  return cfg;
}

void write_scenario(const ScenarioConfig& cfg, std::ostream& out) {
  std::string s;
  s += "mu_ms=";
  append_num(s, cfg.mu_ms);
  s += "\nsigma_log=";
  append_num(s, cfg.sigma_log);
  s += "\nhops=" + std::to_string(cfg.hops);
  s += "\nfanout=" + std::to_string(cfg.fanout);
  s += "\nbatch=" + std::to_string(cfg.batch);
  s += "\nseed=" + std::to_string(cfg.seed);
  s += "\nevents=" + std::to_string(cfg.events);
  s += "\nwarmup_batches=" + std::to_string(cfg.warmup_batches);
  s += "\nqueue_capacity=" + std::to_string(cfg.queue_capacity);
  s += std::string("\nlag0=") + (cfg.lag0 ? "1" : "0");
  s += std::string("\nwall_clock=") + (cfg.wall_clock ? "1" : "0");
  s += "\n";
  out << s;
}

double percentile_nearest_rank(std::span<const double> samples, double pct) {
  if (samples.empty()) return 0.0;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * n));
  rank = std::max<std::size_t>(rank, 1);
  return sorted[rank - 1];
}

double PipelineStats::p50() const { return percentile_nearest_rank(batch_ms, 50.0); }
double PipelineStats::p95() const { return percentile_nearest_rank(batch_ms, 95.0); }
double PipelineStats::p99() const { return percentile_nearest_rank(batch_ms, 99.0); }

namespace {

using clock_type = std::chrono::steady_clock;

double ms_between(clock_type::time_point a, clock_type::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

struct BenchState {
  SharedStores stores;
  NodeStateStore node_states;

  BenchState(const EventLog& log, const ModelConfig& cfg)
      : stores(static_cast<std::size_t>(log.num_nodes), cfg.mailbox_slots, cfg.d),
        node_states(static_cast<std::size_t>(log.num_nodes), cfg.d) {}
};

std::vector<std::int64_t> distinct_endpoints(const EventLog& log, IndexRange slice) {
  std::vector<std::int64_t> nodes;
  nodes.reserve(slice.size() * 2);
  for (std::size_t k = slice.begin; k < slice.end; ++k) {
    nodes.push_back(log.events[k].src);
    nodes.push_back(log.events[k].dst);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

PropagationJob make_job(const EventLog& log, IndexRange slice, std::uint64_t seq,
                        const ModelParams& params,
                        const std::unordered_map<std::int64_t, std::vector<double>>& z_values) {
  PropagationJob job;
  job.seq = seq;
  job.items.reserve(slice.size());
  for (std::size_t k = slice.begin; k < slice.end; ++k) {
    const TemporalEvent& ev = log.events[k];
    JobItem item;
    item.event = ev;
    item.event.edge_feat = params.project_edge(ev.edge_feat);
    item.z_src = z_values.at(ev.src);
    item.z_dst = z_values.at(ev.dst);
    job.items.push_back(std::move(item));
  }
  return job;
}

void update_states(const EventLog& log, IndexRange slice, NodeStateStore& states,
                   const std::unordered_map<std::int64_t, std::vector<double>>& z_values) {
  for (std::size_t k = slice.begin; k < slice.end; ++k) {
    const TemporalEvent& ev = log.events[k];
    states.update(ev.src, z_values.at(ev.src), ev.timestamp);
    states.update(ev.dst, z_values.at(ev.dst), ev.timestamp);
  }
}

void capture_state(BenchStateSnapshot* out, const BenchState& state) {
  if (!out) return;
  out->mailboxes = state.stores.mailboxes;
  out->adjacency = state.stores.adjacency;
  out->node_states = state.node_states;
}

double sum_ms(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

}  // namespace

PipelineStats run_sync(const EventLog& log, ModelParams& params, const ScenarioConfig& scenario,
                       BenchStateSnapshot* final_state) {
  const ModelConfig& mc = params.cfg;
  BenchState state(log, mc);
  // state maintenance runs off the measured path and uses the adjacency
  // directly; the database is charged only for the critical-path fetches
  PropagationConfig pc;
  pc.hops = std::max(scenario.hops, 1);
  pc.fanout = scenario.fanout;
  pc.deterministic = true;
  Propagator propagator(state.stores, pc);
  MockGraphDb db(state.stores.adjacency, {scenario.mu_ms, scenario.sigma_log}, scenario.seed,
                 scenario.wall_clock);

  PipelineStats stats;
  stats.pipeline = "sync";
  stats.hops = scenario.hops;
  stats.fanout = scenario.fanout;
  stats.batch = scenario.batch;

  DropoutSettings no_dropout{false, 0.0, nullptr};
  const auto slices = batches({0, log.events.size()}, scenario.batch);
  std::vector<double> all_ms;
  all_ms.reserve(slices.size());
  std::uint64_t seq = 0;
  for (IndexRange slice : slices) {
    const double t_query = log.events[slice.begin].timestamp;
    const auto wall0 = clock_type::now();
    VirtualClock query_clock;

    const std::vector<std::int64_t> endpoints = distinct_endpoints(log, slice);
    // hop 1 fetches feed the assembly; deeper hops model the frontier cost
    std::unordered_map<std::int64_t, std::vector<std::pair<std::int64_t, double>>> fetched;
    const std::uint64_t queries_before = db.query_count();
    if (scenario.hops >= 1) {
      std::shared_lock lock(state.stores.mutex);
      std::vector<std::int64_t> frontier;
      for (std::int64_t v : endpoints) {
        auto nbrs = db.query(v, static_cast<std::size_t>(scenario.fanout), t_query, query_clock);
        for (const auto& [nb, tt] : nbrs) {
          (void)tt;
          frontier.push_back(nb);
        }
        fetched.emplace(v, std::move(nbrs));
      }
      std::sort(frontier.begin(), frontier.end());
      frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
      for (int h = 2; h <= scenario.hops && !frontier.empty(); ++h) {
        std::vector<std::int64_t> next;
        for (std::int64_t v : frontier)
          for (const auto& [nb, tt] :
               db.query(v, static_cast<std::size_t>(scenario.fanout), t_query, query_clock)) {
            (void)tt;
            next.push_back(nb);
          }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        frontier = std::move(next);
      }
    }
    stats.batch_queries.push_back(db.query_count() - queries_before);

    Graph g;
    ModelLeaves leaves = ModelLeaves::bind(g, params);
    std::unordered_map<std::int64_t, std::vector<double>> z_values;
    z_values.reserve(endpoints.size());
    {
      std::shared_lock lock(state.stores.mutex);
      static const std::vector<std::pair<std::int64_t, double>> kNoNeighbors;
      for (std::int64_t v : endpoints) {
        // assembled matrix: the fetched neighbors' latest mails, time-ordered,
        // zero-padded at the oldest rows like a cold mailbox
        const auto it = fetched.find(v);
        const auto& nbrs = it == fetched.end() ? kNoNeighbors : it->second;  // most recent first
        Mailbox::Readout assembled;
        assembled.slots = mc.mailbox_slots;
        assembled.dim = mc.d;
        assembled.matrix.assign(mc.mailbox_slots * mc.d, 0.0);
        assembled.timestamps.assign(mc.mailbox_slots, 0.0);
        const std::size_t take = std::min<std::size_t>(nbrs.size(), mc.mailbox_slots);
        for (std::size_t j = 0; j < take; ++j) {
          const auto& [nb, tt] = nbrs[j];
          const Mail& mail = state.stores.mailboxes.at(nb).newest();
          const std::size_t row = mc.mailbox_slots - 1 - j;  // newest at the bottom
          std::copy(mail.vec.begin(), mail.vec.end(), assembled.matrix.begin() + row * mc.d);
          assembled.timestamps[row] = tt;
        }
        EncodeResult res =
            encode(g, leaves, mc, assembled, state.node_states.state(v), no_dropout);
        z_values.emplace(v, res.z.value_copy());
      }
    }
    for (std::size_t k = slice.begin; k < slice.end; ++k) {
      const TemporalEvent& ev = log.events[k];
      Tensor logit = decode_link(g, leaves, mc, g.row(z_values.at(ev.src)),
                                 g.row(z_values.at(ev.dst)), no_dropout);
      (void)logit;
    }
    const auto wall1 = clock_type::now();
    all_ms.push_back(ms_between(wall0, wall1) + (scenario.wall_clock ? 0.0 : query_clock.ms));

    propagator.submit(make_job(log, slice, seq++, params, z_values));
    update_states(log, slice, state.node_states, z_values);
  }
  propagator.drain();

  stats.batch_ms.assign(all_ms.begin() + std::min<std::size_t>(scenario.warmup_batches,
                                                               all_ms.empty() ? 0 : all_ms.size() - 1),
                        all_ms.end());
  stats.db_queries = db.query_count();
  stats.mails_delivered = propagator.counters().mails_delivered;
  const double total_s = sum_ms(all_ms) / 1000.0;
  stats.events_per_s = total_s > 0.0 ? static_cast<double>(log.events.size()) / total_s : 0.0;
  capture_state(final_state, state);
  return stats;
}

PipelineStats run_async(const EventLog& log, ModelParams& params, const ScenarioConfig& scenario,
                        BenchStateSnapshot* final_state) {
  const ModelConfig& mc = params.cfg;
  BenchState state(log, mc);
  MockGraphDb db(state.stores.adjacency, {scenario.mu_ms, scenario.sigma_log}, scenario.seed,
                 scenario.wall_clock);
  VirtualClock worker_clock;  // database latency lands on the worker
  VirtualClock inference_clock;

  PropagationConfig pc;
  pc.hops = std::max(scenario.hops, 1);
  pc.fanout = scenario.fanout;
  pc.deterministic = scenario.lag0;
  pc.queue_capacity = scenario.queue_capacity;
  Propagator propagator(state.stores, pc,
                        [&db, &worker_clock](std::int64_t node, std::size_t n, double t) {
                          return db.query(node, n, t, worker_clock);
                        });

  PipelineStats stats;
  stats.pipeline = "async";
  stats.hops = scenario.hops;
  stats.fanout = scenario.fanout;
  stats.batch = scenario.batch;

  DropoutSettings no_dropout{false, 0.0, nullptr};
  const auto slices = batches({0, log.events.size()}, scenario.batch);
  std::vector<double> all_ms;
  all_ms.reserve(slices.size());
  std::uint64_t seq = 0;
  for (IndexRange slice : slices) {
    const auto wall0 = clock_type::now();
    const std::vector<std::int64_t> endpoints = distinct_endpoints(log, slice);

    Graph g;
    ModelLeaves leaves = ModelLeaves::bind(g, params);
    std::unordered_map<std::int64_t, std::vector<double>> z_values;
    z_values.reserve(endpoints.size());
    {
      std::shared_lock lock(state.stores.mutex);
      for (std::int64_t v : endpoints) {
        const Mailbox::Readout readout = state.stores.mailboxes.at(v).read();
        EncodeResult res = encode(g, leaves, mc, readout, state.node_states.state(v), no_dropout);
        z_values.emplace(v, res.z.value_copy());
      }
    }
    for (std::size_t k = slice.begin; k < slice.end; ++k) {
      const TemporalEvent& ev = log.events[k];
      Tensor logit = decode_link(g, leaves, mc, g.row(z_values.at(ev.src)),
                                 g.row(z_values.at(ev.dst)), no_dropout);
      (void)logit;
    }
    const auto wall1 = clock_type::now();
    all_ms.push_back(ms_between(wall0, wall1) + inference_clock.ms);

    stats.lag_batches = std::max(stats.lag_batches, propagator.lag());
    const auto block0 = clock_type::now();
    propagator.submit(make_job(log, slice, seq++, params, z_values));
    stats.producer_blocked_ms += ms_between(block0, clock_type::now());
    update_states(log, slice, state.node_states, z_values);
  }
  propagator.drain();

  stats.batch_ms.assign(all_ms.begin() + std::min<std::size_t>(scenario.warmup_batches,
                                                               all_ms.empty() ? 0 : all_ms.size() - 1),
                        all_ms.end());
  stats.inference_db_wait_ms = inference_clock.ms;  // stays 0: no db on this path
  stats.db_queries = db.query_count();
  stats.mails_delivered = propagator.counters().mails_delivered;
  stats.lag_batches = std::max(stats.lag_batches, propagator.counters().max_lag_batches);
  const double total_s = sum_ms(all_ms) / 1000.0;
  stats.events_per_s = total_s > 0.0 ? static_cast<double>(log.events.size()) / total_s : 0.0;
  capture_state(final_state, state);
  return stats;
}

void write_bench_csv(std::ostream& out, std::span<const PipelineStats> stats) {
  out << "pipeline,hops,fanout,batch,p50_ms,p95_ms,p99_ms,events_per_s,lag_batches\n";
  for (const PipelineStats& s : stats) {
    std::string line = s.pipeline + "," + std::to_string(s.hops) + "," +
                       std::to_string(s.fanout) + "," + std::to_string(s.batch) + ",";
    append_num(line, s.p50());
    line += ',';
    append_num(line, s.p95());
    line += ',';
    append_num(line, s.p99());
    line += ',';
    append_num(line, s.events_per_s);
    line += ',' + std::to_string(s.lag_batches) + '\n';
    out << line;
  }
}

std::string format_bench_table(std::span<const PipelineStats> stats) {
  std::ostringstream os;
  os << "pipeline  hops  fanout  batch   p50_ms     p95_ms     p99_ms     events/s   lag\n";
  for (const PipelineStats& s : stats) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-9s %-5d %-7d %-7zu %-10.3f %-10.3f %-10.3f %-10.0f %llu\n",
                  s.pipeline.c_str(), s.hops, s.fanout, s.batch, s.p50(), s.p95(), s.p99(),
                  s.events_per_s, static_cast<unsigned long long>(s.lag_batches));
    os << buf;
  }
  return os.str();
}

}  // namespace tge
