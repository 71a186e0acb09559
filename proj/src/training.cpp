#include "tge/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace tge {

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("TrainConfig: dropout must be in [0,1)");
  if (patience < 0) throw std::invalid_argument("TrainConfig: patience must be >= 0");
  if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
  if (hops < 0) throw std::invalid_argument("TrainConfig: hops must be >= 0");
  if (fanout < 1) throw std::invalid_argument("TrainConfig: fanout must be >= 1");
  if (heads == 0 || hidden == 0 || mailbox_slots == 0)
    throw std::invalid_argument("TrainConfig: heads, hidden, mailbox_slots must be >= 1");
  if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(train_frac + val_frac < 1.0))
    throw std::invalid_argument("TrainConfig: split fractions out of range");
}

void NegativePool::observe(std::int64_t dst) {
  if (seen_.insert(dst).second) members_.push_back(dst);
}

std::optional<std::int64_t> NegativePool::sample(std::mt19937_64& rng,
                                                 std::int64_t exclude) const {
  std::size_t n = members_.size();
  const bool has_exclude = seen_.count(exclude) != 0;
  if (n == 0 || (has_exclude && n == 1)) return std::nullopt;
  if (!has_exclude) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return members_[dist(rng)];
  }
  // uniform over pool minus the excluded id
  const auto pos = static_cast<std::size_t>(
      std::find(members_.begin(), members_.end(), exclude) - members_.begin());
  std::uniform_int_distribution<std::size_t> dist(0, n - 2);
  std::size_t idx = dist(rng);
  if (idx >= pos) ++idx;
  return members_[idx];
}

void NegativePool::reset() {
  members_.clear();
  seen_.clear();
}

Tensor link_loss(Graph& g, Tensor pos_logits, Tensor neg_logits) {
  if (pos_logits.rows() != 1 || neg_logits.rows() != 1 ||
      pos_logits.cols() != neg_logits.cols())
    throw std::invalid_argument("link_loss: expected matching 1xP logit rows");
  Tensor pos_term = g.softplus(g.scale(pos_logits, -1.0));  // -log sigma(pos)
  Tensor neg_term = g.softplus(neg_logits);                 // -log(1 - sigma(neg))
  return g.mean_all(g.add(pos_term, neg_term));
}

namespace {

void append_csv_double(std::string& out, double x) {
  if (std::isnan(x)) {
    out += "nan";
    return;
  }
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  out.append(buf, ptr);
}

double opt_or_nan(const std::optional<double>& v) {
  return v ? *v : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

void write_metrics_header(std::ostream& out) {
  out << "epoch,split,loss,ap,accuracy,auc,seconds\n";
}

void write_metrics_row(std::ostream& out, const EpochRow& row) {
  std::string line = std::to_string(row.epoch) + "," + row.split + ",";
  append_csv_double(line, row.loss);
  line += ',';
  append_csv_double(line, opt_or_nan(row.ap));
  line += ',';
  append_csv_double(line, row.accuracy);
  line += ',';
  append_csv_double(line, opt_or_nan(row.auc));
  line += ',';
  append_csv_double(line, row.seconds);
  line += '\n';
  out << line;
}

Engine::Engine(const EventLog& log, TrainConfig cfg)
    : log_(log),
      cfg_(cfg),
      split_(split_chronological(log, cfg.train_frac, cfg.val_frac)),
      params_([&] {
        cfg.validate();
        ModelConfig mc;
        mc.d_e = static_cast<std::size_t>(log.d_e);
        mc.d = cfg.embed_dim.value_or(mc.d_e);
        mc.mailbox_slots = cfg.mailbox_slots;
        mc.heads = cfg.heads;
        mc.hidden = cfg.hidden;
        mc.dropout = cfg.dropout;
        std::mt19937_64 init_rng(cfg.seed);
        return ModelParams::init(mc, init_rng);
      }()),
      adam_(cfg.lr),
      stores_(static_cast<std::size_t>(log.num_nodes), cfg.mailbox_slots,
              params_.cfg.d),
      node_states_(static_cast<std::size_t>(log.num_nodes), params_.cfg.d),
      rng_model_(cfg.seed ^ 0x9e3779b97f4a7c15ULL),
      rng_negative_(cfg.seed ^ 0xc2b2ae3d27d4eb4fULL) {
  model_cfg_ = params_.cfg;
  make_propagator();
}

void Engine::make_propagator() {
  PropagationConfig pc;
  pc.hops = std::max(cfg_.hops, 1);
  pc.fanout = cfg_.fanout;
  pc.deterministic = !cfg_.async_replay;
  pc.queue_capacity = cfg_.queue_capacity;
  propagator_ = std::make_unique<Propagator>(stores_, pc);
}

void Engine::reset_state() {
  propagator_.reset();  // joins the worker first in async mode
  stores_.mailboxes = MailboxStore(static_cast<std::size_t>(log_.num_nodes),
                                   cfg_.mailbox_slots, model_cfg_.d);
  stores_.adjacency = TemporalAdjacency(static_cast<std::size_t>(log_.num_nodes));
  node_states_.reset();
  pool_.reset();
  explain_cache_.clear();
  batch_seq_ = 0;
  make_propagator();
}

void Engine::set_params(ModelParams p) {
  const ModelConfig& a = p.cfg;
  const ModelConfig& b = model_cfg_;
  if (a.d != b.d || a.d_e != b.d_e || a.mailbox_slots != b.mailbox_slots ||
      a.heads != b.heads || a.hidden != b.hidden)
    throw std::invalid_argument("set_params: checkpoint config does not match the engine");
  params_ = std::move(p);
}

Engine::BatchOutcome Engine::process_batch(IndexRange slice, const BatchOptions& opts,
                                           std::vector<ScoredPair>* sink,
                                           std::mt19937_64& neg_rng) {
  BatchOutcome outcome;
  const TemporalEvent* events = log_.events.data();

  // negatives drawn against the per-event prefix pool
  std::vector<std::optional<std::int64_t>> negatives(slice.size());
  for (std::size_t k = 0; k < slice.size(); ++k) {
    const TemporalEvent& ev = events[slice.begin + k];
    if (opts.sample_negatives) {
      negatives[k] = pool_.sample(neg_rng, ev.dst);
      if (!negatives[k]) ++outcome.skipped;
    }
    pool_.observe(ev.dst);
  }

  std::vector<std::int64_t> distinct;
  distinct.reserve(slice.size() * 3);
  for (std::size_t k = 0; k < slice.size(); ++k) {
    distinct.push_back(events[slice.begin + k].src);
    distinct.push_back(events[slice.begin + k].dst);
    if (negatives[k]) distinct.push_back(*negatives[k]);
  }
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  Graph g;
  ModelLeaves leaves = ModelLeaves::bind(g, params_);
  DropoutSettings dropout{opts.dropout_on, model_cfg_.dropout, &rng_model_};

  // mailbox readouts are taken atomically with respect to batch application
  std::unordered_map<std::int64_t, Mailbox::Readout> readouts;
  readouts.reserve(distinct.size());
  {
    std::shared_lock lock(stores_.mutex);
    for (std::int64_t node : distinct) readouts.emplace(node, stores_.mailboxes.at(node).read());
  }

  const double batch_time = slice.empty() ? 0.0 : events[slice.begin].timestamp;
  std::unordered_map<std::int64_t, Tensor> z_of;
  z_of.reserve(distinct.size());
  for (std::int64_t node : distinct) {
    const Mailbox::Readout& readout = readouts.at(node);
    EncodeResult res =
        encode(g, leaves, model_cfg_, readout, node_states_.state(node), dropout);
    z_of.emplace(node, res.z);
    explain_cache_[node] = ExplainRecord{batch_time, std::move(res.attention),
                                         readout.timestamps};
  }

  auto score_pair = [&](Tensor z_i, Tensor z_j) -> Tensor {
    if (cfg_.loss == LossKind::Dot) return g.matmul(z_i, g.transpose(z_j));
    return decode_link(g, leaves, model_cfg_, z_i, z_j, dropout);
  };

  std::vector<Tensor> pos_logits, neg_logits;
  for (std::size_t k = 0; k < slice.size(); ++k) {
    if (!negatives[k]) continue;
    const TemporalEvent& ev = events[slice.begin + k];
    pos_logits.push_back(score_pair(z_of.at(ev.src), z_of.at(ev.dst)));
    neg_logits.push_back(score_pair(z_of.at(ev.src), z_of.at(*negatives[k])));
  }
  outcome.pairs = pos_logits.size();

  if (!pos_logits.empty() && (opts.update_params || opts.score)) {
    Tensor loss = link_loss(g, g.concat_cols(pos_logits), g.concat_cols(neg_logits));
    outcome.loss = loss.scalar();
    outcome.has_loss = true;
    if (opts.update_params) {
      g.backward(loss);
      auto ps = params_.all();
      adam_.step(ps);
    }
    if (sink) {
      for (std::size_t k = 0; k < pos_logits.size(); ++k) {
        sink->push_back({sigmoid_value(pos_logits[k].scalar()), 1});
        sink->push_back({sigmoid_value(neg_logits[k].scalar()), 0});
      }
    }
  }

  if (opts.label_sink) {
    for (std::size_t k = 0; k < slice.size(); ++k) {
      const TemporalEvent& ev = events[slice.begin + k];
      if (!ev.label) continue;
      HeadSample sample;
      sample.z_src = z_of.at(ev.src).value_copy();
      sample.z_dst = z_of.at(ev.dst).value_copy();
      sample.edge_feat = ev.edge_feat;
      sample.label = *ev.label;
      sample.event_index = slice.begin + k;
      opts.label_sink->push_back(std::move(sample));
    }
  }

  // detach embeddings, hand the batch to the propagation link
  std::unordered_map<std::int64_t, std::vector<double>> z_values;
  for (std::size_t k = 0; k < slice.size(); ++k) {
    const TemporalEvent& ev = events[slice.begin + k];
    for (std::int64_t node : {ev.src, ev.dst})
      if (!z_values.count(node)) z_values.emplace(node, z_of.at(node).value_copy());
  }
  if (cfg_.hops > 0) {
    PropagationJob job;
    job.seq = batch_seq_;
    job.items.reserve(slice.size());
    for (std::size_t k = 0; k < slice.size(); ++k) {
      const TemporalEvent& ev = events[slice.begin + k];
      JobItem item;
      item.event = ev;
      item.event.edge_feat = params_.project_edge(ev.edge_feat);
      item.z_src = z_values.at(ev.src);
      item.z_dst = z_values.at(ev.dst);
      job.items.push_back(std::move(item));
    }
    propagator_->submit(std::move(job));
  }
  ++batch_seq_;

  // node states move to z(t) after the decode step
  for (std::size_t k = 0; k < slice.size(); ++k) {
    const TemporalEvent& ev = events[slice.begin + k];
    node_states_.update(ev.src, z_values.at(ev.src), ev.timestamp);
    node_states_.update(ev.dst, z_values.at(ev.dst), ev.timestamp);
  }
  return outcome;
}

EpochStats Engine::train_epoch() {
  if (cfg_.async_replay)
    throw std::logic_error("train_epoch: training requires deterministic mode");
  EpochStats stats;
  std::vector<ScoredPair> scored;
  double loss_sum = 0.0;
  std::size_t loss_batches = 0;
  BatchOptions opts;
  opts.update_params = true;
  opts.score = true;
  opts.dropout_on = true;
  for (IndexRange slice : batches(split_.train, cfg_.batch_size)) {
    BatchOutcome out = process_batch(slice, opts, &scored, rng_negative_);
    ++stats.batches;
    stats.pairs += out.pairs;
    stats.skipped_pairs += out.skipped;
    if (out.has_loss) {
      loss_sum += out.loss;
      ++loss_batches;
    }
  }
  stats.loss = loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0;
  stats.ap = average_precision(scored);
  stats.auc = auc_roc(scored);
  stats.accuracy = accuracy_at_half(scored);
  return stats;
}

EvalMetrics Engine::evaluate(IndexRange range) {
  EvalMetrics metrics;
  std::vector<ScoredPair> scored;
  double loss_sum = 0.0;
  std::size_t loss_batches = 0;
  BatchOptions opts;
  opts.score = true;
  std::mt19937_64 eval_rng(cfg_.seed * 0x9e3779b97f4a7c15ULL + range.begin + 1);
  for (IndexRange slice : batches(range, cfg_.batch_size)) {
    BatchOutcome out = process_batch(slice, opts, &scored, eval_rng);
    metrics.pairs += out.pairs;
    metrics.skipped_pairs += out.skipped;
    if (out.has_loss) {
      loss_sum += out.loss;
      ++loss_batches;
    }
  }
  propagator_->drain();
  metrics.loss = loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0;
  metrics.ap = average_precision(scored);
  metrics.auc = auc_roc(scored);
  metrics.accuracy = accuracy_at_half(scored);
  return metrics;
}

EvalMetrics Engine::evaluate_with_warmup(IndexRange range) {
  reset_state();
  replay({0, range.begin});
  return evaluate(range);
}

void Engine::replay(IndexRange range) {
  BatchOptions opts;
  opts.sample_negatives = false;
  std::mt19937_64 unused_rng(0);
  for (IndexRange slice : batches(range, cfg_.batch_size))
    process_batch(slice, opts, nullptr, unused_rng);
  propagator_->drain();
}

FitResult Engine::fit(std::ostream* metrics_csv) {
  if (cfg_.async_replay) throw std::logic_error("fit: training requires deterministic mode");
  if (metrics_csv) write_metrics_header(*metrics_csv);
  FitResult result;
  double best_ap = -1.0;
  ModelParams best_params = params_;
  int bad_epochs = 0;
  const int stop_after = std::max(cfg_.patience, 1);
  using clock = std::chrono::steady_clock;

  for (int epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
    reset_state();
    const auto t0 = clock::now();
    EpochStats tr = train_epoch();
    const auto t1 = clock::now();
    EvalMetrics val = evaluate_with_warmup(split_.val);
    const auto t2 = clock::now();

    EpochRow train_row{epoch, "train", tr.loss, tr.ap, tr.auc, tr.accuracy,
                       std::chrono::duration<double>(t1 - t0).count()};
    EpochRow val_row{epoch, "val", val.loss, val.ap, val.auc, val.accuracy,
                     std::chrono::duration<double>(t2 - t1).count()};
    if (metrics_csv) {
      write_metrics_row(*metrics_csv, train_row);
      write_metrics_row(*metrics_csv, val_row);
    }
    result.history.push_back(train_row);
    result.history.push_back(val_row);
    result.epochs_run = epoch;

    const double val_ap = val.ap.value_or(0.0);
    if (val_ap > best_ap) {
      best_ap = val_ap;
      best_params = params_;
      result.best_epoch = epoch;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= stop_after) break;
    }
  }
  result.best_val_ap = best_ap;
  params_ = std::move(best_params);
  return result;
}

std::vector<double> Engine::encode_at(std::int64_t node, double t) {
  if (node < 0 || node >= log_.num_nodes)
    throw std::out_of_range("encode_at: unknown node " + std::to_string(node));
  Graph g;
  ModelLeaves leaves = ModelLeaves::bind(g, params_);
  Mailbox::Readout readout;
  {
    std::shared_lock lock(stores_.mutex);
    readout = stores_.mailboxes.at(node).read();
  }
  DropoutSettings dropout{false, 0.0, nullptr};
  EncodeResult res = encode(g, leaves, model_cfg_, readout, node_states_.state(node), dropout);
  explain_cache_[node] = ExplainRecord{t, res.attention, readout.timestamps};
  return res.z.value_copy();
}

std::vector<ExplainEntry> Engine::explain(std::int64_t node, double t) const {
  auto it = explain_cache_.find(node);
  if (it == explain_cache_.end() || it->second.t != t)
    throw std::logic_error("explain: no cached encoding for node " + std::to_string(node) +
                           " at t=" + std::to_string(t));
  EncodeResult shim;
  shim.attention = it->second.attention;
  return rank_attention(shim, it->second.timestamps);
}

std::vector<HeadSample> Engine::collect_labeled_samples() {
  reset_state();
  std::vector<HeadSample> samples;
  BatchOptions opts;
  opts.sample_negatives = false;
  opts.label_sink = &samples;
  std::mt19937_64 unused_rng(0);
  for (IndexRange slice : batches({0, log_.events.size()}, cfg_.batch_size))
    process_batch(slice, opts, nullptr, unused_rng);
  propagator_->drain();
  return samples;
}

HeadMetrics Engine::fit_label_head(Task task, int head_epochs) {
  if (task == Task::Link) throw std::invalid_argument("fit_label_head: link task has no labels");
  std::vector<HeadSample> samples = collect_labeled_samples();
  if (samples.empty()) throw std::runtime_error("fit_label_head: no labeled events in the log");

  std::vector<HeadSample> train_part, eval_part;
  for (HeadSample& s : samples) {
    // head trained on train+val ranges, scored on the chronological test range
    if (s.event_index < split_.test.begin)
      train_part.push_back(std::move(s));
    else
      eval_part.push_back(std::move(s));
  }
  if (train_part.empty()) throw std::runtime_error("fit_label_head: no labeled training events");

  HeadMetrics metrics;
  metrics.train_count = train_part.size();
  metrics.eval_count = eval_part.size();
  metrics.train_auc =
      train_head_on_samples(params_, task, train_part, head_epochs, cfg_.lr, cfg_.batch_size);
  if (!eval_part.empty()) {
    auto auc = score_head_on_samples(params_, task, eval_part);
    if (!auc)
      throw std::runtime_error(
          "fit_label_head: AUC undefined on the test range (single-class labels)");
    metrics.eval_auc = *auc;
  }
  return metrics;
}

namespace {

Tensor head_logit(Graph& g, ModelLeaves& leaves, const ModelConfig& cfg, Task task,
                  const HeadSample& s, const DropoutSettings& dropout) {
  Tensor z_src = g.row(s.z_src);
  if (task == Task::Node) return decode_node(g, leaves, cfg, z_src, dropout);
  return decode_edge(g, leaves, cfg, z_src, s.edge_feat, g.row(s.z_dst), dropout);
}

}  // namespace

double train_head_on_samples(ModelParams& params, Task task,
                             std::span<const HeadSample> samples, int epochs, double lr,
                             std::size_t batch_size) {
  if (samples.empty()) throw std::runtime_error("train_head_on_samples: no samples");
  if (batch_size == 0) batch_size = samples.size();
  AdamState adam(lr);
  std::vector<Parameter*> head_params =
      task == Task::Node
          ? params.node_head_params()
          : std::vector<Parameter*>{&params.edge.w1, &params.edge.b1, &params.edge.w2,
                                    &params.edge.b2};
  DropoutSettings no_dropout{false, 0.0, nullptr};
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
      const std::size_t stop = std::min(start + batch_size, samples.size());
      Graph g;
      ModelLeaves leaves = ModelLeaves::bind(g, params);
      std::vector<Tensor> terms;
      terms.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        Tensor logit = head_logit(g, leaves, params.cfg, task, samples[i], no_dropout);
        // BCE from the logit: softplus(-x) for label 1, softplus(x) for label 0
        terms.push_back(samples[i].label ? g.softplus(g.scale(logit, -1.0))
                                         : g.softplus(logit));
      }
      Tensor loss = g.mean_all(g.concat_cols(terms));
      g.backward(loss);
      adam.step(head_params);
    }
  }
  auto auc = score_head_on_samples(params, task, samples);
  return auc.value_or(std::numeric_limits<double>::quiet_NaN());
}

std::optional<double> score_head_on_samples(ModelParams& params, Task task,
                                            std::span<const HeadSample> samples) {
  DropoutSettings no_dropout{false, 0.0, nullptr};
  std::vector<ScoredPair> scored;
  scored.reserve(samples.size());
  for (const HeadSample& s : samples) {
    Graph g;
    ModelLeaves leaves = ModelLeaves::bind(g, params);
    Tensor logit = head_logit(g, leaves, params.cfg, task, s, no_dropout);
    scored.push_back({sigmoid_value(logit.scalar()), s.label});
  }
  return auc_roc(scored);
}

EventLog make_periodic_log(const SyntheticSpec& spec) {
  if (spec.prefs > spec.items)
    throw std::invalid_argument("make_periodic_log: prefs exceeds item count");
  std::mt19937_64 rng(spec.seed);
  EventLog log;
  log.num_users = static_cast<std::int64_t>(spec.users);
  log.num_nodes = static_cast<std::int64_t>(spec.users + spec.items);
  log.d_e = static_cast<std::int64_t>(spec.items);

  // fixed preference list per user: a random sample of `prefs` distinct items
  std::vector<std::vector<std::size_t>> prefs(spec.users);
  std::vector<std::size_t> all_items(spec.items);
  for (std::size_t i = 0; i < spec.items; ++i) all_items[i] = i;
  for (auto& list : prefs) {
    std::vector<std::size_t> pool = all_items;
    for (std::size_t k = 0; k < spec.prefs; ++k) {
      std::uniform_int_distribution<std::size_t> dist(k, pool.size() - 1);
      std::swap(pool[k], pool[dist(rng)]);
    }
    list.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.prefs));
  }

  std::vector<std::size_t> cursor(spec.users, 0);
  std::uniform_int_distribution<std::size_t> item_dist(0, spec.items - 1);
  log.events.reserve(spec.events);
  for (std::size_t k = 0; k < spec.events; ++k) {
    const std::size_t user = k % spec.users;
    std::size_t item;
    if (spec.shuffled) {
      item = item_dist(rng);
    } else {
      item = prefs[user][cursor[user] % spec.prefs];
      ++cursor[user];
    }
    TemporalEvent ev;
    ev.src = static_cast<std::int64_t>(user);
    ev.dst = static_cast<std::int64_t>(spec.users + item);
    ev.timestamp = static_cast<double>(k + 1);
    ev.edge_feat.assign(spec.items, 0.0);
    ev.edge_feat[item] = 1.0;
    ev.label = 0;
    log.events.push_back(std::move(ev));
  }
  return log;
}

}  // namespace tge
