#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tge/event_store.hpp"
#include "tge/metrics.hpp"
#include "tge/model.hpp"
#include "tge/propagator.hpp"

namespace tge {

enum class LossKind { Mlp, Dot };
enum class Task { Link, Edge, Node };

struct TrainConfig {
  std::size_t batch_size = 200;
  double lr = 1e-4;
  double dropout = 0.1;
  int patience = 5;
  int max_epochs = 20;
  std::uint64_t seed = 0;
  std::size_t heads = 2;
  std::size_t hidden = 80;
  std::size_t mailbox_slots = 10;
  int hops = 2;    // 0 disables mail propagation entirely (ablation)
  int fanout = 10;
  double train_frac = 0.7;
  double val_frac = 0.15;
  LossKind loss = LossKind::Mlp;
  bool async_replay = false;  // evaluation/replay only; training stays deterministic
  std::size_t queue_capacity = 4;
  std::optional<std::size_t> embed_dim;  // enables the fixed edge projection

  void validate() const;
};

/// Destination ids observed so far in the processed stream prefix. Negatives
/// are drawn uniformly from the pool minus the excluded true destination.
class NegativePool {
 public:
  void observe(std::int64_t dst);
  std::optional<std::int64_t> sample(std::mt19937_64& rng, std::int64_t exclude) const;
  std::size_t size() const { return members_.size(); }
  bool contains(std::int64_t id) const { return seen_.count(id) != 0; }
  const std::vector<std::int64_t>& members() const { return members_; }
  void reset();

 private:
  std::vector<std::int64_t> members_;  // insertion order
  std::unordered_set<std::int64_t> seen_;
};

/// Mean over pairs of -log sigma(pos) - log(1 - sigma(neg)), built from
/// logits. Both inputs are 1 x P rows with matching P.
Tensor link_loss(Graph& g, Tensor pos_logits, Tensor neg_logits);

struct EpochStats {
  double loss = 0.0;  // mean over batches with at least one pair
  std::size_t batches = 0;
  std::size_t pairs = 0;
  std::size_t skipped_pairs = 0;
  std::optional<double> ap, auc;
  double accuracy = 0.0;
};

struct EvalMetrics {
  double loss = 0.0;
  std::optional<double> ap, auc;
  double accuracy = 0.0;
  std::size_t pairs = 0;
  std::size_t skipped_pairs = 0;
};

struct EpochRow {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  std::optional<double> ap, auc;
  double accuracy = 0.0;
  double seconds = 0.0;
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const EpochRow& row);

struct FitResult {
  int best_epoch = 0;
  double best_val_ap = 0.0;
  int epochs_run = 0;
  std::vector<EpochRow> history;
};

struct HeadSample {
  std::vector<double> z_src;
  std::vector<double> z_dst;      // empty for the node task
  std::vector<double> edge_feat;  // empty for the node task
  int label = 0;
  std::size_t event_index = 0;
};

struct HeadMetrics {
  double train_auc = 0.0;
  double eval_auc = 0.0;
  std::size_t train_count = 0;
  std::size_t eval_count = 0;
};

/// Chronological replay engine: the synchronous link (encode/decode) plus the
/// deterministic propagation link, negative sampling, training and the
/// reset-and-replay evaluation protocol.
class Engine {
 public:
  Engine(const EventLog& log, TrainConfig cfg);

  void reset_state();

  EpochStats train_epoch();
  /// Scores a range; assumes state is warm up to range.begin.
  EvalMetrics evaluate(IndexRange range);
  /// Resets, replays [0, range.begin) with propagation on and updates off,
  /// then scores the range.
  EvalMetrics evaluate_with_warmup(IndexRange range);
  /// Propagation and state updates only; no scoring, no parameter updates.
  void replay(IndexRange range);

  FitResult fit(std::ostream* metrics_csv = nullptr);

  /// Encodes one node against the current state (dropout off) and caches the
  /// attention weights for explain().
  std::vector<double> encode_at(std::int64_t node, double t);
  std::vector<ExplainEntry> explain(std::int64_t node, double t) const;

  /// Full-stream replay collecting (z, label) at labeled events for the
  /// classifier heads. Resets state first.
  std::vector<HeadSample> collect_labeled_samples();
  /// Trains the node or edge head on frozen embeddings; evaluates on the
  /// chronological test range.
  HeadMetrics fit_label_head(Task task, int head_epochs = 200);

  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  void set_params(ModelParams p);
  const ModelConfig& model_config() const { return model_cfg_; }
  const TrainConfig& config() const { return cfg_; }
  const DataSplit& split() const { return split_; }
  const SharedStores& stores() const { return stores_; }
  const NodeStateStore& node_states() const { return node_states_; }
  const NegativePool& negative_pool() const { return pool_; }
  const EventLog& log() const { return log_; }

 private:
  struct BatchOptions {
    bool update_params = false;
    bool score = false;
    bool dropout_on = false;
    bool sample_negatives = true;
    std::vector<HeadSample>* label_sink = nullptr;
  };
  struct BatchOutcome {
    double loss = 0.0;
    std::size_t pairs = 0;
    std::size_t skipped = 0;
    bool has_loss = false;
  };
  BatchOutcome process_batch(IndexRange slice, const BatchOptions& opts,
                             std::vector<ScoredPair>* sink, std::mt19937_64& neg_rng);
  void make_propagator();

  struct ExplainRecord {
    double t = 0.0;
    std::vector<std::vector<double>> attention;
    std::vector<double> timestamps;
  };

  const EventLog& log_;
  TrainConfig cfg_;
  ModelConfig model_cfg_;
  DataSplit split_;
  ModelParams params_;
  AdamState adam_;
  SharedStores stores_;
  std::unique_ptr<Propagator> propagator_;
  NodeStateStore node_states_;
  NegativePool pool_;
  std::mt19937_64 rng_model_;
  std::mt19937_64 rng_negative_;
  std::uint64_t batch_seq_ = 0;
  std::unordered_map<std::int64_t, ExplainRecord> explain_cache_;
};

/// Trains a two-layer classifier head by BCE on frozen embedding samples.
/// Returns AUC over the same samples after training.
double train_head_on_samples(ModelParams& params, Task task,
                             std::span<const HeadSample> samples, int epochs, double lr,
                             std::size_t batch_size = 0);
std::optional<double> score_head_on_samples(ModelParams& params, Task task,
                                            std::span<const HeadSample> samples);

struct SyntheticSpec {
  std::size_t users = 20;
  std::size_t items = 10;
  std::size_t prefs = 3;  // fixed preference list length per user
  std::size_t events = 5000;
  std::uint64_t seed = 0;
  bool shuffled = false;  // control: destination drawn uniformly at random
};

/// Periodic bipartite log: user k mod U acts at step k, cycling through its
/// preference list. Edge features are the one-hot of the destination item.
EventLog make_periodic_log(const SyntheticSpec& spec);

}  // namespace tge
