#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tge/mailbox.hpp"
#include "tge/tensor.hpp"

namespace tge {

struct ModelConfig {
  std::size_t d = 0;    // embedding / mail dimension
  std::size_t d_e = 0;  // raw edge feature dimension (= d unless projected)
  std::size_t mailbox_slots = 10;
  std::size_t heads = 2;
  std::size_t hidden = 80;
  double dropout = 0.1;
  double ln_eps = 1e-6;
  // Attention logits are scaled by 1/sqrt(d_h) per head; this flag restores
  // scaling by 1/sqrt(d) instead.
  bool scale_full_dim = false;

  std::size_t head_dim() const { return d / heads; }
  void validate() const;
};

/// All trainable weights: positional table, per-head projections, output
/// projection, layer-norm gain/bias, encoder MLP, and the three decoder heads.
struct ModelParams {
  ModelConfig cfg;

  Parameter pos_table;  // m x d, zero-initialized
  struct Head {
    Parameter wq, wk, wv;  // d x d_h each
  };
  std::vector<Head> heads;
  Parameter w_out;              // d x d
  Parameter ln_gain, ln_bias;   // 1 x d
  Parameter mlp_w1, mlp_b1;     // d x hidden, 1 x hidden
  Parameter mlp_w2, mlp_b2;     // hidden x d, 1 x d

  struct MlpHead {
    Parameter w1, b1, w2, b2;
  };
  MlpHead link;  // 2d -> hidden -> 1
  MlpHead edge;  // 2d + d_e -> hidden -> 1
  MlpHead node;  // d -> hidden -> 1

  // Fixed (non-trained) random projection applied to edge features before
  // mail generation when d != d_e. Row-major d_e x d.
  std::vector<double> edge_proj;

  static ModelParams init(const ModelConfig& cfg, std::mt19937_64& rng);

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> node_head_params();

  std::vector<double> project_edge(std::span<const double> feat) const;
};

/// Binary checkpoint: magic, config block, then named tensors as
/// (name length, name, rank, dims, f64 payload), little-endian throughout.
void save_checkpoint(const ModelParams& params, std::ostream& out);
ModelParams load_checkpoint(std::istream& in);

/// Per-node last embedding z(t-) and last-update time. Zero-initialized, so a
/// cold node contributes a zero query.
class NodeStateStore {
 public:
  NodeStateStore(std::size_t num_nodes, std::size_t dim);

  std::span<const double> state(std::int64_t node) const;
  double last_update(std::int64_t node) const;
  void update(std::int64_t node, std::span<const double> z, double t);
  void reset();

  std::size_t num_nodes() const { return last_update_.size(); }
  std::size_t dim() const { return dim_; }

  bool operator==(const NodeStateStore&) const = default;

 private:
  std::vector<double> states_;  // num_nodes x dim, row-major
  std::vector<double> last_update_;
  std::size_t dim_;
};

/// Parameter leaves bound into one computation graph; create once per batch
/// so every encode/decode in the batch shares them.
struct ModelLeaves {
  Tensor pos;
  struct Head {
    Tensor wq, wk, wv;
  };
  std::vector<Head> heads;
  Tensor w_out, ln_gain, ln_bias;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  struct MlpHead {
    Tensor w1, b1, w2, b2;
  };
  MlpHead link, edge, node;

  static ModelLeaves bind(Graph& g, ModelParams& params);
};

struct DropoutSettings {
  bool training = false;
  double p = 0.0;
  std::mt19937_64* rng = nullptr;
};

struct EncodeResult {
  Tensor z;  // 1 x d
  std::vector<std::vector<double>> attention;  // per head, one weight per slot
};

/// M + P, row i of the positional table added to the i-th time-sorted mail.
Tensor positional_encode(Graph& g, Tensor mailbox_matrix, Tensor pos_table);

/// One attention head: softmax(q k^T / sqrt(scale)) v for a single query row.
/// Dropout, when given, is applied to the attention weights; attention_out
/// receives the pre-dropout weights.
Tensor attend_head(Graph& g, Tensor z_query, Tensor mailbox, Tensor wq, Tensor wk, Tensor wv,
                   double scale_dim, const DropoutSettings* dropout = nullptr,
                   Tensor* attention_out = nullptr);

/// Residual + layer normalization with learnable gain/bias.
Tensor layer_norm_residual(Graph& g, Tensor attn_out, Tensor z_prev, Tensor gain, Tensor bias,
                           double eps);

/// Full encoder: positional encoding, multi-head attention over the mailbox,
/// residual + layer norm, then the two-layer MLP.
EncodeResult encode(Graph& g, const ModelLeaves& leaves, const ModelConfig& cfg,
                    const Mailbox::Readout& mailbox, std::span<const double> z_prev,
                    const DropoutSettings& dropout);

Tensor decode_link(Graph& g, const ModelLeaves& leaves, const ModelConfig& cfg, Tensor z_i,
                   Tensor z_j, const DropoutSettings& dropout);
Tensor decode_edge(Graph& g, const ModelLeaves& leaves, const ModelConfig& cfg, Tensor z_i,
                   std::span<const double> edge_feat, Tensor z_j,
                   const DropoutSettings& dropout);
Tensor decode_node(Graph& g, const ModelLeaves& leaves, const ModelConfig& cfg, Tensor z_i,
                   const DropoutSettings& dropout);

/// Attention weights averaged over heads for one already-encoded node,
/// paired with the mail timestamps and sorted by weight, largest first.
struct ExplainEntry {
  double mail_timestamp;
  double weight;
};
std::vector<ExplainEntry> rank_attention(const EncodeResult& result,
                                         std::span<const double> mail_timestamps);

}  // namespace tge
