#include "tge/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tge {

void ModelConfig::validate() const {
  if (d == 0 || d_e == 0) throw std::invalid_argument("ModelConfig: d and d_e must be >= 1");
  if (heads == 0 || d % heads != 0)
    throw std::invalid_argument("ModelConfig: heads (" + std::to_string(heads) +
                                ") must divide d (" + std::to_string(d) + ")");
  if (mailbox_slots == 0 || hidden == 0)
    throw std::invalid_argument("ModelConfig: mailbox_slots and hidden must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("ModelConfig: dropout must be in [0,1)");
}

namespace {

ModelParams::MlpHead init_head(const std::string& prefix, std::size_t in, std::size_t hidden,
                               std::mt19937_64& rng) {
  ModelParams::MlpHead h;
  h.w1 = Parameter::uniform(prefix + ".w1", in, hidden, in, rng);
  h.b1 = Parameter::uniform(prefix + ".b1", 1, hidden, in, rng);
  h.w2 = Parameter::uniform(prefix + ".w2", hidden, 1, hidden, rng);
  h.b2 = Parameter::uniform(prefix + ".b2", 1, 1, hidden, rng);
  return h;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t d = cfg.d, dh = cfg.head_dim();
  ModelParams p;
  p.cfg = cfg;
  p.pos_table = Parameter::zeros("pos_table", cfg.mailbox_slots, d);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::string prefix = "head" + std::to_string(h);
    Head head;
    head.wq = Parameter::uniform(prefix + ".wq", d, dh, d, rng);
    head.wk = Parameter::uniform(prefix + ".wk", d, dh, d, rng);
    head.wv = Parameter::uniform(prefix + ".wv", d, dh, d, rng);
    p.heads.push_back(std::move(head));
  }
  p.w_out = Parameter::uniform("w_out", d, d, d, rng);
  p.ln_gain = Parameter::zeros("ln_gain", 1, d);
  std::fill(p.ln_gain.value.begin(), p.ln_gain.value.end(), 1.0);
  p.ln_bias = Parameter::zeros("ln_bias", 1, d);
  p.mlp_w1 = Parameter::uniform("mlp.w1", d, cfg.hidden, d, rng);
  p.mlp_b1 = Parameter::uniform("mlp.b1", 1, cfg.hidden, d, rng);
  p.mlp_w2 = Parameter::uniform("mlp.w2", cfg.hidden, d, cfg.hidden, rng);
  p.mlp_b2 = Parameter::uniform("mlp.b2", 1, d, cfg.hidden, rng);
  p.link = init_head("dec_link", 2 * d, cfg.hidden, rng);
  p.edge = init_head("dec_edge", 2 * d + cfg.d_e, cfg.hidden, rng);
  p.node = init_head("dec_node", d, cfg.hidden, rng);
  if (cfg.d != cfg.d_e) {
    // fixed random projection; mails carry no gradient, so this is frozen
    p.edge_proj.resize(cfg.d_e * d);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_e));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : p.edge_proj) x = dist(rng);
  }
  return p;
}

std::vector<Parameter*> ModelParams::all() {
  std::vector<Parameter*> out = {&pos_table};
  for (Head& h : heads) {
    out.push_back(&h.wq);
    out.push_back(&h.wk);
    out.push_back(&h.wv);
  }
  for (Parameter* p : {&w_out, &ln_gain, &ln_bias, &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2})
    out.push_back(p);
  for (MlpHead* head : {&link, &edge, &node})
    for (Parameter* p : {&head->w1, &head->b1, &head->w2, &head->b2}) out.push_back(p);
  return out;
}

std::vector<const Parameter*> ModelParams::all() const {
  auto mut = const_cast<ModelParams*>(this)->all();
  return {mut.begin(), mut.end()};
}

std::vector<Parameter*> ModelParams::node_head_params() {
  return {&node.w1, &node.b1, &node.w2, &node.b2};
}

std::vector<double> ModelParams::project_edge(std::span<const double> feat) const {
  if (edge_proj.empty()) return {feat.begin(), feat.end()};
  if (feat.size() != cfg.d_e)
    throw std::invalid_argument("project_edge: feature length " + std::to_string(feat.size()) +
                                " != d_e " + std::to_string(cfg.d_e));
  std::vector<double> out(cfg.d, 0.0);
  for (std::size_t i = 0; i < cfg.d_e; ++i) {
    const double f = feat[i];
    if (f == 0.0) continue;
    for (std::size_t j = 0; j < cfg.d; ++j) out[j] += f * edge_proj[i * cfg.d + j];
  }
  return out;
}

NodeStateStore::NodeStateStore(std::size_t num_nodes, std::size_t dim)
    : states_(num_nodes * dim, 0.0), last_update_(num_nodes, 0.0), dim_(dim) {}

std::span<const double> NodeStateStore::state(std::int64_t node) const {
  const auto i = static_cast<std::size_t>(node);
  if (node < 0 || i >= last_update_.size())
    throw std::out_of_range("NodeStateStore: unknown node " + std::to_string(node));
  return {states_.data() + i * dim_, dim_};
}

double NodeStateStore::last_update(std::int64_t node) const {
  return last_update_.at(static_cast<std::size_t>(node));
}

void NodeStateStore::update(std::int64_t node, std::span<const double> z, double t) {
  const auto i = static_cast<std::size_t>(node);
  if (node < 0 || i >= last_update_.size())
    throw std::out_of_range("NodeStateStore: unknown node " + std::to_string(node));
  if (z.size() != dim_) throw std::invalid_argument("NodeStateStore::update: bad dimension");
  std::copy(z.begin(), z.end(), states_.begin() + i * dim_);
  last_update_[i] = t;
}

void NodeStateStore::reset() {
  std::fill(states_.begin(), states_.end(), 0.0);
  std::fill(last_update_.begin(), last_update_.end(), 0.0);
}

ModelLeaves ModelLeaves::bind(Graph& g, ModelParams& p) {
  ModelLeaves l;
  l.pos = g.param(p.pos_table);
  for (ModelParams::Head& h : p.heads)
    l.heads.push_back({g.param(h.wq), g.param(h.wk), g.param(h.wv)});
  l.w_out = g.param(p.w_out);
  l.ln_gain = g.param(p.ln_gain);
  l.ln_bias = g.param(p.ln_bias);
  l.mlp_w1 = g.param(p.mlp_w1);
  l.mlp_b1 = g.param(p.mlp_b1);
  l.mlp_w2 = g.param(p.mlp_w2);
  l.mlp_b2 = g.param(p.mlp_b2);
  auto bind_head = [&g](ModelParams::MlpHead& h) -> MlpHead {
    return {g.param(h.w1), g.param(h.b1), g.param(h.w2), g.param(h.b2)};
  };
  l.link = bind_head(p.link);
  l.edge = bind_head(p.edge);
  l.node = bind_head(p.node);
  return l;
}

Tensor positional_encode(Graph& g, Tensor mailbox_matrix, Tensor pos_table) {
  return g.add(mailbox_matrix, pos_table);
}

Tensor attend_head(Graph& g, Tensor z_query, Tensor mailbox, Tensor wq, Tensor wk, Tensor wv,
                   double scale_dim, const DropoutSettings* dropout, Tensor* attention_out) {
  Tensor q = g.matmul(z_query, wq);            // 1 x d_h
  Tensor k = g.matmul(mailbox, wk);            // m x d_h
  Tensor v = g.matmul(mailbox, wv);            // m x d_h
  Tensor logits = g.matmul(q, g.transpose(k)); // 1 x m
  logits = g.scale(logits, 1.0 / std::sqrt(scale_dim));
  Tensor weights = g.row_softmax(logits);
  if (attention_out) *attention_out = weights;
  Tensor applied = weights;
  if (dropout && dropout->rng)
    applied = g.dropout(weights, dropout->p, dropout->training, *dropout->rng);
  return g.matmul(applied, v);  // 1 x d_h
}

Tensor layer_norm_residual(Graph& g, Tensor attn_out, Tensor z_prev, Tensor gain, Tensor bias,
                           double eps) {
  Tensor a = g.add(attn_out, z_prev);
  const std::size_t d = a.cols();
  Tensor mu = g.broadcast_cols(g.row_mean(a), d);
  Tensor centered = g.sub(a, mu);
  Tensor sigma = g.broadcast_cols(g.sqrt(g.add_scalar(g.row_var(a), eps)), d);
  Tensor normalized = g.div(centered, sigma);
  return g.add(g.mul(gain, normalized), bias);
}

namespace {

Tensor mlp_forward(Graph& g, Tensor x, Tensor w1, Tensor b1, Tensor w2, Tensor b2,
                   const DropoutSettings& dropout) {
  Tensor hidden = g.relu(g.add(g.matmul(x, w1), b1));
  if (dropout.rng)
    hidden = g.dropout(hidden, dropout.p, dropout.training, *dropout.rng);
  return g.add(g.matmul(hidden, w2), b2);
}

}  // namespace

EncodeResult encode(Graph& g, const ModelLeaves& leaves, const ModelConfig& cfg,
                    const Mailbox::Readout& mailbox, std::span<const double> z_prev,
                    const DropoutSettings& dropout) {
  if (mailbox.slots != cfg.mailbox_slots || mailbox.dim != cfg.d)
    throw std::invalid_argument("encode: mailbox readout is " + std::to_string(mailbox.slots) +
                                "x" + std::to_string(mailbox.dim) + ", model expects " +
                                std::to_string(cfg.mailbox_slots) + "x" + std::to_string(cfg.d));
  if (z_prev.size() != cfg.d) throw std::invalid_argument("encode: z(t-) has wrong dimension");

  Tensor m = g.constant(mailbox.slots, mailbox.dim, mailbox.matrix);
  Tensor m_hat = positional_encode(g, m, leaves.pos);
  Tensor z = g.row(z_prev);

  const double scale_dim =
      cfg.scale_full_dim ? static_cast<double>(cfg.d) : static_cast<double>(cfg.head_dim());
  EncodeResult result;
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    Tensor weights;
    Tensor out = attend_head(g, z, m_hat, leaves.heads[h].wq, leaves.heads[h].wk,
                             leaves.heads[h].wv, scale_dim, &dropout, &weights);
    result.attention.push_back(weights.value_copy());
    head_outputs.push_back(out);
  }
  Tensor attn = g.matmul(g.concat_cols(head_outputs), leaves.w_out);
  Tensor normed =
      layer_norm_residual(g, attn, z, leaves.ln_gain, leaves.ln_bias, cfg.ln_eps);
  result.z = mlp_forward(g, normed, leaves.mlp_w1, leaves.mlp_b1, leaves.mlp_w2, leaves.mlp_b2,
                         dropout);
  return result;
}

Tensor decode_link(Graph& g, const ModelLeaves& leaves, const ModelConfig& cfg, Tensor z_i,
                   Tensor z_j, const DropoutSettings& dropout) {
  (void)cfg;
  const Tensor parts[] = {z_i, z_j};
  return mlp_forward(g, g.concat_cols(parts), leaves.link.w1, leaves.link.b1, leaves.link.w2,
                     leaves.link.b2, dropout);
}

Tensor decode_edge(Graph& g, const ModelLeaves& leaves, const ModelConfig& cfg, Tensor z_i,
                   std::span<const double> edge_feat, Tensor z_j,
                   const DropoutSettings& dropout) {
  if (edge_feat.size() != cfg.d_e)
    throw std::invalid_argument("decode_edge: edge feature length " +
                                std::to_string(edge_feat.size()) + " != d_e " +
                                std::to_string(cfg.d_e));
  const Tensor parts[] = {z_i, g.row(edge_feat), z_j};
  return mlp_forward(g, g.concat_cols(parts), leaves.edge.w1, leaves.edge.b1, leaves.edge.w2,
                     leaves.edge.b2, dropout);
}

Tensor decode_node(Graph& g, const ModelLeaves& leaves, const ModelConfig& cfg, Tensor z_i,
                   const DropoutSettings& dropout) {
  (void)cfg;
  return mlp_forward(g, z_i, leaves.node.w1, leaves.node.b1, leaves.node.w2, leaves.node.b2,
                     dropout);
}

std::vector<ExplainEntry> rank_attention(const EncodeResult& result,
                                         std::span<const double> mail_timestamps) {
  if (result.attention.empty()) throw std::logic_error("rank_attention: no attention recorded");
  const std::size_t m = result.attention[0].size();
  if (mail_timestamps.size() != m)
    throw std::invalid_argument("rank_attention: timestamp count mismatch");
  std::vector<ExplainEntry> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = {mail_timestamps[i], 0.0};
  for (const auto& head : result.attention)
    for (std::size_t i = 0; i < m; ++i) out[i].weight += head[i];
  const double inv = 1.0 / static_cast<double>(result.attention.size());
  for (auto& e : out) e.weight *= inv;
  std::stable_sort(out.begin(), out.end(),
                   [](const ExplainEntry& a, const ExplainEntry& b) { return a.weight > b.weight; });
  return out;
}

}  // namespace tge
