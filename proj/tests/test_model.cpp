#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "test_util.hpp"
#include "tge/model.hpp"

using namespace tge;
using tge::test::check_gradients;

namespace {

ModelConfig small_config(std::size_t d = 4, std::size_t m = 3, std::size_t heads = 2,
                         std::size_t hidden = 6) {
  ModelConfig cfg;
  cfg.d = cfg.d_e = d;
  cfg.mailbox_slots = m;
  cfg.heads = heads;
  cfg.hidden = hidden;
  cfg.dropout = 0.0;
  return cfg;
}

Mailbox::Readout random_readout(const ModelConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> val(-1, 1);
  Mailbox::Readout r;
  r.slots = cfg.mailbox_slots;
  r.dim = cfg.d;
  r.matrix.resize(r.slots * r.dim);
  r.timestamps.resize(r.slots);
  for (double& x : r.matrix) x = val(rng);
  for (std::size_t i = 0; i < r.slots; ++i) r.timestamps[i] = static_cast<double>(i);
  return r;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> val(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = val(rng);
  return v;
}

// Plain-double reference encoder, written directly from the update rule:
// positions added to the time-sorted mails, per-head scaled dot-product
// attention with the node state as the query, concat + output projection,
// residual + layer norm, then the two-layer MLP.
std::vector<double> reference_encode(const ModelParams& p, const Mailbox::Readout& box,
                                     const std::vector<double>& z_prev) {
  const ModelConfig& cfg = p.cfg;
  const std::size_t m = cfg.mailbox_slots, d = cfg.d, dh = cfg.head_dim();
  std::vector<double> m_hat(box.matrix);
  for (std::size_t i = 0; i < m * d; ++i) m_hat[i] += p.pos_table.value[i];

  std::vector<double> concat(d, 0.0);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const auto& head = p.heads[h];
    std::vector<double> q(dh, 0.0);
    for (std::size_t j = 0; j < dh; ++j)
      for (std::size_t k = 0; k < d; ++k) q[j] += z_prev[k] * head.wq.value[k * dh + j];
    std::vector<double> logits(m, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      double kj;
      for (std::size_t j = 0; j < dh; ++j) {
        kj = 0.0;
        for (std::size_t k = 0; k < d; ++k) kj += m_hat[r * d + k] * head.wk.value[k * dh + j];
        logits[r] += q[j] * kj;
      }
      logits[r] /= std::sqrt(static_cast<double>(cfg.scale_full_dim ? d : dh));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    std::vector<double> w(m);
    for (std::size_t r = 0; r < m; ++r) {
      w[r] = std::exp(logits[r] - mx);
      denom += w[r];
    }
    for (double& x : w) x /= denom;
    for (std::size_t j = 0; j < dh; ++j) {
      double out = 0.0;
      for (std::size_t r = 0; r < m; ++r) {
        double vr = 0.0;
        for (std::size_t k = 0; k < d; ++k) vr += m_hat[r * d + k] * head.wv.value[k * dh + j];
        out += w[r] * vr;
      }
      concat[h * dh + j] = out;
    }
  }

  std::vector<double> attn(d, 0.0);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k < d; ++k) attn[j] += concat[k] * p.w_out.value[k * d + j];

  std::vector<double> a(d);
  for (std::size_t j = 0; j < d; ++j) a[j] = attn[j] + z_prev[j];
  double mu = 0.0;
  for (double x : a) mu += x;
  mu /= static_cast<double>(d);
  double var = 0.0;
  for (double x : a) var += (x - mu) * (x - mu);
  var /= static_cast<double>(d);
  std::vector<double> normed(d);
  for (std::size_t j = 0; j < d; ++j)
    normed[j] = p.ln_gain.value[j] * (a[j] - mu) / std::sqrt(var + cfg.ln_eps) +
                p.ln_bias.value[j];

  std::vector<double> hidden(cfg.hidden, 0.0);
  for (std::size_t j = 0; j < cfg.hidden; ++j) {
    for (std::size_t k = 0; k < d; ++k) hidden[j] += normed[k] * p.mlp_w1.value[k * cfg.hidden + j];
    hidden[j] += p.mlp_b1.value[j];
    hidden[j] = std::max(hidden[j], 0.0);
  }
  std::vector<double> z(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < cfg.hidden; ++k) z[j] += hidden[k] * p.mlp_w2.value[k * d + j];
    z[j] += p.mlp_b2.value[j];
  }
  return z;
}

}  // namespace

TEST_CASE("positional encoding adds the table to the mailbox matrix") {
  Graph g;
  Tensor zeros = g.constant(2, 3, std::vector<double>(6, 0.0));
  Tensor table = g.constant(2, 3, {1, 2, 3, 4, 5, 6});
  const std::vector<double> table_values = table.value_copy();
  CHECK(positional_encode(g, zeros, table).value_copy() == table_values);
  CHECK(positional_encode(g, table, zeros).value_copy() == table_values);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> val(-2, 2);
  std::vector<double> mv(6), pv(6);
  for (double& x : mv) x = val(rng);
  for (double& x : pv) x = val(rng);
  Tensor sum = positional_encode(g, g.constant(2, 3, mv), g.constant(2, 3, pv));
  for (std::size_t i = 0; i < 6; ++i) CHECK(sum.value()[i] == mv[i] + pv[i]);
}

TEST_CASE("attention over identical mails returns that mail's value projection") {
  std::mt19937_64 rng(2);
  const std::size_t d = 4, dh = 2, m = 3;
  std::vector<double> row = random_vec(d, rng);
  std::vector<double> matrix;
  for (std::size_t r = 0; r < m; ++r) matrix.insert(matrix.end(), row.begin(), row.end());

  Graph g;
  Tensor mbox = g.constant(m, d, matrix);
  Tensor z = g.row(random_vec(d, rng));
  Tensor wq = g.constant(d, dh, random_vec(d * dh, rng));
  Tensor wk = g.constant(d, dh, random_vec(d * dh, rng));
  Tensor wv = g.constant(d, dh, random_vec(d * dh, rng));
  Tensor out = attend_head(g, z, mbox, wq, wk, wv, static_cast<double>(dh));

  Tensor expected = g.matmul(g.row(row), wv);
  for (std::size_t j = 0; j < dh; ++j)
    CHECK(out.value()[j] == doctest::Approx(expected.value()[j]).epsilon(1e-12));
}

TEST_CASE("a zero query attends uniformly, giving the value column mean") {
  std::mt19937_64 rng(3);
  const std::size_t d = 4, dh = 2, m = 5;
  Graph g;
  Tensor mbox = g.constant(m, d, random_vec(m * d, rng));
  Tensor z = g.row(random_vec(d, rng));
  Tensor wq = g.constant(d, dh, std::vector<double>(d * dh, 0.0));
  Tensor wk = g.constant(d, dh, random_vec(d * dh, rng));
  Tensor wv = g.constant(d, dh, random_vec(d * dh, rng));
  Tensor weights;
  Tensor out = attend_head(g, z, mbox, wq, wk, wv, static_cast<double>(dh), nullptr, &weights);
  for (double w : weights.value()) CHECK(w == doctest::Approx(1.0 / m).epsilon(1e-12));
  Tensor v = g.matmul(mbox, wv);
  for (std::size_t j = 0; j < dh; ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < m; ++r) mean += v.value()[r * dh + j];
    mean /= static_cast<double>(m);
    CHECK(out.value()[j] == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("a two-slot head matches the closed-form softmax") {
  std::mt19937_64 rng(4);
  const std::size_t d = 3, dh = 3, m = 2;
  std::vector<double> mv = random_vec(m * d, rng), zv = random_vec(d, rng);
  std::vector<double> wqv = random_vec(d * dh, rng), wkv = random_vec(d * dh, rng),
                      wvv = random_vec(d * dh, rng);
  Graph g;
  Tensor out = attend_head(g, g.row(zv), g.constant(m, d, mv), g.constant(d, dh, wqv),
                           g.constant(d, dh, wkv), g.constant(d, dh, wvv),
                           static_cast<double>(dh));

  // hand-rolled two-term softmax
  auto project = [&](const std::vector<double>& w, const double* x) {
    std::vector<double> out_row(dh, 0.0);
    for (std::size_t j = 0; j < dh; ++j)
      for (std::size_t k = 0; k < d; ++k) out_row[j] += x[k] * w[k * dh + j];
    return out_row;
  };
  const auto q = project(wqv, zv.data());
  const auto k0 = project(wkv, mv.data());
  const auto k1 = project(wkv, mv.data() + d);
  double l0 = 0, l1 = 0;
  for (std::size_t j = 0; j < dh; ++j) {
    l0 += q[j] * k0[j];
    l1 += q[j] * k1[j];
  }
  l0 /= std::sqrt(static_cast<double>(dh));
  l1 /= std::sqrt(static_cast<double>(dh));
  const double w0 = 1.0 / (1.0 + std::exp(l1 - l0));
  const double w1 = 1.0 - w0;
  const auto v0 = project(wvv, mv.data());
  const auto v1 = project(wvv, mv.data() + d);
  for (std::size_t j = 0; j < dh; ++j)
    CHECK(out.value()[j] == doctest::Approx(w0 * v0[j] + w1 * v1[j]).epsilon(1e-12));
}

TEST_CASE("layer norm zeroes a constant vector and keeps a standardized one") {
  Graph g;
  Tensor gain = g.constant(1, 4, {1, 1, 1, 1});
  Tensor bias = g.constant(1, 4, {0, 0, 0, 0});
  Tensor zero = g.constant(1, 4, {0, 0, 0, 0});

  Tensor constant_in = g.constant(1, 4, {3, 3, 3, 3});
  Tensor out = layer_norm_residual(g, constant_in, zero, gain, bias, 1e-6);
  for (double x : out.value()) CHECK(x == doctest::Approx(0.0).epsilon(1e-9));

  Tensor standardized = g.constant(1, 2, {1, -1});
  Tensor gain2 = g.constant(1, 2, {1, 1});
  Tensor bias2 = g.constant(1, 2, {0, 0});
  Tensor zero2 = g.constant(1, 2, {0, 0});
  Tensor out2 = layer_norm_residual(g, standardized, zero2, gain2, bias2, 1e-6);
  CHECK(out2.value()[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(out2.value()[1] == doctest::Approx(-1.0).epsilon(1e-5));
}

TEST_CASE("pre-affine layer norm standardizes random vectors") {
  std::mt19937_64 rng(5);
  const std::size_t d = 16;
  for (int trial = 0; trial < 100; ++trial) {
    Graph g;
    Tensor gain = g.constant(1, d, std::vector<double>(d, 1.0));
    Tensor bias = g.constant(1, d, std::vector<double>(d, 0.0));
    Tensor zero = g.constant(1, d, std::vector<double>(d, 0.0));
    Tensor out = layer_norm_residual(g, g.row(random_vec(d, rng)), zero, gain, bias, 1e-6);
    double mean = 0.0, var = 0.0;
    for (double x : out.value()) mean += x;
    mean /= d;
    for (double x : out.value()) var += (x - mean) * (x - mean);
    var /= d;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("the encoder matches the plain-double reference") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    ModelConfig cfg = small_config(6, 4, trial % 2 ? 3 : 2, 8);
    std::mt19937_64 init(100 + static_cast<std::uint64_t>(trial));
    ModelParams params = ModelParams::init(cfg, init);
    // positions start at zero; give them值 so the reference sees them
    for (double& x : params.pos_table.value) x = std::uniform_real_distribution<double>(-1, 1)(init);

    Mailbox::Readout box = random_readout(cfg, rng);
    std::vector<double> z_prev = random_vec(cfg.d, rng);

    Graph g;
    ModelLeaves leaves = ModelLeaves::bind(g, params);
    DropoutSettings off{false, 0.0, nullptr};
    EncodeResult res = encode(g, leaves, cfg, box, z_prev, off);
    const std::vector<double> want = reference_encode(params, box, z_prev);
    REQUIRE(res.z.value().size() == want.size());
    for (std::size_t j = 0; j < want.size(); ++j)
      CHECK(res.z.value()[j] == doctest::Approx(want[j]).epsilon(1e-10));
  }
}

TEST_CASE("encoding is deterministic with dropout off") {
  ModelConfig cfg = small_config();
  std::mt19937_64 init(7);
  ModelParams params = ModelParams::init(cfg, init);
  std::mt19937_64 rng(8);
  Mailbox::Readout box = random_readout(cfg, rng);
  std::vector<double> z_prev = random_vec(cfg.d, rng);
  DropoutSettings off{false, 0.0, nullptr};

  Graph g1, g2;
  ModelLeaves l1 = ModelLeaves::bind(g1, params);
  ModelLeaves l2 = ModelLeaves::bind(g2, params);
  CHECK(encode(g1, l1, cfg, box, z_prev, off).z.value() ==
        encode(g2, l2, cfg, box, z_prev, off).z.value());
}

TEST_CASE("cold nodes all encode to the same embedding") {
  ModelConfig cfg = small_config();
  std::mt19937_64 init(9);
  ModelParams params = ModelParams::init(cfg, init);
  Mailbox cold(cfg.mailbox_slots, cfg.d);
  const std::vector<double> zero_state(cfg.d, 0.0);
  DropoutSettings off{false, 0.0, nullptr};

  Graph g;
  ModelLeaves leaves = ModelLeaves::bind(g, params);
  auto a = encode(g, leaves, cfg, cold.read(), zero_state, off);
  auto b = encode(g, leaves, cfg, cold.read(), zero_state, off);
  CHECK(a.z.value() == b.z.value());
}

TEST_CASE("attention weights form a distribution over the slots") {
  ModelConfig cfg = small_config(4, 5, 2, 6);
  std::mt19937_64 init(10);
  ModelParams params = ModelParams::init(cfg, init);
  std::mt19937_64 rng(12);
  Graph g;
  ModelLeaves leaves = ModelLeaves::bind(g, params);
  DropoutSettings off{false, 0.0, nullptr};
  EncodeResult res = encode(g, leaves, cfg, random_readout(cfg, rng), random_vec(cfg.d, rng), off);
  REQUIRE(res.attention.size() == cfg.heads);
  for (const auto& head : res.attention) {
    REQUIRE(head.size() == cfg.mailbox_slots);
    double sum = 0.0;
    for (double w : head) {
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("encode validates its input shapes") {
  ModelConfig cfg = small_config();
  std::mt19937_64 init(13);
  ModelParams params = ModelParams::init(cfg, init);
  Graph g;
  ModelLeaves leaves = ModelLeaves::bind(g, params);
  DropoutSettings off{false, 0.0, nullptr};
  Mailbox wrong(cfg.mailbox_slots + 1, cfg.d);
  const std::vector<double> state(cfg.d, 0.0);
  CHECK_THROWS_AS(encode(g, leaves, cfg, wrong.read(), state, off), std::invalid_argument);
}

TEST_CASE("decoders with zeroed weights emit their bias") {
  ModelConfig cfg = small_config();
  std::mt19937_64 init(14);
  ModelParams params = ModelParams::init(cfg, init);
  for (Parameter* p : params.all())
    std::fill(p->value.begin(), p->value.end(), 0.0);
  params.link.b2.value[0] = 0.75;
  params.edge.b2.value[0] = -0.25;
  params.node.b2.value[0] = 0.5;

  Graph g;
  ModelLeaves leaves = ModelLeaves::bind(g, params);
  DropoutSettings off{false, 0.0, nullptr};
  std::mt19937_64 rng(15);
  Tensor z_i = g.row(random_vec(cfg.d, rng));
  Tensor z_j = g.row(random_vec(cfg.d, rng));
  CHECK(decode_link(g, leaves, cfg, z_i, z_j, off).scalar() == 0.75);
  CHECK(decode_edge(g, leaves, cfg, z_i, random_vec(cfg.d_e, rng), z_j, off).scalar() ==
        -0.25);
  CHECK(decode_node(g, leaves, cfg, z_i, off).scalar() == 0.5);
}

TEST_CASE("link decoding is ordered: swapping the pair changes the logit") {
  ModelConfig cfg = small_config();
  std::mt19937_64 init(16);
  ModelParams params = ModelParams::init(cfg, init);
  Graph g;
  ModelLeaves leaves = ModelLeaves::bind(g, params);
  DropoutSettings off{false, 0.0, nullptr};
  std::mt19937_64 rng(17);
  Tensor z_i = g.row(random_vec(cfg.d, rng));
  Tensor z_j = g.row(random_vec(cfg.d, rng));
  CHECK(decode_link(g, leaves, cfg, z_i, z_j, off).scalar() !=
        decode_link(g, leaves, cfg, z_j, z_i, off).scalar());
}

TEST_CASE("the edge decoder enforces its input width") {
  ModelConfig cfg = small_config();
  std::mt19937_64 init(18);
  ModelParams params = ModelParams::init(cfg, init);
  Graph g;
  ModelLeaves leaves = ModelLeaves::bind(g, params);
  DropoutSettings off{false, 0.0, nullptr};
  std::mt19937_64 rng(19);
  Tensor z_i = g.row(random_vec(cfg.d, rng));
  Tensor z_j = g.row(random_vec(cfg.d, rng));
  CHECK_THROWS_AS(
      decode_edge(g, leaves, cfg, z_i, random_vec(cfg.d_e + 1, rng), z_j, off),
      std::invalid_argument);
}

TEST_CASE("one identity-projected head reduces to attend_head") {
  ModelConfig cfg = small_config(4, 3, 1, 6);
  std::mt19937_64 init(20);
  ModelParams params = ModelParams::init(cfg, init);
  // identity output projection isolates the single head
  std::fill(params.w_out.value.begin(), params.w_out.value.end(), 0.0);
  for (std::size_t i = 0; i < cfg.d; ++i) params.w_out.value[i * cfg.d + i] = 1.0;

  std::mt19937_64 rng(21);
  Mailbox::Readout box = random_readout(cfg, rng);
  std::vector<double> z_prev = random_vec(cfg.d, rng);

  Graph g;
  ModelLeaves leaves = ModelLeaves::bind(g, params);
  Tensor m_hat = positional_encode(g, g.constant(box.slots, box.dim, box.matrix), leaves.pos);
  Tensor single = attend_head(g, g.row(z_prev), m_hat, leaves.heads[0].wq, leaves.heads[0].wk,
                              leaves.heads[0].wv, static_cast<double>(cfg.head_dim()));
  const Tensor parts[] = {single};
  Tensor multi = g.matmul(g.concat_cols(parts), leaves.w_out);
  for (std::size_t j = 0; j < cfg.d; ++j)
    CHECK(multi.value()[j] == doctest::Approx(single.value()[j]).epsilon(1e-12));
}

TEST_CASE("two heads with identical weights produce equal halves") {
  ModelConfig cfg = small_config(4, 3, 2, 6);
  std::mt19937_64 init(22);
  ModelParams params = ModelParams::init(cfg, init);
  params.heads[1].wq.value = params.heads[0].wq.value;
  params.heads[1].wk.value = params.heads[0].wk.value;
  params.heads[1].wv.value = params.heads[0].wv.value;

  std::mt19937_64 rng(23);
  Mailbox::Readout box = random_readout(cfg, rng);
  std::vector<double> z_prev = random_vec(cfg.d, rng);
  Graph g;
  ModelLeaves leaves = ModelLeaves::bind(g, params);
  Tensor m_hat = positional_encode(g, g.constant(box.slots, box.dim, box.matrix), leaves.pos);
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < 2; ++h)
    heads.push_back(attend_head(g, g.row(z_prev), m_hat, leaves.heads[h].wq,
                                leaves.heads[h].wk, leaves.heads[h].wv,
                                static_cast<double>(cfg.head_dim())));
  CHECK(heads[0].value() == heads[1].value());
}

TEST_CASE("rank_attention averages heads, sorts by weight and sums to one") {
  EncodeResult res;
  res.attention = {{0.1, 0.6, 0.3}, {0.3, 0.4, 0.3}};
  const std::vector<double> ts = {10.0, 20.0, 30.0};
  auto ranked = rank_attention(res, ts);
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0].mail_timestamp == 20.0);
  CHECK(ranked[0].weight == doctest::Approx(0.5));
  CHECK(ranked[1].mail_timestamp == 30.0);
  CHECK(ranked[2].mail_timestamp == 10.0);
  double sum = 0.0;
  for (const auto& e : ranked) sum += e.weight;
  CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("full encoder and decoder gradients match finite differences") {
  ModelConfig cfg = small_config(4, 3, 2, 5);
  std::mt19937_64 init(24);
  ModelParams params = ModelParams::init(cfg, init);
  std::mt19937_64 rng(25);
  Mailbox::Readout box_i = random_readout(cfg, rng);
  Mailbox::Readout box_j = random_readout(cfg, rng);
  std::vector<double> zi_prev = random_vec(cfg.d, rng);
  std::vector<double> zj_prev = random_vec(cfg.d, rng);

  auto all = params.all();
  auto loss = [&](bool back) {
    Graph g;
    ModelLeaves leaves = ModelLeaves::bind(g, params);
    DropoutSettings off{false, 0.0, nullptr};
    Tensor z_i = encode(g, leaves, cfg, box_i, zi_prev, off).z;
    Tensor z_j = encode(g, leaves, cfg, box_j, zj_prev, off).z;
    Tensor logit = decode_link(g, leaves, cfg, z_i, z_j, off);
    Tensor l = g.softplus(g.scale(logit, -1.0));
    if (back) g.backward(l);
    return l.scalar();
  };
  auto result = check_gradients(all, loss);
  INFO(result.worst);
  CHECK(result.max_mismatch < 1e-4);
}

TEST_CASE("checkpoints round-trip every tensor bit for bit") {
  ModelConfig cfg = small_config(6, 4, 3, 7);
  std::mt19937_64 init(26);
  ModelParams params = ModelParams::init(cfg, init);
  std::stringstream buffer(std::ios::in | std::ios::out | std::ios::binary);
  save_checkpoint(params, buffer);
  ModelParams loaded = load_checkpoint(buffer);

  auto a = params.all();
  auto b = loaded.all();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->value == b[i]->value);
  }
  CHECK(loaded.cfg.d == cfg.d);
  CHECK(loaded.cfg.heads == cfg.heads);
}

TEST_CASE("checkpoints keep the fixed edge projection when d differs from d_e") {
  ModelConfig cfg = small_config(4, 3, 2, 5);
  cfg.d_e = 9;
  std::mt19937_64 init(27);
  ModelParams params = ModelParams::init(cfg, init);
  REQUIRE(params.edge_proj.size() == cfg.d_e * cfg.d);
  std::stringstream buffer(std::ios::in | std::ios::out | std::ios::binary);
  save_checkpoint(params, buffer);
  ModelParams loaded = load_checkpoint(buffer);
  CHECK(loaded.edge_proj == params.edge_proj);

  // projection maps d_e-length features to d-length mails
  std::mt19937_64 rng(28);
  const std::vector<double> feat = random_vec(cfg.d_e, rng);
  CHECK(params.project_edge(feat).size() == cfg.d);
}

TEST_CASE("a corrupt checkpoint is rejected") {
  std::stringstream buffer(std::ios::in | std::ios::out | std::ios::binary);
  buffer.write("NOTACKPT", 8);
  CHECK_THROWS_AS(load_checkpoint(buffer), std::runtime_error);
}

TEST_CASE("the node state store tracks updates and rejects unknown nodes") {
  NodeStateStore states(3, 2);
  CHECK(states.state(1)[0] == 0.0);
  CHECK(states.state(1)[1] == 0.0);
  const std::vector<double> z = {1.5, -2.5};
  states.update(1, z, 9.0);
  CHECK(std::vector<double>(states.state(1).begin(), states.state(1).end()) == z);
  CHECK(states.last_update(1) == 9.0);
  CHECK_THROWS_AS(states.state(5), std::out_of_range);
  CHECK_THROWS_AS(states.update(-1, z, 0.0), std::out_of_range);
  states.reset();
  CHECK(states.state(1)[0] == 0.0);
  CHECK(states.last_update(1) == 0.0);
}
