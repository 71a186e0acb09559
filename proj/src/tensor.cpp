#include "tge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace tge {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
  throw std::invalid_argument(std::string(op) + ": bad shape " +
                              std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                              " and " + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()));
}

}  // namespace

Parameter Parameter::zeros(std::string name, std::size_t rows, std::size_t cols) {
  Parameter p;
  p.name = std::move(name);
  p.rows = rows;
  p.cols = cols;
  p.value.assign(rows * cols, 0.0);
  return p;
}

Parameter Parameter::uniform(std::string name, std::size_t rows, std::size_t cols,
                             std::size_t fan_in, std::mt19937_64& rng) {
  Parameter p = zeros(std::move(name), rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& x : p.value) x = dist(rng);
  return p;
}

std::size_t Tensor::rows() const { return graph->node(id).rows; }
std::size_t Tensor::cols() const { return graph->node(id).cols; }
const std::vector<double>& Tensor::value() const { return graph->node(id).val; }

double Tensor::scalar() const {
  const auto& n = graph->node(id);
  if (n.rows != 1 || n.cols != 1)
    throw std::invalid_argument("scalar: tensor is " + std::to_string(n.rows) + "x" +
                                std::to_string(n.cols));
  return n.val[0];
}

Tensor Graph::make(std::size_t rows, std::size_t cols, std::vector<double> val,
                   std::function<void(Graph&, std::uint32_t)> back) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.val = std::move(val);
  n.grad.assign(rows * cols, 0.0);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Tensor{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor Graph::constant(std::size_t rows, std::size_t cols, std::vector<double> value) {
  if (value.size() != rows * cols)
    throw std::invalid_argument("constant: value size " + std::to_string(value.size()) +
                                " != " + std::to_string(rows * cols));
  return make(rows, cols, std::move(value));
}

Tensor Graph::row(std::span<const double> v) {
  return make(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

Tensor Graph::param(Parameter& p) {
  Parameter* pp = &p;
  return make(p.rows, p.cols, p.value, [pp](Graph& g, std::uint32_t self) {
    const auto& grad = g.node(self).grad;
    if (pp->grad.empty()) pp->grad.assign(pp->size(), 0.0);
    for (std::size_t i = 0; i < grad.size(); ++i) pp->grad[i] += grad[i];
  });
}

Tensor Graph::matmul(Tensor a, Tensor b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
  std::vector<double> out(r * c, 0.0);
  {
    const auto& av = node(a.id).val;
    const auto& bv = node(b.id).val;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = av[i * k + kk];
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += aik * bv[kk * c + j];
      }
  }
  const auto ai = a.id, bi = b.id;
  return make(r, c, std::move(out), [ai, bi, r, k, c](Graph& g, std::uint32_t self) {
    const auto& dout = g.node(self).grad;
    const auto& av = g.node(ai).val;
    const auto& bv = g.node(bi).val;
    auto& da = g.node(ai).grad;
    auto& db = g.node(bi).grad;
    // dA = dC * B^T
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = dout[i * c + j];
        if (d == 0.0) continue;
        for (std::size_t kk = 0; kk < k; ++kk) da[i * k + kk] += d * bv[kk * c + j];
      }
    // dB = A^T * dC
    for (std::size_t kk = 0; kk < k; ++kk)
      for (std::size_t i = 0; i < r; ++i) {
        const double aik = av[i * k + kk];
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < c; ++j) db[kk * c + j] += aik * dout[i * c + j];
      }
  });
}

Tensor Graph::transpose(Tensor a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const auto& av = node(a.id).val;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  const auto ai = a.id;
  return make(c, r, std::move(out), [ai, r, c](Graph& g, std::uint32_t self) {
    const auto& dout = g.node(self).grad;
    auto& da = g.node(ai).grad;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) da[i * c + j] += dout[j * r + i];
  });
}

Tensor Graph::add(Tensor a, Tensor b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a, b);
  std::vector<double> out(a.size());
  const auto& av = node(a.id).val;
  const auto& bv = node(b.id).val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const auto ai = a.id, bi = b.id;
  return make(a.rows(), a.cols(), std::move(out), [ai, bi](Graph& g, std::uint32_t self) {
    const auto& dout = g.node(self).grad;
    auto& da = g.node(ai).grad;
    auto& db = g.node(bi).grad;
    for (std::size_t i = 0; i < dout.size(); ++i) {
      da[i] += dout[i];
      db[i] += dout[i];
    }
  });
}

Tensor Graph::sub(Tensor a, Tensor b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a, b);
  std::vector<double> out(a.size());
  const auto& av = node(a.id).val;
  const auto& bv = node(b.id).val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const auto ai = a.id, bi = b.id;
  return make(a.rows(), a.cols(), std::move(out), [ai, bi](Graph& g, std::uint32_t self) {
    const auto& dout = g.node(self).grad;
    auto& da = g.node(ai).grad;
    auto& db = g.node(bi).grad;
    for (std::size_t i = 0; i < dout.size(); ++i) {
      da[i] += dout[i];
      db[i] -= dout[i];
    }
  });
}

Tensor Graph::mul(Tensor a, Tensor b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a, b);
  std::vector<double> out(a.size());
  const auto& av = node(a.id).val;
  const auto& bv = node(b.id).val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const auto ai = a.id, bi = b.id;
  return make(a.rows(), a.cols(), std::move(out), [ai, bi](Graph& g, std::uint32_t self) {
    const auto& dout = g.node(self).grad;
    const auto& av = g.node(ai).val;
    const auto& bv = g.node(bi).val;
    auto& da = g.node(ai).grad;
    auto& db = g.node(bi).grad;
    for (std::size_t i = 0; i < dout.size(); ++i) {
      da[i] += dout[i] * bv[i];
      db[i] += dout[i] * av[i];
    }
  });
}

Tensor Graph::div(Tensor a, Tensor b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("div", a, b);
  std::vector<double> out(a.size());
  const auto& av = node(a.id).val;
  const auto& bv = node(b.id).val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  const auto ai = a.id, bi = b.id;
  return make(a.rows(), a.cols(), std::move(out), [ai, bi](Graph& g, std::uint32_t self) {
    const auto& dout = g.node(self).grad;
    const auto& av = g.node(ai).val;
    const auto& bv = g.node(bi).val;
    auto& da = g.node(ai).grad;
    auto& db = g.node(bi).grad;
    for (std::size_t i = 0; i < dout.size(); ++i) {
      da[i] += dout[i] / bv[i];
      db[i] -= dout[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

Tensor Graph::scale(Tensor a, double c) {
  std::vector<double> out(a.size());
  const auto& av = node(a.id).val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  const auto ai = a.id;
  return make(a.rows(), a.cols(), std::move(out), [ai, c](Graph& g, std::uint32_t self) {
    const auto& dout = g.node(self).grad;
    auto& da = g.node(ai).grad;
    for (std::size_t i = 0; i < dout.size(); ++i) da[i] += dout[i] * c;
  });
}

Tensor Graph::add_scalar(Tensor a, double c) {
  std::vector<double> out(a.size());
  const auto& av = node(a.id).val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
  const auto ai = a.id;
  return make(a.rows(), a.cols(), std::move(out), [ai](Graph& g, std::uint32_t self) {
    const auto& dout = g.node(self).grad;
    auto& da = g.node(ai).grad;
    for (std::size_t i = 0; i < dout.size(); ++i) da[i] += dout[i];
  });
}

Tensor Graph::concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    if (t.rows() != r) shape_error("concat_cols", parts[0], t);
    total += t.cols();
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  ids.reserve(parts.size());
  widths.reserve(parts.size());
  for (const Tensor& t : parts) {
    const auto& v = node(t.id).val;
    const std::size_t c = t.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * total + off + j] = v[i * c + j];
    ids.push_back(t.id);
    widths.push_back(c);
    off += c;
  }
  return make(r, total, std::move(out),
              [ids, widths, r, total](Graph& g, std::uint32_t self) {
                const auto& dout = g.node(self).grad;
                std::size_t off = 0;
                for (std::size_t p = 0; p < ids.size(); ++p) {
                  auto& da = g.node(ids[p]).grad;
                  const std::size_t c = widths[p];
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                      da[i * c + j] += dout[i * total + off + j];
                  off += c;
                }
              });
}

Tensor Graph::row_softmax(Tensor a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (c == 0) shape_error("row_softmax", a);
  std::vector<double> out(r * c);
  const auto& av = node(a.id).val;
  for (std::size_t i = 0; i < r; ++i) {
    double mx = av[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, av[i * c + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(av[i * c + j] - mx);
      sum += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= sum;
  }
  const auto ai = a.id;
  return make(r, c, std::move(out), [ai, r, c](Graph& g, std::uint32_t self) {
    const auto& s = g.node(self).val;
    const auto& dout = g.node(self).grad;
    auto& da = g.node(ai).grad;
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += dout[i * c + j] * s[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        da[i * c + j] += s[i * c + j] * (dout[i * c + j] - dot);
    }
  });
}

Tensor Graph::row_mean(Tensor a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (c == 0) shape_error("row_mean", a);
  std::vector<double> out(r);
  const auto& av = node(a.id).val;
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += av[i * c + j];
    out[i] = s / static_cast<double>(c);
  }
  const auto ai = a.id;
  return make(r, 1, std::move(out), [ai, r, c](Graph& g, std::uint32_t self) {
    const auto& dout = g.node(self).grad;
    auto& da = g.node(ai).grad;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) da[i * c + j] += dout[i] / static_cast<double>(c);
  });
}

Tensor Graph::row_var(Tensor a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (c == 0) shape_error("row_var", a);
  std::vector<double> out(r);
  const auto& av = node(a.id).val;
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += av[i * c + j];
    mu /= static_cast<double>(c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = av[i * c + j] - mu;
      s += d * d;
    }
    out[i] = s / static_cast<double>(c);
  }
  const auto ai = a.id;
  return make(r, 1, std::move(out), [ai, r, c](Graph& g, std::uint32_t self) {
    const auto& dout = g.node(self).grad;
    const auto& av = g.node(ai).val;
    auto& da = g.node(ai).grad;
    for (std::size_t i = 0; i < r; ++i) {
      double mu = 0.0;
      for (std::size_t j = 0; j < c; ++j) mu += av[i * c + j];
      mu /= static_cast<double>(c);
      const double k = 2.0 * dout[i] / static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) da[i * c + j] += k * (av[i * c + j] - mu);
    }
  });
}

Tensor Graph::broadcast_cols(Tensor a, std::size_t cols) {
  if (a.cols() != 1) shape_error("broadcast_cols", a);
  const std::size_t r = a.rows();
  std::vector<double> out(r * cols);
  const auto& av = node(a.id).val;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = av[i];
  const auto ai = a.id;
  return make(r, cols, std::move(out), [ai, r, cols](Graph& g, std::uint32_t self) {
    const auto& dout = g.node(self).grad;
    auto& da = g.node(ai).grad;
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += dout[i * cols + j];
      da[i] += s;
    }
  });
}

Tensor Graph::sqrt(Tensor a) {
  std::vector<double> out(a.size());
  const auto& av = node(a.id).val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(av[i]);
  const auto ai = a.id;
  return make(a.rows(), a.cols(), std::move(out), [ai](Graph& g, std::uint32_t self) {
    const auto& sv = g.node(self).val;
    const auto& dout = g.node(self).grad;
    auto& da = g.node(ai).grad;
    for (std::size_t i = 0; i < dout.size(); ++i) da[i] += dout[i] * 0.5 / sv[i];
  });
}

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor Graph::sigmoid(Tensor a) {
  std::vector<double> out(a.size());
  const auto& av = node(a.id).val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_value(av[i]);
  const auto ai = a.id;
  return make(a.rows(), a.cols(), std::move(out), [ai](Graph& g, std::uint32_t self) {
    const auto& sv = g.node(self).val;
    const auto& dout = g.node(self).grad;
    auto& da = g.node(ai).grad;
    for (std::size_t i = 0; i < dout.size(); ++i) da[i] += dout[i] * sv[i] * (1.0 - sv[i]);
  });
}

Tensor Graph::relu(Tensor a) {
  std::vector<double> out(a.size());
  const auto& av = node(a.id).val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  const auto ai = a.id;
  return make(a.rows(), a.cols(), std::move(out), [ai](Graph& g, std::uint32_t self) {
    const auto& av = g.node(ai).val;
    const auto& dout = g.node(self).grad;
    auto& da = g.node(ai).grad;
    for (std::size_t i = 0; i < dout.size(); ++i)
      if (av[i] > 0.0) da[i] += dout[i];
  });
}

Tensor Graph::softplus(Tensor a) {
  std::vector<double> out(a.size());
  const auto& av = node(a.id).val;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::max(av[i], 0.0) + std::log1p(std::exp(-std::abs(av[i])));
  const auto ai = a.id;
  return make(a.rows(), a.cols(), std::move(out), [ai](Graph& g, std::uint32_t self) {
    const auto& av = g.node(ai).val;
    const auto& dout = g.node(self).grad;
    auto& da = g.node(ai).grad;
    for (std::size_t i = 0; i < dout.size(); ++i) da[i] += dout[i] * sigmoid_value(av[i]);
  });
}

Tensor Graph::dropout(Tensor a, double p, bool training, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
  if (!training || p == 0.0) {
    // identity in eval mode; still a node so callers need not branch
    std::vector<double> out = node(a.id).val;
    const auto ai = a.id;
    return make(a.rows(), a.cols(), std::move(out), [ai](Graph& g, std::uint32_t self) {
      const auto& dout = g.node(self).grad;
      auto& da = g.node(ai).grad;
      for (std::size_t i = 0; i < dout.size(); ++i) da[i] += dout[i];
    });
  }
  // inverted dropout: surviving entries scaled by 1/(1-p)
  const double keep_scale = 1.0 / (1.0 - p);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  auto factor = std::make_shared<std::vector<double>>(a.size());
  for (double& f : *factor) f = dist(rng) < p ? 0.0 : keep_scale;
  std::vector<double> out(a.size());
  const auto& av = node(a.id).val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * (*factor)[i];
  const auto ai = a.id;
  return make(a.rows(), a.cols(), std::move(out), [ai, factor](Graph& g, std::uint32_t self) {
    const auto& dout = g.node(self).grad;
    auto& da = g.node(ai).grad;
    for (std::size_t i = 0; i < dout.size(); ++i) da[i] += dout[i] * (*factor)[i];
  });
}

Tensor Graph::sum_all(Tensor a) {
  const auto& av = node(a.id).val;
  double s = 0.0;
  for (double x : av) s += x;
  const auto ai = a.id;
  return make(1, 1, {s}, [ai](Graph& g, std::uint32_t self) {
    const double d = g.node(self).grad[0];
    auto& da = g.node(ai).grad;
    for (double& x : da) x += d;
  });
}

Tensor Graph::mean_all(Tensor a) {
  if (a.size() == 0) shape_error("mean_all", a);
  const auto& av = node(a.id).val;
  double s = 0.0;
  for (double x : av) s += x;
  const double n = static_cast<double>(av.size());
  const auto ai = a.id;
  return make(1, 1, {s / n}, [ai, n](Graph& g, std::uint32_t self) {
    const double d = g.node(self).grad[0] / n;
    auto& da = g.node(ai).grad;
    for (double& x : da) x += d;
  });
}

void Graph::backward(Tensor loss) {
  if (loss.graph != this) throw std::invalid_argument("backward: tensor from another graph");
  Node& ln = node(loss.id);
  if (ln.rows != 1 || ln.cols != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                std::to_string(ln.rows) + "x" + std::to_string(ln.cols));
  for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  ln.grad[0] = 1.0;
  // creation order is a topological order of the forward DAG
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back(*this, i);
  }
}

void AdamState::step(std::span<Parameter* const> params) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (Parameter* p : params) {
    if (p->grad.size() != p->size())
      throw std::runtime_error("adam_step: parameter '" + p->name + "' has no gradient");
    Moments& mo = moments_[p];
    if (mo.m.empty()) {
      mo.m.assign(p->size(), 0.0);
      mo.v.assign(p->size(), 0.0);
    }
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = p->grad[i];
      mo.m[i] = beta1_ * mo.m[i] + (1.0 - beta1_) * g;
      mo.v[i] = beta2_ * mo.v[i] + (1.0 - beta2_) * g * g;
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    std::fill(p->grad.begin(), p->grad.end(), 0.0);
  }
}

}  // namespace tge
