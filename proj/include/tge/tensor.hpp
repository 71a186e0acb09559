#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace tge {

class Graph;

/// A persistent trainable weight. Lives outside any computation graph;
/// Graph::param() binds it into a graph as a differentiable leaf, and
/// backward() accumulates into `grad`.
struct Parameter {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass reaches it

  std::size_t size() const { return rows * cols; }

  static Parameter zeros(std::string name, std::size_t rows, std::size_t cols);
  // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  static Parameter uniform(std::string name, std::size_t rows, std::size_t cols,
                           std::size_t fan_in, std::mt19937_64& rng);
};

/// Handle into a Graph node. Cheap to copy; valid as long as the graph lives.
struct Tensor {
  Graph* graph = nullptr;
  std::uint32_t id = 0;

  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }
  // Stable for the graph's lifetime.
  const std::vector<double>& value() const;
  std::vector<double> value_copy() const { return value(); }
  double scalar() const;  // requires 1x1
};

/// Records a forward computation over row-major f64 matrices and replays it
/// in reverse for gradients. One graph per batch; parameters outlive it.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor constant(std::size_t rows, std::size_t cols, std::vector<double> value);
  Tensor row(std::span<const double> v);  // 1 x n constant
  Tensor param(Parameter& p);

  Tensor matmul(Tensor a, Tensor b);
  Tensor transpose(Tensor a);
  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);  // elementwise
  Tensor div(Tensor a, Tensor b);  // elementwise
  Tensor scale(Tensor a, double c);
  Tensor add_scalar(Tensor a, double c);
  Tensor concat_cols(std::span<const Tensor> parts);  // along the last axis
  Tensor row_softmax(Tensor a);
  Tensor row_mean(Tensor a);  // r x c -> r x 1
  Tensor row_var(Tensor a);   // population variance, r x c -> r x 1
  Tensor broadcast_cols(Tensor a, std::size_t cols);  // r x 1 -> r x c
  Tensor sqrt(Tensor a);
  Tensor sigmoid(Tensor a);
  Tensor relu(Tensor a);
  Tensor softplus(Tensor a);  // log(1 + e^x), numerically stable
  Tensor dropout(Tensor a, double p, bool training, std::mt19937_64& rng);
  Tensor sum_all(Tensor a);   // -> 1x1
  Tensor mean_all(Tensor a);  // -> 1x1

  /// Accumulates d(loss)/d(param) into every reachable Parameter::grad.
  /// Repeated calls without zeroing the parameter grads accumulate.
  void backward(Tensor loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend struct Tensor;

  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> val;
    std::vector<double> grad;
    std::function<void(Graph&, std::uint32_t)> back;  // null for constants
  };

  Tensor make(std::size_t rows, std::size_t cols, std::vector<double> val,
              std::function<void(Graph&, std::uint32_t)> back = nullptr);
  Node& node(std::uint32_t id) { return nodes_[id]; }
  const Node& node(std::uint32_t id) const { return nodes_[id]; }

  std::deque<Node> nodes_;
};

double sigmoid_value(double x);

/// Adam with bias correction. Moments are kept per Parameter and survive
/// across graphs; step() zeroes the gradients it consumed.
class AdamState {
 public:
  explicit AdamState(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                     double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Parameter* const> params);
  long step_count() const { return step_; }
  double learning_rate() const { return lr_; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::unordered_map<const Parameter*, Moments> moments_;
};

}  // namespace tge
