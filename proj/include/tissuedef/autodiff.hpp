#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "tissuedef/tensor.hpp"

namespace tissuedef {

/// Named trainable tensors with matching gradient accumulators.
///
/// Iteration order is the lexicographic order of names, so it is stable
/// across runs and independent of insertion order.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Tensor& value(const std::string& name) const;
  Tensor& value(const std::string& name);
  const Tensor& grad(const std::string& name) const;
  Tensor& grad(const std::string& name);

  void zero_grad();
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

 private:
  struct Entry {
    Tensor value;
    Tensor grad;
  };
  const Entry& entry(const std::string& name) const;
  Entry& entry(const std::string& name);

  std::map<std::string, Entry> entries_;
};

/// Handle to a node of a `Graph`.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

/// Define-then-run computation graph with reverse-mode differentiation.
///
/// Nodes are appended in topological order; `forward` binds named inputs,
/// evaluates every node and caches the values that `backward` consumes.
/// Binary element-wise ops broadcast an operand whose row or column count is 1.
/// Parameter values are read from the bound `ParamStore` at forward time and
/// their gradients accumulate inside the graph until `zero_grad`.
class Graph {
 public:
  enum class Op {
    Input,
    Constant,
    Param,
    Add,
    Sub,
    Mul,
    Div,
    MatMul,
    ConcatCols,
    SliceCols,
    Sin,
    Cos,
    Softplus,
    Sigmoid,
    Exp,
    Abs,
    Sum,
    RowNorm,
    VolumeRender,
  };

  explicit Graph(const ParamStore* params = nullptr) : params_(params) {}

  Var input(const std::string& name, bool requires_grad = false);
  Var constant(Tensor value);
  /// The parameter named `name` of the bound store; repeated calls share one node.
  Var param(const std::string& name);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var matmul(Var a, Var b);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  Var sin(Var a);
  Var cos(Var a);
  /// log(1 + exp(beta*x)) / beta.
  Var softplus(Var a, double beta = 1.0);
  /// 1 / (1 + exp(-beta*x)).
  Var sigmoid(Var a, double beta = 1.0);
  Var exp(Var a);
  Var abs(Var a);
  /// Sum of all entries, shape [1x1].
  Var sum(Var a);
  /// Euclidean norm of each row, shape [rows x 1].
  Var row_norm(Var a);
  Var scale(Var a, double factor);

  /// Alpha-composites SDF samples along rays.
  ///
  /// `sdf` [R*n x 1], `rgb` [R*n x 3], `depths` [R*n x 1] (ascending per ray),
  /// `sharpness` [1x1]. With Phi(x) = sigmoid(s*x) and eps = 1e-5:
  ///   alpha_i = clamp((Phi(f_i) - Phi(f_{i+1}) + eps) / (Phi(f_i) + eps), 0, 1), alpha_{n-1} = 0
  ///   w_i = alpha_i * prod_{j<i} (1 - alpha_j)
  /// Output [R x (4+n)]: composited rgb, expected depth sum w_i*t_i, then the weights.
  Var volume_render(Var sdf, Var rgb, Var depths, Var sharpness, std::size_t samples_per_ray);

  void set_output(const std::string& name, Var v);
  Var output(const std::string& name) const;

  /// Evaluates the graph. Every declared input must be bound.
  std::map<std::string, Tensor> forward(const std::map<std::string, Tensor>& inputs);
  const Tensor& value(Var v) const;

  /// Reverse pass from `output` seeded with `seed` (same shape as the output).
  /// Gradients of parameters and requires-grad inputs accumulate.
  void backward(Var output, const Tensor& seed);
  void backward(const std::string& output, const Tensor& seed);

  /// Accumulated gradient of an input or parameter node.
  const Tensor& grad(Var v) const;
  const Tensor& param_grad(const std::string& name) const;
  /// Adds every parameter gradient into the store's accumulators.
  void accumulate_into(ParamStore& store) const;
  void zero_grad();

  std::size_t node_count() const { return nodes_.size(); }
  bool has_forward() const { return forward_done_; }

 private:
  struct Node {
    Op op;
    std::vector<std::size_t> inputs;
    std::string name;
    bool needs_grad = false;
    double attr = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;
  };

  Var push(Node node);
  Var unary(Op op, Var a, double attr = 0.0);
  Var binary(Op op, Var a, Var b);
  void check(Var v) const;
  std::string describe(std::size_t id) const;
  void eval_node(std::size_t id);
  void backprop_node(std::size_t id, std::vector<Tensor>& adjoint);

  const ParamStore* params_;
  std::vector<Node> nodes_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::map<std::string, std::size_t> inputs_by_name_;
  std::map<std::string, std::size_t> params_by_name_;
  std::map<std::string, std::size_t> outputs_;
  bool forward_done_ = false;
};

const char* op_name(Graph::Op op);

/// Builds f on a fresh graph and returns the 3x3 Jacobian at `x` by one
/// reverse pass per output row. `x` must hold exactly 3 values; f must return [1x3].
using GraphFunction = std::function<Var(Graph&, Var)>;
Tensor jacobian(const GraphFunction& f, const Tensor& x, const ParamStore* params = nullptr);

/// Central-difference Jacobian of a vector map (test oracle).
using VectorFunction = std::function<Tensor(const Tensor&)>;
Tensor finite_diff_jacobian(const VectorFunction& f, const Tensor& x, double h);

}  // namespace tissuedef
