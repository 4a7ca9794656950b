#include "tissuedef/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "tissuedef/error.hpp"

namespace tissuedef {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MatMap as_matrix(Tensor& t) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}, 0.0); }

Tensor zeros_like(const Tensor& t) { return Tensor({t.rows(), t.cols()}, 0.0); }

double stable_sigmoid(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

constexpr double kRenderEps = 1e-5;

}  // namespace

// ---------------------------------------------------------------------------
// ParamStore

void ParamStore::add(const std::string& name, Tensor value) {
  if (entries_.count(name)) throw ValueError("duplicate parameter '" + name + "'");
  if (value.rank() == 1) value = value.reshaped({1, value.size()});
  Tensor grad(value.shape(), 0.0);
  entries_.emplace(name, Entry{std::move(value), std::move(grad)});
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValueError("unknown parameter '" + name + "'");
  return it->second;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValueError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::value(const std::string& name) const { return entry(name).value; }
Tensor& ParamStore::value(const std::string& name) { return entry(name).value; }
const Tensor& ParamStore::grad(const std::string& name) const { return entry(name).grad; }
Tensor& ParamStore::grad(const std::string& name) { return entry(name).grad; }

void ParamStore::zero_grad() {
  for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

// ---------------------------------------------------------------------------
// Graph construction

const char* op_name(Graph::Op op) {
  switch (op) {
    case Graph::Op::Input: return "input";
    case Graph::Op::Constant: return "constant";
    case Graph::Op::Param: return "param";
    case Graph::Op::Add: return "add";
    case Graph::Op::Sub: return "sub";
    case Graph::Op::Mul: return "mul";
    case Graph::Op::Div: return "div";
    case Graph::Op::MatMul: return "matmul";
    case Graph::Op::ConcatCols: return "concat";
    case Graph::Op::SliceCols: return "slice";
    case Graph::Op::Sin: return "sin";
    case Graph::Op::Cos: return "cos";
    case Graph::Op::Softplus: return "softplus";
    case Graph::Op::Sigmoid: return "sigmoid";
    case Graph::Op::Exp: return "exp";
    case Graph::Op::Abs: return "abs";
    case Graph::Op::Sum: return "sum";
    case Graph::Op::RowNorm: return "row_norm";
    case Graph::Op::VolumeRender: return "volume_render";
  }
  return "?";
}

void Graph::check(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw ValueError("variable does not belong to this graph");
}

std::string Graph::describe(std::size_t id) const {
  const Node& n = nodes_[id];
  std::string s = std::string(op_name(n.op)) + " node #" + std::to_string(id);
  if (!n.name.empty()) s += " '" + n.name + "'";
  return s;
}

Var Graph::push(Node node) {
  for (std::size_t in : node.inputs) node.needs_grad = node.needs_grad || nodes_[in].needs_grad;
  nodes_.push_back(std::move(node));
  values_.emplace_back();
  grads_.emplace_back();
  forward_done_ = false;
  return Var{nodes_.size() - 1};
}

Var Graph::input(const std::string& name, bool requires_grad) {
  if (inputs_by_name_.count(name)) throw ValueError("duplicate graph input '" + name + "'");
  Node n{Op::Input, {}, name, requires_grad};
  Var v = push(std::move(n));
  inputs_by_name_[name] = v.id;
  return v;
}

Var Graph::constant(Tensor value) {
  if (value.rank() == 1 || value.rank() == 0) value = value.reshaped({1, value.size()});
  if (value.rank() != 2) throw ShapeError("graph constants must be rank 1 or 2, got " + shape_string(value.shape()));
  Var v = push(Node{Op::Constant, {}, {}, false});
  values_[v.id] = std::move(value);
  return v;
}

Var Graph::param(const std::string& name) {
  if (auto it = params_by_name_.find(name); it != params_by_name_.end()) return Var{it->second};
  if (params_ == nullptr || !params_->contains(name)) {
    throw ValueError("graph has no bound parameter named '" + name + "'");
  }
  Var v = push(Node{Op::Param, {}, name, true});
  params_by_name_[name] = v.id;
  return v;
}

Var Graph::unary(Op op, Var a, double attr) {
  check(a);
  Node n{op, {a.id}, {}, false};
  n.attr = attr;
  return push(std::move(n));
}

Var Graph::binary(Op op, Var a, Var b) {
  check(a);
  check(b);
  return push(Node{op, {a.id, b.id}, {}, false});
}

Var Graph::add(Var a, Var b) { return binary(Op::Add, a, b); }
Var Graph::sub(Var a, Var b) { return binary(Op::Sub, a, b); }
Var Graph::mul(Var a, Var b) { return binary(Op::Mul, a, b); }
Var Graph::div(Var a, Var b) { return binary(Op::Div, a, b); }
Var Graph::matmul(Var a, Var b) { return binary(Op::MatMul, a, b); }
Var Graph::sin(Var a) { return unary(Op::Sin, a); }
Var Graph::cos(Var a) { return unary(Op::Cos, a); }
Var Graph::softplus(Var a, double beta) { return unary(Op::Softplus, a, beta); }
Var Graph::sigmoid(Var a, double beta) { return unary(Op::Sigmoid, a, beta); }
Var Graph::exp(Var a) { return unary(Op::Exp, a); }
Var Graph::abs(Var a) { return unary(Op::Abs, a); }
Var Graph::sum(Var a) { return unary(Op::Sum, a); }
Var Graph::row_norm(Var a) { return unary(Op::RowNorm, a); }
Var Graph::scale(Var a, double factor) { return mul(a, constant(Tensor::scalar(factor))); }

Var Graph::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValueError("concat of zero tensors");
  Node n{Op::ConcatCols, {}, {}, false};
  for (Var p : parts) {
    check(p);
    n.inputs.push_back(p.id);
  }
  return push(std::move(n));
}

Var Graph::slice_cols(Var a, std::size_t begin, std::size_t end) {
  check(a);
  if (end <= begin) throw ValueError("empty column slice");
  Node n{Op::SliceCols, {a.id}, {}, false};
  n.begin = begin;
  n.end = end;
  return push(std::move(n));
}

Var Graph::volume_render(Var sdf, Var rgb, Var depths, Var sharpness, std::size_t samples_per_ray) {
  for (Var v : {sdf, rgb, depths, sharpness}) check(v);
  if (samples_per_ray < 2) throw ValueError("volume_render needs at least 2 samples per ray");
  Node n{Op::VolumeRender, {sdf.id, rgb.id, depths.id, sharpness.id}, {}, false};
  n.begin = samples_per_ray;
  return push(std::move(n));
}

void Graph::set_output(const std::string& name, Var v) {
  check(v);
  outputs_[name] = v.id;
}

Var Graph::output(const std::string& name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) throw ValueError("graph has no output named '" + name + "'");
  return Var{it->second};
}

// ---------------------------------------------------------------------------
// Forward

std::map<std::string, Tensor> Graph::forward(const std::map<std::string, Tensor>& inputs) {
  for (const auto& [name, id] : inputs_by_name_) {
    auto it = inputs.find(name);
    if (it == inputs.end()) throw ValueError("missing graph input '" + name + "'");
    Tensor t = it->second;
    if (t.rank() == 1) t = t.reshaped({1, t.size()});
    if (t.rank() != 2) throw ShapeError(describe(id) + ": inputs must be rank 1 or 2, got " + shape_string(t.shape()));
    values_[id] = std::move(t);
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) eval_node(id);
  forward_done_ = true;
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : outputs_) out[name] = values_[id];
  return out;
}

const Tensor& Graph::value(Var v) const {
  check(v);
  if (!forward_done_ && nodes_[v.id].op != Op::Constant) throw ValueError("value requested before forward");
  return values_[v.id];
}

namespace {

struct Broadcast {
  std::size_t rows, cols;
};

bool broadcast_dim(std::size_t a, std::size_t b, std::size_t& out) {
  if (a == b) {
    out = a;
  } else if (a == 1) {
    out = b;
  } else if (b == 1) {
    out = a;
  } else {
    return false;
  }
  return true;
}

template <typename F>
void for_each_broadcast(const Tensor& a, const Tensor& b, Tensor& out, F f) {
  const std::size_t rows = out.rows(), cols = out.cols();
  const auto av = a.data();
  const auto bv = b.data();
  auto ov = out.data();
  if (a.rows() == rows && a.cols() == cols && b.rows() == rows && b.cols() == cols) {
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = f(av[i], bv[i]);
    return;
  }
  const bool ar = a.rows() == 1, ac = a.cols() == 1, br = b.rows() == 1, bc = b.cols() == 1;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t arow = ar ? 0 : r * a.cols();
    const std::size_t brow = br ? 0 : r * b.cols();
    for (std::size_t c = 0; c < cols; ++c) {
      ov[r * cols + c] = f(av[arow + (ac ? 0 : c)], bv[brow + (bc ? 0 : c)]);
    }
  }
}

// Accumulates g * da(a, b) into ga and g * db(a, b) into gb, reducing over broadcast dimensions.
template <typename FA, typename FB>
void backprop_broadcast(const Tensor& a, const Tensor& b, const Tensor& g, Tensor* ga, Tensor* gb, FA da, FB db) {
  const std::size_t rows = g.rows(), cols = g.cols();
  const auto av = a.data();
  const auto bv = b.data();
  const auto gv = g.data();
  const bool ar = a.rows() == 1, ac = a.cols() == 1, br = b.rows() == 1, bc = b.cols() == 1;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t arow = ar ? 0 : r * a.cols();
    const std::size_t brow = br ? 0 : r * b.cols();
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t ia = arow + (ac ? 0 : c);
      const std::size_t ib = brow + (bc ? 0 : c);
      const double gg = gv[r * cols + c];
      if (ga) ga->data()[ia] += gg * da(av[ia], bv[ib]);
      if (gb) gb->data()[ib] += gg * db(av[ia], bv[ib]);
    }
  }
}

}  // namespace

void Graph::eval_node(std::size_t id) {
  const Node& n = nodes_[id];
  Tensor& out = values_[id];
  auto in = [&](std::size_t k) -> const Tensor& { return values_[n.inputs[k]]; };

  switch (n.op) {
    case Op::Input:
    case Op::Constant:
      return;
    case Op::Param: {
      const Tensor& p = params_->value(n.name);
      out = p.rank() == 2 ? p : p.reshaped({p.rows(), p.cols()});
      return;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      std::size_t rows = 0, cols = 0;
      if (!broadcast_dim(a.rows(), b.rows(), rows) || !broadcast_dim(a.cols(), b.cols(), cols)) {
        throw ShapeError(describe(id) + ": operands " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                         " are not broadcast-compatible");
      }
      out = zeros(rows, cols);
      switch (n.op) {
        case Op::Add: for_each_broadcast(a, b, out, [](double x, double y) { return x + y; }); break;
        case Op::Sub: for_each_broadcast(a, b, out, [](double x, double y) { return x - y; }); break;
        case Op::Mul: for_each_broadcast(a, b, out, [](double x, double y) { return x * y; }); break;
        default: for_each_broadcast(a, b, out, [](double x, double y) { return x / y; }); break;
      }
      return;
    }
    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.cols() != b.rows()) {
        throw ShapeError(describe(id) + ": expected inner dimensions to agree, got " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
      }
      out = zeros(a.rows(), b.cols());
      as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
      return;
    }
    case Op::ConcatCols: {
      const std::size_t rows = in(0).rows();
      std::size_t cols = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        if (in(k).rows() != rows) {
          throw ShapeError(describe(id) + ": expected " + std::to_string(rows) + " rows in part " + std::to_string(k) +
                           ", got " + shape_string(in(k).shape()));
        }
        cols += in(k).cols();
      }
      out = zeros(rows, cols);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Tensor& part = in(k);
        const std::size_t pc = part.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(part.data().data() + r * pc, pc, out.data().data() + r * cols + offset);
        }
        offset += pc;
      }
      return;
    }
    case Op::SliceCols: {
      const Tensor& a = in(0);
      if (n.end > a.cols()) {
        throw ShapeError(describe(id) + ": slice [" + std::to_string(n.begin) + "," + std::to_string(n.end) +
                         ") exceeds " + shape_string(a.shape()));
      }
      const std::size_t w = n.end - n.begin;
      out = zeros(a.rows(), w);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        std::copy_n(a.data().data() + r * a.cols() + n.begin, w, out.data().data() + r * w);
      }
      return;
    }
    case Op::Sin:
    case Op::Cos:
    case Op::Softplus:
    case Op::Sigmoid:
    case Op::Exp:
    case Op::Abs: {
      const Tensor& a = in(0);
      out = zeros_like(a);
      const auto av = a.data();
      auto ov = out.data();
      const double beta = n.attr;
      switch (n.op) {
        case Op::Sin: for (std::size_t i = 0; i < av.size(); ++i) ov[i] = std::sin(av[i]); break;
        case Op::Cos: for (std::size_t i = 0; i < av.size(); ++i) ov[i] = std::cos(av[i]); break;
        case Op::Softplus:
          for (std::size_t i = 0; i < av.size(); ++i) ov[i] = stable_softplus(beta * av[i]) / beta;
          break;
        case Op::Sigmoid:
          for (std::size_t i = 0; i < av.size(); ++i) ov[i] = stable_sigmoid(beta * av[i]);
          break;
        case Op::Exp: for (std::size_t i = 0; i < av.size(); ++i) ov[i] = std::exp(av[i]); break;
        default: for (std::size_t i = 0; i < av.size(); ++i) ov[i] = std::fabs(av[i]); break;
      }
      return;
    }
    case Op::Sum: {
      double s = 0.0;
      for (double v : in(0).data()) s += v;
      out = Tensor::scalar(0.0);
      out[0] = s;
      return;
    }
    case Op::RowNorm: {
      const Tensor& a = in(0);
      out = zeros(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) s += a(r, c) * a(r, c);
        out[r] = std::sqrt(s);
      }
      return;
    }
    case Op::VolumeRender: {
      const Tensor& sdf = in(0);
      const Tensor& rgb = in(1);
      const Tensor& depth = in(2);
      const Tensor& sharp = in(3);
      const std::size_t ns = n.begin;
      const std::size_t total = sdf.rows();
      if (sdf.cols() != 1 || rgb.cols() != 3 || depth.cols() != 1 || rgb.rows() != total || depth.rows() != total ||
          sharp.size() != 1 || total % ns != 0) {
        throw ShapeError(describe(id) + ": expected sdf [R*n x 1], rgb [R*n x 3], depths [R*n x 1], sharpness [1x1] with n=" +
                         std::to_string(ns) + ", got " + shape_string(sdf.shape()) + ", " + shape_string(rgb.shape()) +
                         ", " + shape_string(depth.shape()) + ", " + shape_string(sharp.shape()));
      }
      const std::size_t rays = total / ns;
      const double s = sharp[0];
      out = zeros(rays, 4 + ns);
      std::vector<double> phi(ns);
      for (std::size_t r = 0; r < rays; ++r) {
        const std::size_t base = r * ns;
        for (std::size_t i = 0; i < ns; ++i) phi[i] = stable_sigmoid(s * sdf[base + i]);
        double trans = 1.0;
        for (std::size_t i = 0; i < ns; ++i) {
          double alpha = 0.0;
          if (i + 1 < ns) {
            alpha = std::clamp((phi[i] - phi[i + 1] + kRenderEps) / (phi[i] + kRenderEps), 0.0, 1.0);
          }
          const double w = trans * alpha;
          out(r, 4 + i) = w;
          for (std::size_t c = 0; c < 3; ++c) out(r, c) += w * rgb(base + i, c);
          out(r, 3) += w * depth[base + i];
          trans *= 1.0 - alpha;
        }
      }
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Backward

void Graph::backward(const std::string& output, const Tensor& seed) { backward(this->output(output), seed); }

void Graph::backward(Var output, const Tensor& seed) {
  check(output);
  if (!forward_done_) throw ValueError("backward called before forward");
  const Tensor& out = values_[output.id];
  if (seed.size() != out.size() || seed.cols() != out.cols()) {
    throw ShapeError("backward seed " + shape_string(seed.shape()) + " does not match output " +
                     shape_string(out.shape()) + " of " + describe(output.id));
  }
  // Every differentiable leaf gets a gradient, zero when the output does not depend on it.
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Op op = nodes_[id].op;
    if ((op == Op::Input || op == Op::Param) && nodes_[id].needs_grad && grads_[id].size() == 0) {
      grads_[id] = zeros_like(values_[id]);
    }
  }
  std::vector<Tensor> adjoint(nodes_.size());
  adjoint[output.id] = seed.reshaped({out.rows(), out.cols()});
  for (std::size_t id = output.id + 1; id-- > 0;) {
    if (adjoint[id].size() == 0 || !nodes_[id].needs_grad) continue;
    const Op op = nodes_[id].op;
    if (op == Op::Input || op == Op::Param) {
      as_matrix(grads_[id]) += as_matrix(adjoint[id]);
      continue;
    }
    backprop_node(id, adjoint);
    adjoint[id] = Tensor();
  }
}

void Graph::backprop_node(std::size_t id, std::vector<Tensor>& adjoint) {
  const Node& n = nodes_[id];
  const Tensor& g = adjoint[id];
  auto in = [&](std::size_t k) -> const Tensor& { return values_[n.inputs[k]]; };
  auto target = [&](std::size_t k) -> Tensor* {
    const std::size_t src = n.inputs[k];
    if (!nodes_[src].needs_grad) return nullptr;
    if (adjoint[src].size() == 0) adjoint[src] = zeros_like(values_[src]);
    return &adjoint[src];
  };

  switch (n.op) {
    case Op::Input:
    case Op::Constant:
    case Op::Param:
      return;
    case Op::Add:
      backprop_broadcast(in(0), in(1), g, target(0), target(1), [](double, double) { return 1.0; },
                         [](double, double) { return 1.0; });
      return;
    case Op::Sub:
      backprop_broadcast(in(0), in(1), g, target(0), target(1), [](double, double) { return 1.0; },
                         [](double, double) { return -1.0; });
      return;
    case Op::Mul:
      backprop_broadcast(in(0), in(1), g, target(0), target(1), [](double, double b) { return b; },
                         [](double a, double) { return a; });
      return;
    case Op::Div:
      backprop_broadcast(in(0), in(1), g, target(0), target(1), [](double, double b) { return 1.0 / b; },
                         [](double a, double b) { return -a / (b * b); });
      return;
    case Op::MatMul: {
      if (Tensor* ga = target(0)) as_matrix(*ga).noalias() += as_matrix(g) * as_matrix(in(1)).transpose();
      if (Tensor* gb = target(1)) as_matrix(*gb).noalias() += as_matrix(in(0)).transpose() * as_matrix(g);
      return;
    }
    case Op::ConcatCols: {
      const std::size_t rows = g.rows(), cols = g.cols();
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t pc = in(k).cols();
        if (Tensor* t = target(k)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < pc; ++c) t->data()[r * pc + c] += g[r * cols + offset + c];
          }
        }
        offset += pc;
      }
      return;
    }
    case Op::SliceCols: {
      Tensor* t = target(0);
      if (!t) return;
      const std::size_t w = n.end - n.begin, ac = in(0).cols();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < w; ++c) t->data()[r * ac + n.begin + c] += g[r * w + c];
      }
      return;
    }
    case Op::Sin:
    case Op::Cos:
    case Op::Softplus:
    case Op::Sigmoid:
    case Op::Exp:
    case Op::Abs: {
      Tensor* t = target(0);
      if (!t) return;
      const auto av = in(0).data();
      const auto yv = values_[id].data();
      const auto gv = g.data();
      auto tv = t->data();
      const double beta = n.attr;
      switch (n.op) {
        case Op::Sin: for (std::size_t i = 0; i < av.size(); ++i) tv[i] += gv[i] * std::cos(av[i]); break;
        case Op::Cos: for (std::size_t i = 0; i < av.size(); ++i) tv[i] -= gv[i] * std::sin(av[i]); break;
        case Op::Softplus:
          for (std::size_t i = 0; i < av.size(); ++i) tv[i] += gv[i] * stable_sigmoid(beta * av[i]);
          break;
        case Op::Sigmoid:
          for (std::size_t i = 0; i < av.size(); ++i) tv[i] += gv[i] * beta * yv[i] * (1.0 - yv[i]);
          break;
        case Op::Exp: for (std::size_t i = 0; i < av.size(); ++i) tv[i] += gv[i] * yv[i]; break;
        default:
          for (std::size_t i = 0; i < av.size(); ++i) tv[i] += gv[i] * (av[i] > 0 ? 1.0 : (av[i] < 0 ? -1.0 : 0.0));
          break;
      }
      return;
    }
    case Op::Sum: {
      if (Tensor* t = target(0)) {
        for (double& v : t->data()) v += g[0];
      }
      return;
    }
    case Op::RowNorm: {
      Tensor* t = target(0);
      if (!t) return;
      const Tensor& a = in(0);
      const Tensor& y = values_[id];
      for (std::size_t r = 0; r < a.rows(); ++r) {
        if (y[r] == 0.0) continue;
        const double k = g[r] / y[r];
        for (std::size_t c = 0; c < a.cols(); ++c) (*t)(r, c) += k * a(r, c);
      }
      return;
    }
    case Op::VolumeRender: {
      const Tensor& sdf = in(0);
      const Tensor& rgb = in(1);
      const Tensor& depth = in(2);
      const double s = in(3)[0];
      Tensor* g_sdf = target(0);
      Tensor* g_rgb = target(1);
      Tensor* g_depth = target(2);
      Tensor* g_sharp = target(3);
      const std::size_t ns = n.begin;
      const std::size_t rays = sdf.rows() / ns;
      const Tensor& out = values_[id];
      std::vector<double> phi(ns), alpha(ns), trans(ns), gw(ns), galpha(ns), gphi(ns);
      std::vector<bool> interior(ns);
      for (std::size_t r = 0; r < rays; ++r) {
        const std::size_t base = r * ns;
        for (std::size_t i = 0; i < ns; ++i) phi[i] = stable_sigmoid(s * sdf[base + i]);
        double tr = 1.0;
        for (std::size_t i = 0; i < ns; ++i) {
          alpha[i] = 0.0;
          interior[i] = false;
          if (i + 1 < ns) {
            const double q = (phi[i] - phi[i + 1] + kRenderEps) / (phi[i] + kRenderEps);
            alpha[i] = std::clamp(q, 0.0, 1.0);
            interior[i] = q > 0.0 && q < 1.0;
          }
          trans[i] = tr;
          tr *= 1.0 - alpha[i];
        }
        // dL/dw_i collects the colour, depth and direct weight adjoints.
        for (std::size_t i = 0; i < ns; ++i) {
          const double w = out(r, 4 + i);
          gw[i] = g(r, 4 + i) + g(r, 3) * depth[base + i];
          for (std::size_t c = 0; c < 3; ++c) {
            gw[i] += g(r, c) * rgb(base + i, c);
            if (g_rgb) (*g_rgb)(base + i, c) += g(r, c) * w;
          }
          if (g_depth) (*g_depth)[base + i] += g(r, 3) * w;
        }
        // dL/dalpha_k = T_k (gw_k - S_k), S_k = gw_{k+1} alpha_{k+1} + (1 - alpha_{k+1}) S_{k+1}.
        double suffix = 0.0;
        for (std::size_t k = ns; k-- > 0;) {
          galpha[k] = trans[k] * (gw[k] - suffix);
          suffix = gw[k] * alpha[k] + (1.0 - alpha[k]) * suffix;
        }
        std::fill(gphi.begin(), gphi.end(), 0.0);
        for (std::size_t k = 0; k + 1 < ns; ++k) {
          if (!interior[k]) continue;
          const double denom = phi[k] + kRenderEps;
          gphi[k] += galpha[k] * phi[k + 1] / (denom * denom);
          gphi[k + 1] -= galpha[k] / denom;
        }
        for (std::size_t i = 0; i < ns; ++i) {
          const double dphi = phi[i] * (1.0 - phi[i]) * gphi[i];
          if (g_sdf) (*g_sdf)[base + i] += s * dphi;
          if (g_sharp) (*g_sharp)[0] += sdf[base + i] * dphi;
        }
      }
      return;
    }
  }
}

const Tensor& Graph::grad(Var v) const {
  check(v);
  const Op op = nodes_[v.id].op;
  if ((op != Op::Input && op != Op::Param) || !nodes_[v.id].needs_grad) {
    throw ValueError(describe(v.id) + " does not accumulate gradients");
  }
  if (grads_[v.id].size() == 0) throw ValueError("no gradient has been accumulated for " + describe(v.id));
  return grads_[v.id];
}

const Tensor& Graph::param_grad(const std::string& name) const {
  auto it = params_by_name_.find(name);
  if (it == params_by_name_.end()) throw ValueError("graph does not use parameter '" + name + "'");
  return grad(Var{it->second});
}

void Graph::accumulate_into(ParamStore& store) const {
  for (const auto& [name, id] : params_by_name_) {
    if (grads_[id].size() == 0) continue;
    Tensor& target = store.grad(name);
    const auto src = grads_[id].data();
    auto dst = target.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void Graph::zero_grad() {
  for (Tensor& g : grads_) {
    if (g.size()) g.fill(0.0);
  }
}

// ---------------------------------------------------------------------------
// Jacobians

Tensor jacobian(const GraphFunction& f, const Tensor& x, const ParamStore* params) {
  if (x.size() != 3) throw ValueError("jacobian expects a 3-vector input, got " + shape_string(x.shape()));
  if (!x.all_finite()) throw ValueError("jacobian input is not finite");
  Graph g(params);
  Var in = g.input("x", true);
  Var y = f(g, in);
  g.forward({{"x", x.reshaped({1, 3})}});
  const Tensor& yv = g.value(y);
  if (yv.size() != 3) throw ShapeError("jacobian expects a 3-vector output, got " + shape_string(yv.shape()));
  Tensor jac({3, 3}, 0.0);
  for (std::size_t row = 0; row < 3; ++row) {
    g.zero_grad();
    Tensor seed({yv.rows(), yv.cols()}, 0.0);
    seed[row] = 1.0;
    g.backward(y, seed);
    const Tensor& gx = g.grad(in);
    for (std::size_t c = 0; c < 3; ++c) jac(row, c) = gx[c];
  }
  return jac;
}

Tensor finite_diff_jacobian(const VectorFunction& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ValueError("finite-difference step must be positive");
  const Tensor f0 = f(x);
  Tensor jac({f0.size(), x.size()}, 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    Tensor xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const Tensor fp = f(xp), fm = f(xm);
    for (std::size_t i = 0; i < f0.size(); ++i) jac(i, j) = (fp[i] - fm[i]) / (2.0 * h);
  }
  return jac;
}

}  // namespace tissuedef
