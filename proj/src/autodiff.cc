#include "gradmask/autodiff.h"

#include <cmath>
#include <sstream>
#include <utility>

#include "gradmask/errors.h"

namespace gradmask::ad {
namespace {

std::string ShapeString(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

double SoftplusScalar(double x) {
  // log(1 + e^x) without overflow.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Reduces an adjoint of the broadcast result back to the operand's shape.
void AccumulateBroadcast(Tensor& target, const Tensor& grad) {
  if (target.rows() == grad.rows() && target.cols() == grad.cols()) {
    target += grad;
  } else if (target.rows() == 1 && target.cols() == grad.cols()) {
    target += grad.colwise().sum();
  } else {
    target(0, 0) += grad.sum();
  }
}

}  // namespace

NodeId Graph::Push(Node n) {
  nodes_.push_back(std::move(n));
  output_ = static_cast<int>(nodes_.size()) - 1;
  forward_done_ = false;
  return NodeId{output_};
}

const Graph::Node& Graph::node(NodeId id) const {
  Check(id, "node");
  return nodes_[id.index];
}

void Graph::Check(NodeId id, const char* what) const {
  if (id.index < 0 || id.index >= static_cast<int>(nodes_.size())) {
    throw std::out_of_range(std::string("unknown graph node for ") + what);
  }
}

NodeId Graph::Input(Eigen::Index rows, Eigen::Index cols) {
  if (rows <= 0 || cols <= 0) throw DimensionError("input shape must be positive");
  Node n = MakeNode(Op::kInput);
  n.rows = rows;
  n.cols = cols;
  NodeId id = Push(std::move(n));
  inputs_.push_back(id.index);
  return id;
}

NodeId Graph::Param(const double* data, Eigen::Index rows, Eigen::Index cols) {
  if (data == nullptr || rows <= 0 || cols <= 0) {
    throw DimensionError("parameter must reference a non-empty tensor");
  }
  Node n = MakeNode(Op::kParam);
  n.param = data;
  n.rows = rows;
  n.cols = cols;
  NodeId id = Push(std::move(n));
  params_.push_back(id.index);
  param_count_ += rows * cols;
  return id;
}

NodeId Graph::Constant(Tensor value) {
  Node n = MakeNode(Op::kConstant);
  n.rows = value.rows();
  n.cols = value.cols();
  n.value = std::move(value);
  return Push(std::move(n));
}

NodeId Graph::Affine(NodeId x, NodeId weight, NodeId bias) {
  const Node& nx = node(x);
  const Node& nw = node(weight);
  const Node& nb = node(bias);
  if (nw.cols != nx.cols || nb.rows != 1 || nb.cols != nw.rows) {
    throw DimensionError("affine: x " + ShapeString(nx.rows, nx.cols) +
                         ", W " + ShapeString(nw.rows, nw.cols) + ", b " +
                         ShapeString(nb.rows, nb.cols));
  }
  Node n = MakeNode(Op::kAffine, x.index, weight.index, bias.index);
  n.rows = nx.rows;
  n.cols = nw.rows;
  return Push(std::move(n));
}

NodeId Graph::Unary(Op op, NodeId a) {
  const Node& na = node(a);
  Node n = MakeNode(op, a.index);
  n.rows = na.rows;
  n.cols = na.cols;
  return Push(std::move(n));
}

NodeId Graph::Binary(Op op, NodeId a, NodeId b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  const bool same = na.rows == nb.rows && na.cols == nb.cols;
  const bool row = nb.rows == 1 && nb.cols == na.cols;
  const bool scalar = nb.rows == 1 && nb.cols == 1;
  if (!same && !row && !scalar) {
    throw DimensionError("elementwise op: cannot broadcast " +
                         ShapeString(nb.rows, nb.cols) + " onto " +
                         ShapeString(na.rows, na.cols));
  }
  Node n = MakeNode(op, a.index, b.index);
  n.rows = na.rows;
  n.cols = na.cols;
  return Push(std::move(n));
}

NodeId Graph::Min(NodeId a, NodeId b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols) {
    throw DimensionError("min: operands must have equal shape");
  }
  return Binary(Op::kMin, a, b);
}

NodeId Graph::Scale(NodeId a, double c) {
  NodeId id = Unary(Op::kScale, a);
  nodes_[id.index].p0 = c;
  return id;
}

NodeId Graph::AddScalar(NodeId a, double c) {
  NodeId id = Unary(Op::kAddScalar, a);
  nodes_[id.index].p0 = c;
  return id;
}

NodeId Graph::Clamp(NodeId a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
  NodeId id = Unary(Op::kClamp, a);
  nodes_[id.index].p0 = lo;
  nodes_[id.index].p1 = hi;
  return id;
}

NodeId Graph::Sum(NodeId a) {
  Node n = MakeNode(Op::kSum, a.index);
  node(a);
  n.rows = 1;
  n.cols = 1;
  return Push(std::move(n));
}

NodeId Graph::RowSum(NodeId a) {
  Node n = MakeNode(Op::kRowSum, a.index);
  n.rows = node(a).rows;
  n.cols = 1;
  return Push(std::move(n));
}

NodeId Graph::SquaredError(NodeId a, NodeId b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols) {
    throw DimensionError("squared error: operands must have equal shape");
  }
  Node n = MakeNode(Op::kSquaredError, a.index, b.index);
  n.rows = 1;
  n.cols = 1;
  return Push(std::move(n));
}

void Graph::SetOutput(NodeId id) {
  Check(id, "output");
  output_ = id.index;
  forward_done_ = false;
}

NodeId Graph::primary_input() const {
  if (inputs_.empty()) throw StateError("graph has no inputs");
  return NodeId{inputs_.front()};
}

void Graph::SetInput(NodeId id, const Tensor& value) {
  Check(id, "input");
  Node& n = nodes_[id.index];
  if (n.op != Op::kInput) throw std::invalid_argument("node is not an input");
  if (value.rows() != n.rows || value.cols() != n.cols) {
    throw DimensionError("input expects " + ShapeString(n.rows, n.cols) +
                         ", got " + ShapeString(value.rows(), value.cols()));
  }
  if (!value.allFinite()) throw NonFiniteError("input contains NaN or Inf");
  n.value = value;
  n.input_set = true;
  forward_done_ = false;
}

const Tensor& Graph::Forward(const Tensor& input) {
  SetInput(primary_input(), input);
  return Forward();
}

const Tensor& Graph::Forward() {
  if (nodes_.empty()) throw StateError("forward on an empty graph");
  for (Node& n : nodes_) Evaluate(n);
  forward_done_ = true;
  return nodes_[output_].value;
}

void Graph::Evaluate(Node& n) {
  auto val = [this](int i) -> const Tensor& { return nodes_[i].value; };
  switch (n.op) {
    case Op::kInput:
      if (!n.input_set) throw StateError("forward with an unset input");
      break;
    case Op::kParam:
      n.value = Eigen::Map<const Tensor>(n.param, n.rows, n.cols);
      break;
    case Op::kConstant:
      break;
    case Op::kAffine:
      n.value.noalias() = val(n.a) * val(n.b).transpose();
      n.value.rowwise() += val(n.c).row(0);
      break;
    case Op::kTanh:
      n.value = val(n.a).array().tanh();
      break;
    case Op::kRelu:
      n.value = val(n.a).cwiseMax(0.0);
      break;
    case Op::kSoftplus:
      n.value = val(n.a).unaryExpr(&SoftplusScalar);
      break;
    case Op::kSigmoid:
      n.value = val(n.a).unaryExpr(&gradmask::Sigmoid);
      break;
    case Op::kLog:
      n.value = val(n.a).array().log();
      break;
    case Op::kExp:
      n.value = val(n.a).array().exp();
      break;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& a = val(n.a);
      const Tensor& b = val(n.b);
      Tensor rhs;
      if (b.rows() == a.rows() && b.cols() == a.cols()) {
        rhs = b;
      } else if (b.cols() == a.cols()) {
        rhs = b.replicate(a.rows(), 1);
      } else {
        rhs = Tensor::Constant(a.rows(), a.cols(), b(0, 0));
      }
      if (n.op == Op::kAdd) {
        n.value = a + rhs;
      } else if (n.op == Op::kSub) {
        n.value = a - rhs;
      } else {
        n.value = a.cwiseProduct(rhs);
      }
      break;
    }
    case Op::kScale:
      n.value = n.p0 * val(n.a);
      break;
    case Op::kAddScalar:
      n.value = val(n.a).array() + n.p0;
      break;
    case Op::kMin:
      n.value = val(n.a).cwiseMin(val(n.b));
      break;
    case Op::kClamp:
      n.value = val(n.a).cwiseMax(n.p0).cwiseMin(n.p1);
      break;
    case Op::kSum:
      n.value.resize(1, 1);
      n.value(0, 0) = val(n.a).sum();
      break;
    case Op::kRowSum:
      n.value = val(n.a).rowwise().sum();
      break;
    case Op::kSquaredError:
      n.value.resize(1, 1);
      n.value(0, 0) = (val(n.a) - val(n.b)).squaredNorm();
      break;
  }
}

Gradient Graph::Backward() {
  const Node& out = nodes_.at(output_);
  return Backward(Tensor::Ones(out.rows, out.cols));
}

Gradient Graph::Backward(const Tensor& seed) {
  if (!forward_done_) throw StateError("backward called before forward");
  Node& out = nodes_[output_];
  if (seed.rows() != out.rows || seed.cols() != out.cols) {
    throw DimensionError("seed must have the output shape " +
                         ShapeString(out.rows, out.cols));
  }
  for (Node& n : nodes_) n.adjoint.setZero(n.rows, n.cols);
  out.adjoint = seed;
  for (int i = output_; i >= 0; --i) Propagate(nodes_[i]);

  Gradient g;
  if (!inputs_.empty()) {
    const Tensor& adj = nodes_[inputs_.front()].adjoint;
    g.wrt_inputs = Eigen::Map<const Vec>(adj.data(), adj.size());
  }
  g.wrt_params.resize(param_count_);
  Eigen::Index offset = 0;
  for (int p : params_) {
    const Tensor& adj = nodes_[p].adjoint;
    g.wrt_params.segment(offset, adj.size()) =
        Eigen::Map<const Vec>(adj.data(), adj.size());
    offset += adj.size();
  }
  if (!g.wrt_inputs.allFinite() || !g.wrt_params.allFinite()) {
    throw NonFiniteError("gradient contains NaN or Inf");
  }
  return g;
}

void Graph::Propagate(const Node& n) {
  const Tensor& up = n.adjoint;
  if (n.a < 0) return;
  Node& na = nodes_[n.a];
  switch (n.op) {
    case Op::kInput:
    case Op::kParam:
    case Op::kConstant:
      break;
    case Op::kAffine: {
      Node& nw = nodes_[n.b];
      Node& nb = nodes_[n.c];
      na.adjoint.noalias() += up * nw.value;
      nw.adjoint.noalias() += up.transpose() * na.value;
      nb.adjoint += up.colwise().sum();
      break;
    }
    case Op::kTanh:
      na.adjoint.array() +=
          up.array() * (1.0 - n.value.array().square());
      break;
    case Op::kRelu:
      na.adjoint.array() +=
          up.array() * (na.value.array() > 0.0).cast<double>();
      break;
    case Op::kSoftplus:
      na.adjoint.array() +=
          up.array() * na.value.unaryExpr(&gradmask::Sigmoid).array();
      break;
    case Op::kSigmoid:
      na.adjoint.array() +=
          up.array() * n.value.array() * (1.0 - n.value.array());
      break;
    case Op::kLog:
      na.adjoint.array() += up.array() / na.value.array();
      break;
    case Op::kExp:
      na.adjoint.array() += up.array() * n.value.array();
      break;
    case Op::kAdd:
      na.adjoint += up;
      AccumulateBroadcast(nodes_[n.b].adjoint, up);
      break;
    case Op::kSub:
      na.adjoint += up;
      AccumulateBroadcast(nodes_[n.b].adjoint, -up);
      break;
    case Op::kMul: {
      Node& nb = nodes_[n.b];
      const Tensor& a = na.value;
      const Tensor& b = nb.value;
      if (b.rows() == a.rows() && b.cols() == a.cols()) {
        na.adjoint.array() += up.array() * b.array();
      } else if (b.cols() == a.cols()) {
        na.adjoint.array() += up.array() * b.replicate(a.rows(), 1).array();
      } else {
        na.adjoint += b(0, 0) * up;
      }
      AccumulateBroadcast(nb.adjoint, up.cwiseProduct(a));
      break;
    }
    case Op::kScale:
      na.adjoint += n.p0 * up;
      break;
    case Op::kAddScalar:
      na.adjoint += up;
      break;
    case Op::kMin: {
      Node& nb = nodes_[n.b];
      // Ties route the adjoint to the left operand.
      const auto left = (na.value.array() <= nb.value.array()).cast<double>();
      na.adjoint.array() += up.array() * left;
      nb.adjoint.array() += up.array() * (1.0 - left);
      break;
    }
    case Op::kClamp: {
      const auto inside = (na.value.array() >= n.p0 && na.value.array() <= n.p1)
                              .cast<double>();
      na.adjoint.array() += up.array() * inside;
      break;
    }
    case Op::kSum:
      na.adjoint.array() += up(0, 0);
      break;
    case Op::kRowSum:
      na.adjoint += up.replicate(1, na.cols);
      break;
    case Op::kSquaredError: {
      Node& nb = nodes_[n.b];
      const Tensor diff = 2.0 * up(0, 0) * (na.value - nb.value);
      na.adjoint += diff;
      nb.adjoint -= diff;
      break;
    }
  }
}

const Tensor& Graph::Value(NodeId id) const { return node(id).value; }
const Tensor& Graph::Adjoint(NodeId id) const { return node(id).adjoint; }
Eigen::Index Graph::Rows(NodeId id) const { return node(id).rows; }
Eigen::Index Graph::Cols(NodeId id) const { return node(id).cols; }

Vec FiniteDiffOracle(Graph& graph, const Tensor& x, double h) {
  const NodeId out = graph.output();
  return FiniteDiffOracle(graph, x, h,
                          Tensor::Ones(graph.Rows(out), graph.Cols(out)));
}

Vec FiniteDiffOracle(Graph& graph, const Tensor& x, double h,
                     const Tensor& seed) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be > 0");
  Vec grad(x.size());
  Tensor probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double plus = graph.Forward(probe).cwiseProduct(seed).sum();
    probe.data()[i] = orig - h;
    const double minus = graph.Forward(probe).cwiseProduct(seed).sum();
    probe.data()[i] = orig;
    grad[i] = (plus - minus) / (2.0 * h);
  }
  graph.Forward(x);
  return grad;
}

}  // namespace gradmask::ad
