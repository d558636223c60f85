#ifndef GRADMASK_AUTODIFF_H_
#define GRADMASK_AUTODIFF_H_

// Reverse-mode automatic differentiation over small dense graphs.
//
// A Graph is built once per network architecture by appending nodes; every
// builder call returns a NodeId referring only to earlier nodes, so insertion
// order is a topological order and the graph is acyclic by construction.
// Shapes are resolved at build time. Parameter nodes reference caller-owned
// storage, which must stay alive and unmodified while Forward/Backward run.
//
// Tensors are 2-D (rows x cols); a row is one sample of a batch. Binary
// elementwise ops accept a right operand of equal shape, 1 x cols (broadcast
// over rows) or 1 x 1 (broadcast over everything).

#include <cstddef>
#include <string>
#include <vector>

#include "gradmask/types.h"

namespace gradmask::ad {

using Tensor = Eigen::MatrixXd;

struct NodeId {
  int index = -1;
};

enum class Op {
  kInput,
  kParam,
  kConstant,
  kAffine,   // x * W^T + b, with W (out x in) and b (1 x out)
  kTanh,
  kRelu,
  kSoftplus,
  kSigmoid,
  kLog,
  kExp,
  kAdd,
  kSub,
  kMul,
  kScale,      // c * a
  kAddScalar,  // a + c
  kMin,
  kClamp,
  kSum,           // -> 1 x 1
  kRowSum,        // -> rows x 1
  kSquaredError,  // sum((a - b)^2) -> 1 x 1
};

struct Gradient {
  // Adjoint of the primary (first declared) input, flattened column-major.
  Vec wrt_inputs;
  // Adjoints of all parameter nodes concatenated in registration order, each
  // flattened in the storage order of the referenced memory (column-major).
  Vec wrt_params;
};

class Graph {
 public:
  Graph() = default;

  NodeId Input(Eigen::Index rows, Eigen::Index cols);
  // References `rows * cols` contiguous doubles in column-major order.
  NodeId Param(const double* data, Eigen::Index rows, Eigen::Index cols);
  NodeId Param(const Mat& m) { return Param(m.data(), m.rows(), m.cols()); }
  // A vector parameter viewed as a 1 x n row.
  NodeId ParamRow(const Vec& v) { return Param(v.data(), 1, v.size()); }
  NodeId Constant(Tensor value);

  NodeId Affine(NodeId x, NodeId weight, NodeId bias);
  NodeId Tanh(NodeId a) { return Unary(Op::kTanh, a); }
  NodeId Relu(NodeId a) { return Unary(Op::kRelu, a); }
  NodeId Softplus(NodeId a) { return Unary(Op::kSoftplus, a); }
  NodeId Sigmoid(NodeId a) { return Unary(Op::kSigmoid, a); }
  NodeId Log(NodeId a) { return Unary(Op::kLog, a); }
  NodeId Exp(NodeId a) { return Unary(Op::kExp, a); }
  NodeId Add(NodeId a, NodeId b) { return Binary(Op::kAdd, a, b); }
  NodeId Sub(NodeId a, NodeId b) { return Binary(Op::kSub, a, b); }
  NodeId Mul(NodeId a, NodeId b) { return Binary(Op::kMul, a, b); }
  NodeId Min(NodeId a, NodeId b);
  NodeId Scale(NodeId a, double c);
  NodeId AddScalar(NodeId a, double c);
  NodeId Clamp(NodeId a, double lo, double hi);
  NodeId Sum(NodeId a);
  NodeId RowSum(NodeId a);
  NodeId SquaredError(NodeId a, NodeId b);

  // The output defaults to the most recently added node.
  void SetOutput(NodeId id);
  NodeId output() const { return NodeId{output_}; }

  void SetInput(NodeId id, const Tensor& value);

  // Evaluates every node. All inputs must have been set.
  const Tensor& Forward();
  // Sets the primary input and evaluates.
  const Tensor& Forward(const Tensor& input);

  // Propagates `seed` (shape of the output) back through the graph. Adjoints
  // are recomputed from zero on every call. Throws StateError if Forward has
  // not run since the last structural change, NonFiniteError if any returned
  // entry is NaN or Inf.
  Gradient Backward(const Tensor& seed);
  // Seed of ones; the natural choice for a scalar output.
  Gradient Backward();

  const Tensor& Value(NodeId id) const;
  const Tensor& Adjoint(NodeId id) const;
  Eigen::Index Rows(NodeId id) const;
  Eigen::Index Cols(NodeId id) const;

  std::size_t size() const { return nodes_.size(); }
  std::size_t num_inputs() const { return inputs_.size(); }
  NodeId primary_input() const;
  Eigen::Index param_count() const { return param_count_; }
  Op op(NodeId id) const { return node(id).op; }

 private:
  struct Node {
    Op op = Op::kConstant;
    int a = -1;
    int b = -1;
    int c = -1;
    double p0 = 0.0;
    double p1 = 0.0;
    const double* param = nullptr;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    bool input_set = false;
    Tensor value;
    Tensor adjoint;
  };

  static Node MakeNode(Op op, int a = -1, int b = -1, int c = -1) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.c = c;
    return n;
  }
  NodeId Push(Node n);
  NodeId Unary(Op op, NodeId a);
  NodeId Binary(Op op, NodeId a, NodeId b);
  const Node& node(NodeId id) const;
  void Check(NodeId id, const char* what) const;
  void Evaluate(Node& n);
  void Propagate(const Node& n);

  std::vector<Node> nodes_;
  std::vector<int> inputs_;
  std::vector<int> params_;
  Eigen::Index param_count_ = 0;
  int output_ = -1;
  bool forward_done_ = false;
};

// Central-difference estimate of d<seed, f(x)>/dx for the primary input,
// perturbing one coordinate at a time. The graph is left evaluated at `x`.
Vec FiniteDiffOracle(Graph& graph, const Tensor& x, double h);
Vec FiniteDiffOracle(Graph& graph, const Tensor& x, double h,
                     const Tensor& seed);

}  // namespace gradmask::ad

#endif  // GRADMASK_AUTODIFF_H_
