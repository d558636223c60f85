#include <cmath>

#include "doctest.h"
#include "gradmask/autodiff.h"
#include "gradmask/errors.h"
#include "gradmask/nets.h"

using namespace gradmask;
using ad::Graph;
using ad::Tensor;

namespace {

Tensor Scalar(double v) { return Tensor::Constant(1, 1, v); }

double RelErr(double a, double b) { return std::abs(a - b) / (std::abs(b) + 1e-8); }

}  // namespace

TEST_CASE("tanh of zero is zero and has slope one") {
  Graph g;
  const auto x = g.Input(1, 1);
  g.Tanh(x);
  CHECK(g.Forward(Scalar(0.0))(0, 0) == 0.0);
  CHECK(g.Backward().wrt_inputs[0] == doctest::Approx(1.0));
}

TEST_CASE("identity affine map passes the input through") {
  Graph g;
  const auto x = g.Input(1, 2);
  const Mat w = Mat::Identity(2, 2);
  const Vec b = Vec::Zero(2);
  g.Affine(x, g.Param(w), g.ParamRow(b));
  Tensor in(1, 2);
  in << 1.0, 2.0;
  const Tensor& out = g.Forward(in);
  CHECK(out(0, 0) == 1.0);
  CHECK(out(0, 1) == 2.0);
}

TEST_CASE("two-layer net matches a hand evaluation") {
  MlpParams p;
  p.head = HeadKind::kScalarValue;
  Mat w1(2, 2);
  w1 << 0.5, -0.25, 0.1, 0.2;
  Vec b1(2);
  b1 << 0.05, -0.1;
  Mat w2(1, 2);
  w2 << 0.3, -0.7;
  Vec b2(1);
  b2 << 0.2;
  p.layers = {{w1, b1}, {w2, b2}};
  Graph g;
  const auto x = g.Input(1, 2);
  BuildMlp(g, p, x);
  Tensor in(1, 2);
  in << 1.0, 2.0;
  const double h0 = std::tanh(0.5 * 1.0 - 0.25 * 2.0 + 0.05);
  const double h1 = std::tanh(0.1 * 1.0 + 0.2 * 2.0 - 0.1);
  CHECK(g.Forward(in)(0, 0) == doctest::Approx(0.3 * h0 - 0.7 * h1 + 0.2).epsilon(1e-14));
}

TEST_CASE("square has derivative 2x") {
  Graph g;
  const auto x = g.Input(1, 1);
  g.Mul(x, x);
  g.Forward(Scalar(3.0));
  CHECK(g.Backward().wrt_inputs[0] == doctest::Approx(6.0));
  CHECK(ad::FiniteDiffOracle(g, Scalar(3.0), 1e-4)[0] == doctest::Approx(6.0).epsilon(1e-6));
}

TEST_CASE("finite differences of a sum are all ones") {
  Graph g;
  const auto x = g.Input(1, 5);
  g.Sum(x);
  Rng rng(3);
  const Tensor in = StandardNormal(5, rng).transpose();
  const Vec fd = ad::FiniteDiffOracle(g, in, 1e-4);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(fd[i] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("random 2x8x1 net agrees with finite differences") {
  Rng rng(11);
  MlpParams p = InitParams({2, {8}, 1, HeadKind::kScalarValue, 1.0}, rng);
  Graph g;
  const auto x = g.Input(1, 2);
  BuildMlp(g, p, x);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor in = StandardNormal(2, rng).transpose();
    g.Forward(in);
    const Vec back = g.Backward().wrt_inputs;
    const Vec fd = ad::FiniteDiffOracle(g, in, 1e-4);
    for (Eigen::Index i = 0; i < 2; ++i) CHECK(RelErr(back[i], fd[i]) < 1e-3);
  }
}

TEST_CASE("every primitive agrees with finite differences") {
  Rng rng(5);
  using Build = ad::NodeId (*)(Graph&, ad::NodeId, ad::NodeId);
  const std::pair<const char*, Build> cases[] = {
      {"tanh", [](Graph& g, ad::NodeId a, ad::NodeId) { return g.Tanh(a); }},
      {"softplus", [](Graph& g, ad::NodeId a, ad::NodeId) { return g.Softplus(a); }},
      {"sigmoid", [](Graph& g, ad::NodeId a, ad::NodeId) { return g.Sigmoid(a); }},
      {"exp", [](Graph& g, ad::NodeId a, ad::NodeId) { return g.Exp(a); }},
      {"log", [](Graph& g, ad::NodeId a, ad::NodeId) { return g.Log(g.Exp(a)); }},
      {"relu", [](Graph& g, ad::NodeId a, ad::NodeId) { return g.Relu(a); }},
      {"add", [](Graph& g, ad::NodeId a, ad::NodeId c) { return g.Add(a, c); }},
      {"sub", [](Graph& g, ad::NodeId a, ad::NodeId c) { return g.Sub(c, a); }},
      {"mul", [](Graph& g, ad::NodeId a, ad::NodeId c) { return g.Mul(a, c); }},
      {"min", [](Graph& g, ad::NodeId a, ad::NodeId c) { return g.Min(a, c); }},
      {"scale", [](Graph& g, ad::NodeId a, ad::NodeId) { return g.Scale(a, -2.5); }},
      {"add_scalar", [](Graph& g, ad::NodeId a, ad::NodeId) { return g.AddScalar(a, 4.0); }},
      {"clamp", [](Graph& g, ad::NodeId a, ad::NodeId) { return g.Clamp(a, -0.5, 0.5); }},
      {"row_sum", [](Graph& g, ad::NodeId a, ad::NodeId) { return g.RowSum(a); }},
      {"squared_error",
       [](Graph& g, ad::NodeId a, ad::NodeId c) { return g.SquaredError(a, c); }},
  };
  for (const auto& [name, build] : cases) {
    CAPTURE(name);
    Graph g;
    const auto x = g.Input(3, 4);
    const auto c = g.Constant(StandardNormal(12, rng).reshaped(3, 4));
    g.Sum(g.Mul(build(g, x, c), build(g, x, c)));
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor in = StandardNormal(12, rng).reshaped(3, 4);
      g.Forward(in);
      const Vec back = g.Backward().wrt_inputs;
      const Vec fd = ad::FiniteDiffOracle(g, in, 1e-4);
      for (Eigen::Index i = 0; i < back.size(); ++i) {
        // Kinks (relu, min, clamp) are skipped when the probe straddles them.
        if (std::abs(fd[i] - back[i]) > 1e-3 * (std::abs(fd[i]) + 1e-8)) {
          const double v = in.reshaped()(i);
          const bool near_kink = std::abs(v) < 1e-3 || std::abs(std::abs(v) - 0.5) < 1e-3 ||
                                 std::abs(v - g.Value(c).reshaped()(i)) < 1e-3;
          CHECK(near_kink);
        }
      }
    }
  }
}

TEST_CASE("broadcast operands accumulate their adjoint") {
  Graph g;
  const auto x = g.Input(3, 2);
  Vec row(2);
  row << 2.0, -1.0;
  const auto b = g.ParamRow(row);
  g.Sum(g.Mul(x, b));
  Tensor in(3, 2);
  in << 1, 2, 3, 4, 5, 6;
  g.Forward(in);
  const ad::Gradient grad = g.Backward();
  CHECK(grad.wrt_params[0] == doctest::Approx(9.0));
  CHECK(grad.wrt_params[1] == doctest::Approx(12.0));
  CHECK(grad.wrt_inputs[0] == doctest::Approx(2.0));
  CHECK(grad.wrt_inputs[3] == doctest::Approx(-1.0));
}

TEST_CASE("backward is linear in the seed and deterministic") {
  Rng rng(8);
  const MlpParams p = InitParams({4, {16}, 4, HeadKind::kMaskProbability, 1.0}, rng);
  Graph g;
  const auto x = g.Input(2, 4);
  BuildMlp(g, p, x);
  const Tensor in = StandardNormal(8, rng).reshaped(2, 4);
  const Tensor seed = StandardNormal(8, rng).reshaped(2, 4);
  g.Forward(in);
  const ad::Gradient a = g.Backward(seed);
  const ad::Gradient b = g.Backward(-3.0 * seed);
  const ad::Gradient again = g.Backward(seed);
  CHECK((b.wrt_inputs + 3.0 * a.wrt_inputs).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((b.wrt_params + 3.0 * a.wrt_params).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(again.wrt_inputs == a.wrt_inputs);
  CHECK(again.wrt_params == a.wrt_params);
}

TEST_CASE("adjoint shapes match value shapes") {
  Graph g;
  const auto x = g.Input(3, 2);
  const auto y = g.RowSum(g.Tanh(x));
  g.Sum(y);
  g.Forward(Tensor::Ones(3, 2));
  g.Backward();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const ad::NodeId id{static_cast<int>(i)};
    CHECK(g.Adjoint(id).rows() == g.Value(id).rows());
    CHECK(g.Adjoint(id).cols() == g.Value(id).cols());
  }
}

TEST_CASE("misuse is rejected") {
  Graph g;
  const auto x = g.Input(2, 2);
  CHECK_THROWS_AS(g.Add(x, g.Constant(Tensor::Zero(3, 3))), DimensionError);
  g.Tanh(x);
  CHECK_THROWS_AS(g.Backward(), StateError);
  CHECK_THROWS_AS(g.Forward(Tensor::Zero(1, 2)), DimensionError);
  Graph h;
  const auto y = h.Input(1, 1);
  h.Log(y);
  h.Forward(Scalar(0.0));
  CHECK_THROWS_AS(h.Backward(), NonFiniteError);
}
