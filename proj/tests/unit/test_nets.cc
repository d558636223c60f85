#include <cmath>
#include <numbers>

#include "doctest.h"
#include "gradmask/errors.h"
#include "gradmask/nets.h"

using namespace gradmask;

namespace {

MlpParams ZeroNet(HeadKind head, int in, int out) {
  Rng rng(0);
  MlpParams p = InitParams({in, {4}, out, head, 1.0}, rng);
  for (DenseLayer& l : p.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  if (head == HeadKind::kGaussianPolicy) p.log_std.setZero();
  return p;
}

}  // namespace

TEST_CASE("zero nets give the neutral outputs") {
  const StateVec s = StateVec::Constant(3, 0.7);
  const PolicyOutput po = PolicyForward(ZeroNet(HeadKind::kGaussianPolicy, 3, 2), s);
  CHECK(po.mean.isZero());
  CHECK(po.std.isOnes());
  CHECK(ValueForward(ZeroNet(HeadKind::kScalarValue, 3, 1), s) == 0.0);
  CHECK(MaskForward(ZeroNet(HeadKind::kMaskProbability, 3, 3), s).probs.isApproxToConstant(0.5));
}

TEST_CASE("one-layer policy matches a hand evaluation") {
  MlpParams p;
  p.head = HeadKind::kGaussianPolicy;
  Mat w(1, 2);
  w << 0.4, -0.3;
  Vec b(1);
  b << 0.1;
  p.layers = {{w, b}};
  p.log_std = Vec::Constant(1, -0.5);
  StateVec s(2);
  s << 2.0, 1.0;
  const PolicyOutput out = PolicyForward(p, s);
  CHECK(out.mean[0] == doctest::Approx(0.4 * 2.0 - 0.3 + 0.1));
  CHECK(out.std[0] == doctest::Approx(std::exp(-0.5)));
}

TEST_CASE("table architectures") {
  Rng rng(1);
  const MlpParams victim = InitParams(VictimPolicySpec(10, 2), rng);
  REQUIRE(victim.layers.size() == 3);
  CHECK(victim.layers[0].weight.rows() == 128);
  CHECK(victim.layers[1].weight.rows() == 128);
  CHECK(victim.output_dim() == 2);
  CHECK(victim.log_std.size() == 2);
  const MlpParams mask = InitParams(MaskNetSpec(10), rng);
  REQUIRE(mask.layers.size() == 4);
  for (int i = 0; i < 3; ++i) CHECK(mask.layers[i].weight.rows() == 64);
  CHECK(mask.output_dim() == 10);
  CHECK(InitParams(AdversaryValueSpec(10), rng).layers.size() == 4);
  CHECK(InitParams(VictimValueSpec(10), rng).output_dim() == 1);
}

TEST_CASE("init is deterministic and within the fan-in range") {
  Rng a(42), b(42);
  const MlpParams p = InitParams(VictimValueSpec(10), a);
  CHECK(p == InitParams(VictimValueSpec(10), b));
  const double bound = 1.0 / std::sqrt(10.0);
  CHECK(p.layers[0].weight.cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("policy log density") {
  PolicyOutput out{ActionVec::Zero(2), Vec::Ones(2)};
  CHECK(GaussianLogProb(out, out.mean) == doctest::Approx(-std::log(2.0 * std::numbers::pi)));
  CHECK(DeterministicAction(out).log_prob == doctest::Approx(-1.8379).epsilon(1e-4));

  // Riemann sum of the density over [-8, 8]^2.
  double mass = 0.0;
  const double h = 0.05;
  for (double x = -8.0; x < 8.0; x += h) {
    for (double y = -8.0; y < 8.0; y += h) {
      ActionVec a(2);
      a << x + h / 2, y + h / 2;
      mass += std::exp(GaussianLogProb(out, a)) * h * h;
    }
  }
  CHECK(std::abs(mass - 1.0) < 0.02);
}

TEST_CASE("sampling") {
  Rng rng(9);
  PolicyOutput tight{ActionVec::Constant(2, 0.3), Vec::Constant(2, std::exp(kLogStdMin))};
  for (int i = 0; i < 100; ++i) {
    CHECK((SampleAction(tight, rng).action - tight.mean).cwiseAbs().maxCoeff() <=
          5.0 * std::exp(-5.0));
  }
  PolicyOutput unit{ActionVec::Constant(1, -0.4), Vec::Ones(1)};
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += SampleAction(unit, rng).action[0];
  CHECK(std::abs(sum / n + 0.4) < 3.0 / std::sqrt(double(n)));
}

TEST_CASE("mask probabilities stay inside (0, 1)") {
  Rng rng(2);
  const MlpParams mask = InitParams(MaskNetSpec(4), rng);
  for (double v : {-1e6, 1e6}) {
    const Vec probs = MaskForward(mask, StateVec::Constant(4, v)).probs;
    CHECK(probs.minCoeff() > 0.0);
    CHECK(probs.maxCoeff() < 1.0);
  }
  const StateVec s = StandardNormal(4, rng);
  CHECK(MaskForward(mask, s).probs == MaskForward(mask, s).probs);
}

TEST_CASE("distinct states give distinct values") {
  Rng rng(4);
  const MlpParams v = InitParams(VictimValueSpec(3), rng);
  CHECK(ValueForward(v, StateVec::Zero(3)) != ValueForward(v, StateVec::Ones(3)));
}

TEST_CASE("flatten and assign round trip; batch forward agrees") {
  Rng rng(6);
  MlpParams p = InitParams(VictimPolicySpec(5, 2), rng);
  const Vec flat = p.Flatten();
  CHECK(flat.size() == p.parameter_count());
  MlpParams q = p;
  q.Assign(Vec::Zero(flat.size()));
  q.Assign(flat);
  CHECK(q == p);
  const Mat states = StandardNormal(15, rng).reshaped(3, 5);
  const Mat means = PolicyMeanBatch(p, states);
  for (int r = 0; r < 3; ++r) {
    CHECK((means.row(r).transpose() - PolicyForward(p, states.row(r).transpose()).mean)
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
}

TEST_CASE("validation") {
  Rng rng(7);
  MlpParams p = InitParams(VictimPolicySpec(5, 2), rng);
  p.log_std[0] = 3.0;
  CHECK_THROWS_AS(p.Validate(), DimensionError);
  p.ClampLogStd();
  CHECK(p.log_std[0] == kLogStdMax);
  p.layers[1].weight = Mat::Zero(128, 7);
  CHECK_THROWS_AS(p.Validate(), DimensionError);
  CHECK_THROWS_AS(PolicyForward(InitParams(VictimPolicySpec(5, 2), rng), StateVec::Zero(4)),
                  DimensionError);
}
