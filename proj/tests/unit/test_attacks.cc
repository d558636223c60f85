#include <cmath>

#include "doctest.h"
#include "gradmask/attacks.h"
#include "gradmask/errors.h"

using namespace gradmask;

namespace {

// a = W s with unit std: a linear victim.
MlpParams LinearPolicy(const Mat& w) {
  MlpParams p;
  p.head = HeadKind::kGaussianPolicy;
  p.layers = {{w, Vec::Zero(w.rows())}};
  p.log_std = Vec::Zero(w.rows());
  return p;
}

}  // namespace

TEST_CASE("variant names round trip") {
  CHECK(AllVariants().size() == 9);
  for (AttackVariant v : AllVariants()) CHECK(ParseVariant(VariantName(v)) == v);
  CHECK_THROWS(ParseVariant("cw"));
}

TEST_CASE("losses vanish at the reference") {
  Rng rng(1);
  const MlpParams policy = InitParams(VictimPolicySpec(5, 2), rng);
  const StateVec s = StandardNormal(5, rng);
  const PolicyOutput clean = PolicyForward(policy, s);
  CHECK(AttackObjective(policy, AttackLoss::ActionMse(clean.mean)).Value(s) == 0.0);
  CHECK(std::abs(AttackObjective(policy, AttackLoss::PolicyKl(clean)).Value(s)) < 1e-12);
  CHECK(GaussianKl(clean, clean) == 0.0);
}

TEST_CASE("closed-form Gaussian KL") {
  const PolicyOutput p{ActionVec::Zero(1), Vec::Ones(1)};
  const PolicyOutput q{ActionVec::Ones(1), Vec::Ones(1)};
  CHECK(GaussianKl(p, q) == doctest::Approx(0.5));
  // The graph form agrees with the closed form away from the reference.
  Rng rng(2);
  const MlpParams policy = InitParams(VictimPolicySpec(4, 2), rng);
  const StateVec s = StandardNormal(4, rng);
  const StateVec x = s + 0.3 * StandardNormal(4, rng);
  const PolicyOutput clean = PolicyForward(policy, s);
  CHECK(AttackObjective(policy, AttackLoss::PolicyKl(clean)).Value(x) ==
        doctest::Approx(GaussianKl(PolicyForward(policy, x), clean)).epsilon(1e-10));
}

TEST_CASE("fgsm takes the sign of the gradient") {
  // Loss ||W x - a||^2 with W = I and a = x0 - [0.15, -0.1, 0]: the gradient
  // at x0 is 2 (x0 - a) = [0.3, -0.2, 0].
  const MlpParams policy = LinearPolicy(Mat::Identity(3, 3));
  const StateVec s = StateVec::Constant(3, 0.4);
  Vec offset(3);
  offset << 0.15, -0.1, 0.0;
  AttackObjective objective(policy, AttackLoss::ActionMse(s - offset));
  const Vec g = objective.Gradient(s);
  CHECK(g[0] == doctest::Approx(0.3));
  CHECK(g[1] == doctest::Approx(-0.2));
  CHECK(g[2] == 0.0);
  const StateVec x = ProjectBox(s + 0.125 * SignOf(g), s, 0.125);
  Vec expected(3);
  expected << 0.125, -0.125, 0.0;
  CHECK((x - s - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fgsm with the mean reference is zero at the clean state") {
  Rng rng(3);
  const MlpParams policy = InitParams(VictimPolicySpec(5, 2), rng);
  AttackConfig cfg;
  cfg.reference = ReferenceAction::kMean;
  const StateVec s = StandardNormal(5, rng);
  CHECK(RunAttack(s, policy, cfg, AttackVariant::kFgsm, rng).eta.isZero());
}

TEST_CASE("fgsm ascends the loss on a linear victim") {
  Rng rng(4);
  const MlpParams policy = LinearPolicy(StandardNormal(12, rng).reshaped(2, 6));
  AttackConfig cfg;
  cfg.epsilon = 0.01;
  for (int trial = 0; trial < 100; ++trial) {
    const StateVec s = StandardNormal(6, rng);
    Rng fork = rng;
    const ActionVec ref = SampleAction(PolicyForward(policy, s), fork).action;
    const PerturbVec eta = RunAttack(s, policy, cfg, AttackVariant::kFgsm, rng).eta;
    AttackObjective objective(policy, AttackLoss::ActionMse(ref));
    CHECK(objective.Value(s + eta) >= objective.Value(s));
  }
}

TEST_CASE("random attack: support, mean and determinism") {
  AttackConfig cfg;
  Rng rng(5);
  const StateVec s = StateVec::Zero(4);
  Vec sum = Vec::Zero(4);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const PerturbVec eta = RandomAttack(s, cfg, rng);
    CHECK(eta.lpNorm<Eigen::Infinity>() <= cfg.epsilon);
    sum += eta;
  }
  const double tol = 3.0 * (2.0 * cfg.epsilon / std::sqrt(12.0)) / std::sqrt(double(n));
  CHECK((sum / n).cwiseAbs().maxCoeff() < tol);
  Rng a(9), b(9);
  CHECK(RandomAttack(s, cfg, a) == RandomAttack(s, cfg, b));
}

TEST_CASE("every variant respects the budget and is deterministic") {
  Rng rng(6);
  const MlpParams policy = InitParams(VictimPolicySpec(10, 2), rng);
  AttackConfig cfg;
  cfg.steps = 3;
  for (int trial = 0; trial < 300; ++trial) {
    const StateVec s = 3.0 * StandardNormal(10, rng);
    const std::uint64_t seed = rng();
    for (AttackVariant v : AllVariants()) {
      Rng a(seed), b(seed);
      const PerturbVec eta = RunAttack(s, policy, cfg, v, a).eta;
      CHECK(eta.lpNorm<Eigen::Infinity>() <= cfg.epsilon + 1e-9);
      CHECK(eta == RunAttack(s, policy, cfg, v, b).eta);
    }
  }
}

TEST_CASE("reduction identities hold exactly") {
  Rng rng(7);
  const MlpParams policy = InitParams(VictimPolicySpec(10, 2), rng);
  AttackConfig base;
  AttackConfig mi = base;
  mi.steps = 1;
  mi.momentum_decay = 0.0;
  mi.alpha = base.epsilon;
  AttackConfig pgd = mi;
  pgd.pgd_random_init = false;
  AttackConfig eot = base;
  eot.eot_samples = 1;
  eot.eot_noise_scale = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const StateVec s = StandardNormal(10, rng);
    const std::uint64_t seed = rng();
    auto run = [&](const AttackConfig& c, AttackVariant v) {
      Rng r(seed);
      return RunAttack(s, policy, c, v, r).eta;
    };
    const PerturbVec fgsm = run(base, AttackVariant::kFgsm);
    CHECK(run(mi, AttackVariant::kMiFgsm) == fgsm);
    CHECK(run(pgd, AttackVariant::kPgd) == fgsm);
    CHECK(run(eot, AttackVariant::kEotPgd) == run(base, AttackVariant::kPgd));
  }
}

TEST_CASE("tpgd moves off the clean state") {
  Rng rng(8);
  const MlpParams policy = InitParams(VictimPolicySpec(6, 2), rng);
  const StateVec s = StandardNormal(6, rng);
  const PerturbVec eta = RunAttack(s, policy, AttackConfig{}, AttackVariant::kTpgd, rng).eta;
  CHECK_FALSE(eta.isZero());
  AttackObjective kl(policy, AttackLoss::PolicyKl(PolicyForward(policy, s)));
  CHECK(kl.Value(s + eta) > kl.Value(s));
}

TEST_CASE("r_fgsm stays within the box after its random start") {
  const MlpParams policy = LinearPolicy(Mat::Identity(2, 2));
  AttackConfig cfg;
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const StateVec s = StandardNormal(2, rng);
    const PerturbVec eta = RunAttack(s, policy, cfg, AttackVariant::kRFgsm, rng).eta;
    // Start at +-eps/2 and step +-eps/2: every coordinate ends at 0 or +-eps.
    for (Eigen::Index i = 0; i < 2; ++i) {
      const double a = std::abs(eta[i]);
      CHECK((a < 1e-15 || std::abs(a - cfg.epsilon) < 1e-15));
    }
  }
}

TEST_CASE("bad inputs") {
  Rng rng(11);
  const MlpParams policy = InitParams(VictimPolicySpec(6, 2), rng);
  CHECK_THROWS_AS(RunAttack(StateVec::Zero(5), policy, AttackConfig{}, AttackVariant::kPgd, rng),
                  DimensionError);
  AttackConfig cfg;
  cfg.epsilon = -1.0;
  try {
    cfg.Validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "attack.epsilon");
  }
}
