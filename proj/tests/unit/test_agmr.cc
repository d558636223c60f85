#include <cmath>

#include "doctest.h"
#include "gradmask/agmr.h"
#include "gradmask/errors.h"

using namespace gradmask;

namespace {

Vec V(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// A mask net whose last layer is zero except for the bias, so probs are
// sigmoid(bias) for every state.
MlpParams ConstantMask(const Vec& logits, Rng& rng) {
  MlpParams m = InitParams(MaskNetSpec(static_cast<int>(logits.size())), rng);
  m.layers.back().weight.setZero();
  m.layers.back().bias = logits;
  return m;
}

}  // namespace

TEST_CASE("beta fixed points") {
  CHECK(ComputeBeta({V({1.0, -1.0}), V({1.0, 0.0})}) == doctest::Approx(0.62246).epsilon(1e-5));
  CHECK(ComputeBeta({V({2.0, 0.0}), V({1.0, 0.0})}) == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(ComputeBeta({V({0.0, 0.0}), V({1.0, 0.0})}) == doctest::Approx(Sigmoid(0.5)));
  CHECK(ComputeBeta({V({0.3, -2.0}), V({1.0, 1.0})}) == doctest::Approx(Sigmoid(1.0)));
  CHECK(ComputeBeta({V({0.3, -2.0}), V({0.0, 0.0})}) == doctest::Approx(0.5));
}

TEST_CASE("beta stays in [sigmoid(0), sigmoid(1)]; decomposition is a partition") {
  Rng rng(1);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 10000; ++trial) {
    const Vec g = StandardNormal(8, rng) * std::exp(StandardNormal(1, rng)[0]);
    Vec m(8);
    for (Eigen::Index d = 0; d < 8; ++d) m[d] = coin(rng) ? 1.0 : 0.0;
    const BetaTerms t = DecomposeGradient({g, m});
    CHECK(t.beta >= 0.5);
    CHECK(t.beta <= 0.73107);
    CHECK(t.g_critical + t.g_redundant == g);
  }
}

TEST_CASE("soft mask is beta on masked dims and 1 - beta elsewhere") {
  const SoftMask m = SoftMask::Make(V({1.0, 0.0, 1.0}), 0.7);
  CHECK(m.soft[0] == 0.7);
  CHECK(m.soft[1] == doctest::Approx(0.3));
  CHECK(m.soft[2] == 0.7);
}

TEST_CASE("perturbation from a fixed mask and gradient sign") {
  const double beta = Sigmoid(1.0);
  const SoftMask m = SoftMask::Make(V({1.0, 0.0}), beta);
  const Vec eta = 0.125 * m.soft.cwiseProduct(SignOf(V({2.0, -5.0})));
  CHECK(eta[0] == doctest::Approx(0.091383).epsilon(1e-5));
  CHECK(eta[1] == doctest::Approx(-0.033618).epsilon(1e-5));
}

TEST_CASE("mask sampling") {
  Rng rng(2);
  const MlpParams half = ConstantMask(Vec::Zero(3), rng);
  const MaskSample det = SampleMask(half, StateVec::Zero(3), MaskMode::kDeterministic, rng);
  CHECK(det.binary.isZero());

  Vec logits = Vec::Constant(3, -2.0);
  logits[0] = std::log(0.99 / 0.01);
  const MlpParams skewed = ConstantMask(logits, rng);
  int ones = 0;
  for (int i = 0; i < 1000; ++i) {
    const MaskSample s = SampleMask(skewed, StateVec::Zero(3), MaskMode::kStochastic, rng);
    ones += static_cast<int>(s.binary[0]);
    CHECK(std::isfinite(s.log_likelihood));
    CHECK(s.log_likelihood <= 0.0);
    CHECK(s.log_likelihood == doctest::Approx(MaskLogLikelihood(s.probs, s.binary)));
  }
  CHECK(std::abs(ones / 1000.0 - 0.99) <= 0.03);
}

TEST_CASE("gen_perturbation budget and zero gradient") {
  Rng rng(3);
  const MlpParams victim = InitParams(VictimPolicySpec(6, 2), rng);
  const Adversary adv = InitAdversary(6, rng);
  AgmrConfig cfg;
  for (int trial = 0; trial < 500; ++trial) {
    const StateVec s = 2.0 * StandardNormal(6, rng);
    const AgmrPerturbation p = GenPerturbation(s, victim, adv.mask, cfg, MaskMode::kStochastic, rng);
    CHECK(p.eta.lpNorm<Eigen::Infinity>() < cfg.epsilon);
    CHECK(p.eta.lpNorm<Eigen::Infinity>() <= cfg.epsilon * 0.73107 + 1e-9);
  }
  // A victim with zero input weights has a zero input gradient.
  MlpParams flat = victim;
  flat.layers.front().weight.setZero();
  const AgmrPerturbation z =
      GenPerturbation(StandardNormal(6, rng), flat, adv.mask, cfg, MaskMode::kDeterministic, rng);
  CHECK(z.eta.isZero());
}

TEST_CASE("adversarial reward") {
  CHECK(AdvReward(1.2) == -1.2);
  CHECK(AdvReward(0.0) == 0.0);
  for (double r : {0.3, -7.5, 1e9}) CHECK(AdvReward(r) + r == 0.0);
}

TEST_CASE("mask surrogate structure") {
  Rng rng(4);
  const MlpParams mask = InitParams(MaskNetSpec(4), rng);
  const Mat states = StandardNormal(20, rng).reshaped(5, 4);
  Mat masks(5, 4);
  for (Eigen::Index i = 0; i < masks.size(); ++i) masks.data()[i] = (rng() & 1) ? 1.0 : 0.0;
  const Vec zero_adv = Vec::Zero(5);
  CHECK(MaskSurrogateGradient(mask, states, masks, zero_adv, 0.0).isZero());
  CHECK_FALSE(MaskSurrogateGradient(mask, states, masks, zero_adv, 0.01).isZero());

  // Loss value: -(1/N) sum A loglik - c (1/N) sum H.
  const Vec adv = StandardNormal(5, rng);
  double expected = 0.0;
  for (int i = 0; i < 5; ++i) {
    const Vec p = MaskForward(mask, states.row(i).transpose()).probs;
    double h = 0.0;
    for (Eigen::Index d = 0; d < 4; ++d) h -= p[d] * std::log(p[d]) + (1 - p[d]) * std::log(1 - p[d]);
    expected += -adv[i] * MaskLogLikelihood(p, masks.row(i).transpose()) - 0.01 * h;
  }
  CHECK(MaskSurrogateLoss(mask, states, masks, adv, 0.01) ==
        doctest::Approx(expected / 5.0).epsilon(1e-10));
}

TEST_CASE("a positive advantage raises the sampled mask's likelihood") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    MlpParams mask = InitParams(MaskNetSpec(4), rng);
    const StateVec s = StandardNormal(4, rng);
    const MaskSample m = SampleMask(mask, s, MaskMode::kStochastic, rng);
    const Mat states = s.transpose();
    const Mat masks = m.binary.transpose();
    const double before = m.log_likelihood;
    mask.Assign(mask.Flatten() -
                1e-3 * MaskSurrogateGradient(mask, states, masks, Vec::Ones(1), 0.0));
    CHECK(MaskLogLikelihood(MaskForward(mask, s).probs, m.binary) > before);
  }
}

TEST_CASE("one learner update lowers the adversary value loss") {
  EnvConfig env_cfg = DefaultEnvConfig(EnvKind::kPointRunner);
  env_cfg.max_steps = 60;
  Rng rng(6);
  const MlpParams victim = InitParams(VictimPolicySpec(env_cfg.state_dim(), 2), rng);
  Adversary adv = InitAdversary(env_cfg.state_dim(), rng);
  AgmrConfig cfg;
  AgmrAttacker attacker(victim, adv.mask, cfg, MaskMode::kStochastic);
  Environment env(env_cfg, RewardConfig{});
  CollectOptions co;
  co.mode = ActionMode::kDeterministic;
  RolloutBuffer buf = Collect(env, victim, &attacker, co, rng);
  for (Transition& t : buf.transitions) t.r = AdvReward(t.victim_reward);
  Finalize(buf, adv.value, cfg.gamma, cfg.lambda);
  AgmrLearner learner(adv, cfg);
  const AgmrStats s = learner.Update(adv, buf, rng);
  CHECK(s.value_loss_after < s.value_loss_before);
}

TEST_CASE("training leaves the victim untouched and is reproducible") {
  EnvConfig env_cfg = DefaultEnvConfig(EnvKind::kPointRunner);
  env_cfg.max_steps = 40;
  Rng rng(7);
  const MlpParams victim = InitParams(VictimPolicySpec(env_cfg.state_dim(), 2), rng);
  const MlpParams snapshot = victim;
  AgmrConfig cfg;
  cfg.train_steps = 5;
  const AgmrTrainingResult a = TrainAgmr(victim, env_cfg, RewardConfig{}, cfg, 11);
  const AgmrTrainingResult b = TrainAgmr(victim, env_cfg, RewardConfig{}, cfg, 11);
  CHECK(victim == snapshot);
  CHECK(a.curve.size() == 5);
  CHECK(a.adversary.mask == b.adversary.mask);
  CHECK(a.adversary.value == b.adversary.value);
  for (const AgmrCurveRow& row : a.curve) {
    CHECK(row.mean_beta >= 0.5);
    CHECK(row.mean_beta <= 0.73107);
    CHECK(row.mask_density >= 0.0);
    CHECK(row.mask_density <= 1.0);
  }
}

TEST_CASE("config validation names the key") {
  AgmrConfig cfg;
  cfg.smoothing_scale = 2.0;
  try {
    cfg.Validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "agmr.smoothing_scale");
  }
}
