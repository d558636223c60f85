#include "doctest.h"
#include "gradmask/errors.h"
#include "gradmask/victim_ppo.h"

using namespace gradmask;

namespace {

struct Batch {
  Mat obs;
  Mat actions;
  Vec old_log_probs;
  Vec advantages;
};

Batch RandomBatch(const MlpParams& policy, int n, Rng& rng) {
  Batch b;
  b.obs = StandardNormal(n * policy.input_dim(), rng).reshaped(n, policy.input_dim());
  b.actions.resize(n, policy.output_dim());
  b.old_log_probs.resize(n);
  for (int i = 0; i < n; ++i) {
    const PolicyOutput out = PolicyForward(policy, b.obs.row(i).transpose());
    const ActionSample a = SampleAction(out, rng);
    b.actions.row(i) = a.action.transpose();
    b.old_log_probs[i] = a.log_prob;
  }
  b.advantages = StandardNormal(n, rng);
  return b;
}

}  // namespace

TEST_CASE("ratio is one before any update") {
  Rng rng(1);
  const MlpParams policy = InitParams(VictimPolicySpec(6, 2), rng);
  const Batch b = RandomBatch(policy, 32, rng);
  const SurrogateTerms t =
      EvaluateSurrogate(policy, b.obs, b.actions, b.old_log_probs, b.advantages, 0.2);
  CHECK((t.ratio.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((t.clipped - t.unclipped).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("surrogate never exceeds either branch") {
  Rng rng(2);
  const MlpParams policy = InitParams(VictimPolicySpec(6, 2), rng);
  Batch b = RandomBatch(policy, 64, rng);
  b.old_log_probs += 0.5 * StandardNormal(64, rng);
  const SurrogateTerms t =
      EvaluateSurrogate(policy, b.obs, b.actions, b.old_log_probs, b.advantages, 0.2);
  for (Eigen::Index i = 0; i < 64; ++i) {
    CHECK(t.objective[i] <= t.unclipped[i]);
    CHECK(t.objective[i] <= t.clipped[i]);
    const double clipped_ratio = std::clamp(t.ratio[i], 0.8, 1.2);
    CHECK(t.clipped[i] == doctest::Approx(clipped_ratio * b.advantages[i]));
  }
}

TEST_CASE("a clipped sample contributes no gradient") {
  Rng rng(3);
  const MlpParams policy = InitParams(VictimPolicySpec(4, 1), rng);
  Batch b = RandomBatch(policy, 1, rng);
  b.advantages[0] = 1.0;
  b.old_log_probs[0] -= 0.5;  // ratio = e^0.5 > 1.2
  const Vec g = SurrogateGradient(policy, b.obs, b.actions, b.old_log_probs, b.advantages, 0.2, 0.0);
  CHECK(g.isZero());
  b.old_log_probs[0] += 0.5;
  const Vec live =
      SurrogateGradient(policy, b.obs, b.actions, b.old_log_probs, b.advantages, 0.2, 0.0);
  CHECK_FALSE(live.isZero());
}

TEST_CASE("value loss descends after one small step") {
  Rng rng(4);
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    MlpParams value = InitParams(VictimValueSpec(5), rng);
    const Mat states = StandardNormal(40, rng).reshaped(8, 5);
    const Vec returns = StandardNormal(8, rng);
    const double before = ValueLoss(value, states, returns);
    value.Assign(value.Flatten() - 1e-3 * ValueLossGradient(value, states, returns));
    if (ValueLoss(value, states, returns) > before) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("each transition is visited epochs_per_batch times") {
  EnvConfig env_cfg = DefaultEnvConfig(EnvKind::kPointRunner);
  env_cfg.max_steps = 50;
  Environment env(env_cfg, RewardConfig{});
  Rng rng(5);
  VictimAgent agent = InitVictim(env.state_dim(), env.action_dim(), rng);
  PpoConfig cfg;
  cfg.minibatch = 32;
  CollectOptions co;
  co.episodes = 3;
  RolloutBuffer buf = Collect(env, agent.policy, nullptr, co, rng);
  Finalize(buf, agent.value, cfg.gamma, cfg.lambda);
  PpoLearner learner(agent, cfg);
  const PpoStats s = learner.Update(agent, buf, 1e-4, rng);
  CHECK(s.sample_visits == static_cast<long>(buf.size()) * cfg.epochs_per_batch);
  CHECK(s.value_loss_after <= s.value_loss_before);
}

TEST_CASE("training is deterministic for a seed") {
  EnvConfig env = DefaultEnvConfig(EnvKind::kPointRunner);
  env.max_steps = 40;
  PpoConfig cfg;
  cfg.total_steps = 800;
  const VictimTrainingResult a = TrainVictim(env, RewardConfig{}, cfg, 7);
  const VictimTrainingResult b = TrainVictim(env, RewardConfig{}, cfg, 7);
  CHECK(a.agent.policy == b.agent.policy);
  CHECK(a.agent.value == b.agent.value);
  CHECK(a.curve.size() == b.curve.size());
  CHECK_FALSE(a.curve.empty());
}

TEST_CASE("config validation names the key") {
  PpoConfig cfg;
  cfg.clip = 0.0;
  try {
    cfg.Validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "ppo.clip");
  }
}
