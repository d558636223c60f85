#include "doctest.h"
#include "gradmask/rollout.h"
#include "gradmask/victim_ppo.h"

using namespace gradmask;

namespace {

// One synthetic episode with explicit values; v_next carries the bootstrap.
struct Synthetic {
  RolloutBuffer buf;
  ValueEstimates v;
};

Synthetic Episode(const std::vector<double>& rewards, const std::vector<double>& values,
                  double bootstrap, bool fell) {
  Synthetic out;
  const std::size_t n = rewards.size();
  out.buf.transitions.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.buf.transitions[i].r = rewards[i];
  out.buf.episodes.push_back({0, n, fell});
  out.v.v_s = Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(n));
  out.v.v_next.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i + 1 < n; ++i) out.v.v_next[i] = values[i + 1];
  out.v.v_next[static_cast<Eigen::Index>(n) - 1] = fell ? 0.0 : bootstrap;
  return out;
}

}  // namespace

TEST_CASE("returns: direct sum with bootstrap") {
  const Synthetic e = Episode({1.0, 1.0}, {0.0, 0.0}, 2.0, false);
  CHECK(ComputeReturns(e.buf, e.v, 0.5)[0] == doctest::Approx(2.0));
}

TEST_CASE("returns: gamma zero and fell single step") {
  const Synthetic e = Episode({0.3, -1.0, 2.0}, {5.0, 5.0, 5.0}, 9.0, false);
  const Vec r = ComputeReturns(e.buf, e.v, 0.0);
  CHECK(r[0] == 0.3);
  CHECK(r[1] == -1.0);
  CHECK(r[2] == 2.0);
  const Synthetic f = Episode({0.7}, {3.0}, 0.0, true);
  CHECK(ComputeReturns(f.buf, f.v, 0.99)[0] == 0.7);
}

TEST_CASE("gae: telescoping sum and one-step case") {
  const Synthetic e = Episode({1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}, 0.0, true);
  const Vec a = ComputeGae(e.buf, e.v, 1.0, 1.0);
  CHECK(a[0] == 3.0);
  CHECK(a[1] == 2.0);
  CHECK(a[2] == 1.0);
  const Synthetic g = Episode({0.5, -0.2, 0.1}, {0.3, 0.6, -0.4}, 1.5, false);
  const Vec td = ComputeGae(g.buf, g.v, 0.9, 0.0);
  for (Eigen::Index t = 0; t < 3; ++t) {
    CHECK(td[t] == doctest::Approx(g.buf.transitions[t].r + 0.9 * g.v.v_next[t] - g.v.v_s[t]));
  }
}

TEST_CASE("gae at lambda one equals returns minus values; return recursion holds") {
  Rng rng(21);
  std::uniform_int_distribution<int> len(1, 60);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = len(rng);
    std::vector<double> r(n), v(n);
    for (int i = 0; i < n; ++i) {
      r[i] = StandardNormal(1, rng)[0];
      v[i] = StandardNormal(1, rng)[0];
    }
    const Synthetic e = Episode(r, v, StandardNormal(1, rng)[0], coin(rng));
    const Vec ret = ComputeReturns(e.buf, e.v, 0.97);
    const Vec adv = ComputeGae(e.buf, e.v, 0.97, 1.0);
    CHECK((adv - (ret - e.v.v_s)).cwiseAbs().maxCoeff() < 1e-9);
    for (int t = 0; t + 1 < n; ++t) CHECK(std::abs(ret[t] - r[t] - 0.97 * ret[t + 1]) < 1e-9);
  }
}

TEST_CASE("returns restart at episode boundaries") {
  RolloutBuffer buf;
  buf.transitions.resize(3);
  for (Transition& t : buf.transitions) t.r = 1.0;
  buf.episodes = {{0, 2, true}, {2, 3, true}};
  ValueEstimates v{Vec::Zero(3), Vec::Zero(3)};
  const Vec r = ComputeReturns(buf, v, 1.0);
  CHECK(r[0] == 2.0);
  CHECK(r[1] == 1.0);
  CHECK(r[2] == 1.0);
}

TEST_CASE("collect without an attacker") {
  Environment env(DefaultEnvConfig(EnvKind::kPointRunner), RewardConfig{});
  Rng rng(1);
  const VictimAgent agent = InitVictim(env.state_dim(), env.action_dim(), rng);
  CollectOptions opt;
  opt.mode = ActionMode::kDeterministic;
  Rng a(5), b(5);
  const RolloutBuffer buf = Collect(env, agent.policy, nullptr, opt, a);
  REQUIRE(buf.episodes.size() == 1);
  CHECK(buf.size() == 400);
  CHECK_FALSE(buf.episodes[0].fell);
  for (const Transition& t : buf.transitions) CHECK(t.eta.isZero());
  const RolloutBuffer again = Collect(env, agent.policy, nullptr, opt, b);
  CHECK(again.States() == buf.States());
  CHECK(again.Actions() == buf.Actions());
}

TEST_CASE("collect stops at a fall") {
  // The policy always drives sideways at full force: the lateral position
  // passes the bound at the same step every time.
  EnvConfig cfg = DefaultEnvConfig(EnvKind::kPointRunner);
  cfg.init_jitter = 0.0;
  Environment env(cfg, RewardConfig{});
  Rng rng(1);
  VictimAgent agent = InitVictim(env.state_dim(), env.action_dim(), rng);
  for (DenseLayer& l : agent.policy.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  agent.policy.layers.back().bias[1] = 5.0;
  CollectOptions opt;
  opt.mode = ActionMode::kDeterministic;
  const RolloutBuffer buf = Collect(env, agent.policy, nullptr, opt, rng);
  double v = 0.0, y = 0.0;
  int expected = 0;
  while (std::abs(y) <= 1.0) {
    v += cfg.dt * (cfg.force_scale - cfg.drag * v);
    y += cfg.dt * v;
    ++expected;
  }
  CHECK(buf.size() == static_cast<std::size_t>(expected));
  CHECK(buf.episodes[0].fell);
  CHECK(buf.transitions.back().terminal);
}
