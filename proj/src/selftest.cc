#include "gradmask/selftest.h"

#include <cmath>
#include <sstream>

#include "gradmask/agmr.h"
#include "gradmask/attacks.h"
#include "gradmask/checkpoint.h"
#include "gradmask/config.h"
#include "gradmask/rollout.h"

namespace gradmask {
namespace {

double MaxRelError(const Vec& a, const Vec& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

CheckResult Check(const std::string& name, bool ok, const std::string& detail) {
  return {name, ok, detail};
}

CheckResult GradientOracle(Rng& rng) {
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_int_distribution<int> width(1, 32);
  std::uniform_int_distribution<int> depth(1, 3);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    MlpSpec spec;
    spec.input_dim = dim(rng);
    const HeadKind heads[] = {HeadKind::kGaussianPolicy, HeadKind::kScalarValue,
                              HeadKind::kMaskProbability};
    spec.head = heads[trial % 3];
    spec.output_dim = spec.head == HeadKind::kScalarValue      ? 1
                      : spec.head == HeadKind::kMaskProbability ? spec.input_dim
                                                                : dim(rng);
    for (int l = depth(rng) - 1; l > 0; --l) spec.hidden.push_back(width(rng));
    MlpParams p = InitParams(spec, rng);
    ad::Graph g;
    const ad::NodeId x = g.Input(3, spec.input_dim);
    const MlpNodes net = BuildMlp(g, p, x);
    ad::NodeId loss = g.Sum(g.Mul(net.output, net.output));
    if (net.log_std) loss = g.Add(loss, g.Sum(g.Exp(*net.log_std)));
    g.SetOutput(loss);
    const ad::Tensor input = StandardNormal(3 * spec.input_dim, rng).reshaped(3, spec.input_dim);
    g.Forward(input);
    const ad::Gradient grad = g.Backward();
    worst = std::max(worst, MaxRelError(grad.wrt_inputs, ad::FiniteDiffOracle(g, input, 1e-4)));

    Vec flat = p.Flatten();
    Vec fd(flat.size());
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
      const double orig = flat[i];
      flat[i] = orig + 1e-4;
      p.Assign(flat);
      const double plus = g.Forward(input)(0, 0);
      flat[i] = orig - 1e-4;
      p.Assign(flat);
      const double minus = g.Forward(input)(0, 0);
      flat[i] = orig;
      fd[i] = (plus - minus) / 2e-4;
    }
    p.Assign(flat);
    worst = std::max(worst, MaxRelError(grad.wrt_params, fd));
  }
  std::ostringstream os;
  os << "max relative error " << worst;
  return Check("gradient_oracle", worst < 1e-3, os.str());
}

CheckResult GaeIdentity(Rng& rng) {
  double worst = 0.0;
  std::uniform_int_distribution<int> len(1, 50);
  std::bernoulli_distribution fell(0.5);
  for (int trial = 0; trial < 100; ++trial) {
    RolloutBuffer buf;
    EpisodeSpan span;
    span.end = static_cast<std::size_t>(len(rng));
    span.fell = fell(rng);
    buf.episodes.push_back(span);
    buf.transitions.resize(span.end);
    ValueEstimates v;
    v.v_s = StandardNormal(static_cast<Eigen::Index>(span.end), rng);
    v.v_next.resize(v.v_s.size());
    for (std::size_t t = 0; t + 1 < span.end; ++t) v.v_next[t] = v.v_s[t + 1];
    v.v_next[v.v_s.size() - 1] = span.fell ? 0.0 : StandardNormal(1, rng)[0];
    for (Transition& t : buf.transitions) t.r = StandardNormal(1, rng)[0];
    const Vec ret = ComputeReturns(buf, v, 0.99);
    const Vec adv = ComputeGae(buf, v, 0.99, 1.0);
    worst = std::max(worst, (adv - (ret - v.v_s)).cwiseAbs().maxCoeff());
  }
  std::ostringstream os;
  os << "max |A - (R - V)| " << worst;
  return Check("gae_lambda_one", worst < 1e-9, os.str());
}

CheckResult BetaBounds(Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  double lo = 1.0, hi = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    Vec g = StandardNormal(10, rng);
    Vec m(10);
    for (Eigen::Index d = 0; d < 10; ++d) m[d] = coin(rng) ? 1.0 : 0.0;
    const double b = ComputeBeta({g, m});
    lo = std::min(lo, b);
    hi = std::max(hi, b);
  }
  const bool ok = lo >= 0.5 && hi <= Sigmoid(1.0) + 1e-12;
  std::ostringstream os;
  os << "beta range [" << lo << ", " << hi << "]";
  return Check("beta_bounds", ok, os.str());
}

CheckResult Budgets(Rng& rng) {
  const MlpParams policy = InitParams(VictimPolicySpec(10, 2), rng);
  Adversary adv = InitAdversary(10, rng);
  AttackConfig cfg;
  AgmrConfig agmr;
  double worst = 0.0, worst_agmr = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const StateVec s = 2.0 * StandardNormal(10, rng);
    for (AttackVariant v : AllVariants()) {
      worst = std::max(worst, RunAttack(s, policy, cfg, v, rng).eta.lpNorm<Eigen::Infinity>());
    }
    worst_agmr = std::max(worst_agmr,
                          GenPerturbation(s, policy, adv.mask, agmr, MaskMode::kStochastic, rng)
                              .eta.lpNorm<Eigen::Infinity>());
  }
  const bool ok = worst <= cfg.epsilon + 1e-9 && worst_agmr <= agmr.epsilon * Sigmoid(1.0) + 1e-9;
  std::ostringstream os;
  os << "max |eta| baselines " << worst << ", agmr " << worst_agmr;
  return Check("attack_budget", ok, os.str());
}

CheckResult Reductions(Rng& rng) {
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
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const StateVec s = StandardNormal(10, rng);
    const std::uint64_t seed = rng();
    auto run = [&](const AttackConfig& c, AttackVariant v) {
      Rng r(seed);
      return RunAttack(s, policy, c, v, r).eta;
    };
    const Vec fgsm = run(base, AttackVariant::kFgsm);
    if (run(mi, AttackVariant::kMiFgsm) != fgsm) ++mismatches;
    if (run(pgd, AttackVariant::kPgd) != fgsm) ++mismatches;
    if (run(eot, AttackVariant::kEotPgd) != run(base, AttackVariant::kPgd)) ++mismatches;
  }
  return Check("reduction_identities", mismatches == 0,
               std::to_string(mismatches) + " mismatching outputs");
}

CheckResult DistractorIrrelevance(Rng& rng) {
  int mismatches = 0;
  for (EnvKind kind : {EnvKind::kPointRunner, EnvKind::kCartRunner}) {
    const EnvConfig cfg = DefaultEnvConfig(kind);
    for (int trial = 0; trial < 50; ++trial) {
      StateVec s = ResetState(cfg, rng);
      StateVec other = s;
      other.tail(cfg.distractor_dims) = 100.0 * StandardNormal(cfg.distractor_dims, rng);
      const ActionVec a = StandardNormal(cfg.action_dim(), rng);
      Rng r1(7), r2(7);
      const StepResult x = StepDynamics(cfg, RewardConfig{}, s, a, r1);
      const StepResult y = StepDynamics(cfg, RewardConfig{}, other, a, r2);
      if (x.next_state.head(kPhysicalDims) != y.next_state.head(kPhysicalDims) ||
          x.reward != y.reward) {
        ++mismatches;
      }
    }
  }
  return Check("distractor_irrelevance", mismatches == 0,
               std::to_string(mismatches) + " mismatching steps");
}

CheckResult CheckpointRoundTrip(Rng& rng) {
  const VictimAgent agent = InitVictim(10, 2, rng);
  const std::string bytes = SerializeCheckpoint(MakeVictimCheckpoint(agent));
  const VictimAgent loaded = VictimFromCheckpoint(ParseCheckpoint(bytes));
  const bool ok = loaded.policy == RoundToStorage(agent.policy) &&
                  loaded.value == RoundToStorage(agent.value) &&
                  SerializeCheckpoint(MakeVictimCheckpoint(loaded)) == bytes;
  return Check("checkpoint_round_trip", ok, ok ? "bit-exact" : "parameters differ");
}

CheckResult ConfigRoundTrip() {
  const RunConfig defaults;
  const std::string text = DumpConfig(defaults);
  const bool ok = DumpConfig(BuildRunConfig(ParseConfigText(text))) == text;
  return Check("config_round_trip", ok, ok ? "dump/parse stable" : "dump/parse differ");
}

}  // namespace

std::vector<CheckResult> RunSelftest(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckResult> out;
  out.push_back(GradientOracle(rng));
  out.push_back(GaeIdentity(rng));
  out.push_back(BetaBounds(rng));
  out.push_back(Budgets(rng));
  out.push_back(Reductions(rng));
  out.push_back(DistractorIrrelevance(rng));
  out.push_back(CheckpointRoundTrip(rng));
  out.push_back(ConfigRoundTrip());
  return out;
}

}  // namespace gradmask
