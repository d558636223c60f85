#include "gradmask/attacks.h"

#include <array>
#include <cmath>
#include <stdexcept>

#include "gradmask/errors.h"

namespace gradmask {
namespace {

constexpr std::array<std::pair<AttackVariant, const char*>, 9> kNames = {{
    {AttackVariant::kRandom, "random"},
    {AttackVariant::kFgsm, "fgsm"},
    {AttackVariant::kRFgsm, "r_fgsm"},
    {AttackVariant::kMiFgsm, "mi_fgsm"},
    {AttackVariant::kNiFgsm, "ni_fgsm"},
    {AttackVariant::kDi2Fgsm, "di2_fgsm"},
    {AttackVariant::kPgd, "pgd"},
    {AttackVariant::kTpgd, "tpgd"},
    {AttackVariant::kEotPgd, "eot_pgd"},
}};

ad::Tensor AsRow(const Vec& v) { return v.transpose(); }

AttackLoss ActionMseLoss(const MlpParams& policy, const StateVec& s,
                         const AttackConfig& cfg, Rng& rng) {
  const PolicyOutput clean = PolicyForward(policy, s);
  if (cfg.reference == ReferenceAction::kMean) return AttackLoss::ActionMse(clean.mean);
  return AttackLoss::ActionMse(SampleAction(clean, rng).action);
}

// One signed ascent step followed by projection onto the budget box.
StateVec SignStep(const StateVec& x, const Vec& direction, double size,
                  const StateVec& center, double epsilon) {
  return ProjectBox(x + size * SignOf(direction), center, epsilon);
}

Vec L1Normalized(const Vec& g) {
  const double n = g.lpNorm<1>();
  return n > 0.0 ? Vec(g / n) : Vec(Vec::Zero(g.size()));
}

void CheckInputs(const StateVec& s, const MlpParams& policy) {
  if (s.size() != policy.input_dim()) {
    throw DimensionError("state length does not match the victim policy");
  }
}

}  // namespace

std::string VariantName(AttackVariant v) {
  for (const auto& [variant, name] : kNames) {
    if (variant == v) return name;
  }
  throw std::invalid_argument("unknown attack variant");
}

AttackVariant ParseVariant(const std::string& name) {
  for (const auto& [variant, n] : kNames) {
    if (name == n) return variant;
  }
  throw std::invalid_argument("unknown attack: " + name);
}

const std::vector<AttackVariant>& AllVariants() {
  static const std::vector<AttackVariant> all = [] {
    std::vector<AttackVariant> v;
    for (const auto& entry : kNames) v.push_back(entry.first);
    return v;
  }();
  return all;
}

void AttackConfig::Validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("attack.epsilon", "must be > 0");
  if (steps < 1) throw ConfigError("attack.steps", "must be >= 1");
  if (!std::isfinite(alpha)) throw ConfigError("attack.alpha", "must be finite");
  if (!(momentum_decay >= 0.0)) {
    throw ConfigError("attack.momentum_decay", "must be >= 0");
  }
  if (!(transform_prob >= 0.0 && transform_prob <= 1.0)) {
    throw ConfigError("attack.transform_prob", "must be in [0, 1]");
  }
  if (eot_samples < 1) throw ConfigError("attack.eot_samples", "must be >= 1");
  if (!std::isfinite(eot_noise_scale)) {
    throw ConfigError("attack.eot_noise_scale", "must be finite");
  }
  if (!(tpgd_init_scale >= 0.0)) {
    throw ConfigError("attack.tpgd_init_scale", "must be >= 0");
  }
}

AttackLoss AttackLoss::ActionMse(ActionVec a) {
  AttackLoss l;
  l.kind = LossKind::kActionMse;
  l.reference_action = std::move(a);
  return l;
}

AttackLoss AttackLoss::PolicyKl(PolicyOutput clean) {
  AttackLoss l;
  l.kind = LossKind::kPolicyKl;
  l.reference_policy = std::move(clean);
  return l;
}

double GaussianKl(const PolicyOutput& p, const PolicyOutput& q) {
  if (p.mean.size() != q.mean.size() || p.std.size() != p.mean.size() ||
      q.std.size() != q.mean.size()) {
    throw DimensionError("KL needs matching Gaussian dimensions");
  }
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.mean.size(); ++i) {
    const double d = p.mean[i] - q.mean[i];
    kl += std::log(q.std[i] / p.std[i]) +
          (p.std[i] * p.std[i] + d * d) / (2.0 * q.std[i] * q.std[i]) - 0.5;
  }
  return kl;
}

AttackObjective::AttackObjective(const MlpParams& policy, const AttackLoss& loss)
    : state_dim_(policy.input_dim()) {
  if (policy.head != HeadKind::kGaussianPolicy) {
    throw DimensionError("attack loss needs a Gaussian policy");
  }
  const Eigen::Index k = policy.output_dim();
  input_ = graph_.Input(1, state_dim_);
  const MlpNodes net = BuildMlp(graph_, policy, input_);
  if (loss.kind == LossKind::kActionMse) {
    if (loss.reference_action.size() != k) {
      throw DimensionError("reference action length does not match the policy");
    }
    graph_.SetOutput(
        graph_.SquaredError(net.output, graph_.Constant(AsRow(loss.reference_action))));
    return;
  }
  const PolicyOutput& ref = loss.reference_policy;
  if (ref.mean.size() != k || ref.std.size() != k) {
    throw DimensionError("reference policy length does not match the policy");
  }
  // sum_i log(sq/sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2
  const ad::NodeId log_std = *net.log_std;
  const ad::NodeId diff = graph_.Sub(net.output, graph_.Constant(AsRow(ref.mean)));
  const ad::NodeId num = graph_.Add(
      graph_.Mul(diff, diff), graph_.Constant(AsRow(ref.std.array().square().matrix())));
  const ad::NodeId quad =
      graph_.Scale(graph_.Mul(num, graph_.Exp(graph_.Scale(log_std, -2.0))), 0.5);
  const ad::NodeId log_ratio =
      graph_.Sub(log_std, graph_.Constant(AsRow(ref.std.array().log().matrix())));
  graph_.SetOutput(graph_.AddScalar(graph_.Sum(graph_.Add(quad, log_ratio)),
                                    -0.5 * static_cast<double>(k)));
}

double AttackObjective::Value(const StateVec& s) {
  if (s.size() != state_dim_) throw DimensionError("state length mismatch");
  return graph_.Forward(AsRow(s))(0, 0);
}

Vec AttackObjective::Gradient(const StateVec& s) {
  Value(s);
  return graph_.Backward().wrt_inputs;
}

StateVec ProjectBox(const StateVec& x, const StateVec& center, double epsilon) {
  return x.array().max(center.array() - epsilon).min(center.array() + epsilon).matrix();
}

PerturbVec RandomAttack(const StateVec& s, const AttackConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> u(-cfg.epsilon, cfg.epsilon);
  PerturbVec eta(s.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = u(rng);
  return eta;
}

AttackResult FgsmFamily(const StateVec& s, const MlpParams& victim_policy,
                        const AttackConfig& cfg, AttackVariant variant, Rng& rng) {
  CheckInputs(s, victim_policy);
  const double eps = cfg.epsilon;
  const double alpha = cfg.step_size();
  AttackObjective objective(victim_policy, ActionMseLoss(victim_policy, s, cfg, rng));
  StateVec x = s;
  try {
    switch (variant) {
      case AttackVariant::kFgsm:
        x = SignStep(s, objective.Gradient(s), eps, s, eps);
        break;
      case AttackVariant::kRFgsm: {
        const StateVec start = s + (eps / 2.0) * SignOf(StandardNormal(s.size(), rng));
        x = SignStep(start, objective.Gradient(start), eps / 2.0, s, eps);
        break;
      }
      case AttackVariant::kMiFgsm:
      case AttackVariant::kNiFgsm: {
        Vec momentum = Vec::Zero(s.size());
        for (int i = 0; i < cfg.steps; ++i) {
          const Vec g = variant == AttackVariant::kNiFgsm
                            ? objective.Gradient(x + alpha * cfg.momentum_decay * momentum)
                            : objective.Gradient(x);
          momentum = cfg.momentum_decay * momentum + L1Normalized(g);
          x = SignStep(x, momentum, alpha, s, eps);
        }
        break;
      }
      case AttackVariant::kDi2Fgsm: {
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        std::uniform_real_distribution<double> jitter(0.9, 1.1);
        for (int i = 0; i < cfg.steps; ++i) {
          StateVec probe = x;
          if (coin(rng) < cfg.transform_prob) {
            for (Eigen::Index d = 0; d < probe.size(); ++d) probe[d] *= jitter(rng);
          }
          x = SignStep(x, objective.Gradient(probe), alpha, s, eps);
        }
        break;
      }
      default:
        throw std::invalid_argument("not an fgsm-family variant: " + VariantName(variant));
    }
  } catch (const NonFiniteError&) {
    return {PerturbVec::Zero(s.size()), true};
  }
  return {x - s, false};
}

AttackResult PgdFamily(const StateVec& s, const MlpParams& victim_policy,
                       const AttackConfig& cfg, AttackVariant variant, Rng& rng) {
  CheckInputs(s, victim_policy);
  const double eps = cfg.epsilon;
  const double alpha = cfg.step_size();
  StateVec x = s;
  AttackLoss loss;
  switch (variant) {
    case AttackVariant::kPgd:
    case AttackVariant::kEotPgd:
      loss = ActionMseLoss(victim_policy, s, cfg, rng);
      if (cfg.pgd_random_init) x = s + RandomAttack(s, cfg, rng);
      break;
    case AttackVariant::kTpgd:
      loss = AttackLoss::PolicyKl(PolicyForward(victim_policy, s));
      if (cfg.tpgd_init_scale > 0.0) {
        x = ProjectBox(s + cfg.tpgd_init_scale * StandardNormal(s.size(), rng), s, eps);
      }
      break;
    default:
      throw std::invalid_argument("not a pgd-family variant: " + VariantName(variant));
  }
  AttackObjective objective(victim_policy, loss);
  try {
    for (int i = 0; i < cfg.steps; ++i) {
      Vec g;
      if (variant == AttackVariant::kEotPgd) {
        g = Vec::Zero(s.size());
        for (int j = 0; j < cfg.eot_samples; ++j) {
          g += objective.Gradient(x + cfg.eot_scale() * StandardNormal(s.size(), rng));
        }
        g /= static_cast<double>(cfg.eot_samples);
      } else {
        g = objective.Gradient(x);
      }
      x = SignStep(x, g, alpha, s, eps);
    }
  } catch (const NonFiniteError&) {
    return {PerturbVec::Zero(s.size()), true};
  }
  return {x - s, false};
}

AttackResult RunAttack(const StateVec& s, const MlpParams& victim_policy,
                       const AttackConfig& cfg, AttackVariant variant, Rng& rng) {
  switch (variant) {
    case AttackVariant::kRandom:
      CheckInputs(s, victim_policy);
      return {RandomAttack(s, cfg, rng), false};
    case AttackVariant::kPgd:
    case AttackVariant::kTpgd:
    case AttackVariant::kEotPgd:
      return PgdFamily(s, victim_policy, cfg, variant, rng);
    default:
      return FgsmFamily(s, victim_policy, cfg, variant, rng);
  }
}

BaselineAttacker::BaselineAttacker(const MlpParams& victim_policy, AttackConfig cfg,
                                   AttackVariant variant)
    : policy_(victim_policy), cfg_(cfg), variant_(variant) {
  cfg_.Validate();
}

Perturbation BaselineAttacker::Perturb(const StateVec& s, Rng& rng) const {
  AttackResult r = RunAttack(s, policy_, cfg_, variant_, rng);
  Perturbation p;
  p.eta = std::move(r.eta);
  p.nonfinite_gradient = r.nonfinite_gradient;
  return p;
}

}  // namespace gradmask
