#include "gradmask/agmr.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gradmask/attacks.h"
#include "gradmask/errors.h"
#include "gradmask/victim_ppo.h"

namespace gradmask {
namespace {

Mat Gather(const Mat& m, const std::vector<Eigen::Index>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  }
  return out;
}

struct MaskLossGraph {
  ad::Graph graph;
  ad::NodeId states, masks, advantages;
};

// Bernoulli log-likelihood from logits z: M z - softplus(z). Entropy:
// softplus(z) - z sigmoid(z).
void BuildMaskLoss(MaskLossGraph& mg, const MlpParams& mask_net, Eigen::Index n,
                   double entropy_coef) {
  ad::Graph& g = mg.graph;
  const int d = mask_net.input_dim();
  mg.states = g.Input(n, d);
  mg.masks = g.Input(n, mask_net.output_dim());
  mg.advantages = g.Input(n, 1);
  const MlpNodes net = BuildMlp(g, mask_net, mg.states);
  const ad::NodeId z = g.Clamp(net.output, -kMaskLogitLimit, kMaskLogitLimit);
  const ad::NodeId sp = g.Softplus(z);
  const ad::NodeId loglik = g.RowSum(g.Sub(g.Mul(mg.masks, z), sp));
  const double inv_n = 1.0 / static_cast<double>(n);
  ad::NodeId loss = g.Scale(g.Sum(g.Mul(loglik, mg.advantages)), -inv_n);
  if (entropy_coef != 0.0) {
    const ad::NodeId entropy = g.Sum(g.Sub(sp, g.Mul(z, g.Sigmoid(z))));
    loss = g.Add(loss, g.Scale(entropy, -entropy_coef * inv_n));
  }
  g.SetOutput(loss);
}

void CheckMaskBatch(const MlpParams& mask_net, const Mat& states, const Mat& masks,
                    const Vec& advantages) {
  if (states.cols() != mask_net.input_dim() || masks.cols() != mask_net.output_dim() ||
      masks.rows() != states.rows() || advantages.size() != states.rows()) {
    throw DimensionError("mask batch shapes do not match");
  }
}

AdamOptions ClipOptions(double max_grad_norm) {
  AdamOptions o;
  o.max_grad_norm = max_grad_norm;
  return o;
}

}  // namespace

SoftMask SoftMask::Make(const Vec& binary, double beta) {
  SoftMask m;
  m.binary = binary;
  m.beta = beta;
  m.soft = (beta * binary.array() + (1.0 - beta) * (1.0 - binary.array())).matrix();
  return m;
}

void AgmrConfig::Validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("agmr.epsilon", "must be >= 0");
  if (!(smoothing_scale > 0.0 && smoothing_scale <= 1.0)) {
    throw ConfigError("agmr.smoothing_scale", "must be in (0, 1]");
  }
  if (train_steps < 0) throw ConfigError("agmr.train_steps", "must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("agmr.lr", "must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("agmr.gamma", "must be in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("agmr.lambda", "must be in [0, 1]");
  if (!(entropy_coef >= 0.0)) throw ConfigError("agmr.entropy_coef", "must be >= 0");
  if (!(eval_binarize_threshold > 0.0 && eval_binarize_threshold < 1.0)) {
    throw ConfigError("agmr.eval_binarize_threshold", "must be in (0, 1)");
  }
  if (episodes_per_iteration < 1) {
    throw ConfigError("agmr.episodes_per_iteration", "must be >= 1");
  }
  if (epochs_per_batch < 1) throw ConfigError("agmr.epochs_per_batch", "must be >= 1");
  if (minibatch < 1) throw ConfigError("agmr.minibatch", "must be >= 1");
}

double MaskLogLikelihood(const Vec& probs, const Vec& binary) {
  if (probs.size() != binary.size()) throw DimensionError("mask length mismatch");
  double ll = 0.0;
  for (Eigen::Index d = 0; d < probs.size(); ++d) {
    ll += binary[d] > 0.5 ? std::log(probs[d]) : std::log1p(-probs[d]);
  }
  return ll;
}

MaskSample SampleMask(const MlpParams& mask_net, const StateVec& s, MaskMode mode,
                      Rng& rng, double threshold) {
  MaskSample out;
  out.probs = MaskForward(mask_net, s).probs;
  out.binary.resize(out.probs.size());
  if (mode == MaskMode::kStochastic) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index d = 0; d < out.probs.size(); ++d) {
      out.binary[d] = u(rng) < out.probs[d] ? 1.0 : 0.0;
    }
  } else {
    out.binary = (out.probs.array() > threshold).cast<double>().matrix();
  }
  out.log_likelihood = MaskLogLikelihood(out.probs, out.binary);
  return out;
}

BetaTerms DecomposeGradient(const BetaInputs& in) {
  if (in.g.size() != in.binary_mask.size()) {
    throw DimensionError("mask length must equal gradient length");
  }
  BetaTerms t;
  const Vec inverse = (1.0 - in.binary_mask.array()).matrix();
  t.g_critical = in.binary_mask.cwiseProduct(in.g);
  t.g_redundant = inverse.cwiseProduct(in.g);
  const double n_critical = in.binary_mask.norm();
  const double n_redundant = inverse.norm();
  t.critical_mean = n_critical > 0.0 ? t.g_critical.norm() / n_critical : 0.0;
  t.redundant_mean = n_redundant > 0.0 ? t.g_redundant.norm() / n_redundant : 0.0;
  const double total = t.critical_mean + t.redundant_mean;
  t.ratio = total > 0.0 ? t.critical_mean / total : 0.5;
  t.beta = Sigmoid(t.ratio);
  return t;
}

double ComputeBeta(const BetaInputs& in) { return DecomposeGradient(in).beta; }

AgmrPerturbation GenPerturbation(const StateVec& s, const MlpParams& victim_policy,
                                 const MlpParams& mask_net, const AgmrConfig& cfg,
                                 MaskMode mode, Rng& rng) {
  if (s.size() != victim_policy.input_dim() || s.size() != mask_net.input_dim()) {
    throw DimensionError("state length does not match the victim or mask net");
  }
  AgmrPerturbation out;
  const ActionVec a = PolicyForward(victim_policy, s).mean;
  const StateVec smoothed = s + cfg.smoothing_scale * StandardNormal(s.size(), rng);
  const MaskSample m = SampleMask(mask_net, s, mode, rng, cfg.eval_binarize_threshold);
  out.mask_log_likelihood = m.log_likelihood;
  try {
    AttackObjective objective(victim_policy, AttackLoss::ActionMse(a));
    out.gradient = objective.Gradient(smoothed);
  } catch (const NonFiniteError&) {
    out.nonfinite_gradient = true;
    out.gradient = Vec::Zero(s.size());
  }
  out.mask = SoftMask::Make(m.binary, ComputeBeta({out.gradient, m.binary}));
  out.eta = cfg.epsilon * out.mask.soft.cwiseProduct(SignOf(out.gradient));
  return out;
}

Adversary InitAdversary(int state_dim, Rng& rng) {
  Adversary adv;
  adv.mask = InitParams(MaskNetSpec(state_dim), rng);
  adv.value = InitParams(AdversaryValueSpec(state_dim), rng);
  return adv;
}

double MaskSurrogateLoss(const MlpParams& mask_net, const Mat& states,
                         const Mat& masks, const Vec& advantages,
                         double entropy_coef) {
  CheckMaskBatch(mask_net, states, masks, advantages);
  MaskLossGraph mg;
  BuildMaskLoss(mg, mask_net, states.rows(), entropy_coef);
  mg.graph.SetInput(mg.states, states);
  mg.graph.SetInput(mg.masks, masks);
  mg.graph.SetInput(mg.advantages, advantages);
  return mg.graph.Forward()(0, 0);
}

Vec MaskSurrogateGradient(const MlpParams& mask_net, const Mat& states,
                          const Mat& masks, const Vec& advantages,
                          double entropy_coef) {
  CheckMaskBatch(mask_net, states, masks, advantages);
  MaskLossGraph mg;
  BuildMaskLoss(mg, mask_net, states.rows(), entropy_coef);
  mg.graph.SetInput(mg.states, states);
  mg.graph.SetInput(mg.masks, masks);
  mg.graph.SetInput(mg.advantages, advantages);
  mg.graph.Forward();
  return mg.graph.Backward().wrt_params;
}

AgmrLearner::AgmrLearner(const Adversary& adversary, const AgmrConfig& cfg)
    : cfg_(cfg),
      mask_opt_(adversary.mask.parameter_count(), ClipOptions(cfg.max_grad_norm)),
      value_opt_(adversary.value.parameter_count(), ClipOptions(cfg.max_grad_norm)) {
  cfg_.Validate();
}

AgmrStats AgmrLearner::Update(Adversary& adversary, const RolloutBuffer& buf, Rng& rng) {
  if (!buf.finalized()) throw StateError("AGMR update needs returns and advantages");
  const Eigen::Index n = static_cast<Eigen::Index>(buf.size());
  AgmrStats stats;
  if (n == 0) return stats;
  const int d = adversary.mask.output_dim();
  const Mat states = buf.States();
  Mat masks(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec& m = buf.transitions[i].mask_sample;
    if (m.size() != d) throw DimensionError("transition is missing its mask sample");
    masks.row(i) = m.transpose();
  }
  stats.value_loss_before = ValueLoss(adversary.value, states, buf.returns);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  double loss_sum = 0.0;
  int minibatches = 0;
  for (int epoch = 0; epoch < cfg_.epochs_per_batch; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += cfg_.minibatch) {
      const Eigen::Index m = std::min<Eigen::Index>(cfg_.minibatch, n - start);
      const std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + m);
      const Mat s = Gather(states, idx);
      const Vec ret = Gather(buf.returns, idx);
      const Vec adv = Gather(buf.advantages, idx);

      MaskLossGraph mg;
      BuildMaskLoss(mg, adversary.mask, m, cfg_.entropy_coef);
      mg.graph.SetInput(mg.states, s);
      mg.graph.SetInput(mg.masks, Gather(masks, idx));
      mg.graph.SetInput(mg.advantages, adv);
      const double loss = mg.graph.Forward()(0, 0);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "AGMR mask loss is " << loss << " at epoch " << epoch
           << ", minibatch offset " << start;
        throw NonFiniteError(os.str());
      }
      mask_opt_.Step(adversary.mask, mg.graph.Backward().wrt_params, cfg_.lr);
      value_opt_.Step(adversary.value, ValueLossGradient(adversary.value, s, ret), cfg_.lr);
      loss_sum += loss;
      ++minibatches;
    }
  }
  stats.mask_loss = loss_sum / std::max(minibatches, 1);
  stats.value_loss_after = ValueLoss(adversary.value, states, buf.returns);
  if (!std::isfinite(stats.value_loss_after)) {
    throw NonFiniteError("AGMR value loss is not finite after the update");
  }
  return stats;
}

AgmrAttacker::AgmrAttacker(const MlpParams& victim_policy, const MlpParams& mask_net,
                           AgmrConfig cfg, MaskMode mode)
    : victim_(victim_policy), mask_(mask_net), cfg_(cfg), mode_(mode) {
  cfg_.Validate();
}

Perturbation AgmrAttacker::Perturb(const StateVec& s, Rng& rng) const {
  AgmrPerturbation g = GenPerturbation(s, victim_, mask_, cfg_, mode_, rng);
  Perturbation p;
  p.eta = std::move(g.eta);
  p.mask = std::move(g.mask.binary);
  p.mask_log_likelihood = g.mask_log_likelihood;
  p.beta = g.mask.beta;
  p.nonfinite_gradient = g.nonfinite_gradient;
  return p;
}

AgmrTrainingResult TrainAgmr(const MlpParams& victim_policy, const EnvConfig& env_cfg,
                             const RewardConfig& reward_cfg, const AgmrConfig& cfg,
                             std::uint64_t seed,
                             const std::function<void(const AgmrCurveRow&)>& on_iteration) {
  cfg.Validate();
  Rng rng(seed);
  AgmrTrainingResult result;
  result.adversary = InitAdversary(env_cfg.state_dim(), rng);
  Adversary& adv = result.adversary;
  AgmrLearner learner(adv, cfg);
  Environment env(env_cfg, reward_cfg);
  const AgmrAttacker attacker(victim_policy, adv.mask, cfg, MaskMode::kStochastic);
  CollectOptions collect;
  collect.episodes = cfg.episodes_per_iteration;
  collect.horizon = env_cfg.max_steps;
  collect.mode = cfg.stochastic_victim ? ActionMode::kStochastic : ActionMode::kDeterministic;

  for (int it = 0; it < cfg.train_steps; ++it) {
    RolloutBuffer buf = Collect(env, victim_policy, &attacker, collect, rng);
    AgmrCurveRow row;
    row.iteration = it;
    double density = 0.0;
    for (Transition& t : buf.transitions) {
      t.r = AdvReward(t.victim_reward);
      row.victim_reward += t.victim_reward;
      row.mean_beta += t.beta;
      density += t.mask_sample.mean();
    }
    const double n = static_cast<double>(std::max<std::size_t>(buf.size(), 1));
    row.victim_reward /= n;
    row.mean_beta /= n;
    row.mask_density = density / n;
    Finalize(buf, adv.value, cfg.gamma, cfg.lambda);
    learner.Update(adv, buf, rng);
    result.curve.push_back(row);
    if (on_iteration) on_iteration(row);
  }
  return result;
}

}  // namespace gradmask
