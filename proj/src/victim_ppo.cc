#include "gradmask/victim_ppo.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>
#include <sstream>

#include "gradmask/errors.h"

namespace gradmask {
namespace {

struct SurrogateGraph {
  ad::Graph graph;
  ad::NodeId obs, actions, old_log_probs, advantages;
  ad::NodeId ratio, unclipped, clipped, objective, loss;
};

// loss = -(1/n) sum min(rho * A, clip(rho) * A) - entropy_coef * sum(log_std)
std::unique_ptr<SurrogateGraph> BuildSurrogate(const MlpParams& policy,
                                               Eigen::Index n, double clip,
                                               double entropy_coef) {
  auto sg = std::make_unique<SurrogateGraph>();
  ad::Graph& g = sg->graph;
  const Eigen::Index k = policy.output_dim();
  sg->obs = g.Input(n, policy.input_dim());
  sg->actions = g.Input(n, k);
  sg->old_log_probs = g.Input(n, 1);
  sg->advantages = g.Input(n, 1);
  const MlpNodes net = BuildMlp(g, policy, sg->obs);
  const ad::NodeId log_std = *net.log_std;
  const ad::NodeId z = g.Mul(g.Sub(sg->actions, net.output),
                             g.Exp(g.Scale(log_std, -1.0)));
  const ad::NodeId log_prob = g.AddScalar(
      g.Sub(g.Scale(g.RowSum(g.Mul(z, z)), -0.5), g.Sum(log_std)),
      -0.5 * static_cast<double>(k) * std::log(2.0 * std::numbers::pi));
  sg->ratio = g.Exp(g.Sub(log_prob, sg->old_log_probs));
  sg->unclipped = g.Mul(sg->ratio, sg->advantages);
  sg->clipped = g.Mul(g.Clamp(sg->ratio, 1.0 - clip, 1.0 + clip), sg->advantages);
  sg->objective = g.Min(sg->unclipped, sg->clipped);
  ad::NodeId loss = g.Scale(g.Sum(sg->objective), -1.0 / static_cast<double>(n));
  if (entropy_coef != 0.0) {
    loss = g.Add(loss, g.Scale(g.Sum(log_std), -entropy_coef));
  }
  sg->loss = loss;
  g.SetOutput(loss);
  return sg;
}

void SetSurrogateInputs(SurrogateGraph& sg, const Mat& obs, const Mat& actions,
                        const Vec& old_log_probs, const Vec& advantages) {
  sg.graph.SetInput(sg.obs, obs);
  sg.graph.SetInput(sg.actions, actions);
  sg.graph.SetInput(sg.old_log_probs, old_log_probs);
  sg.graph.SetInput(sg.advantages, advantages);
}

struct ValueGraph {
  ad::Graph graph;
  ad::NodeId states, returns, loss;
};

std::unique_ptr<ValueGraph> BuildValueLoss(const MlpParams& value, Eigen::Index n) {
  auto vg = std::make_unique<ValueGraph>();
  ad::Graph& g = vg->graph;
  vg->states = g.Input(n, value.input_dim());
  vg->returns = g.Input(n, 1);
  const MlpNodes net = BuildMlp(g, value, vg->states);
  vg->loss = g.Scale(g.SquaredError(net.output, vg->returns),
                     1.0 / static_cast<double>(n));
  g.SetOutput(vg->loss);
  return vg;
}

template <typename Rows>
Mat GatherRows(const Mat& m, const Rows& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  }
  return out;
}

template <typename Rows>
Vec GatherVec(const Vec& v, const Rows& idx) {
  Vec out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

}  // namespace

void PpoConfig::Validate() const {
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("ppo.clip", "must be in (0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma", "must be in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("ppo.lambda", "must be in [0, 1]");
  if (!(lr_initial > 0.0)) throw ConfigError("ppo.lr_initial", "must be > 0");
  if (epochs_per_batch < 1) throw ConfigError("ppo.epochs_per_batch", "must be >= 1");
  if (minibatch < 1) throw ConfigError("ppo.minibatch", "must be >= 1");
  if (total_steps < 1) throw ConfigError("ppo.total_steps", "must be >= 1");
  if (episodes_per_iteration < 1) {
    throw ConfigError("ppo.episodes_per_iteration", "must be >= 1");
  }
  if (!(entropy_coef >= 0.0)) throw ConfigError("ppo.entropy_coef", "must be >= 0");
}

VictimAgent InitVictim(int state_dim, int action_dim, Rng& rng) {
  VictimAgent agent;
  agent.policy = InitParams(VictimPolicySpec(state_dim, action_dim), rng);
  agent.value = InitParams(VictimValueSpec(state_dim), rng);
  return agent;
}

SurrogateTerms EvaluateSurrogate(const MlpParams& policy, const Mat& observations,
                                 const Mat& actions, const Vec& old_log_probs,
                                 const Vec& advantages, double clip) {
  auto sg = BuildSurrogate(policy, observations.rows(), clip, 0.0);
  SetSurrogateInputs(*sg, observations, actions, old_log_probs, advantages);
  sg->graph.Forward();
  SurrogateTerms t;
  t.ratio = sg->graph.Value(sg->ratio).col(0);
  t.unclipped = sg->graph.Value(sg->unclipped).col(0);
  t.clipped = sg->graph.Value(sg->clipped).col(0);
  t.objective = sg->graph.Value(sg->objective).col(0);
  return t;
}

Vec SurrogateGradient(const MlpParams& policy, const Mat& observations,
                      const Mat& actions, const Vec& old_log_probs,
                      const Vec& advantages, double clip, double entropy_coef) {
  auto sg = BuildSurrogate(policy, observations.rows(), clip, entropy_coef);
  SetSurrogateInputs(*sg, observations, actions, old_log_probs, advantages);
  sg->graph.Forward();
  return sg->graph.Backward().wrt_params;
}

double ValueLoss(const MlpParams& value, const Mat& states, const Vec& returns) {
  return (ValueBatch(value, states) - returns).squaredNorm() /
         static_cast<double>(states.rows());
}

Vec ValueLossGradient(const MlpParams& value, const Mat& states, const Vec& returns) {
  auto vg = BuildValueLoss(value, states.rows());
  vg->graph.SetInput(vg->states, states);
  vg->graph.SetInput(vg->returns, returns);
  vg->graph.Forward();
  return vg->graph.Backward().wrt_params;
}

PpoLearner::PpoLearner(const VictimAgent& agent, const PpoConfig& cfg)
    : cfg_(cfg),
      policy_opt_(agent.policy.parameter_count(), AdamOptions{.max_grad_norm = cfg.max_grad_norm}),
      value_opt_(agent.value.parameter_count(), AdamOptions{.max_grad_norm = cfg.max_grad_norm}) {
  cfg_.Validate();
}

PpoStats PpoLearner::Update(VictimAgent& agent, const RolloutBuffer& buf,
                            double lr, Rng& rng) {
  if (!buf.finalized()) throw StateError("PPO update needs returns and advantages");
  const Eigen::Index n = static_cast<Eigen::Index>(buf.size());
  if (n == 0) return {};
  const Mat obs = buf.Observations();
  const Mat states = buf.States();
  const Mat actions = buf.Actions();
  Vec old_log_probs(n);
  for (Eigen::Index i = 0; i < n; ++i) old_log_probs[i] = buf.transitions[i].log_prob;

  Vec adv = buf.advantages;
  const double mean = adv.mean();
  const double sd = std::sqrt((adv.array() - mean).square().mean());
  adv = (adv.array() - mean) / (sd + 1e-8);

  PpoStats stats;
  stats.value_loss_before = ValueLoss(agent.value, states, buf.returns);

  std::map<Eigen::Index, std::unique_ptr<SurrogateGraph>> surrogates;
  std::map<Eigen::Index, std::unique_ptr<ValueGraph>> values;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  double loss_sum = 0.0;
  long clipped = 0;
  int minibatches = 0;
  for (int epoch = 0; epoch < cfg_.epochs_per_batch; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += cfg_.minibatch) {
      const Eigen::Index m = std::min<Eigen::Index>(cfg_.minibatch, n - start);
      std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + m);

      auto& sg = surrogates[m];
      if (!sg) sg = BuildSurrogate(agent.policy, m, cfg_.clip, cfg_.entropy_coef);
      SetSurrogateInputs(*sg, GatherRows(obs, idx), GatherRows(actions, idx),
                         GatherVec(old_log_probs, idx), GatherVec(adv, idx));
      const double loss = sg->graph.Forward()(0, 0);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "PPO policy loss is " << loss << " at epoch " << epoch
           << ", minibatch offset " << start;
        throw NonFiniteError(os.str());
      }
      const Vec& ratio = sg->graph.Value(sg->ratio).col(0);
      clipped += ((ratio.array() - 1.0).abs() > cfg_.clip).count();
      policy_opt_.Step(agent.policy, sg->graph.Backward().wrt_params, lr);

      auto& vg = values[m];
      if (!vg) vg = BuildValueLoss(agent.value, m);
      vg->graph.SetInput(vg->states, GatherRows(states, idx));
      vg->graph.SetInput(vg->returns, GatherVec(buf.returns, idx));
      const double vloss = vg->graph.Forward()(0, 0);
      if (!std::isfinite(vloss)) throw NonFiniteError("PPO value loss is not finite");
      value_opt_.Step(agent.value, vg->graph.Backward().wrt_params, lr);

      loss_sum += loss;
      stats.sample_visits += m;
      ++minibatches;
    }
  }
  stats.policy_loss = loss_sum / std::max(minibatches, 1);
  stats.clip_fraction = static_cast<double>(clipped) / static_cast<double>(stats.sample_visits);
  stats.value_loss_after = ValueLoss(agent.value, states, buf.returns);

  Vec new_log_probs(n);
  const Mat means = PolicyMeanBatch(agent.policy, obs);
  PolicyOutput out{Vec(), agent.policy.log_std.array().exp()};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.mean = means.row(i).transpose();
    new_log_probs[i] = GaussianLogProb(out, actions.row(i).transpose());
  }
  stats.approx_kl = (old_log_probs - new_log_probs).mean();
  return stats;
}

CurveRow SummarizeBatch(const RolloutBuffer& buf) {
  CurveRow row;
  if (buf.size() == 0) return row;
  double r = 0.0;
  double v = 0.0;
  for (const Transition& t : buf.transitions) {
    r += t.victim_reward;
    v += t.forward_velocity;
  }
  row.mean_reward = r / static_cast<double>(buf.size());
  row.mean_velocity = v / static_cast<double>(buf.size());
  for (const EpisodeSpan& ep : buf.episodes) row.falls += ep.fell ? 1 : 0;
  return row;
}

std::vector<CurveRow> RunPpo(VictimAgent& agent, const EnvConfig& env_cfg,
                             const RewardConfig& reward_cfg, const PpoConfig& cfg,
                             const TrainingOptions& options, Rng& rng) {
  cfg.Validate();
  Environment env(env_cfg, reward_cfg);
  PpoLearner learner(agent, cfg);
  CollectOptions collect;
  collect.episodes = cfg.episodes_per_iteration;
  collect.horizon = env_cfg.max_steps;
  collect.mode = ActionMode::kStochastic;

  std::vector<CurveRow> curve;
  long steps = 0;
  for (long it = 0;; ++it) {
    if (options.max_iterations >= 0 ? it >= options.max_iterations
                                    : steps >= cfg.total_steps) {
      break;
    }
    double lr = cfg.lr_initial;
    if (options.fixed_lr > 0.0) {
      lr = options.fixed_lr;
    } else if (cfg.lr_decay) {
      lr = cfg.lr_initial *
           std::max(0.0, 1.0 - static_cast<double>(steps) / static_cast<double>(cfg.total_steps));
    }
    RolloutBuffer buf = Collect(env, agent.policy, options.attacker, collect, rng);
    Finalize(buf, agent.value, cfg.gamma, cfg.lambda);
    learner.Update(agent, buf, lr, rng);
    steps += static_cast<long>(buf.size());
    CurveRow row = SummarizeBatch(buf);
    row.iteration = it;
    row.env_steps = steps;
    curve.push_back(row);
    if (options.on_iteration) options.on_iteration(row);
  }
  return curve;
}

VictimTrainingResult TrainVictim(const EnvConfig& env_cfg,
                                 const RewardConfig& reward_cfg,
                                 const PpoConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  VictimTrainingResult result;
  result.agent = InitVictim(env_cfg.state_dim(), env_cfg.action_dim(), rng);
  result.curve = RunPpo(result.agent, env_cfg, reward_cfg, cfg, TrainingOptions{}, rng);
  return result;
}

}  // namespace gradmask
