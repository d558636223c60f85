#ifndef GRADMASK_VICTIM_PPO_H_
#define GRADMASK_VICTIM_PPO_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "gradmask/optim.h"
#include "gradmask/rollout.h"

namespace gradmask {

struct PpoConfig {
  double clip = 0.2;
  double gamma = 0.998;
  double lambda = 0.95;
  double lr_initial = 5e-4;
  // Linear decay from lr_initial to zero over total_steps.
  bool lr_decay = true;
  int epochs_per_batch = 4;
  int minibatch = 256;
  long total_steps = 300000;
  int episodes_per_iteration = 4;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;

  void Validate() const;
};

struct VictimAgent {
  MlpParams policy;
  MlpParams value;
};

VictimAgent InitVictim(int state_dim, int action_dim, Rng& rng);

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss_before = 0.0;
  double value_loss_after = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  // Total (transition, epoch) visits made by the update.
  long sample_visits = 0;
};

// Clipped surrogate for one batch of observations. Exposed for tests; the
// optimizer path builds the same graph.
struct SurrogateTerms {
  Vec ratio;
  Vec unclipped;  // ratio * adv
  Vec clipped;    // clip(ratio) * adv
  Vec objective;  // min of the two
};
SurrogateTerms EvaluateSurrogate(const MlpParams& policy, const Mat& observations,
                                 const Mat& actions, const Vec& old_log_probs,
                                 const Vec& advantages, double clip);

// Policy-loss gradient (flat, Flatten() order) for the same batch.
Vec SurrogateGradient(const MlpParams& policy, const Mat& observations,
                      const Mat& actions, const Vec& old_log_probs,
                      const Vec& advantages, double clip, double entropy_coef);

// Mean squared error (1/N) sum (R_i - V(s_i))^2 and its gradient.
double ValueLoss(const MlpParams& value, const Mat& states, const Vec& returns);
Vec ValueLossGradient(const MlpParams& value, const Mat& states,
                      const Vec& returns);

// Owns the optimizer state across iterations.
class PpoLearner {
 public:
  PpoLearner(const VictimAgent& agent, const PpoConfig& cfg);

  // One PPO update over a finalized buffer. Advantages are normalized over
  // the batch here only. Throws NonFiniteError on a NaN/Inf loss.
  PpoStats Update(VictimAgent& agent, const RolloutBuffer& buf, double lr,
                  Rng& rng);

 private:
  PpoConfig cfg_;
  Adam policy_opt_;
  Adam value_opt_;
};

struct CurveRow {
  long iteration = 0;
  long env_steps = 0;
  double mean_reward = 0.0;
  double mean_velocity = 0.0;
  int falls = 0;
};

struct TrainingOptions {
  // Stop after this many iterations; < 0 runs until total_steps.
  long max_iterations = -1;
  // Constant learning rate overriding the schedule; <= 0 uses the schedule.
  double fixed_lr = 0.0;
  // Perturbs the victim's observations during collection (defense training).
  const Attacker* attacker = nullptr;
  std::function<void(const CurveRow&)> on_iteration;
};

// Alternates Collect and Update, mutating `agent`. Returns the learning curve.
std::vector<CurveRow> RunPpo(VictimAgent& agent, const EnvConfig& env_cfg,
                             const RewardConfig& reward_cfg, const PpoConfig& cfg,
                             const TrainingOptions& options, Rng& rng);

struct VictimTrainingResult {
  VictimAgent agent;
  std::vector<CurveRow> curve;
};

VictimTrainingResult TrainVictim(const EnvConfig& env_cfg,
                                 const RewardConfig& reward_cfg,
                                 const PpoConfig& cfg, std::uint64_t seed);

// Per-iteration summary of a collected batch.
CurveRow SummarizeBatch(const RolloutBuffer& buf);

}  // namespace gradmask

#endif  // GRADMASK_VICTIM_PPO_H_
