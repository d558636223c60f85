#ifndef GRADMASK_ROLLOUT_H_
#define GRADMASK_ROLLOUT_H_

#include <cstddef>
#include <vector>

#include "gradmask/attacker.h"
#include "gradmask/envs.h"
#include "gradmask/nets.h"

namespace gradmask {

struct Transition {
  StateVec s;
  PerturbVec eta;  // zero when unattacked
  Vec mask_sample;  // empty when unattacked or the attacker has no mask
  double mask_log_likelihood = 0.0;
  double beta = 0.0;
  ActionVec a;
  double log_prob = 0.0;  // under the victim policy at s + eta
  // Reward the learner optimizes. Equals victim_reward unless rewritten
  // (AGMR stores the adversarial reward here).
  double r = 0.0;
  double victim_reward = 0.0;
  double forward_velocity = 0.0;
  StateVec s_next;
  bool terminal = false;
  bool fell = false;

  StateVec observation() const { return s + eta; }
};

struct EpisodeSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the last transition
  bool fell = false;

  std::size_t length() const { return end - begin; }
};

struct RolloutBuffer {
  std::vector<Transition> transitions;
  std::vector<EpisodeSpan> episodes;
  // Raw (unnormalized) estimates; filled by Finalize.
  Vec returns;
  Vec advantages;

  std::size_t size() const { return transitions.size(); }
  bool finalized() const {
    return returns.size() == static_cast<Eigen::Index>(size()) &&
           advantages.size() == static_cast<Eigen::Index>(size());
  }
  // One row per transition.
  Mat States() const;
  Mat Observations() const;
  Mat Actions() const;

  // Appends `other`, shifting its episode spans.
  void Append(const RolloutBuffer& other);
};

enum class ActionMode { kStochastic, kDeterministic };

struct CollectOptions {
  int episodes = 1;
  // Per-episode cap on transitions; the env's max_steps also applies.
  int horizon = 400;
  ActionMode mode = ActionMode::kStochastic;
};

// Runs `episodes` episodes: eta from the attacker (zero without one), the
// victim acts on s + eta, the env steps on the true state.
RolloutBuffer Collect(Environment& env, const MlpParams& victim_policy,
                      const Attacker* attacker, const CollectOptions& options,
                      Rng& rng);

// V(s_t) per transition and V(s_{t+1}) with the episode bootstrap already
// applied: zero after a fall, V(s_T) after truncation.
struct ValueEstimates {
  Vec v_s;
  Vec v_next;
};

ValueEstimates EstimateValues(const RolloutBuffer& buf, const MlpParams& value_net);

// R_t = r_t + gamma * R_{t+1} within each episode, seeded by the bootstrap.
Vec ComputeReturns(const RolloutBuffer& buf, const ValueEstimates& values,
                   double gamma);

// A_t = sum_k (gamma * lambda)^k delta_{t+k}, truncated at episode end.
Vec ComputeGae(const RolloutBuffer& buf, const ValueEstimates& values,
               double gamma, double lambda);

// Fills buf.returns and buf.advantages.
void Finalize(RolloutBuffer& buf, const MlpParams& value_net, double gamma,
              double lambda);

}  // namespace gradmask

#endif  // GRADMASK_ROLLOUT_H_
