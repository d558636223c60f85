#ifndef GRADMASK_ENVS_H_
#define GRADMASK_ENVS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "gradmask/types.h"

namespace gradmask {

enum class EnvKind {
  // Double integrator on a plane. State [px, py, vx, vy, distractors...],
  // action [ax, ay]. x is forward; falls when |py| > fall_bound.
  kPointRunner,
  // Cart-pole driving forward along its track. State
  // [x, x_dot, theta, theta_dot, distractors...], action [force]. Falls when
  // |theta| > fall_bound.
  kCartRunner,
};

std::string EnvName(EnvKind kind);
EnvKind ParseEnvKind(const std::string& name);

inline constexpr int kPhysicalDims = 4;

struct EnvConfig {
  EnvKind kind = EnvKind::kPointRunner;
  double dt = 0.01;
  int max_steps = 400;
  int distractor_dims = 6;
  double fall_bound = 1.0;
  // Uniform half-width of the reset jitter on physical dims.
  double init_jitter = 0.05;
  // Multiplies sum(u^2) in the reward so that xi * torque_scale matches the
  // penalty-to-velocity ratio of a full-size robot at |u| = 1.
  double torque_scale = 1000.0;

  // point_runner
  double mass = 1.0;
  double drag = 0.5;
  double force_scale = 10.0;

  // cart_runner
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_half_length = 0.5;
  double force_mag = 10.0;

  std::uint64_t rng_seed = 0;

  void Validate() const;
  int state_dim() const { return kPhysicalDims + distractor_dims; }
  int action_dim() const { return kind == EnvKind::kPointRunner ? 2 : 1; }
};

// Defaults for each environment, including its fall bound.
EnvConfig DefaultEnvConfig(EnvKind kind);

struct RewardConfig {
  double xi = -4e-5;
  double kappa = 0.3;
  double v_cap = 4.0;

  void Validate() const;
};

struct StepResult {
  StateVec next_state;
  double reward = 0.0;
  double forward_velocity = 0.0;
  bool fell = false;
  bool terminal = false;
};

// xi * torque_scale * sum(u^2) + kappa * min(v_forward, v_cap).
double VictimReward(const RewardConfig& reward, double torque_scale,
                    const ActionVec& control, double forward_velocity);

// Index of the forward velocity within the state.
int ForwardVelocityIndex(EnvKind kind);

// Indices of the physical (non-distractor) dims.
std::vector<int> CriticalDims(const EnvConfig& cfg);

StateVec ResetState(const EnvConfig& cfg, Rng& rng);

// One transition, ignoring the step budget. The action is clamped to [-1, 1]
// before it reaches the dynamics. Distractor dims of `state` never influence
// the result; the next state's distractors are fresh N(0, 1) draws.
StepResult StepDynamics(const EnvConfig& cfg, const RewardConfig& reward,
                        const StateVec& state, const ActionVec& action,
                        Rng& rng);

// Stateful episode wrapper: counts steps, ends the episode on a fall or at
// max_steps, and refuses to step a finished episode.
class Environment {
 public:
  Environment(EnvConfig cfg, RewardConfig reward);

  StateVec Reset(Rng& rng);
  StepResult Step(const ActionVec& action, Rng& rng);

  const EnvConfig& config() const { return cfg_; }
  const RewardConfig& reward_config() const { return reward_; }
  const StateVec& state() const { return state_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  int state_dim() const { return cfg_.state_dim(); }
  int action_dim() const { return cfg_.action_dim(); }

 private:
  EnvConfig cfg_;
  RewardConfig reward_;
  StateVec state_;
  int steps_ = 0;
  bool done_ = true;
};

}  // namespace gradmask

#endif  // GRADMASK_ENVS_H_
