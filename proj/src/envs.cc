#include "gradmask/envs.h"

#include <algorithm>
#include <cmath>

#include "gradmask/errors.h"

namespace gradmask {

std::string EnvName(EnvKind kind) {
  return kind == EnvKind::kPointRunner ? "point_runner" : "cart_runner";
}

EnvKind ParseEnvKind(const std::string& name) {
  if (name == "point_runner") return EnvKind::kPointRunner;
  if (name == "cart_runner") return EnvKind::kCartRunner;
  throw std::invalid_argument("unknown env: " + name);
}

void EnvConfig::Validate() const {
  if (!(dt > 0.0)) throw ConfigError("env.dt", "must be > 0");
  if (max_steps < 1) throw ConfigError("env.max_steps", "must be >= 1");
  if (distractor_dims < 0) throw ConfigError("env.distractor_dims", "must be >= 0");
  if (!(fall_bound > 0.0)) throw ConfigError("env.fall_bound", "must be > 0");
  if (!(init_jitter >= 0.0)) throw ConfigError("env.init_jitter", "must be >= 0");
  if (!(torque_scale >= 0.0)) throw ConfigError("env.torque_scale", "must be >= 0");
  if (kind == EnvKind::kPointRunner && !(mass > 0.0)) {
    throw ConfigError("env.mass", "must be > 0");
  }
  if (kind == EnvKind::kCartRunner &&
      !(cart_mass > 0.0 && pole_mass > 0.0 && pole_half_length > 0.0)) {
    throw ConfigError("env.cart_mass", "cart-pole masses and length must be > 0");
  }
}

EnvConfig DefaultEnvConfig(EnvKind kind) {
  EnvConfig cfg;
  cfg.kind = kind;
  cfg.fall_bound = kind == EnvKind::kPointRunner ? 1.0 : 0.6;
  return cfg;
}

void RewardConfig::Validate() const {
  if (!(xi <= 0.0)) throw ConfigError("reward.xi", "must be <= 0");
  if (!(kappa >= 0.0)) throw ConfigError("reward.kappa", "must be >= 0");
  if (!(v_cap > 0.0)) throw ConfigError("reward.v_cap", "must be > 0");
}

double VictimReward(const RewardConfig& reward, double torque_scale,
                    const ActionVec& control, double forward_velocity) {
  return reward.xi * control.squaredNorm() * torque_scale +
         reward.kappa * std::min(forward_velocity, reward.v_cap);
}

int ForwardVelocityIndex(EnvKind kind) {
  return kind == EnvKind::kPointRunner ? 2 : 1;
}

std::vector<int> CriticalDims([[maybe_unused]] const EnvConfig& cfg) {
  std::vector<int> dims(kPhysicalDims);
  for (int i = 0; i < kPhysicalDims; ++i) dims[i] = i;
  return dims;
}

StateVec ResetState(const EnvConfig& cfg, Rng& rng) {
  StateVec s(cfg.state_dim());
  std::uniform_real_distribution<double> jitter(-cfg.init_jitter, cfg.init_jitter);
  for (int i = 0; i < kPhysicalDims; ++i) s[i] = jitter(rng);
  s.tail(cfg.distractor_dims) = StandardNormal(cfg.distractor_dims, rng);
  return s;
}

StepResult StepDynamics(const EnvConfig& cfg, const RewardConfig& reward,
                        const StateVec& state, const ActionVec& action,
                        Rng& rng) {
  if (state.size() != cfg.state_dim()) throw DimensionError("state length mismatch");
  if (action.size() != cfg.action_dim()) throw DimensionError("action length mismatch");
  if (!state.allFinite() || !action.allFinite()) {
    throw NonFiniteError("env step rejects non-finite state or action");
  }
  const ActionVec u = action.cwiseMax(-1.0).cwiseMin(1.0);
  StepResult out;
  out.next_state = state;
  Vec& n = out.next_state;

  if (cfg.kind == EnvKind::kPointRunner) {
    const double ax = u[0] * cfg.force_scale / cfg.mass - cfg.drag * state[2];
    const double ay = u[1] * cfg.force_scale / cfg.mass - cfg.drag * state[3];
    n[2] = state[2] + cfg.dt * ax;
    n[3] = state[3] + cfg.dt * ay;
    n[0] = state[0] + cfg.dt * n[2];
    n[1] = state[1] + cfg.dt * n[3];
    out.fell = std::abs(n[1]) > cfg.fall_bound;
  } else {
    const double x_dot = state[1];
    const double theta = state[2];
    const double theta_dot = state[3];
    const double total_mass = cfg.cart_mass + cfg.pole_mass;
    const double pm_len = cfg.pole_mass * cfg.pole_half_length;
    const double force = u[0] * cfg.force_mag;
    const double cos_t = std::cos(theta);
    const double sin_t = std::sin(theta);
    const double temp = (force + pm_len * theta_dot * theta_dot * sin_t) / total_mass;
    const double theta_acc =
        (cfg.gravity * sin_t - cos_t * temp) /
        (cfg.pole_half_length *
         (4.0 / 3.0 - cfg.pole_mass * cos_t * cos_t / total_mass));
    const double x_acc = temp - pm_len * theta_acc * cos_t / total_mass;
    n[0] = state[0] + cfg.dt * x_dot;
    n[1] = x_dot + cfg.dt * x_acc;
    n[2] = theta + cfg.dt * theta_dot;
    n[3] = theta_dot + cfg.dt * theta_acc;
    out.fell = std::abs(n[2]) > cfg.fall_bound;
  }
  n.tail(cfg.distractor_dims) = StandardNormal(cfg.distractor_dims, rng);
  out.forward_velocity = n[ForwardVelocityIndex(cfg.kind)];
  out.reward = VictimReward(reward, cfg.torque_scale, u, out.forward_velocity);
  out.terminal = out.fell;
  return out;
}

Environment::Environment(EnvConfig cfg, RewardConfig reward)
    : cfg_(cfg), reward_(reward) {
  cfg_.Validate();
  reward_.Validate();
}

StateVec Environment::Reset(Rng& rng) {
  state_ = ResetState(cfg_, rng);
  steps_ = 0;
  done_ = false;
  return state_;
}

StepResult Environment::Step(const ActionVec& action, Rng& rng) {
  if (done_) throw StateError("step on a finished episode; call Reset first");
  StepResult r = StepDynamics(cfg_, reward_, state_, action, rng);
  ++steps_;
  if (steps_ >= cfg_.max_steps) r.terminal = true;
  state_ = r.next_state;
  done_ = r.terminal;
  return r;
}

}  // namespace gradmask
