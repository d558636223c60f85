#include "gradmask/rollout.h"

#include <algorithm>

#include "gradmask/errors.h"

namespace gradmask {
namespace {

template <typename Get>
Mat Stack(const std::vector<Transition>& ts, Eigen::Index cols, Get get) {
  Mat m(static_cast<Eigen::Index>(ts.size()), cols);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = get(ts[i]).transpose();
  }
  return m;
}

}  // namespace

Mat RolloutBuffer::States() const {
  if (transitions.empty()) return Mat();
  return Stack(transitions, transitions.front().s.size(),
               [](const Transition& t) -> const Vec& { return t.s; });
}

Mat RolloutBuffer::Observations() const {
  if (transitions.empty()) return Mat();
  return Stack(transitions, transitions.front().s.size(),
               [](const Transition& t) { return t.observation(); });
}

Mat RolloutBuffer::Actions() const {
  if (transitions.empty()) return Mat();
  return Stack(transitions, transitions.front().a.size(),
               [](const Transition& t) -> const Vec& { return t.a; });
}

void RolloutBuffer::Append(const RolloutBuffer& other) {
  const std::size_t offset = transitions.size();
  transitions.insert(transitions.end(), other.transitions.begin(),
                     other.transitions.end());
  for (EpisodeSpan span : other.episodes) {
    span.begin += offset;
    span.end += offset;
    episodes.push_back(span);
  }
  returns.resize(0);
  advantages.resize(0);
}

RolloutBuffer Collect(Environment& env, const MlpParams& victim_policy,
                      const Attacker* attacker, const CollectOptions& options,
                      Rng& rng) {
  if (victim_policy.input_dim() != env.state_dim() ||
      victim_policy.output_dim() != env.action_dim()) {
    throw DimensionError("victim policy dims do not match the environment");
  }
  if (options.episodes < 1 || options.horizon < 1) {
    throw std::invalid_argument("collect needs at least one episode and step");
  }
  RolloutBuffer buf;
  for (int ep = 0; ep < options.episodes; ++ep) {
    EpisodeSpan span;
    span.begin = buf.transitions.size();
    StateVec s = env.Reset(rng);
    for (int t = 0; t < options.horizon && !env.done(); ++t) {
      Transition tr;
      tr.s = s;
      if (attacker != nullptr) {
        Perturbation p = attacker->Perturb(s, rng);
        tr.eta = std::move(p.eta);
        tr.mask_sample = std::move(p.mask);
        tr.mask_log_likelihood = p.mask_log_likelihood;
        tr.beta = p.beta;
      } else {
        tr.eta = PerturbVec::Zero(s.size());
      }
      const PolicyOutput pi = PolicyForward(victim_policy, tr.observation());
      const ActionSample act = options.mode == ActionMode::kStochastic
                                   ? SampleAction(pi, rng)
                                   : DeterministicAction(pi);
      tr.a = act.action;
      tr.log_prob = act.log_prob;
      const StepResult step = env.Step(tr.a, rng);
      tr.r = step.reward;
      tr.victim_reward = step.reward;
      tr.forward_velocity = step.forward_velocity;
      tr.s_next = step.next_state;
      tr.terminal = step.terminal;
      tr.fell = step.fell;
      s = step.next_state;
      buf.transitions.push_back(std::move(tr));
      if (step.fell) span.fell = true;
    }
    span.end = buf.transitions.size();
    buf.episodes.push_back(span);
  }
  return buf;
}

ValueEstimates EstimateValues(const RolloutBuffer& buf, const MlpParams& value_net) {
  ValueEstimates out;
  const Eigen::Index n = static_cast<Eigen::Index>(buf.size());
  out.v_s = n > 0 ? ValueBatch(value_net, buf.States()) : Vec();
  out.v_next.resize(n);
  for (const EpisodeSpan& ep : buf.episodes) {
    if (ep.length() == 0) continue;
    for (std::size_t t = ep.begin; t + 1 < ep.end; ++t) {
      out.v_next[t] = out.v_s[t + 1];
    }
    const Transition& last = buf.transitions[ep.end - 1];
    out.v_next[ep.end - 1] = ep.fell ? 0.0 : ValueForward(value_net, last.s_next);
  }
  return out;
}

Vec ComputeReturns(const RolloutBuffer& buf, const ValueEstimates& values,
                   double gamma) {
  Vec ret(static_cast<Eigen::Index>(buf.size()));
  for (const EpisodeSpan& ep : buf.episodes) {
    if (ep.length() == 0) continue;
    double next = values.v_next[ep.end - 1];
    for (std::size_t t = ep.end; t-- > ep.begin;) {
      next = buf.transitions[t].r + gamma * next;
      ret[t] = next;
    }
  }
  return ret;
}

Vec ComputeGae(const RolloutBuffer& buf, const ValueEstimates& values,
               double gamma, double lambda) {
  Vec adv(static_cast<Eigen::Index>(buf.size()));
  for (const EpisodeSpan& ep : buf.episodes) {
    double running = 0.0;
    for (std::size_t t = ep.end; t-- > ep.begin;) {
      const double delta =
          buf.transitions[t].r + gamma * values.v_next[t] - values.v_s[t];
      running = delta + gamma * lambda * running;
      adv[t] = running;
    }
  }
  return adv;
}

void Finalize(RolloutBuffer& buf, const MlpParams& value_net, double gamma,
              double lambda) {
  const ValueEstimates values = EstimateValues(buf, value_net);
  buf.returns = ComputeReturns(buf, values, gamma);
  buf.advantages = ComputeGae(buf, values, gamma, lambda);
}

}  // namespace gradmask
