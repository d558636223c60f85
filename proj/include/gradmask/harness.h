#ifndef GRADMASK_HARNESS_H_
#define GRADMASK_HARNESS_H_

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "gradmask/agmr.h"
#include "gradmask/attacks.h"
#include "gradmask/config.h"
#include "gradmask/victim_ppo.h"

namespace gradmask {

struct EpisodeRecord {
  int index = 0;
  int steps = 0;
  // Means over the executed steps.
  double reward_mean = 0.0;
  double velocity_mean = 0.0;
  bool fell = false;
};

struct EvalMetrics {
  std::string env;
  std::string attacker;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  int episodes = 0;
  // Across episodes of the per-episode mean per-step reward and velocity;
  // std is the population standard deviation.
  double reward_mean = 0.0;
  double reward_std = 0.0;
  double velocity_mean = 0.0;
  double velocity_std = 0.0;
  int falls = 0;
  std::vector<EpisodeRecord> records;
};

// Builds the named attacker against `victim_policy`: a baseline variant or
// "agmr" (needs `adversary`, uses the deterministic mask). "none" returns
// null. The attacker keeps references to the nets.
std::unique_ptr<Attacker> MakeAttacker(const std::string& name,
                                       const MlpParams& victim_policy,
                                       const Adversary* adversary,
                                       const AttackConfig& attack_cfg,
                                       const AgmrConfig& agmr_cfg);

struct EvalOptions {
  int episodes = 10;
  std::uint64_t seed = 1;
  // Episode streams are also keyed by these so that configs can pick
  // independent noise without changing the run seed.
  std::uint64_t env_stream = 0;
  std::uint64_t attack_stream = 0;
  // 0 uses the hardware concurrency.
  int threads = 1;
  // Labels copied into the metrics.
  std::string attacker_label = "none";
  double epsilon = 0.0;
};

// Runs options.episodes episodes with the deterministic victim. Episode i
// seeds its environment and attacker streams from options.seed + i, so the
// result does not depend on the thread count.
EvalMetrics Evaluate(const MlpParams& victim_policy, const Attacker* attacker,
                     const EnvConfig& env_cfg, const RewardConfig& reward_cfg,
                     const EvalOptions& options);

// Aggregates records sorted by episode index.
EvalMetrics Aggregate(std::vector<EpisodeRecord> records);

// Fine-tunes a copy of `victim` with PPO on rollouts attacked by the frozen
// adversary (deterministic mask, budget agmr_cfg.epsilon).
struct DefenseOptions {
  int iterations = 200;
  double lr = 3e-4;
  std::uint64_t seed = 1;
};
VictimAgent Defend(const VictimAgent& victim, const Adversary& adversary,
                   const EnvConfig& env_cfg, const RewardConfig& reward_cfg,
                   const PpoConfig& ppo_cfg, const AgmrConfig& agmr_cfg,
                   const DefenseOptions& options,
                   std::vector<CurveRow>* curve = nullptr);

// One evaluation per (attacker, epsilon). A zero budget evaluates without
// an attacker, so the cell equals the clean metrics.
std::vector<EvalMetrics> Sweep(const MlpParams& victim_policy, const Adversary* adversary,
                               const std::vector<std::string>& attackers,
                               const std::vector<double>& epsilons,
                               const RunConfig& cfg);

// env, attacker, epsilon, seed, episodes, reward_mean, reward_std,
// velocity_mean, velocity_std, falls.
const std::vector<std::string>& MetricsColumns();
void WriteMetricsCsv(std::ostream& out, const std::vector<EvalMetrics>& rows);
std::string MetricsCsv(const std::vector<EvalMetrics>& rows);

void WriteCurveCsv(std::ostream& out, const std::vector<CurveRow>& curve);
void WriteAgmrCurveCsv(std::ostream& out, const std::vector<AgmrCurveRow>& curve);

// JSON manifest with the full config and content hashes of `files`.
std::string RunManifest(const RunConfig& cfg, const std::string& command,
                        const std::vector<std::string>& files);

// Spearman rank correlation with average ranks for ties.
double SpearmanRho(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace gradmask

#endif  // GRADMASK_HARNESS_H_
