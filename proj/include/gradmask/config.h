#ifndef GRADMASK_CONFIG_H_
#define GRADMASK_CONFIG_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gradmask/agmr.h"
#include "gradmask/attacks.h"
#include "gradmask/envs.h"
#include "gradmask/victim_ppo.h"

namespace gradmask {

struct RunConfig {
  EnvConfig env;
  RewardConfig reward;
  PpoConfig ppo;
  AttackConfig attack;
  AgmrConfig agmr;

  std::uint64_t seed = 1;
  std::string output_dir = "runs";
  int episodes = 10;
  // "none", a baseline variant name, or "agmr".
  std::string attacker = "none";
  std::string victim_checkpoint;
  std::string adversary_checkpoint;
  // Evaluation worker threads; 0 uses the hardware concurrency.
  int threads = 1;

  int defend_iterations = 200;
  double defend_lr = 3e-4;

  std::vector<double> sweep_epsilons = {0.0, 0.025, 0.05, 0.1, 0.15, 0.2};
  std::vector<std::string> sweep_attackers = {"agmr", "pgd", "fgsm"};

  // Validates every section; errors name the offending key.
  void Validate() const;
};

// Key-value pairs keyed "section.key".
using ConfigMap = std::map<std::string, std::string>;

// Sectioned key-value text: "[section]" headers, "key = value" lines, '#'
// comments. Throws ConfigError on malformed lines or duplicate keys.
ConfigMap ParseConfigText(const std::string& text);

// Builds a RunConfig from defaults plus `values`. "env.kind" is applied
// first so that per-environment defaults can be overridden. Unknown keys
// and unparsable values throw ConfigError naming the key.
RunConfig BuildRunConfig(const ConfigMap& values);

// Precedence, lowest first: defaults, GRADMASK_SEED, the config file (when
// `path` is non-empty), `overrides`.
RunConfig LoadRunConfig(const std::string& path, const ConfigMap& overrides);

// Every key with its current value, in the same sectioned format.
std::string DumpConfig(const RunConfig& cfg);

// Names accepted by BuildRunConfig.
std::vector<std::string> ConfigKeys();

}  // namespace gradmask

#endif  // GRADMASK_CONFIG_H_
