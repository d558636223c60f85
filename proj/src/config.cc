#include "gradmask/config.h"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "gradmask/errors.h"

namespace gradmask {
namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitList(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = Trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key, "cannot parse '" + v + "' as a number");
  }
  return out;
}

template <typename T>
T Parse(const std::string& key, const std::string& v);

template <>
double Parse<double>(const std::string& key, const std::string& v) {
  return ParseNumber<double>(key, v);
}
template <>
int Parse<int>(const std::string& key, const std::string& v) {
  return ParseNumber<int>(key, v);
}
template <>
long Parse<long>(const std::string& key, const std::string& v) {
  return ParseNumber<long>(key, v);
}
template <>
std::uint64_t Parse<std::uint64_t>(const std::string& key, const std::string& v) {
  return ParseNumber<std::uint64_t>(key, v);
}
template <>
bool Parse<bool>(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}
template <>
std::string Parse<std::string>(const std::string&, const std::string& v) {
  return v;
}
template <>
EnvKind Parse<EnvKind>(const std::string& key, const std::string& v) {
  try {
    return ParseEnvKind(v);
  } catch (const std::invalid_argument&) {
    throw ConfigError(key, "unknown environment '" + v + "'");
  }
}
template <>
ReferenceAction Parse<ReferenceAction>(const std::string& key, const std::string& v) {
  if (v == "sampled") return ReferenceAction::kSampled;
  if (v == "mean") return ReferenceAction::kMean;
  throw ConfigError(key, "expected sampled or mean, got '" + v + "'");
}
template <>
std::vector<double> Parse<std::vector<double>>(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const std::string& item : SplitList(v)) out.push_back(ParseNumber<double>(key, item));
  return out;
}
template <>
std::vector<std::string> Parse<std::vector<std::string>>(const std::string&,
                                                         const std::string& v) {
  return SplitList(v);
}

std::string Format(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}
std::string Format(int v) { return std::to_string(v); }
std::string Format(long v) { return std::to_string(v); }
std::string Format(std::uint64_t v) { return std::to_string(v); }
std::string Format(bool v) { return v ? "true" : "false"; }
std::string Format(const std::string& v) { return v; }
std::string Format(EnvKind v) { return EnvName(v); }
std::string Format(ReferenceAction v) {
  return v == ReferenceAction::kSampled ? "sampled" : "mean";
}
std::string Format(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + Format(v[i]);
  return out;
}
std::string Format(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename S, typename T>
Field Member(const std::string& key, S RunConfig::*section, T S::*member) {
  return {key,
          [=](RunConfig& c, const std::string& v) { (c.*section).*member = Parse<T>(key, v); },
          [=](const RunConfig& c) { return Format((c.*section).*member); }};
}

template <typename T>
Field Top(const std::string& key, T RunConfig::*member) {
  return {key, [=](RunConfig& c, const std::string& v) { c.*member = Parse<T>(key, v); },
          [=](const RunConfig& c) { return Format(c.*member); }};
}

const std::vector<Field>& Fields() {
  using R = RunConfig;
  static const std::vector<Field> fields = {
      Top("run.seed", &R::seed),
      Top("run.output_dir", &R::output_dir),
      Top("run.episodes", &R::episodes),
      Top("run.attacker", &R::attacker),
      Top("run.victim_checkpoint", &R::victim_checkpoint),
      Top("run.adversary_checkpoint", &R::adversary_checkpoint),
      Top("run.threads", &R::threads),

      Member("env.kind", &R::env, &EnvConfig::kind),
      Member("env.dt", &R::env, &EnvConfig::dt),
      Member("env.max_steps", &R::env, &EnvConfig::max_steps),
      Member("env.distractor_dims", &R::env, &EnvConfig::distractor_dims),
      Member("env.fall_bound", &R::env, &EnvConfig::fall_bound),
      Member("env.init_jitter", &R::env, &EnvConfig::init_jitter),
      Member("env.torque_scale", &R::env, &EnvConfig::torque_scale),
      Member("env.mass", &R::env, &EnvConfig::mass),
      Member("env.drag", &R::env, &EnvConfig::drag),
      Member("env.force_scale", &R::env, &EnvConfig::force_scale),
      Member("env.gravity", &R::env, &EnvConfig::gravity),
      Member("env.cart_mass", &R::env, &EnvConfig::cart_mass),
      Member("env.pole_mass", &R::env, &EnvConfig::pole_mass),
      Member("env.pole_half_length", &R::env, &EnvConfig::pole_half_length),
      Member("env.force_mag", &R::env, &EnvConfig::force_mag),
      Member("env.rng_seed", &R::env, &EnvConfig::rng_seed),

      Member("reward.xi", &R::reward, &RewardConfig::xi),
      Member("reward.kappa", &R::reward, &RewardConfig::kappa),
      Member("reward.v_cap", &R::reward, &RewardConfig::v_cap),

      Member("ppo.clip", &R::ppo, &PpoConfig::clip),
      Member("ppo.gamma", &R::ppo, &PpoConfig::gamma),
      Member("ppo.lambda", &R::ppo, &PpoConfig::lambda),
      Member("ppo.lr_initial", &R::ppo, &PpoConfig::lr_initial),
      Member("ppo.lr_decay", &R::ppo, &PpoConfig::lr_decay),
      Member("ppo.epochs_per_batch", &R::ppo, &PpoConfig::epochs_per_batch),
      Member("ppo.minibatch", &R::ppo, &PpoConfig::minibatch),
      Member("ppo.total_steps", &R::ppo, &PpoConfig::total_steps),
      Member("ppo.episodes_per_iteration", &R::ppo, &PpoConfig::episodes_per_iteration),
      Member("ppo.entropy_coef", &R::ppo, &PpoConfig::entropy_coef),
      Member("ppo.max_grad_norm", &R::ppo, &PpoConfig::max_grad_norm),

      Member("attack.epsilon", &R::attack, &AttackConfig::epsilon),
      Member("attack.steps", &R::attack, &AttackConfig::steps),
      Member("attack.alpha", &R::attack, &AttackConfig::alpha),
      Member("attack.momentum_decay", &R::attack, &AttackConfig::momentum_decay),
      Member("attack.transform_prob", &R::attack, &AttackConfig::transform_prob),
      Member("attack.eot_samples", &R::attack, &AttackConfig::eot_samples),
      Member("attack.eot_noise_scale", &R::attack, &AttackConfig::eot_noise_scale),
      Member("attack.pgd_random_init", &R::attack, &AttackConfig::pgd_random_init),
      Member("attack.tpgd_init_scale", &R::attack, &AttackConfig::tpgd_init_scale),
      Member("attack.reference", &R::attack, &AttackConfig::reference),
      Member("attack.rng_seed", &R::attack, &AttackConfig::rng_seed),

      Member("agmr.epsilon", &R::agmr, &AgmrConfig::epsilon),
      Member("agmr.smoothing_scale", &R::agmr, &AgmrConfig::smoothing_scale),
      Member("agmr.train_steps", &R::agmr, &AgmrConfig::train_steps),
      Member("agmr.lr", &R::agmr, &AgmrConfig::lr),
      Member("agmr.gamma", &R::agmr, &AgmrConfig::gamma),
      Member("agmr.lambda", &R::agmr, &AgmrConfig::lambda),
      Member("agmr.entropy_coef", &R::agmr, &AgmrConfig::entropy_coef),
      Member("agmr.eval_binarize_threshold", &R::agmr, &AgmrConfig::eval_binarize_threshold),
      Member("agmr.episodes_per_iteration", &R::agmr, &AgmrConfig::episodes_per_iteration),
      Member("agmr.epochs_per_batch", &R::agmr, &AgmrConfig::epochs_per_batch),
      Member("agmr.minibatch", &R::agmr, &AgmrConfig::minibatch),
      Member("agmr.max_grad_norm", &R::agmr, &AgmrConfig::max_grad_norm),
      Member("agmr.stochastic_victim", &R::agmr, &AgmrConfig::stochastic_victim),

      Top("defend.iterations", &R::defend_iterations),
      Top("defend.lr", &R::defend_lr),

      Top("sweep.epsilons", &R::sweep_epsilons),
      Top("sweep.attackers", &R::sweep_attackers),
  };
  return fields;
}

const Field* FindField(const std::string& key) {
  for (const Field& f : Fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

bool KnownAttacker(const std::string& name) {
  if (name == "none" || name == "agmr") return true;
  try {
    ParseVariant(name);
    return true;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

}  // namespace

void RunConfig::Validate() const {
  env.Validate();
  reward.Validate();
  ppo.Validate();
  attack.Validate();
  agmr.Validate();
  if (output_dir.empty()) throw ConfigError("run.output_dir", "must not be empty");
  if (episodes < 1) throw ConfigError("run.episodes", "must be >= 1");
  if (!KnownAttacker(attacker)) throw ConfigError("run.attacker", "unknown attacker '" + attacker + "'");
  if (threads < 0) throw ConfigError("run.threads", "must be >= 0");
  if (defend_iterations < 1) throw ConfigError("defend.iterations", "must be >= 1");
  if (!(defend_lr > 0.0)) throw ConfigError("defend.lr", "must be > 0");
  if (sweep_epsilons.size() < 2) throw ConfigError("sweep.epsilons", "needs at least two values");
  for (double e : sweep_epsilons) {
    if (!(e >= 0.0)) throw ConfigError("sweep.epsilons", "values must be >= 0");
  }
  for (const std::string& a : sweep_attackers) {
    if (a == "none" || !KnownAttacker(a)) {
      throw ConfigError("sweep.attackers", "unknown attacker '" + a + "'");
    }
  }
}

ConfigMap ParseConfigText(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = Trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno), "unterminated section header");
      }
      section = Trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    }
    const std::string name = Trim(line.substr(0, eq));
    const std::string key = section.empty() ? name : section + "." + name;
    if (!out.emplace(key, Trim(line.substr(eq + 1))).second) {
      throw ConfigError(key, "set twice");
    }
  }
  return out;
}

RunConfig BuildRunConfig(const ConfigMap& values) {
  RunConfig cfg;
  const auto kind = values.find("env.kind");
  if (kind != values.end()) cfg.env = DefaultEnvConfig(Parse<EnvKind>(kind->first, kind->second));
  for (const auto& [key, value] : values) {
    const Field* f = FindField(key);
    if (f == nullptr) throw ConfigError(key, "unknown key");
    f->set(cfg, value);
  }
  cfg.Validate();
  return cfg;
}

RunConfig LoadRunConfig(const std::string& path, const ConfigMap& overrides) {
  ConfigMap values;
  if (const char* env_seed = std::getenv("GRADMASK_SEED"); env_seed != nullptr) {
    values["run.seed"] = env_seed;
  }
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    for (const auto& [k, v] : ParseConfigText(ss.str())) values[k] = v;
  }
  for (const auto& [k, v] : overrides) values[k] = v;
  return BuildRunConfig(values);
}

std::string DumpConfig(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : Fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << "[" << s << "]\n";
      section = s;
    }
    out << f.key.substr(dot + 1) << " = " << f.get(cfg) << "\n";
  }
  return out.str();
}

std::vector<std::string> ConfigKeys() {
  std::vector<std::string> keys;
  for (const Field& f : Fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace gradmask
