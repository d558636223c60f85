// Command-line front end: train-victim, train-attack, evaluate, defend,
// sweep, selftest.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "gradmask/checkpoint.h"
#include "gradmask/config.h"
#include "gradmask/errors.h"
#include "gradmask/harness.h"
#include "gradmask/selftest.h"

namespace fs = std::filesystem;
using namespace gradmask;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<std::string> env;
  std::optional<std::string> out;
  std::optional<int> episodes;
  std::optional<std::string> attack;
  std::optional<std::string> victim;
  std::optional<std::string> adversary;
};

void AddCommonFlags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Sectioned key-value config file");
  cmd->add_option("--seed", f.seed, "Run seed");
  cmd->add_option("--epsilon", f.epsilon, "Perturbation budget (baselines and AGMR)");
  cmd->add_option("--env", f.env, "point_runner or cart_runner");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--episodes", f.episodes, "Evaluation episodes");
  cmd->add_option("--attack", f.attack, "none, a baseline name, or agmr");
  cmd->add_option("--victim", f.victim, "Victim checkpoint (default <out>/victim.ckpt)");
  cmd->add_option("--adversary", f.adversary,
                  "Adversary checkpoint (default <out>/adversary.ckpt)");
}

RunConfig Resolve(const Flags& f) {
  ConfigMap overrides;
  if (f.seed) overrides["run.seed"] = std::to_string(*f.seed);
  if (f.epsilon) {
    std::ostringstream os;
    os.precision(17);
    os << *f.epsilon;
    overrides["attack.epsilon"] = os.str();
    overrides["agmr.epsilon"] = os.str();
  }
  if (f.env) overrides["env.kind"] = *f.env;
  if (f.out) overrides["run.output_dir"] = *f.out;
  if (f.episodes) overrides["run.episodes"] = std::to_string(*f.episodes);
  if (f.attack) overrides["run.attacker"] = *f.attack;
  if (f.victim) overrides["run.victim_checkpoint"] = *f.victim;
  if (f.adversary) overrides["run.adversary_checkpoint"] = *f.adversary;
  return LoadRunConfig(f.config, overrides);
}

std::string OutPath(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.output_dir);
  return (fs::path(cfg.output_dir) / name).string();
}

std::string VictimPath(const RunConfig& cfg) {
  return cfg.victim_checkpoint.empty() ? (fs::path(cfg.output_dir) / "victim.ckpt").string()
                                       : cfg.victim_checkpoint;
}

std::string AdversaryPath(const RunConfig& cfg) {
  return cfg.adversary_checkpoint.empty()
             ? (fs::path(cfg.output_dir) / "adversary.ckpt").string()
             : cfg.adversary_checkpoint;
}

template <typename Write>
void WriteText(const std::string& path, Write write) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  write(out);
}

void WriteManifest(const RunConfig& cfg, const std::string& command,
                   const std::vector<std::string>& files) {
  const std::string path = OutPath(cfg, command + "_manifest.json");
  WriteText(path, [&](std::ostream& o) { o << RunManifest(cfg, command, files); });
}

std::optional<Adversary> MaybeAdversary(const RunConfig& cfg,
                                        const std::vector<std::string>& attackers) {
  for (const std::string& a : attackers) {
    if (a == "agmr") return AdversaryFromCheckpoint(LoadCheckpoint(AdversaryPath(cfg)));
  }
  return std::nullopt;
}

int TrainVictimCmd(const RunConfig& cfg) {
  const VictimTrainingResult r = TrainVictim(cfg.env, cfg.reward, cfg.ppo, cfg.seed);
  const std::string ckpt = OutPath(cfg, "victim.ckpt");
  const std::string curve = OutPath(cfg, "victim_curve.csv");
  SaveCheckpoint(ckpt, MakeVictimCheckpoint(r.agent));
  WriteText(curve, [&](std::ostream& o) { WriteCurveCsv(o, r.curve); });
  WriteManifest(cfg, "train-victim", {ckpt, curve});
  std::cout << "wrote " << ckpt << "\n";
  return 0;
}

int TrainAttackCmd(const RunConfig& cfg) {
  const VictimAgent victim = VictimFromCheckpoint(LoadCheckpoint(VictimPath(cfg)));
  const AgmrTrainingResult r = TrainAgmr(victim.policy, cfg.env, cfg.reward, cfg.agmr, cfg.seed);
  const std::string ckpt = OutPath(cfg, "adversary.ckpt");
  const std::string curve = OutPath(cfg, "agmr_curve.csv");
  SaveCheckpoint(ckpt, MakeAdversaryCheckpoint(r.adversary));
  WriteText(curve, [&](std::ostream& o) { WriteAgmrCurveCsv(o, r.curve); });
  WriteManifest(cfg, "train-attack", {VictimPath(cfg), ckpt, curve});
  std::cout << "wrote " << ckpt << "\n";
  return 0;
}

int EvaluateCmd(const RunConfig& cfg) {
  const VictimAgent victim = VictimFromCheckpoint(LoadCheckpoint(VictimPath(cfg)));
  const std::optional<Adversary> adv = MaybeAdversary(cfg, {cfg.attacker});
  const auto attacker =
      MakeAttacker(cfg.attacker, victim.policy, adv ? &*adv : nullptr, cfg.attack, cfg.agmr);
  EvalOptions options;
  options.episodes = cfg.episodes;
  options.seed = cfg.seed;
  options.env_stream = cfg.env.rng_seed;
  options.attack_stream = cfg.attack.rng_seed;
  options.threads = cfg.threads;
  options.attacker_label = cfg.attacker;
  options.epsilon = cfg.attacker == "none"   ? 0.0
                    : cfg.attacker == "agmr" ? cfg.agmr.epsilon
                                             : cfg.attack.epsilon;
  const EvalMetrics m = Evaluate(victim.policy, attacker.get(), cfg.env, cfg.reward, options);
  const std::string csv = OutPath(cfg, "eval.csv");
  WriteText(csv, [&](std::ostream& o) { WriteMetricsCsv(o, {m}); });
  std::vector<std::string> files = {VictimPath(cfg)};
  if (adv) files.push_back(AdversaryPath(cfg));
  files.push_back(csv);
  WriteManifest(cfg, "evaluate", files);
  WriteMetricsCsv(std::cout, {m});
  return 0;
}

int DefendCmd(const RunConfig& cfg) {
  const VictimAgent victim = VictimFromCheckpoint(LoadCheckpoint(VictimPath(cfg)));
  const Adversary adv = AdversaryFromCheckpoint(LoadCheckpoint(AdversaryPath(cfg)));
  DefenseOptions options;
  options.iterations = cfg.defend_iterations;
  options.lr = cfg.defend_lr;
  options.seed = cfg.seed;
  std::vector<CurveRow> curve;
  const VictimAgent defended =
      Defend(victim, adv, cfg.env, cfg.reward, cfg.ppo, cfg.agmr, options, &curve);
  const std::string ckpt = OutPath(cfg, "defended_victim.ckpt");
  const std::string curve_path = OutPath(cfg, "defend_curve.csv");
  SaveCheckpoint(ckpt, MakeVictimCheckpoint(defended));
  WriteText(curve_path, [&](std::ostream& o) { WriteCurveCsv(o, curve); });
  WriteManifest(cfg, "defend", {VictimPath(cfg), AdversaryPath(cfg), ckpt, curve_path});
  std::cout << "wrote " << ckpt << "\n";
  return 0;
}

int SweepCmd(const RunConfig& cfg) {
  const VictimAgent victim = VictimFromCheckpoint(LoadCheckpoint(VictimPath(cfg)));
  const std::optional<Adversary> adv = MaybeAdversary(cfg, cfg.sweep_attackers);
  const std::vector<EvalMetrics> rows = Sweep(victim.policy, adv ? &*adv : nullptr,
                                              cfg.sweep_attackers, cfg.sweep_epsilons, cfg);
  const std::string csv = OutPath(cfg, "sweep.csv");
  WriteText(csv, [&](std::ostream& o) { WriteMetricsCsv(o, rows); });
  std::vector<std::string> files = {VictimPath(cfg)};
  if (adv) files.push_back(AdversaryPath(cfg));
  files.push_back(csv);
  WriteManifest(cfg, "sweep", files);
  WriteMetricsCsv(std::cout, rows);
  return 0;
}

int SelftestCmd(const RunConfig& cfg) {
  bool ok = true;
  for (const CheckResult& r : RunSelftest(cfg.seed)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradmask: adversarial attacks on deep RL control policies"};
  app.require_subcommand(1);
  Flags flags;
  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Sub subs[] = {
      {"train-victim", "Train the PPO victim", TrainVictimCmd},
      {"train-attack", "Train the AGMR adversary against a victim", TrainAttackCmd},
      {"evaluate", "Evaluate a victim under an attacker", EvaluateCmd},
      {"defend", "Fine-tune a victim on AGMR-attacked rollouts", DefendCmd},
      {"sweep", "Evaluate attackers over a budget grid", SweepCmd},
      {"selftest", "Run the invariant checks", SelftestCmd},
  };
  std::vector<std::pair<CLI::App*, const Sub*>> commands;
  for (const Sub& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    AddCommonFlags(cmd, flags);
    commands.emplace_back(cmd, &s);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) std::cerr << app.help();
    return app.exit(e);
  }
  try {
    const RunConfig cfg = Resolve(flags);
    for (const auto& [cmd, sub] : commands) {
      if (cmd->parsed()) return sub->run(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
