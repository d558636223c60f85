#include "gradmask/harness.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "gradmask/checkpoint.h"
#include "gradmask/errors.h"

namespace gradmask {
namespace {

std::string Num(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

Rng StreamRng(std::uint64_t base, std::uint64_t stream, std::uint32_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), salt};
  return Rng(seq);
}

EpisodeRecord RunEpisode(const MlpParams& policy, const Attacker* attacker,
                         const EnvConfig& env_cfg, const RewardConfig& reward_cfg,
                         const EvalOptions& options, int index) {
  const std::uint64_t base = options.seed + static_cast<std::uint64_t>(index);
  Rng env_rng = StreamRng(base, options.env_stream, 0x656e76u);
  Rng attack_rng = StreamRng(base, options.attack_stream, 0x61746bu);
  Environment env(env_cfg, reward_cfg);
  StateVec s = env.Reset(env_rng);
  EpisodeRecord rec;
  rec.index = index;
  while (!env.done()) {
    const ActionVec a = attacker == nullptr
                            ? PolicyForward(policy, s).mean
                            : PolicyForward(policy, s + attacker->Perturb(s, attack_rng).eta).mean;
    const StepResult step = env.Step(a, env_rng);
    rec.reward_mean += step.reward;
    rec.velocity_mean += step.forward_velocity;
    ++rec.steps;
    rec.fell = rec.fell || step.fell;
    s = step.next_state;
  }
  rec.reward_mean /= rec.steps;
  rec.velocity_mean /= rec.steps;
  return rec;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> Ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::unique_ptr<Attacker> MakeAttacker(const std::string& name,
                                       const MlpParams& victim_policy,
                                       const Adversary* adversary,
                                       const AttackConfig& attack_cfg,
                                       const AgmrConfig& agmr_cfg) {
  if (name == "none") return nullptr;
  if (name == "agmr") {
    if (adversary == nullptr) throw std::invalid_argument("agmr needs an adversary checkpoint");
    if (adversary->mask.input_dim() != victim_policy.input_dim()) {
      throw DimensionError("adversary and victim state dims differ");
    }
    return std::make_unique<AgmrAttacker>(victim_policy, adversary->mask, agmr_cfg,
                                          MaskMode::kDeterministic);
  }
  return std::make_unique<BaselineAttacker>(victim_policy, attack_cfg, ParseVariant(name));
}

EvalMetrics Aggregate(std::vector<EpisodeRecord> records) {
  std::sort(records.begin(), records.end(),
            [](const EpisodeRecord& a, const EpisodeRecord& b) { return a.index < b.index; });
  EvalMetrics m;
  m.episodes = static_cast<int>(records.size());
  if (records.empty()) return m;
  const double n = static_cast<double>(records.size());
  for (const EpisodeRecord& r : records) {
    m.reward_mean += r.reward_mean;
    m.velocity_mean += r.velocity_mean;
    m.falls += r.fell ? 1 : 0;
  }
  m.reward_mean /= n;
  m.velocity_mean /= n;
  for (const EpisodeRecord& r : records) {
    m.reward_std += (r.reward_mean - m.reward_mean) * (r.reward_mean - m.reward_mean);
    m.velocity_std += (r.velocity_mean - m.velocity_mean) * (r.velocity_mean - m.velocity_mean);
  }
  m.reward_std = std::sqrt(m.reward_std / n);
  m.velocity_std = std::sqrt(m.velocity_std / n);
  m.records = std::move(records);
  return m;
}

EvalMetrics Evaluate(const MlpParams& victim_policy, const Attacker* attacker,
                     const EnvConfig& env_cfg, const RewardConfig& reward_cfg,
                     const EvalOptions& options) {
  if (options.episodes < 1) throw std::invalid_argument("evaluate needs at least one episode");
  if (victim_policy.input_dim() != env_cfg.state_dim() ||
      victim_policy.output_dim() != env_cfg.action_dim()) {
    throw DimensionError("victim checkpoint does not match the environment dims");
  }
  std::vector<EpisodeRecord> records(static_cast<std::size_t>(options.episodes));
  int threads = options.threads > 0 ? options.threads
                                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, options.episodes);
  if (threads == 1) {
    for (int i = 0; i < options.episodes; ++i) {
      records[i] = RunEpisode(victim_policy, attacker, env_cfg, reward_cfg, options, i);
    }
  } else {
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int i = next++; i < options.episodes; i = next++) {
          try {
            records[i] = RunEpisode(victim_policy, attacker, env_cfg, reward_cfg, options, i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }
  EvalMetrics m = Aggregate(std::move(records));
  m.env = EnvName(env_cfg.kind);
  m.attacker = options.attacker_label;
  m.epsilon = options.epsilon;
  m.seed = options.seed;
  return m;
}

VictimAgent Defend(const VictimAgent& victim, const Adversary& adversary,
                   const EnvConfig& env_cfg, const RewardConfig& reward_cfg,
                   const PpoConfig& ppo_cfg, const AgmrConfig& agmr_cfg,
                   const DefenseOptions& options, std::vector<CurveRow>* curve) {
  if (options.iterations < 1 || !(options.lr > 0.0)) {
    throw std::invalid_argument("defend needs iterations >= 1 and lr > 0");
  }
  VictimAgent agent = victim;
  const AgmrAttacker attacker(agent.policy, adversary.mask, agmr_cfg, MaskMode::kDeterministic);
  TrainingOptions training;
  training.max_iterations = options.iterations;
  training.fixed_lr = options.lr;
  training.attacker = &attacker;
  Rng rng(options.seed);
  std::vector<CurveRow> rows = RunPpo(agent, env_cfg, reward_cfg, ppo_cfg, training, rng);
  if (curve != nullptr) *curve = std::move(rows);
  return agent;
}

std::vector<EvalMetrics> Sweep(const MlpParams& victim_policy, const Adversary* adversary,
                               const std::vector<std::string>& attackers,
                               const std::vector<double>& epsilons,
                               const RunConfig& cfg) {
  if (epsilons.size() < 2) throw std::invalid_argument("sweep needs at least two budgets");
  std::vector<EvalMetrics> rows;
  for (const std::string& name : attackers) {
    for (double eps : epsilons) {
      EvalOptions options;
      options.episodes = cfg.episodes;
      options.seed = cfg.seed;
      options.env_stream = cfg.env.rng_seed;
      options.attack_stream = cfg.attack.rng_seed;
      options.threads = cfg.threads;
      options.attacker_label = name;
      options.epsilon = eps;
      std::unique_ptr<Attacker> attacker;
      if (eps > 0.0) {
        AttackConfig attack = cfg.attack;
        AgmrConfig agmr = cfg.agmr;
        attack.epsilon = eps;
        agmr.epsilon = eps;
        attacker = MakeAttacker(name, victim_policy, adversary, attack, agmr);
      }
      rows.push_back(Evaluate(victim_policy, attacker.get(), cfg.env, cfg.reward, options));
    }
  }
  return rows;
}

const std::vector<std::string>& MetricsColumns() {
  static const std::vector<std::string> cols = {
      "env",           "attacker",     "epsilon",      "seed",         "episodes",
      "reward_mean",   "reward_std",   "velocity_mean", "velocity_std", "falls"};
  return cols;
}

void WriteMetricsCsv(std::ostream& out, const std::vector<EvalMetrics>& rows) {
  const auto& cols = MetricsColumns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const EvalMetrics& m : rows) {
    out << m.env << "," << m.attacker << "," << Num(m.epsilon) << "," << m.seed << ","
        << m.episodes << "," << Num(m.reward_mean) << "," << Num(m.reward_std) << ","
        << Num(m.velocity_mean) << "," << Num(m.velocity_std) << "," << m.falls << "\n";
  }
}

std::string MetricsCsv(const std::vector<EvalMetrics>& rows) {
  std::ostringstream os;
  WriteMetricsCsv(os, rows);
  return os.str();
}

void WriteCurveCsv(std::ostream& out, const std::vector<CurveRow>& curve) {
  out << "iteration,env_steps,mean_reward,mean_velocity,falls\n";
  for (const CurveRow& r : curve) {
    out << r.iteration << "," << r.env_steps << "," << Num(r.mean_reward) << ","
        << Num(r.mean_velocity) << "," << r.falls << "\n";
  }
}

void WriteAgmrCurveCsv(std::ostream& out, const std::vector<AgmrCurveRow>& curve) {
  out << "iteration,victim_reward,mean_beta,mask_density\n";
  for (const AgmrCurveRow& r : curve) {
    out << r.iteration << "," << Num(r.victim_reward) << "," << Num(r.mean_beta) << ","
        << Num(r.mask_density) << "\n";
  }
}

std::string RunManifest(const RunConfig& cfg, const std::string& command,
                        const std::vector<std::string>& files) {
  nlohmann::ordered_json j;
  j["command"] = command;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [key, value] : ParseConfigText(DumpConfig(cfg))) config[key] = value;
  j["config"] = config;
  nlohmann::ordered_json hashes = nlohmann::ordered_json::array();
  for (const std::string& f : files) {
    hashes.push_back({{"path", f}, {"git_blob_sha1", GitBlobHash(ReadFile(f))}});
  }
  j["files"] = hashes;
  return j.dump(2) + "\n";
}

double SpearmanRho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("spearman needs two equal-length series of length >= 2");
  }
  const std::vector<double> rx = Ranks(x);
  const std::vector<double> ry = Ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace gradmask
