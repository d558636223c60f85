#ifndef GRADMASK_AGMR_H_
#define GRADMASK_AGMR_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "gradmask/attacker.h"
#include "gradmask/optim.h"
#include "gradmask/rollout.h"

namespace gradmask {

struct SoftMask {
  Vec binary;
  double beta = 0.5;
  // beta on masked dims, 1 - beta elsewhere.
  Vec soft;

  static SoftMask Make(const Vec& binary, double beta);
};

struct AgmrConfig {
  double epsilon = 0.125;
  // Scale of the Gaussian noise in s' = s + scale * N(0, I).
  double smoothing_scale = 0.01;
  // Training iterations; each collects episodes_per_iteration episodes.
  int train_steps = 2000;
  double lr = 3e-4;
  double gamma = 0.99;
  double lambda = 1.0;
  double entropy_coef = 0.01;
  double eval_binarize_threshold = 0.5;
  int episodes_per_iteration = 1;
  int epochs_per_batch = 4;
  int minibatch = 256;
  double max_grad_norm = 0.5;
  // The victim acts on its mean during training, as at evaluation.
  bool stochastic_victim = false;

  // Throws ConfigError("agmr.X").
  void Validate() const;
};

enum class MaskMode { kStochastic, kDeterministic };

struct MaskSample {
  Vec binary;
  Vec probs;
  // sum_d M_d log p_d + (1 - M_d) log(1 - p_d)
  double log_likelihood = 0.0;
};

double MaskLogLikelihood(const Vec& probs, const Vec& binary);

// Stochastic: M_d ~ Bernoulli(p_d). Deterministic: M_d = 1[p_d > threshold].
MaskSample SampleMask(const MlpParams& mask_net, const StateVec& s, MaskMode mode,
                      Rng& rng, double threshold = 0.5);

struct BetaInputs {
  Vec g;
  Vec binary_mask;
};

struct BetaTerms {
  Vec g_critical;   // M * g
  Vec g_redundant;  // (1 - M) * g
  double critical_mean = 0.0;   // ||M g||_2 / ||M||_2
  double redundant_mean = 0.0;  // ||(1 - M) g||_2 / ||1 - M||_2
  double ratio = 0.5;
  double beta = 0.0;
};

// All-ones mask: redundant_mean = 0. All-zeros mask: critical_mean = 0.
// Both means zero: ratio = 0.5.
BetaTerms DecomposeGradient(const BetaInputs& in);
double ComputeBeta(const BetaInputs& in);

struct AgmrPerturbation {
  PerturbVec eta;
  SoftMask mask;
  Vec gradient;
  double mask_log_likelihood = 0.0;
  bool nonfinite_gradient = false;
};

// eta = epsilon * M_soft * sign(grad_{s'} ||mu(s') - mu(s)||^2).
AgmrPerturbation GenPerturbation(const StateVec& s, const MlpParams& victim_policy,
                                 const MlpParams& mask_net, const AgmrConfig& cfg,
                                 MaskMode mode, Rng& rng);

inline double AdvReward(double victim_reward) { return -victim_reward; }

struct Adversary {
  MlpParams mask;
  MlpParams value;
};

Adversary InitAdversary(int state_dim, Rng& rng);

// -(1/N) sum_i A_i loglik(M_i | s_i) - entropy_coef * (1/N) sum_i H(p(s_i)).
double MaskSurrogateLoss(const MlpParams& mask_net, const Mat& states,
                         const Mat& masks, const Vec& advantages,
                         double entropy_coef);
Vec MaskSurrogateGradient(const MlpParams& mask_net, const Mat& states,
                          const Mat& masks, const Vec& advantages,
                          double entropy_coef);

struct AgmrStats {
  double mask_loss = 0.0;
  double value_loss_before = 0.0;
  double value_loss_after = 0.0;
};

class AgmrLearner {
 public:
  AgmrLearner(const Adversary& adversary, const AgmrConfig& cfg);

  // Needs a finalized buffer whose rewards are adversarial and whose
  // transitions carry mask samples. Advantages are used unnormalized.
  AgmrStats Update(Adversary& adversary, const RolloutBuffer& buf, Rng& rng);

 private:
  AgmrConfig cfg_;
  Adam mask_opt_;
  Adam value_opt_;
};

class AgmrAttacker : public Attacker {
 public:
  // Keeps references to both nets.
  AgmrAttacker(const MlpParams& victim_policy, const MlpParams& mask_net,
               AgmrConfig cfg, MaskMode mode);

  Perturbation Perturb(const StateVec& s, Rng& rng) const override;
  std::string name() const override { return "agmr"; }

 private:
  const MlpParams& victim_;
  const MlpParams& mask_;
  AgmrConfig cfg_;
  MaskMode mode_;
};

struct AgmrCurveRow {
  int iteration = 0;
  double victim_reward = 0.0;
  double mean_beta = 0.0;
  double mask_density = 0.0;
};

struct AgmrTrainingResult {
  Adversary adversary;
  std::vector<AgmrCurveRow> curve;
};

// Trains a fresh adversary against the frozen victim for cfg.train_steps
// iterations.
AgmrTrainingResult TrainAgmr(const MlpParams& victim_policy, const EnvConfig& env_cfg,
                             const RewardConfig& reward_cfg, const AgmrConfig& cfg,
                             std::uint64_t seed,
                             const std::function<void(const AgmrCurveRow&)>& on_iteration = {});

}  // namespace gradmask

#endif  // GRADMASK_AGMR_H_
