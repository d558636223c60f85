#ifndef GRADMASK_ATTACKS_H_
#define GRADMASK_ATTACKS_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gradmask/attacker.h"
#include "gradmask/autodiff.h"
#include "gradmask/nets.h"

namespace gradmask {

enum class AttackVariant {
  kRandom,
  kFgsm,
  kRFgsm,
  kMiFgsm,
  kNiFgsm,
  kDi2Fgsm,
  kPgd,
  kTpgd,
  kEotPgd,
};

// "random", "fgsm", "r_fgsm", "mi_fgsm", "ni_fgsm", "di2_fgsm", "pgd",
// "tpgd", "eot_pgd".
std::string VariantName(AttackVariant v);
AttackVariant ParseVariant(const std::string& name);
const std::vector<AttackVariant>& AllVariants();

// Which action the action-mse loss pushes away from.
enum class ReferenceAction {
  // Drawn from the victim's clean-state action distribution.
  kSampled,
  // The clean-state mean. The loss then has a zero gradient at the clean
  // state, so single-step attacks without random starts return zero.
  kMean,
};

struct AttackConfig {
  double epsilon = 0.125;
  int steps = 10;
  // Per-step size; <= 0 means epsilon / 4.
  double alpha = 0.0;
  double momentum_decay = 1.0;
  double transform_prob = 0.5;
  int eot_samples = 5;
  // Gaussian input-noise scale for eot_pgd; < 0 means epsilon / 2.
  double eot_noise_scale = -1.0;
  // pgd starts from s + U(-eps, eps) when set.
  bool pgd_random_init = true;
  // tpgd starts from s + tpgd_init_scale * N(0, I); the KL loss is flat at
  // the clean state.
  double tpgd_init_scale = 1e-3;
  ReferenceAction reference = ReferenceAction::kSampled;
  std::uint64_t rng_seed = 0;

  double step_size() const { return alpha > 0.0 ? alpha : epsilon / 4.0; }
  double eot_scale() const {
    return eot_noise_scale >= 0.0 ? eot_noise_scale : epsilon / 2.0;
  }
  // Throws ConfigError("attack.X").
  void Validate() const;
};

enum class LossKind { kActionMse, kPolicyKl };

struct AttackLoss {
  LossKind kind = LossKind::kActionMse;
  ActionVec reference_action;  // action-mse
  PolicyOutput reference_policy;  // policy-kl, clean-state output

  static AttackLoss ActionMse(ActionVec a);
  static AttackLoss PolicyKl(PolicyOutput clean);
};

// KL(p || q) for diagonal Gaussians.
double GaussianKl(const PolicyOutput& p, const PolicyOutput& q);

// Differentiable attack loss J(s) of the victim policy against a fixed
// reference. Holds pointers into `policy`, which must outlive it.
class AttackObjective {
 public:
  AttackObjective(const MlpParams& policy, const AttackLoss& loss);

  double Value(const StateVec& s);
  // dJ/ds. Throws NonFiniteError when the gradient is NaN/Inf.
  Vec Gradient(const StateVec& s);

 private:
  ad::Graph graph_;
  ad::NodeId input_;
  int state_dim_;
};

// L-inf projection onto [center - eps, center + eps].
StateVec ProjectBox(const StateVec& x, const StateVec& center, double epsilon);

struct AttackResult {
  PerturbVec eta;
  bool nonfinite_gradient = false;
};

PerturbVec RandomAttack(const StateVec& s, const AttackConfig& cfg, Rng& rng);

// variant in {fgsm, r_fgsm, mi_fgsm, ni_fgsm, di2_fgsm}.
AttackResult FgsmFamily(const StateVec& s, const MlpParams& victim_policy,
                        const AttackConfig& cfg, AttackVariant variant, Rng& rng);

// variant in {pgd, tpgd, eot_pgd}.
AttackResult PgdFamily(const StateVec& s, const MlpParams& victim_policy,
                       const AttackConfig& cfg, AttackVariant variant, Rng& rng);

// Dispatches on the variant.
AttackResult RunAttack(const StateVec& s, const MlpParams& victim_policy,
                       const AttackConfig& cfg, AttackVariant variant, Rng& rng);

class BaselineAttacker : public Attacker {
 public:
  // Keeps a reference to `victim_policy`.
  BaselineAttacker(const MlpParams& victim_policy, AttackConfig cfg,
                   AttackVariant variant);

  Perturbation Perturb(const StateVec& s, Rng& rng) const override;
  std::string name() const override { return VariantName(variant_); }

 private:
  const MlpParams& policy_;
  AttackConfig cfg_;
  AttackVariant variant_;
};

}  // namespace gradmask

#endif  // GRADMASK_ATTACKS_H_
