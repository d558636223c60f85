#ifndef GRADMASK_ATTACKER_H_
#define GRADMASK_ATTACKER_H_

#include <string>

#include "gradmask/types.h"

namespace gradmask {

struct Perturbation {
  PerturbVec eta;
  // Binary mask actually applied; empty for attackers without a mask.
  Vec mask;
  // Log-likelihood of `mask` under the mask distribution that produced it.
  double mask_log_likelihood = 0.0;
  double beta = 0.0;
  // Set when the gradient was NaN/Inf and eta fell back to zero.
  bool nonfinite_gradient = false;
};

// Produces an observation perturbation for a clean state. Implementations
// are pure given their parameters, the state and the RNG state.
class Attacker {
 public:
  virtual ~Attacker() = default;
  virtual Perturbation Perturb(const StateVec& s, Rng& rng) const = 0;
  virtual std::string name() const = 0;
};

}  // namespace gradmask

#endif  // GRADMASK_ATTACKER_H_
