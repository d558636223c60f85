#ifndef GRADMASK_OPTIM_H_
#define GRADMASK_OPTIM_H_

#include "gradmask/nets.h"

namespace gradmask {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global L2 gradient-norm clip; <= 0 disables.
  double max_grad_norm = 0.5;
};

// Adam over the flat parameter layout of one MlpParams.
class Adam {
 public:
  explicit Adam(Eigen::Index size, AdamOptions options = {});

  // Descends `grad`. Returns the gradient norm before clipping.
  double Step(MlpParams& params, const Vec& grad, double lr);

  long steps() const { return t_; }

 private:
  AdamOptions options_;
  Vec m_;
  Vec v_;
  long t_ = 0;
};

}  // namespace gradmask

#endif  // GRADMASK_OPTIM_H_
