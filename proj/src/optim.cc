#include "gradmask/optim.h"

#include <cmath>

#include "gradmask/errors.h"

namespace gradmask {

Adam::Adam(Eigen::Index size, AdamOptions options)
    : options_(options), m_(Vec::Zero(size)), v_(Vec::Zero(size)) {}

double Adam::Step(MlpParams& params, const Vec& grad, double lr) {
  if (grad.size() != m_.size()) throw DimensionError("Adam: gradient size mismatch");
  if (!grad.allFinite()) throw NonFiniteError("Adam: non-finite gradient");
  const double norm = grad.norm();
  Vec g = grad;
  if (options_.max_grad_norm > 0.0 && norm > options_.max_grad_norm) {
    g *= options_.max_grad_norm / norm;
  }
  ++t_;
  m_ = options_.beta1 * m_ + (1.0 - options_.beta1) * g;
  v_ = options_.beta2 * v_ + (1.0 - options_.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  Vec flat = params.Flatten();
  flat.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + options_.eps);
  params.Assign(flat);
  if (params.head == HeadKind::kGaussianPolicy) params.ClampLogStd();
  return norm;
}

}  // namespace gradmask
