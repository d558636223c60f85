#ifndef GRADMASK_TYPES_H_
#define GRADMASK_TYPES_H_

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>

namespace gradmask {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using StateVec = Vec;
using ActionVec = Vec;
using PerturbVec = Vec;

// All stochastic components draw from this engine. Determinism across runs
// relies on the same standard library implementation.
using Rng = std::mt19937_64;

inline bool AllFinite(const Eigen::Ref<const Mat>& m) {
  return m.allFinite();
}

// sign(0) = 0.
inline double Sign(double x) { return (x > 0.0) - (x < 0.0); }

inline Vec SignOf(const Vec& v) { return v.unaryExpr(&Sign); }

inline double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Vec StandardNormal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace gradmask

#endif  // GRADMASK_TYPES_H_
