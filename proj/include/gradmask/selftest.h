#ifndef GRADMASK_SELFTEST_H_
#define GRADMASK_SELFTEST_H_

#include <cstdint>
#include <string>
#include <vector>

namespace gradmask {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Fast invariant checks over random inputs: gradients against finite
// differences, GAE at lambda = 1, beta bounds, attack budgets, reduction
// identities, distractor irrelevance, checkpoint and config round trips.
std::vector<CheckResult> RunSelftest(std::uint64_t seed);

}  // namespace gradmask

#endif  // GRADMASK_SELFTEST_H_
