#ifndef GRADMASK_ERRORS_H_
#define GRADMASK_ERRORS_H_

#include <stdexcept>
#include <string>

namespace gradmask {

// Shape or length of an argument does not match what the callee declared.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN or Inf reached an API boundary.
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Operation called in the wrong lifecycle state (e.g. backward before
// forward, stepping a finished episode).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gradmask

#endif  // GRADMASK_ERRORS_H_
