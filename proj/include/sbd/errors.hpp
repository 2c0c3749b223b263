#pragma once

#include <stdexcept>
#include <string>

namespace sbd {

// Cholesky or other linear-algebra failure. Carries the largest diagonal
// jitter that was attempted before giving up.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, double attempted_jitter = 0.0)
      : std::runtime_error(what), attempted_jitter_(attempted_jitter) {}
  double attempted_jitter() const noexcept { return attempted_jitter_; }

 private:
  double attempted_jitter_;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class ProposalDegeneracyError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class InvalidTargetError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sbd
