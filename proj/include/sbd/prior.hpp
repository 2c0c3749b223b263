#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbd/random.hpp"

namespace sbd {

// One-dimensional prior. Log-uniform parameters live in log space for
// proposal and fitting purposes ("fit space"), where they are uniform.
struct ParameterPrior {
  enum class Kind { normal, uniform, log_uniform };
  Kind kind = Kind::uniform;
  double a = 0.0;  // mean or lower bound
  double b = 1.0;  // sd or upper bound

  static ParameterPrior normal(double mean, double sd);
  static ParameterPrior uniform(double lo, double hi);
  static ParameterPrior log_uniform(double lo, double hi);

  void validate() const;
  double to_fit(double theta) const;
  double from_fit(double t) const;
  bool in_support_fit(double t) const;
  double log_density_fit(double t) const;
  double sample_fit(Rng& rng) const;
  // Differential entropy in fit space.
  double entropy_fit() const;
};

// Independent product prior over a parameter vector.
class PriorSpec {
 public:
  PriorSpec() = default;
  explicit PriorSpec(std::vector<ParameterPrior> params);

  Eigen::Index dim() const { return Eigen::Index(params_.size()); }
  const std::vector<ParameterPrior>& parameters() const { return params_; }

  Eigen::VectorXd to_fit(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd from_fit(const Eigen::VectorXd& t) const;
  bool in_support_fit(const Eigen::VectorXd& t) const;
  double log_density_fit(const Eigen::VectorXd& t) const;
  double density_fit(const Eigen::VectorXd& t) const;
  Eigen::VectorXd sample_fit(Rng& rng) const;
  double entropy_fit() const;

 private:
  std::vector<ParameterPrior> params_;
};

}  // namespace sbd
