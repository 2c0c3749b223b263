#pragma once

#include <vector>

#include "sbd/problem.hpp"

namespace sbd {

struct WarehouseEconomics {
  double cost = 90.0;
  double value = 100.0;
  double penalty = 100.0;

  void validate() const;
};

inline constexpr int kWarehouseMonths = 12;
inline constexpr std::uint64_t kWarehouseFixtureSeed = 20240501;

double warehouse_utility(double demand, double stock, const WarehouseEconomics& econ);

// (mean, sd) with the n-1 denominator.
Eigen::VectorXd warehouse_summaries(const Eigen::VectorXd& history);

// E[U | a, mu, sigma] for Gaussian demand.
double warehouse_expected_utility(double stock, double mu, double sigma, const WarehouseEconomics& econ);

PriorSpec warehouse_prior();
ActionSpace warehouse_action_space(int resolution = 256);

// Twelve months drawn from N(234, 5^2) with the fixture seed.
Eigen::VectorXd warehouse_fixture(std::uint64_t seed = kWarehouseFixtureSeed);

struct WarehouseOracleResult {
  double action = 0.0;
  double expected_utility = 0.0;
  bool non_identifiable = false;
  double mu_lo = 0.0, mu_hi = 0.0;
  int widenings = 0;
};

// Maximizes sum_i w_i E[U | a, mu_i, sigma_i] over the action box by a dense
// scan and golden-section polish.
WarehouseOracleResult warehouse_optimal_action(const std::vector<double>& mu, const std::vector<double>& sigma,
                                               const std::vector<double>& weight,
                                               const WarehouseEconomics& econ, double lo, double hi);

// Posterior quadrature over (mu, sigma) given the observed history, then the
// optimal action under it.
WarehouseOracleResult warehouse_oracle(const Eigen::VectorXd& history, const WarehouseEconomics& econ,
                                       const PriorSpec& prior, int grid = 300);

class WarehouseProblem final : public Problem {
 public:
  explicit WarehouseProblem(WarehouseEconomics econ = {}, int resolution = 256);
  WarehouseProblem(WarehouseEconomics econ, Eigen::VectorXd observed, int resolution = 256);

  std::string name() const override { return "warehouse"; }
  const PriorSpec& prior() const override { return prior_; }
  const ActionSpace& actions() const override { return space_; }
  const Eigen::VectorXd& observed() const override { return observed_; }
  Eigen::VectorXd features(const Eigen::VectorXd& history) const override {
    return warehouse_summaries(history);
  }
  double convergence_tolerance() const override { return 0.01; }
  int posterior_components() const override { return 3; }
  const WarehouseEconomics& economics() const { return econ_; }

 protected:
  SimulationResult do_simulate(const Eigen::VectorXd& theta, const Eigen::VectorXd& action,
                               Rng& rng) const override;
  SimulationResult do_simulate_outcome(const Eigen::VectorXd& theta, const Eigen::VectorXd& action,
                                       Rng& rng) const override;

 private:
  WarehouseEconomics econ_;
  PriorSpec prior_;
  ActionSpace space_;
  Eigen::VectorXd observed_;
};

}  // namespace sbd
