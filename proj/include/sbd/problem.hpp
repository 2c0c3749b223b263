#pragma once

#include <atomic>
#include <string>

#include <Eigen/Dense>

#include "sbd/action.hpp"
#include "sbd/prior.hpp"
#include "sbd/random.hpp"

namespace sbd {

struct SimulationResult {
  Eigen::VectorXd history;  // raw observations x (flattened)
  Eigen::VectorXd outcome;  // future outcome y
  double utility = 0.0;
  bool flagged = false;     // simulator hit a guard (population cap, event budget)
};

// A decision problem: prior, simulator, summaries, utility and action space.
// Parameters passed to simulators are in natural units. Simulator calls are
// counted so that budgets reconcile with instrumentation.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string name() const = 0;
  virtual const PriorSpec& prior() const = 0;
  virtual const ActionSpace& actions() const = 0;
  // Observed data x*, in the same layout as SimulationResult::history.
  virtual const Eigen::VectorXd& observed() const = 0;
  // Summary vector s(x) fed to the posterior estimator and the surrogate.
  virtual Eigen::VectorXd features(const Eigen::VectorXd& history) const = 0;
  virtual bool lognormal_utility() const { return false; }
  virtual double convergence_tolerance() const { return 0.01; }
  virtual int posterior_components() const { return 3; }

  // One combined call: history, future outcome and utility from one latent
  // trajectory.
  SimulationResult simulate(const Eigen::VectorXd& theta, const Eigen::VectorXd& action, Rng& rng) const {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_simulate(theta, action, rng);
  }
  // Future outcome conditioned on the observed x* (history = observed()).
  SimulationResult simulate_outcome(const Eigen::VectorXd& theta, const Eigen::VectorXd& action,
                                    Rng& rng) const {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_simulate_outcome(theta, action, rng);
  }

  long simulator_calls() const { return calls_.load(); }
  void reset_simulator_calls() const { calls_.store(0); }

 protected:
  virtual SimulationResult do_simulate(const Eigen::VectorXd& theta, const Eigen::VectorXd& action,
                                       Rng& rng) const = 0;
  virtual SimulationResult do_simulate_outcome(const Eigen::VectorXd& theta,
                                               const Eigen::VectorXd& action, Rng& rng) const = 0;

 private:
  mutable std::atomic<long> calls_{0};
};

// Reads a numeric CSV with a header row; returns rows x columns.
Eigen::MatrixXd read_numeric_csv(const std::string& path);

std::string data_path(const std::string& file);

}  // namespace sbd
