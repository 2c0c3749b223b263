#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbd/action.hpp"
#include "sbd/gp.hpp"
#include "sbd/mdn.hpp"
#include "sbd/problem.hpp"
#include "sbd/proposal.hpp"

namespace sbd {

enum class SurrogateMode { regression, cde };

const char* to_string(SurrogateMode m);
SurrogateMode surrogate_mode_from_string(const std::string& s);

struct ConvergenceConfig {
  double rel_tol = 0.0;  // 0 selects the problem default
  int patience = 3;
  int min_rounds = 0;
  bool stop_early = true;
};

struct EngineConfig {
  SurrogateMode mode = SurrogateMode::regression;
  bool active_params = true;
  bool active_actions = true;
  int rounds = 12;
  int batch = 8;
  double epsilon = 0.1;
  double cde_epsilon = 0.3;
  std::uint64_t seed = 1;
  int thompson_draws = 1000;
  int gp_restarts = 4;
  int gp_max_iterations = 200;
  int gp_max_fit_points = 512;
  int entropy_draws = 2000;
  int mass_draws = kDefaultMassDraws;
  int threads = 1;
  int max_redraws = 100;
  ConvergenceConfig convergence;
  std::vector<int> posterior_hidden{64, 64};
  TrainingConfig posterior_training;
  int cde_components = 3;
  std::vector<int> cde_hidden{64, 64};
  TrainingConfig cde_training;

  void validate() const;
};

struct WeightedSimulationRecord {
  Eigen::VectorXd theta;      // natural units
  Eigen::VectorXd theta_fit;  // fit space (log for log-uniform parameters)
  Eigen::VectorXd summary;    // s(x)
  Eigen::VectorXd action;
  double utility = 0.0;
  int round = 0;
  bool flagged = false;
};

struct RoundTrace {
  int round = 0;
  long cum_sims = 0;
  Eigen::VectorXd a_star;
  Eigen::VectorXd spread;
  double entropy = std::numeric_limits<double>::quiet_NaN();
  double entropy_se = std::numeric_limits<double>::quiet_NaN();
  double expected_utility = std::numeric_limits<double>::quiet_NaN();
  bool non_identifiable = false;
  bool posterior_trained = false;
  int posterior_best_epoch = 0;
  double posterior_validation_loss = std::numeric_limits<double>::quiet_NaN();
  double effective_sample_size = 0.0;
  long quarantined = 0;
  long flagged = 0;
  KernelHyper gp_hyper;
  double gp_jitter = 0.0;
};

struct RunTrace {
  std::vector<RoundTrace> rounds;
  int stop_round = 0;  // 0: the stopping rule never fired
};

struct SurfaceDump {
  Eigen::MatrixXd candidates;
  Eigen::VectorXd u_mean;
  Eigen::VectorXd u_sd;
  Eigen::VectorXd probability;
};

struct RunResult {
  Eigen::VectorXd a_star;
  Eigen::VectorXd spread;
  bool non_identifiable = false;
  RunTrace trace;
  std::optional<GpSurrogate> surrogate;
  std::optional<MdnParameters> utility_model;
  std::optional<MdnParameters> posterior;
  ProposalMixture proposal{PriorSpec{}};
  std::vector<WeightedSimulationRecord> records;
  Eigen::VectorXd x_star;  // s(x*)
  SurfaceDump surface;
  long simulator_calls = 0;
  bool aborted = false;
  std::string error;
};

// Weights are P/Q against `q`, or exactly 1 when q is the bare prior.
Eigen::VectorXd record_weights(const std::vector<WeightedSimulationRecord>& records, const ProposalMixture& q);

Eigen::MatrixXd surrogate_inputs(const std::vector<WeightedSimulationRecord>& records);

GpSurrogate fit_surrogate_regression(const std::vector<WeightedSimulationRecord>& records,
                                     const Eigen::VectorXd& weights, const GpSurrogateConfig& cfg);

MdnParameters fit_surrogate_cde(const std::vector<WeightedSimulationRecord>& records, const Eigen::VectorXd& weights,
                                MdnParameters init, const TrainingConfig& cfg);

double cde_expected_utility(const MdnParameters& mdn, const Eigen::VectorXd& action, const Eigen::VectorXd& x_star);

// Grid scan plus polish of the surrogate's expected utility at x*.
GridOptimum optimize_surrogate(const GpSurrogate& gp, const Eigen::VectorXd& x_star, const ActionSpace& space);
GridOptimum optimize_surrogate(const MdnParameters& mdn, const Eigen::VectorXd& x_star, const ActionSpace& space);

struct ConvergenceReport {
  std::vector<int> rounds;
  std::vector<Eigen::VectorXd> a_star;
  std::vector<Eigen::VectorXd> spread;
  std::vector<double> entropy;
  std::vector<double> entropy_se;
  int stop_round = 0;
};

// First round r at which the relative change of every action dimension
// against round r-1 stays below rel_tol for `patience` consecutive rounds.
// Changes are relative to max(|a|, floor). Rounds with no estimate reset the
// count. Returns 0 when the rule never fires.
int stopping_round(const std::vector<Eigen::VectorXd>& a_star, double rel_tol, int patience,
                   const Eigen::VectorXd& floor, int min_rounds = 0);

ConvergenceReport convergence_report(const RunTrace& trace, double rel_tol, int patience,
                                     const Eigen::VectorXd& floor, int min_rounds = 0);

RunResult run_sbd(const Problem& problem, const EngineConfig& config);

}  // namespace sbd
