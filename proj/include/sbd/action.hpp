#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "sbd/gp.hpp"
#include "sbd/random.hpp"

namespace sbd {

// Box of continuous actions with a uniform action prior. Candidate actions
// are the centres of a regular grid of cells; the first dimension varies
// slowest in candidate order.
struct ActionSpace {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  std::vector<int> resolution;

  void validate() const;
  Eigen::Index dim() const { return lo.size(); }
  double cell_width(Eigen::Index d) const { return (hi(d) - lo(d)) / resolution[std::size_t(d)]; }
  Eigen::Index candidate_count() const;
  Eigen::MatrixXd candidates() const;
  bool contains(const Eigen::VectorXd& a) const;
  Eigen::VectorXd sample_prior(Rng& rng) const;
};

// Rows (a_i, x_star).
Eigen::MatrixXd joint_inputs(const Eigen::MatrixXd& actions, const Eigen::VectorXd& x_star);

// n_draws x m matrix of joint posterior function draws at (a_i, x_star),
// mapped to utility scale (u = 1 - exp(g) in log-normal mode).
Eigen::MatrixXd draw_utility_functions(const GpSurrogate& gp, const Eigen::VectorXd& x_star,
                                       const Eigen::MatrixXd& candidates, int n_draws, Rng& rng);

struct OptimalActionPosterior {
  Eigen::MatrixXd candidates;
  Eigen::VectorXd probabilities;
  int draws_used = 0;
};

// Probability of candidate i = share of draws whose row argmax (lowest index
// on ties) is i.
OptimalActionPosterior optimal_action_posterior(const Eigen::MatrixXd& draws,
                                                const Eigen::MatrixXd& candidates);

OptimalActionPosterior point_mass_posterior(const Eigen::MatrixXd& candidates, Eigen::Index index);

// With probability 1 - epsilon: a candidate drawn from `post` plus uniform
// jitter within its grid cell; otherwise a draw from the action prior.
Eigen::MatrixXd propose_actions(const OptimalActionPosterior& post, const ActionSpace& space,
                                double epsilon, int count, Rng& rng);

// Half-width of the central 68% interval of each marginal of `post`.
Eigen::VectorXd posterior_spread(const OptimalActionPosterior& post);

struct GridOptimum {
  Eigen::VectorXd action;
  double value = 0.0;
  Eigen::Index candidate = 0;
  bool non_identifiable = false;
};

using ActionObjective = std::function<double(const Eigen::VectorXd&)>;

// Picks the best candidate from precomputed `candidate_values` (lowest index
// on ties), then polishes with golden-section search inside its grid cell.
// A flat surface keeps the lowest-index candidate and sets non_identifiable.
GridOptimum maximize_on_grid(const Eigen::VectorXd& candidate_values, const ActionObjective& objective,
                             const ActionSpace& space);

struct PointEstimate {
  Eigen::VectorXd action;
  Eigen::VectorXd spread;
  double expected_utility = 0.0;
  bool non_identifiable = false;
};

PointEstimate point_estimate(const OptimalActionPosterior& post, const GpSurrogate& gp,
                             const Eigen::VectorXd& x_star, const ActionSpace& space);

}  // namespace sbd
