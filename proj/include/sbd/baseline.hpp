#pragma once

#include <functional>

#include <Eigen/Dense>

#include "sbd/action.hpp"
#include "sbd/mdn.hpp"
#include "sbd/problem.hpp"

namespace sbd {

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  long calls = 0;
};

using PosteriorSampler = std::function<Eigen::VectorXd(Rng&)>;
// One simulator call: draws an outcome for (theta, a) and returns its utility.
using OutcomeUtility = std::function<double(const Eigen::VectorXd& theta, const Eigen::VectorXd& action, Rng&)>;

McEstimate mc_expected_utility(const Eigen::VectorXd& action, const PosteriorSampler& posterior,
                               const OutcomeUtility& outcome, int n, Rng& rng);

struct DeConfig {
  int population = 16;
  double F = 0.8;
  double CR = 0.9;
  int generations = 50;
  // Stop once every dimension's population range falls below
  // tolerance * box width; 0 disables.
  double tolerance = 0.0;
  // Re-evaluate each parent every generation instead of keeping the value
  // from when it entered the population.
  bool reevaluate_parents = true;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

struct DeResult {
  Eigen::VectorXd best;
  double best_value = 0.0;
  long objective_calls = 0;
  int generations_run = 0;
};

using NoisyObjective = std::function<double(const Eigen::VectorXd& action, Rng& rng)>;

// DE/rand/1/bin maximizer with reflection at the box boundary. Generation 1
// is the random initial population.
DeResult differential_evolution(const NoisyObjective& objective, const ActionSpace& space, const DeConfig& cfg);

struct BaselineResult {
  Eigen::VectorXd a_star;
  double value = 0.0;
  long total_calls = 0;
  long objective_calls = 0;
};

// Posterior draws come from the amortized posterior at x*, truncated to the
// prior support; outcomes continue from the observed data.
PosteriorSampler amortized_posterior_sampler(const MdnParameters& posterior, const Eigen::VectorXd& x_star,
                                             const PriorSpec& prior);

BaselineResult run_baseline(const Problem& problem, const PosteriorSampler& posterior, int n_mc,
                            const DeConfig& cfg);

}  // namespace sbd
