#include "sbd/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "sbd/errors.hpp"
#include "sbd/proposal.hpp"

namespace sbd {

McEstimate mc_expected_utility(const Eigen::VectorXd& action, const PosteriorSampler& posterior,
                               const OutcomeUtility& outcome, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("mc_expected_utility needs N >= 1");
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd theta = posterior(rng);
    const double u = outcome(theta, action, rng);
    const double delta = u - mean;
    mean += delta / double(i + 1);
    m2 += delta * (u - mean);
  }
  McEstimate e;
  e.estimate = mean;
  // a single draw has no standard error
  e.std_error = n < 2 ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(std::max(0.0, m2 / double(n - 1)) / double(n));
  e.calls = n;
  return e;
}

void DeConfig::validate() const {
  if (population < 8) throw std::invalid_argument("DE population must be >= 8");
  if (!(F > 0.0 && F <= 2.0)) throw std::invalid_argument("DE F must lie in (0, 2]");
  if (!(CR >= 0.0 && CR <= 1.0)) throw std::invalid_argument("DE CR must lie in [0, 1]");
  if (generations < 1) throw std::invalid_argument("DE generations must be >= 1");
  if (tolerance < 0.0) throw std::invalid_argument("DE tolerance must be >= 0");
  if (threads < 1) throw std::invalid_argument("DE threads must be >= 1");
}

namespace {

double reflect(double v, double lo, double hi) {
  const double w = hi - lo;
  // fold into [lo, hi] by mirror images
  double t = std::fmod(v - lo, 2.0 * w);
  if (t < 0.0) t += 2.0 * w;
  return t <= w ? lo + t : hi - (t - w);
}

template <class F>
void for_members(int n, int threads, F&& body) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += threads) body(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

DeResult differential_evolution(const NoisyObjective& objective, const ActionSpace& space, const DeConfig& cfg) {
  cfg.validate();
  const int np = cfg.population;
  const Eigen::Index d = space.dim();
  std::vector<Eigen::VectorXd> pop(static_cast<std::size_t>(np));
  std::vector<double> fit(static_cast<std::size_t>(np));
  DeResult res;
  {
    Rng rng = make_rng(cfg.seed, "de-init");
    for (auto& x : pop) x = space.sample_prior(rng);
  }
  for_members(np, cfg.threads, [&](int i) {
    Rng rng = make_rng(cfg.seed, "de-eval", 1, std::uint64_t(i));
    fit[std::size_t(i)] = objective(pop[std::size_t(i)], rng);
  });
  res.objective_calls += np;
  int best = 0;
  for (int i = 1; i < np; ++i)
    if (fit[std::size_t(i)] > fit[std::size_t(best)]) best = i;
  res.best = pop[std::size_t(best)];
  res.best_value = fit[std::size_t(best)];
  res.generations_run = 1;

  for (int g = 2; g <= cfg.generations; ++g) {
    if (cfg.tolerance > 0.0) {
      bool tight = true;
      for (Eigen::Index k = 0; k < d && tight; ++k) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& x : pop) {
          lo = std::min(lo, x(k));
          hi = std::max(hi, x(k));
        }
        tight = (hi - lo) < cfg.tolerance * (space.hi(k) - space.lo(k));
      }
      if (tight) break;
    }
    std::vector<Eigen::VectorXd> trial(static_cast<std::size_t>(np));
    for (int i = 0; i < np; ++i) {
      Rng rng = make_rng(cfg.seed, "de-mutate", std::uint64_t(g), std::uint64_t(i));
      std::uniform_int_distribution<int> pick(0, np - 1);
      int r1, r2, r3;
      do r1 = pick(rng); while (r1 == i);
      do r2 = pick(rng); while (r2 == i || r2 == r1);
      do r3 = pick(rng); while (r3 == i || r3 == r1 || r3 == r2);
      const Eigen::VectorXd v = pop[std::size_t(r1)] + cfg.F * (pop[std::size_t(r2)] - pop[std::size_t(r3)]);
      std::uniform_int_distribution<Eigen::Index> pick_dim(0, d - 1);
      const Eigen::Index jrand = pick_dim(rng);
      Eigen::VectorXd u = pop[std::size_t(i)];
      for (Eigen::Index k = 0; k < d; ++k) {
        if (k == jrand || uniform01(rng) < cfg.CR) u(k) = reflect(v(k), space.lo(k), space.hi(k));
      }
      trial[std::size_t(i)] = u;
    }
    std::vector<double> trial_fit(static_cast<std::size_t>(np));
    for_members(np, cfg.threads, [&](int i) {
      Rng rng = make_rng(cfg.seed, "de-eval", std::uint64_t(g), std::uint64_t(i));
      trial_fit[std::size_t(i)] = objective(trial[std::size_t(i)], rng);
      if (cfg.reevaluate_parents) {
        Rng prng = make_rng(cfg.seed, "de-reeval", std::uint64_t(g), std::uint64_t(i));
        fit[std::size_t(i)] = objective(pop[std::size_t(i)], prng);
      }
    });
    res.objective_calls += cfg.reevaluate_parents ? 2L * np : long(np);
    for (int i = 0; i < np; ++i) {
      const auto s = std::size_t(i);
      if (cfg.reevaluate_parents && fit[s] > res.best_value) {
        res.best_value = fit[s];
        res.best = pop[s];
      }
      if (trial_fit[s] >= fit[s]) {
        pop[s] = trial[s];
        fit[s] = trial_fit[s];
      }
      if (trial_fit[s] > res.best_value) {
        res.best_value = trial_fit[s];
        res.best = trial[s];
      }
    }
    res.generations_run = g;
  }
  return res;
}

PosteriorSampler amortized_posterior_sampler(const MdnParameters& posterior, const Eigen::VectorXd& x_star,
                                             const PriorSpec& prior) {
  const MixtureDensity mix = mdn_forward(posterior, x_star);
  return [mix, prior](Rng& rng) -> Eigen::VectorXd {
    for (int attempt = 0; attempt < kMaxRejectionAttempts; ++attempt) {
      const Eigen::VectorXd t = mixture_sample(mix, rng);
      if (prior.in_support_fit(t)) return prior.from_fit(t);
    }
    throw ProposalDegeneracyError("posterior has no mass inside the prior support");
  };
}

BaselineResult run_baseline(const Problem& problem, const PosteriorSampler& posterior, int n_mc,
                            const DeConfig& cfg) {
  const long before = problem.simulator_calls();
  OutcomeUtility outcome = [&](const Eigen::VectorXd& theta, const Eigen::VectorXd& a, Rng& rng) {
    return problem.simulate_outcome(theta, a, rng).utility;
  };
  NoisyObjective objective = [&](const Eigen::VectorXd& a, Rng& rng) {
    return mc_expected_utility(a, posterior, outcome, n_mc, rng).estimate;
  };
  const DeResult de = differential_evolution(objective, problem.actions(), cfg);
  BaselineResult r;
  r.a_star = de.best;
  r.value = de.best_value;
  r.objective_calls = de.objective_calls;
  r.total_calls = problem.simulator_calls() - before;
  return r;
}

}  // namespace sbd
