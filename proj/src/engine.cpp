#include "sbd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "sbd/errors.hpp"

namespace sbd {

const char* to_string(SurrogateMode m) { return m == SurrogateMode::regression ? "regression" : "cde"; }

SurrogateMode surrogate_mode_from_string(const std::string& s) {
  if (s == "regression") return SurrogateMode::regression;
  if (s == "cde") return SurrogateMode::cde;
  throw std::invalid_argument("unknown surrogate mode '" + s + "'");
}

void EngineConfig::validate() const {
  if (rounds < 1 || batch < 1) throw std::invalid_argument("rounds and batch must be >= 1");
  if (long(rounds) * long(batch) < 16) throw std::invalid_argument("rounds * batch must be >= 16");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (!(cde_epsilon >= 0.0 && cde_epsilon <= 1.0)) throw std::invalid_argument("cde epsilon must lie in [0, 1]");
  if (convergence.rel_tol < 0.0) throw std::invalid_argument("rel_tol must be > 0");
  if (convergence.patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (thompson_draws < 1) throw std::invalid_argument("thompson draws must be >= 1");
  if (gp_restarts < 1 || gp_max_iterations < 1 || gp_max_fit_points < 2) {
    throw std::invalid_argument("gp fit settings must be positive");
  }
  if (entropy_draws < 100) throw std::invalid_argument("entropy draws must be >= 100");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (cde_components < 1) throw std::invalid_argument("cde components must be >= 1");
  posterior_training.validate();
  cde_training.validate();
}

Eigen::VectorXd record_weights(const std::vector<WeightedSimulationRecord>& records, const ProposalMixture& q) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(Eigen::Index(records.size()));
  if (q.size() == 1) return w;
  for (std::size_t i = 0; i < records.size(); ++i)
    w(Eigen::Index(i)) = importance_weight(q.prior(), q, records[i].theta_fit);
  return w;
}

Eigen::MatrixXd surrogate_inputs(const std::vector<WeightedSimulationRecord>& records) {
  if (records.empty()) return Eigen::MatrixXd(0, 0);
  const Eigen::Index da = records.front().action.size(), ds = records.front().summary.size();
  Eigen::MatrixXd z(Eigen::Index(records.size()), da + ds);
  for (std::size_t i = 0; i < records.size(); ++i) {
    z.row(Eigen::Index(i)).head(da) = records[i].action.transpose();
    z.row(Eigen::Index(i)).tail(ds) = records[i].summary.transpose();
  }
  return z;
}

namespace {

Eigen::VectorXd record_utilities(const std::vector<WeightedSimulationRecord>& records) {
  Eigen::VectorXd u(Eigen::Index(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) u(Eigen::Index(i)) = records[i].utility;
  return u;
}

}  // namespace

GpSurrogate fit_surrogate_regression(const std::vector<WeightedSimulationRecord>& records,
                                     const Eigen::VectorXd& weights, const GpSurrogateConfig& cfg) {
  if (records.size() < 2) throw std::invalid_argument("regression surrogate needs at least 2 records");
  return GpSurrogate::fit(surrogate_inputs(records), record_utilities(records), weights, cfg);
}

MdnParameters fit_surrogate_cde(const std::vector<WeightedSimulationRecord>& records, const Eigen::VectorXd& weights,
                                MdnParameters init, const TrainingConfig& cfg) {
  WeightedDataset data;
  data.conditioners = surrogate_inputs(records);
  data.targets = record_utilities(records);
  data.weights = weights;
  return mdn_train_weighted(data, std::move(init), cfg).params;
}

double cde_expected_utility(const MdnParameters& mdn, const Eigen::VectorXd& action, const Eigen::VectorXd& x_star) {
  Eigen::VectorXd z(action.size() + x_star.size());
  z << action, x_star;
  return mixture_mean(mdn_forward(mdn, z))(0);
}

GridOptimum optimize_surrogate(const GpSurrogate& gp, const Eigen::VectorXd& x_star, const ActionSpace& space) {
  const Eigen::VectorXd values = gp.expected_utility(joint_inputs(space.candidates(), x_star));
  auto objective = [&](const Eigen::VectorXd& a) {
    return gp.expected_utility(joint_inputs(a.transpose(), x_star))(0);
  };
  return maximize_on_grid(values, objective, space);
}

GridOptimum optimize_surrogate(const MdnParameters& mdn, const Eigen::VectorXd& x_star, const ActionSpace& space) {
  const Eigen::MatrixXd cand = space.candidates();
  Eigen::VectorXd values(cand.rows());
  for (Eigen::Index i = 0; i < cand.rows(); ++i) values(i) = cde_expected_utility(mdn, cand.row(i).transpose(), x_star);
  auto objective = [&](const Eigen::VectorXd& a) { return cde_expected_utility(mdn, a, x_star); };
  return maximize_on_grid(values, objective, space);
}

int stopping_round(const std::vector<Eigen::VectorXd>& a_star, double rel_tol, int patience,
                   const Eigen::VectorXd& floor, int min_rounds) {
  if (!(rel_tol > 0.0)) throw std::invalid_argument("rel_tol must be > 0");
  int run = 0;
  for (std::size_t r = 1; r < a_star.size(); ++r) {
    const Eigen::VectorXd& prev = a_star[r - 1];
    const Eigen::VectorXd& cur = a_star[r];
    bool small = prev.size() == cur.size() && cur.size() > 0 && prev.allFinite() && cur.allFinite();
    for (Eigen::Index d = 0; small && d < cur.size(); ++d) {
      const double denom = std::max(std::abs(prev(d)), floor(d));
      if (!(std::abs(cur(d) - prev(d)) < rel_tol * denom)) small = false;
    }
    run = small ? run + 1 : 0;
    const int round = int(r) + 1;
    if (run >= patience && round >= min_rounds) return round;
  }
  return 0;
}

ConvergenceReport convergence_report(const RunTrace& trace, double rel_tol, int patience,
                                     const Eigen::VectorXd& floor, int min_rounds) {
  if (trace.rounds.size() < 2) throw std::invalid_argument("convergence report needs at least 2 rounds");
  ConvergenceReport rep;
  for (const RoundTrace& r : trace.rounds) {
    rep.rounds.push_back(r.round);
    rep.a_star.push_back(r.a_star);
    rep.spread.push_back(r.spread);
    rep.entropy.push_back(r.entropy);
    rep.entropy_se.push_back(r.entropy_se);
  }
  rep.stop_round = stopping_round(rep.a_star, rel_tol, patience, floor, min_rounds);
  return rep;
}

namespace {

struct RecordSlot {
  WeightedSimulationRecord record;
  long quarantined = 0;
  bool ok = false;
  std::string error;
};

template <class F>
void parallel_for(int n, int threads, F&& body) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += threads) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

Eigen::VectorXd nan_vector(Eigen::Index n) {
  return Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
}

double effective_sample_size(const Eigen::VectorXd& w) {
  const double s = w.sum();
  return s * s / w.squaredNorm();
}

}  // namespace

RunResult run_sbd(const Problem& problem, const EngineConfig& config) {
  config.validate();
  const ActionSpace& space = problem.actions();
  const PriorSpec& prior = problem.prior();
  const std::uint64_t seed = config.seed;
  const long calls_at_start = problem.simulator_calls();

  RunResult result;
  result.proposal = ProposalMixture(prior);
  result.x_star = problem.features(problem.observed());
  const Eigen::Index da = space.dim();
  result.a_star = nan_vector(da);
  result.spread = nan_vector(da);

  const double rel_tol = config.convergence.rel_tol > 0.0 ? config.convergence.rel_tol
                                                           : problem.convergence_tolerance();
  Eigen::VectorXd floor(da);
  for (Eigen::Index d = 0; d < da; ++d) floor(d) = 1e-3 * (space.hi(d) - space.lo(d));

  MdnArchitecture post_arch;
  post_arch.input_dim = int(result.x_star.size());
  post_arch.target_dim = int(prior.dim());
  post_arch.n_components = problem.posterior_components();
  post_arch.hidden = config.posterior_hidden;
  std::optional<MdnParameters> posterior;

  MdnArchitecture cde_arch;
  cde_arch.input_dim = int(da + result.x_star.size());
  cde_arch.target_dim = 1;
  cde_arch.n_components = config.cde_components;
  cde_arch.hidden = config.cde_hidden;
  std::optional<MdnParameters> utility_model;

  const Eigen::MatrixXd candidates = space.candidates();
  std::optional<OptimalActionPosterior> action_post;
  std::optional<KernelHyper> warm;
  std::vector<Eigen::VectorXd> a_history;

  for (int round = 1; round <= config.rounds; ++round) {
    const auto r64 = std::uint64_t(round);
    RoundTrace tr;
    tr.round = round;
    const ProposalMixture sampling_q = config.active_params ? result.proposal : ProposalMixture(prior);

    // (1) parameters
    std::vector<Eigen::VectorXd> thetas;
    {
      Rng rng = make_rng(seed, "theta", r64);
      thetas = sample_proposal(sampling_q, config.batch, rng);
    }
    // (3) actions, paired positionally with the parameters
    Eigen::MatrixXd actions(config.batch, da);
    {
      Rng rng = make_rng(seed, "action", r64);
      if (config.active_actions && action_post) {
        const double eps = config.mode == SurrogateMode::cde ? config.cde_epsilon : config.epsilon;
        actions = propose_actions(*action_post, space, eps, config.batch, rng);
      } else {
        for (int k = 0; k < config.batch; ++k) actions.row(k) = space.sample_prior(rng).transpose();
      }
    }

    std::vector<RecordSlot> slots(std::size_t(config.batch));
    parallel_for(config.batch, config.threads, [&](int k) {
      RecordSlot& slot = slots[std::size_t(k)];
      Eigen::VectorXd t = thetas[std::size_t(k)];
      const Eigen::VectorXd a = actions.row(k).transpose();
      for (int attempt = 0; attempt <= config.max_redraws; ++attempt) {
        Rng rng = make_rng(seed, "sim", r64, std::uint64_t(k) * 1000003ULL + std::uint64_t(attempt));
        if (attempt > 0) {
          Rng redraw = make_rng(seed, "redraw", r64, std::uint64_t(k) * 1000003ULL + std::uint64_t(attempt));
          t = sample_proposal(sampling_q, 1, redraw).front();
        }
        try {
          const Eigen::VectorXd theta = prior.from_fit(t);
          SimulationResult sim = problem.simulate(theta, a, rng);
          Eigen::VectorXd s = problem.features(sim.history);
          if (!std::isfinite(sim.utility) || !s.allFinite()) throw NumericalError("non-finite simulator output", 0.0);
          if (problem.lognormal_utility() && !(sim.utility < 1.0)) throw InvalidTargetError("utility >= 1");
          slot.record = WeightedSimulationRecord{theta, t, std::move(s), a, sim.utility, round, sim.flagged};
          slot.ok = true;
          return;
        } catch (const std::exception& e) {
          ++slot.quarantined;
          slot.error = e.what();
        }
      }
    });
    for (RecordSlot& slot : slots) {
      tr.quarantined += slot.quarantined;
      if (!slot.ok) {
        result.aborted = true;
        result.error = "simulator failed repeatedly: " + slot.error;
        break;
      }
      tr.flagged += slot.record.flagged ? 1 : 0;
      result.records.push_back(std::move(slot.record));
    }
    tr.cum_sims = problem.simulator_calls() - calls_at_start;
    if (result.aborted) {
      result.trace.rounds.push_back(tr);
      break;
    }

    const Eigen::VectorXd weights = config.active_params ? record_weights(result.records, sampling_q)
                                                         : Eigen::VectorXd::Ones(Eigen::Index(result.records.size()));
    tr.effective_sample_size = effective_sample_size(weights);

    try {
      // (2) amortized posterior and proposal update
      if (config.active_params && Eigen::Index(result.records.size()) >= 10 * post_arch.n_components) {
        WeightedDataset data;
        const auto n = Eigen::Index(result.records.size());
        data.conditioners.resize(n, post_arch.input_dim);
        data.targets.resize(n, post_arch.target_dim);
        for (Eigen::Index i = 0; i < n; ++i) {
          data.conditioners.row(i) = result.records[std::size_t(i)].summary.transpose();
          data.targets.row(i) = result.records[std::size_t(i)].theta_fit.transpose();
        }
        data.weights = weights;
        TrainingConfig tc = config.posterior_training;
        tc.seed = derive_stream(seed, "posterior-train", r64);
        tc.split_seed = derive_stream(seed, "posterior-split");
        // Fresh start each round: a warm start from a small-sample fit
        // overfits and rarely improves on the held-out split.
        MdnParameters init = mdn_init(post_arch, derive_stream(seed, "posterior-init"));
        TrainingResult trained = mdn_train_weighted(data, std::move(init), tc);
        posterior = std::move(trained.params);
        tr.posterior_trained = true;
        tr.posterior_best_epoch = trained.best_epoch;
        if (!trained.validation_loss.empty()) {
          tr.posterior_validation_loss =
              trained.best_epoch > 0 ? trained.validation_loss[std::size_t(trained.best_epoch - 1)]
                                     : trained.validation_loss.front();
        }
        Rng mass_rng = make_rng(seed, "support-mass", r64);
        result.proposal = update_proposal(result.proposal, *posterior, result.x_star, mass_rng, config.mass_draws);
        Rng ent_rng = make_rng(seed, "entropy", r64);
        const EntropyEstimate h = mixture_entropy_mc(mdn_forward(*posterior, result.x_star), config.entropy_draws, ent_rng);
        tr.entropy = h.value;
        tr.entropy_se = h.std_error;
      }

      // (4) surrogate and (5) action posterior
      if (config.mode == SurrogateMode::regression) {
        GpSurrogateConfig gc;
        gc.restarts = config.gp_restarts;
        gc.max_iterations = config.gp_max_iterations;
        gc.max_fit_points = config.gp_max_fit_points;
        gc.lognormal = problem.lognormal_utility();
        gc.seed = derive_stream(seed, "gp-fit", r64);
        gc.warm_start = warm;
        GpSurrogate gp = fit_surrogate_regression(result.records, weights, gc);
        warm = gp.state().hyper();
        tr.gp_hyper = gp.state().hyper();
        tr.gp_jitter = gp.state().jitter();
        Rng draw_rng = make_rng(seed, "thompson", r64);
        const Eigen::MatrixXd draws = draw_utility_functions(gp, result.x_star, candidates, config.thompson_draws, draw_rng);
        action_post = optimal_action_posterior(draws, candidates);
        const PointEstimate est = point_estimate(*action_post, gp, result.x_star, space);
        tr.a_star = est.action;
        tr.spread = est.spread;
        tr.expected_utility = est.expected_utility;
        tr.non_identifiable = est.non_identifiable;
        result.surrogate = std::move(gp);
      } else if (Eigen::Index(result.records.size()) >= 10 * cde_arch.n_components) {
        TrainingConfig tc = config.cde_training;
        tc.seed = derive_stream(seed, "cde-train", r64);
        tc.split_seed = derive_stream(seed, "cde-split");
        MdnParameters init = mdn_init(cde_arch, derive_stream(seed, "cde-init"));
        utility_model = fit_surrogate_cde(result.records, weights, std::move(init), tc);
        const GridOptimum opt = optimize_surrogate(*utility_model, result.x_star, space);
        action_post = point_mass_posterior(candidates, opt.candidate);
        tr.a_star = opt.action;
        tr.spread = Eigen::VectorXd::Zero(da);
        tr.expected_utility = opt.value;
        tr.non_identifiable = opt.non_identifiable;
        result.utility_model = utility_model;
      } else {
        tr.a_star = nan_vector(da);
        tr.spread = nan_vector(da);
      }
    } catch (const std::exception& e) {
      if (!tr.a_star.size()) {
        tr.a_star = nan_vector(da);
        tr.spread = nan_vector(da);
      }
      result.trace.rounds.push_back(tr);
      result.aborted = true;
      result.error = e.what();
      break;
    }

    result.trace.rounds.push_back(tr);
    a_history.push_back(tr.a_star);
    if (tr.a_star.allFinite()) {
      result.a_star = tr.a_star;
      result.spread = tr.spread;
      result.non_identifiable = tr.non_identifiable;
    }
    const int stop = stopping_round(a_history, rel_tol, config.convergence.patience, floor,
                                    config.convergence.min_rounds);
    if (stop > 0 && result.trace.stop_round == 0) {
      result.trace.stop_round = stop;
      if (config.convergence.stop_early) break;
    }
  }

  result.posterior = posterior;
  result.simulator_calls = problem.simulator_calls() - calls_at_start;

  // final surface at x*
  if (result.surrogate) {
    const Eigen::MatrixXd z = joint_inputs(candidates, result.x_star);
    Eigen::VectorXd m, v;
    result.surrogate->marginals(z, m, v);
    result.surface.u_mean = result.surrogate->expected_utility(z);
    result.surface.u_sd.resize(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (result.surrogate->lognormal()) {
        // sd of 1 - exp(g) with g ~ N(m, v)
        result.surface.u_sd(i) = std::sqrt(std::expm1(v(i))) * std::exp(m(i) + 0.5 * v(i));
      } else {
        result.surface.u_sd(i) = std::sqrt(v(i));
      }
    }
  } else if (result.utility_model) {
    result.surface.u_mean.resize(candidates.rows());
    result.surface.u_sd.resize(candidates.rows());
    for (Eigen::Index i = 0; i < candidates.rows(); ++i) {
      Eigen::VectorXd zz(da + result.x_star.size());
      zz << candidates.row(i).transpose(), result.x_star;
      const MixtureDensity mix = mdn_forward(*result.utility_model, zz);
      double mean = 0.0, second = 0.0;
      for (Eigen::Index k = 0; k < mix.n_components(); ++k) {
        const double mu = mix.means[std::size_t(k)](0), sd = mix.cholesky[std::size_t(k)](0, 0);
        mean += mix.weights(k) * mu;
        second += mix.weights(k) * (sd * sd + mu * mu);
      }
      result.surface.u_mean(i) = mean;
      result.surface.u_sd(i) = std::sqrt(std::max(0.0, second - mean * mean));
    }
  }
  if (result.surface.u_mean.size()) {
    result.surface.candidates = candidates;
    result.surface.probability = action_post ? action_post->probabilities : Eigen::VectorXd::Zero(candidates.rows());
  }
  return result;
}

}  // namespace sbd
