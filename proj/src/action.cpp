#include "sbd/action.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "sbd/linalg.hpp"

namespace sbd {

void ActionSpace::validate() const {
  if (lo.size() == 0 || hi.size() != lo.size() || Eigen::Index(resolution.size()) != lo.size()) {
    throw std::invalid_argument("action space: bounds and resolution must have the same dimension");
  }
  for (Eigen::Index d = 0; d < dim(); ++d) {
    if (!(lo(d) < hi(d))) throw std::invalid_argument("action space: lo must be < hi");
    if (resolution[std::size_t(d)] < 16) throw std::invalid_argument("action space: resolution must be >= 16");
  }
}

Eigen::Index ActionSpace::candidate_count() const {
  Eigen::Index m = 1;
  for (int r : resolution) m *= r;
  return m;
}

Eigen::MatrixXd ActionSpace::candidates() const {
  const Eigen::Index m = candidate_count();
  Eigen::MatrixXd c(m, dim());
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index rem = i;
    for (Eigen::Index d = dim(); d-- > 0;) {
      const int r = resolution[std::size_t(d)];
      const Eigen::Index cell = rem % r;
      rem /= r;
      c(i, d) = lo(d) + (double(cell) + 0.5) * cell_width(d);
    }
  }
  return c;
}

bool ActionSpace::contains(const Eigen::VectorXd& a) const {
  if (a.size() != dim()) return false;
  for (Eigen::Index d = 0; d < dim(); ++d)
    if (!(a(d) >= lo(d) && a(d) <= hi(d))) return false;
  return true;
}

Eigen::VectorXd ActionSpace::sample_prior(Rng& rng) const {
  Eigen::VectorXd a(dim());
  for (Eigen::Index d = 0; d < dim(); ++d) a(d) = lo(d) + (hi(d) - lo(d)) * uniform01(rng);
  return a;
}

Eigen::MatrixXd joint_inputs(const Eigen::MatrixXd& actions, const Eigen::VectorXd& x_star) {
  Eigen::MatrixXd z(actions.rows(), actions.cols() + x_star.size());
  z.leftCols(actions.cols()) = actions;
  z.rightCols(x_star.size()) = x_star.transpose().replicate(actions.rows(), 1);
  return z;
}

Eigen::MatrixXd draw_utility_functions(const GpSurrogate& gp, const Eigen::VectorXd& x_star,
                                       const Eigen::MatrixXd& candidates, int n_draws, Rng& rng) {
  if (candidates.rows() < 2) throw std::invalid_argument("draw_utility_functions needs >= 2 candidates");
  if (n_draws < 1) throw std::invalid_argument("draw_utility_functions needs n_draws >= 1");
  const GpPosterior post = gp.posterior(joint_inputs(candidates, x_star));
  const double scale = gp.state().hyper().amplitude * gp.target_scale() * gp.target_scale();
  const JitteredCholesky chol = cholesky_with_jitter(post.covariance, scale, 1e-10, 1e-2);
  const Eigen::Index m = candidates.rows();
  Eigen::MatrixXd z(m, n_draws);
  for (int j = 0; j < n_draws; ++j)
    for (Eigen::Index i = 0; i < m; ++i) z(i, j) = standard_normal(rng);
  Eigen::MatrixXd g = chol.llt.matrixL() * z;
  g.colwise() += post.mean;
  Eigen::MatrixXd draws = g.transpose();
  if (gp.lognormal()) draws = draws.unaryExpr([](double v) { return 1.0 - std::exp(v); });
  return draws;
}

OptimalActionPosterior optimal_action_posterior(const Eigen::MatrixXd& draws,
                                                const Eigen::MatrixXd& candidates) {
  if (draws.rows() == 0) throw std::invalid_argument("optimal_action_posterior: no draws");
  if (draws.cols() != candidates.rows()) {
    throw std::invalid_argument("optimal_action_posterior: draw width does not match candidates");
  }
  OptimalActionPosterior post;
  post.candidates = candidates;
  post.probabilities = Eigen::VectorXd::Zero(candidates.rows());
  for (Eigen::Index r = 0; r < draws.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < draws.cols(); ++c)
      if (draws(r, c) > draws(r, best)) best = c;
    post.probabilities(best) += 1.0;
  }
  post.probabilities /= double(draws.rows());
  post.draws_used = int(draws.rows());
  return post;
}

OptimalActionPosterior point_mass_posterior(const Eigen::MatrixXd& candidates, Eigen::Index index) {
  OptimalActionPosterior post;
  post.candidates = candidates;
  post.probabilities = Eigen::VectorXd::Zero(candidates.rows());
  post.probabilities(index) = 1.0;
  return post;
}

Eigen::MatrixXd propose_actions(const OptimalActionPosterior& post, const ActionSpace& space,
                                double epsilon, int count, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("propose_actions: epsilon must lie in [0, 1]");
  Eigen::MatrixXd out(count, space.dim());
  for (int k = 0; k < count; ++k) {
    const double u = uniform01(rng);
    Eigen::VectorXd a;
    if (u < epsilon) {
      a = space.sample_prior(rng);
    } else {
      const double v = uniform01(rng);
      Eigen::Index idx = post.probabilities.size() - 1;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < post.probabilities.size(); ++i) {
        acc += post.probabilities(i);
        if (v < acc) {
          idx = i;
          break;
        }
      }
      // guard against rounding in the cumulative sum landing on a zero-mass tail
      while (idx > 0 && post.probabilities(idx) == 0.0) --idx;
      a = post.candidates.row(idx).transpose();
      for (Eigen::Index d = 0; d < space.dim(); ++d) {
        const double h = space.cell_width(d);
        a(d) = std::clamp(a(d) + (uniform01(rng) - 0.5) * h, space.lo(d), space.hi(d));
      }
    }
    out.row(k) = a.transpose();
  }
  return out;
}

Eigen::VectorXd posterior_spread(const OptimalActionPosterior& post) {
  const Eigen::Index d = post.candidates.cols();
  Eigen::VectorXd spread(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    std::map<double, double> marginal;
    for (Eigen::Index i = 0; i < post.candidates.rows(); ++i) marginal[post.candidates(i, j)] += post.probabilities(i);
    const double total = post.probabilities.sum();
    auto quantile = [&](double p) {
      double acc = 0.0;
      for (const auto& [value, mass] : marginal) {
        acc += mass;
        if (acc >= p * total - 1e-12) return value;
      }
      return marginal.rbegin()->first;
    };
    spread(j) = 0.5 * (quantile(0.84) - quantile(0.16));
  }
  return spread;
}

namespace {

constexpr double kInvPhi = 0.61803398874989484820;

double golden_max(const std::function<double(double)>& f, double a, double b, double tol) {
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

GridOptimum maximize_on_grid(const Eigen::VectorXd& candidate_values, const ActionObjective& objective,
                             const ActionSpace& space) {
  const Eigen::MatrixXd cand = space.candidates();
  if (candidate_values.size() != cand.rows()) throw std::invalid_argument("maximize_on_grid: value count mismatch");
  GridOptimum best;
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < candidate_values.size(); ++i)
    if (candidate_values(i) > candidate_values(arg)) arg = i;
  best.candidate = arg;
  best.action = cand.row(arg).transpose();
  best.value = candidate_values(arg);
  const double lo_v = candidate_values.minCoeff();
  best.non_identifiable = (best.value - lo_v) <= 1e-9 * std::max(1.0, std::abs(best.value));
  if (best.non_identifiable || !objective) return best;

  Eigen::VectorXd x = best.action;
  const int sweeps = space.dim() == 1 ? 1 : 3;
  for (int s = 0; s < sweeps; ++s) {
    for (Eigen::Index d = 0; d < space.dim(); ++d) {
      const double h = space.cell_width(d);
      const double centre = cand(arg, d);
      auto f = [&](double v) {
        Eigen::VectorXd y = x;
        y(d) = v;
        return objective(y);
      };
      const double v = golden_max(f, std::max(space.lo(d), centre - 0.5 * h),
                                  std::min(space.hi(d), centre + 0.5 * h), 1e-6 * h);
      Eigen::VectorXd y = x;
      y(d) = v;
      if (objective(y) > objective(x)) x = y;
    }
  }
  const double fx = objective(x);
  if (fx > best.value) {
    best.action = x;
    best.value = fx;
  }
  return best;
}

PointEstimate point_estimate(const OptimalActionPosterior& post, const GpSurrogate& gp,
                             const Eigen::VectorXd& x_star, const ActionSpace& space) {
  const Eigen::MatrixXd cand = space.candidates();
  const Eigen::VectorXd values = gp.expected_utility(joint_inputs(cand, x_star));
  auto objective = [&](const Eigen::VectorXd& a) {
    return gp.expected_utility(joint_inputs(a.transpose(), x_star))(0);
  };
  const GridOptimum opt = maximize_on_grid(values, objective, space);
  PointEstimate est;
  est.action = opt.action;
  est.expected_utility = opt.value;
  est.non_identifiable = opt.non_identifiable;
  est.spread = posterior_spread(post);
  return est;
}

}  // namespace sbd
