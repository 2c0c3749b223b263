#include "sbd/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "sbd/errors.hpp"
#include "sbd/random.hpp"

namespace sbd {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Eigen::MatrixXd squared_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                 const Eigen::VectorXd& lengthscales) {
  const Eigen::VectorXd inv = lengthscales.cwiseInverse();
  const Eigen::MatrixXd as = a * inv.asDiagonal();
  const Eigen::MatrixXd bs = b * inv.asDiagonal();
  Eigen::MatrixXd d2 = (-2.0 * as * bs.transpose()).eval();
  d2.colwise() += as.rowwise().squaredNorm();
  d2.rowwise() += bs.rowwise().squaredNorm().transpose();
  return d2.cwiseMax(0.0);
}

}  // namespace

void KernelHyper::validate(Eigen::Index dim) const {
  if (lengthscales.size() != dim) {
    throw std::invalid_argument("lengthscale count " + std::to_string(lengthscales.size()) +
                                " does not match input dimension " + std::to_string(dim));
  }
  if (!(amplitude > 0.0) || !(noise_variance >= 0.0) || !std::isfinite(amplitude) ||
      !std::isfinite(noise_variance)) {
    throw std::invalid_argument("kernel amplitude must be positive and noise non-negative");
  }
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (!(lengthscales(i) > 0.0) || !std::isfinite(lengthscales(i))) {
      throw std::invalid_argument("lengthscales must be positive");
    }
  }
}

Eigen::VectorXd KernelHyper::to_log() const {
  Eigen::VectorXd packed(dim() + 2);
  packed(0) = std::log(amplitude);
  packed.segment(1, dim()) = lengthscales.array().log().matrix();
  packed(dim() + 1) = std::log(noise_variance);
  return packed;
}

KernelHyper KernelHyper::from_log(const Eigen::VectorXd& packed) {
  const Eigen::Index d = packed.size() - 2;
  KernelHyper h;
  h.amplitude = std::exp(packed(0));
  h.lengthscales = packed.segment(1, d).array().exp().matrix();
  h.noise_variance = std::exp(packed(d + 1));
  return h;
}

double sq_exp_kernel(const Eigen::VectorXd& z1, const Eigen::VectorXd& z2, const KernelHyper& hyper) {
  if (z1.size() != z2.size() || z1.size() != hyper.lengthscales.size()) {
    throw std::invalid_argument("sq_exp_kernel: dimension mismatch");
  }
  const double r2 = (z1 - z2).cwiseQuotient(hyper.lengthscales).squaredNorm();
  return hyper.amplitude * std::exp(-0.5 * r2);
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                              const KernelHyper& hyper) {
  if (a.cols() != hyper.dim() || b.cols() != hyper.dim()) {
    throw std::invalid_argument("kernel_matrix: dimension mismatch");
  }
  return hyper.amplitude * (-0.5 * squared_distance(a, b, hyper.lengthscales)).array().exp().matrix();
}

Eigen::VectorXd normalize_weights(const Eigen::VectorXd& weights) {
  if (weights.size() == 0) return weights;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!(weights(i) > 0.0) || !std::isfinite(weights(i))) {
      throw std::invalid_argument("weights must be positive and finite");
    }
  }
  if (weights.maxCoeff() == weights.minCoeff()) return Eigen::VectorXd::Ones(weights.size());
  return weights / weights.mean();
}

GaussianProcessState::GaussianProcessState(KernelHyper hyper, Eigen::MatrixXd inputs,
                                           Eigen::VectorXd targets, Eigen::VectorXd weights,
                                           double prior_mean)
    : hyper_(std::move(hyper)),
      inputs_(std::move(inputs)),
      targets_(std::move(targets)),
      weights_(normalize_weights(weights)),
      prior_mean_(prior_mean) {
  const Eigen::Index n = inputs_.rows();
  if (n > 0) hyper_.validate(inputs_.cols());
  else hyper_.validate(hyper_.dim());
  if (targets_.size() != n || weights_.size() != n) {
    throw std::invalid_argument("GP inputs, targets and weights must have equal length");
  }
  if (n == 0) {
    inputs_.resize(0, hyper_.dim());
    return;
  }
  Eigen::MatrixXd c = kernel_matrix(inputs_, inputs_, hyper_);
  c.diagonal() += hyper_.noise_variance * weights_.cwiseInverse();
  JitteredCholesky chol = cholesky_with_jitter(c, hyper_.amplitude);
  factor_ = std::move(chol.llt);
  jitter_ = chol.jitter;
  alpha_ = factor_.solve((targets_.array() - prior_mean_).matrix());
}

double gp_log_marginal_likelihood(const GaussianProcessState& state) {
  const Eigen::Index n = state.size();
  if (n == 0) throw std::invalid_argument("log marginal likelihood needs at least one point");
  const Eigen::VectorXd r = (state.targets().array() - state.prior_mean()).matrix();
  const double quad = r.dot(state.alpha());
  const double logdet_half = state.factor().matrixLLT().diagonal().array().log().sum();
  return -0.5 * quad - logdet_half - 0.5 * double(n) * kLog2Pi;
}

Eigen::VectorXd gp_log_marginal_likelihood_gradient(const GaussianProcessState& state) {
  const Eigen::Index n = state.size();
  const Eigen::Index d = state.dim();
  const KernelHyper& h = state.hyper();
  if (n == 0) throw std::invalid_argument("gradient needs at least one point");

  const Eigen::MatrixXd cinv = state.factor().solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::VectorXd& a = state.alpha();
  // M = alpha alpha^T - C^{-1}; dL/dp = 0.5 * sum(M .* dC/dp)
  const Eigen::MatrixXd m = a * a.transpose() - cinv;
  const Eigen::MatrixXd k = kernel_matrix(state.inputs(), state.inputs(), h);
  const Eigen::MatrixXd mk = m.cwiseProduct(k);

  Eigen::VectorXd grad(d + 2);
  grad(0) = 0.5 * mk.sum();
  for (Eigen::Index j = 0; j < d; ++j) {
    const Eigen::VectorXd col = state.inputs().col(j) / h.lengthscales(j);
    // sum_ab mk_ab (x_a - x_b)^2 = 2 sum_a x_a^2 rowsum_a - 2 x^T mk x (mk symmetric)
    const Eigen::VectorXd rowsum = mk.rowwise().sum();
    const double term = 2.0 * col.cwiseAbs2().dot(rowsum) - 2.0 * col.dot(mk * col);
    grad(1 + j) = 0.5 * term;
  }
  grad(d + 1) = 0.5 * h.noise_variance * m.diagonal().cwiseQuotient(state.weights()).sum();
  return grad;
}

GpPosterior gp_posterior(const GaussianProcessState& state, const Eigen::MatrixXd& queries) {
  if (queries.cols() != state.dim()) throw std::invalid_argument("gp_posterior: query dimension mismatch");
  GpPosterior post;
  post.covariance = kernel_matrix(queries, queries, state.hyper());
  if (state.size() == 0) {
    post.mean = Eigen::VectorXd::Constant(queries.rows(), state.prior_mean());
  } else {
    const Eigen::MatrixXd kqz = kernel_matrix(queries, state.inputs(), state.hyper());
    post.mean = (kqz * state.alpha()).array() + state.prior_mean();
    // V = L^{-1} K(Z, Z'); cov = K' - V^T V
    const Eigen::MatrixXd v = state.factor().matrixL().solve(kqz.transpose());
    post.covariance.noalias() -= v.transpose() * v;
  }
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose()).eval();
  for (Eigen::Index i = 0; i < post.covariance.rows(); ++i) {
    post.covariance(i, i) = std::max(post.covariance(i, i), 0.0);
  }
  return post;
}

void gp_posterior_marginals(const GaussianProcessState& state, const Eigen::MatrixXd& queries,
                            Eigen::VectorXd& mean, Eigen::VectorXd& variance) {
  if (queries.cols() != state.dim()) throw std::invalid_argument("gp_posterior: query dimension mismatch");
  const Eigen::Index m = queries.rows();
  variance = Eigen::VectorXd::Constant(m, state.hyper().amplitude);
  if (state.size() == 0) {
    mean = Eigen::VectorXd::Constant(m, state.prior_mean());
    return;
  }
  const Eigen::MatrixXd kqz = kernel_matrix(queries, state.inputs(), state.hyper());
  mean = (kqz * state.alpha()).array() + state.prior_mean();
  const Eigen::MatrixXd v = state.factor().matrixL().solve(kqz.transpose());
  variance -= v.colwise().squaredNorm().transpose();
  variance = variance.cwiseMax(0.0);
}

Eigen::VectorXd HyperBounds::lower(Eigen::Index dim) const {
  Eigen::VectorXd lo(dim + 2);
  lo(0) = log_amplitude_lo;
  lo.segment(1, dim).setConstant(log_lengthscale_lo);
  lo(dim + 1) = log_noise_lo;
  return lo;
}

Eigen::VectorXd HyperBounds::upper(Eigen::Index dim) const {
  Eigen::VectorXd hi(dim + 2);
  hi(0) = log_amplitude_hi;
  hi.segment(1, dim).setConstant(log_lengthscale_hi);
  hi(dim + 1) = log_noise_hi;
  return hi;
}

namespace {

struct Evaluation {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
  bool ok = false;
};

Evaluation evaluate(const Eigen::VectorXd& packed, const Eigen::MatrixXd& inputs,
                    const Eigen::VectorXd& targets, const Eigen::VectorXd& weights, double prior_mean) {
  Evaluation e;
  try {
    GaussianProcessState state(KernelHyper::from_log(packed), inputs, targets, weights, prior_mean);
    e.value = gp_log_marginal_likelihood(state);
    e.gradient = gp_log_marginal_likelihood_gradient(state);
    e.ok = std::isfinite(e.value) && e.gradient.allFinite();
  } catch (const NumericalError&) {
    e.ok = false;
  }
  return e;
}

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Spectral projected gradient ascent with Armijo backtracking.
Evaluation ascend(Eigen::VectorXd x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                  int max_iterations, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                  const Eigen::VectorXd& weights, double prior_mean, Eigen::VectorXd& best_x) {
  x = project(x, lo, hi);
  Evaluation cur = evaluate(x, inputs, targets, weights, prior_mean);
  best_x = x;
  if (!cur.ok) return cur;
  double step = 1.0 / std::max(1.0, cur.gradient.lpNorm<Eigen::Infinity>());
  int stalled = 0;
  for (int it = 0; it < max_iterations; ++it) {
    const Eigen::VectorXd dir = project(x + step * cur.gradient, lo, hi) - x;
    if (dir.lpNorm<Eigen::Infinity>() < 1e-7) break;
    const double slope = cur.gradient.dot(dir);
    double lambda = 1.0;
    Evaluation next;
    Eigen::VectorXd xn;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      xn = x + lambda * dir;
      next = evaluate(xn, inputs, targets, weights, prior_mean);
      if (next.ok && next.value >= cur.value + 1e-4 * lambda * slope) {
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) break;
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd y = cur.gradient - next.gradient;  // gradient of -L
    const double sy = s.dot(y);
    step = sy > 1e-16 ? std::clamp(s.squaredNorm() / sy, 1e-6, 1e3) : 1e3;
    const double improvement = next.value - cur.value;
    x = xn;
    cur = std::move(next);
    if (improvement < 1e-9 * (1.0 + std::abs(cur.value))) {
      if (++stalled >= 3) break;
    } else {
      stalled = 0;
    }
  }
  best_x = x;
  return cur;
}

}  // namespace

KernelHyper gp_fit_hyperparameters(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                                   const Eigen::VectorXd& weights, const GpFitOptions& options) {
  const Eigen::Index n = inputs.rows();
  const Eigen::Index d = inputs.cols();
  if (n < 2) throw std::invalid_argument("gp_fit_hyperparameters needs at least 2 points");
  if (targets.size() != n || weights.size() != n) {
    throw std::invalid_argument("gp_fit_hyperparameters: length mismatch");
  }
  const Eigen::VectorXd lo = options.bounds.lower(d);
  const Eigen::VectorXd hi = options.bounds.upper(d);
  const Eigen::VectorXd w = normalize_weights(weights);

  double best_value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  const int restarts = std::max(1, options.restarts);
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd x0(d + 2);
    if (r == 0) {
      if (options.warm_start && options.warm_start->dim() == d) {
        x0 = options.warm_start->to_log();
      } else {
        x0.setZero();
        x0(d + 1) = std::log(0.1);
      }
    } else {
      Rng rng = make_rng(options.seed, "gp-restart", 0, std::uint64_t(r));
      std::uniform_real_distribution<double> amp(std::log(0.1), std::log(10.0));
      std::uniform_real_distribution<double> len(std::log(0.2), std::log(5.0));
      std::uniform_real_distribution<double> noise(std::log(1e-3), std::log(1.0));
      x0(0) = amp(rng);
      for (Eigen::Index j = 0; j < d; ++j) x0(1 + j) = len(rng);
      x0(d + 1) = noise(rng);
    }
    Eigen::VectorXd x;
    const Evaluation e = ascend(x0, lo, hi, options.max_iterations, inputs, targets, w,
                                options.prior_mean, x);
    // strict > keeps the lowest restart index on ties
    if (e.ok && e.value > best_value) {
      best_value = e.value;
      best_x = x;
    }
  }
  if (best_x.size() == 0) {
    throw NumericalError("every hyperparameter restart failed to factorize the kernel matrix",
                         1e-2);
  }
  return KernelHyper::from_log(best_x);
}

double lognormal_expected_value(double mean, double variance) {
  if (variance < 0.0) throw std::invalid_argument("lognormal_expected_value: negative variance");
  const double e = std::exp(mean + 0.5 * variance);
  if (!std::isfinite(e)) return -std::numeric_limits<double>::infinity();
  return 1.0 - e;
}

GpSurrogate::GpSurrogate(Standardizer input_scaling, double target_shift, double target_scale,
                         bool lognormal, GaussianProcessState state)
    : input_scaling_(std::move(input_scaling)),
      target_shift_(target_shift),
      target_scale_(target_scale),
      lognormal_(lognormal),
      state_(std::move(state)) {}

GpSurrogate GpSurrogate::fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& utilities,
                             const Eigen::VectorXd& weights, const GpSurrogateConfig& config) {
  const Eigen::Index n = inputs.rows();
  if (n < 2) throw std::invalid_argument("surrogate fit needs at least 2 records");
  if (utilities.size() != n || weights.size() != n) {
    throw std::invalid_argument("surrogate fit: length mismatch");
  }
  Eigen::VectorXd targets = utilities;
  if (config.lognormal) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(utilities(i) < 1.0)) {
        throw InvalidTargetError("log-normal surrogate requires every utility < 1");
      }
      targets(i) = std::log1p(-utilities(i));
    }
  }
  Standardizer in = Standardizer::fit(inputs);
  const Standardizer out = Standardizer::fit(targets);
  const Eigen::MatrixXd z = in.apply_rows(inputs);
  const Eigen::VectorXd t = ((targets.array() - out.shift(0)) / out.scale(0)).matrix();
  const Eigen::VectorXd w = normalize_weights(weights);

  GpFitOptions opts;
  opts.restarts = config.restarts;
  opts.max_iterations = config.max_iterations;
  opts.seed = config.seed;
  opts.warm_start = config.warm_start;
  KernelHyper hyper;
  if (config.max_fit_points > 0 && n > config.max_fit_points) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    Rng rng = make_rng(config.seed, "gp-subset");
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(config.max_fit_points));
    std::sort(idx.begin(), idx.end());
    Eigen::MatrixXd zs(config.max_fit_points, z.cols());
    Eigen::VectorXd ts(config.max_fit_points), ws(config.max_fit_points);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      zs.row(Eigen::Index(i)) = z.row(idx[i]);
      ts(Eigen::Index(i)) = t(idx[i]);
      ws(Eigen::Index(i)) = w(idx[i]);
    }
    hyper = gp_fit_hyperparameters(zs, ts, ws, opts);
  } else {
    hyper = gp_fit_hyperparameters(z, t, w, opts);
  }
  return GpSurrogate(std::move(in), out.shift(0), out.scale(0), config.lognormal,
                     GaussianProcessState(hyper, z, t, w, 0.0));
}

GpPosterior GpSurrogate::posterior(const Eigen::MatrixXd& queries) const {
  GpPosterior p = gp_posterior(state_, input_scaling_.apply_rows(queries));
  p.mean = (p.mean.array() * target_scale_ + target_shift_).matrix();
  p.covariance *= target_scale_ * target_scale_;
  return p;
}

void GpSurrogate::marginals(const Eigen::MatrixXd& queries, Eigen::VectorXd& mean,
                            Eigen::VectorXd& variance) const {
  gp_posterior_marginals(state_, input_scaling_.apply_rows(queries), mean, variance);
  mean = (mean.array() * target_scale_ + target_shift_).matrix();
  variance *= target_scale_ * target_scale_;
}

Eigen::VectorXd GpSurrogate::expected_utility(const Eigen::MatrixXd& queries) const {
  Eigen::VectorXd mean, var;
  marginals(queries, mean, var);
  if (!lognormal_) return mean;
  Eigen::VectorXd u(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) u(i) = lognormal_expected_value(mean(i), var(i));
  return u;
}

double GpSurrogate::to_utility(double target) const {
  return lognormal_ ? 1.0 - std::exp(target) : target;
}

}  // namespace sbd
