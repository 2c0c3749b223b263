#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Dense>

#include "sbd/linalg.hpp"

namespace sbd {

// Squared-exponential kernel hyperparameters with one lengthscale per input
// dimension. Log-space packing is (ln A, ln l_1..ln l_d, ln noise).
struct KernelHyper {
  double amplitude = 1.0;
  Eigen::VectorXd lengthscales;
  double noise_variance = 0.1;

  void validate(Eigen::Index dim) const;
  Eigen::Index dim() const { return lengthscales.size(); }
  Eigen::VectorXd to_log() const;
  static KernelHyper from_log(const Eigen::VectorXd& packed);
};

double sq_exp_kernel(const Eigen::VectorXd& z1, const Eigen::VectorXd& z2, const KernelHyper& hyper);

// Rows of `a` and `b` are points.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                              const KernelHyper& hyper);

// Exact GP with heteroscedastic noise noise_variance / w_i. Weights are
// normalized to mean 1 on construction and C = K + noise * diag(1/w) is
// factorized once; the state is immutable afterwards.
class GaussianProcessState {
 public:
  GaussianProcessState(KernelHyper hyper, Eigen::MatrixXd inputs, Eigen::VectorXd targets,
                       Eigen::VectorXd weights, double prior_mean = 0.0);

  const KernelHyper& hyper() const { return hyper_; }
  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& targets() const { return targets_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  double prior_mean() const { return prior_mean_; }
  Eigen::Index size() const { return inputs_.rows(); }
  Eigen::Index dim() const { return hyper_.dim(); }

  const Eigen::LLT<Eigen::MatrixXd>& factor() const { return factor_; }
  double jitter() const { return jitter_; }
  // C^{-1} (u - mu0)
  const Eigen::VectorXd& alpha() const { return alpha_; }

 private:
  KernelHyper hyper_;
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd targets_;
  Eigen::VectorXd weights_;
  double prior_mean_;
  Eigen::LLT<Eigen::MatrixXd> factor_;
  double jitter_ = 0.0;
  Eigen::VectorXd alpha_;
};

// Scales weights to mean 1. A constant weight vector maps to exact ones.
Eigen::VectorXd normalize_weights(const Eigen::VectorXd& weights);

double gp_log_marginal_likelihood(const GaussianProcessState& state);

// Gradient with respect to KernelHyper::to_log() coordinates.
Eigen::VectorXd gp_log_marginal_likelihood_gradient(const GaussianProcessState& state);

struct GpPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

GpPosterior gp_posterior(const GaussianProcessState& state, const Eigen::MatrixXd& queries);

// Mean and marginal variances only (no m x m covariance).
void gp_posterior_marginals(const GaussianProcessState& state, const Eigen::MatrixXd& queries,
                            Eigen::VectorXd& mean, Eigen::VectorXd& variance);

struct HyperBounds {
  double log_amplitude_lo = -6.907755278982137;   // ln 1e-3
  double log_amplitude_hi = 6.907755278982137;    // ln 1e3
  double log_lengthscale_lo = -2.995732273553991; // ln 0.05
  double log_lengthscale_hi = 2.995732273553991;  // ln 20
  double log_noise_lo = -13.815510557964274;      // ln 1e-6
  double log_noise_hi = 6.907755278982137;        // ln 1e3

  Eigen::VectorXd lower(Eigen::Index dim) const;
  Eigen::VectorXd upper(Eigen::Index dim) const;
};

struct GpFitOptions {
  int restarts = 4;
  std::uint64_t seed = 0;
  int max_iterations = 200;
  double prior_mean = 0.0;
  HyperBounds bounds;
  // Used as the starting point of restart 0 when present.
  std::optional<KernelHyper> warm_start;
};

// Multi-start projected gradient ascent of the log marginal likelihood in
// log-hyperparameter space. Restart 0 starts from the warm start (or a fixed
// default), later restarts from seeded uniform draws.
KernelHyper gp_fit_hyperparameters(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                                   const Eigen::VectorXd& weights, const GpFitOptions& options);

// 1 - E[exp(g)] for g ~ N(m, s2). Returns -infinity on overflow.
double lognormal_expected_value(double mean, double variance);

struct GpSurrogateConfig {
  int restarts = 4;
  int max_iterations = 200;
  // Hyperparameters are fitted on a seeded subset of at most this many
  // records; the final state always conditions on every record.
  int max_fit_points = 512;
  bool lognormal = false;
  std::uint64_t seed = 0;
  std::optional<KernelHyper> warm_start;
};

// Expected-utility surrogate: standardizes inputs and (optionally
// log-transformed) targets, then wraps a GaussianProcessState in that space.
class GpSurrogate {
 public:
  GpSurrogate(Standardizer input_scaling, double target_shift, double target_scale,
              bool lognormal, GaussianProcessState state);

  static GpSurrogate fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& utilities,
                         const Eigen::VectorXd& weights, const GpSurrogateConfig& config);

  // Posterior of the modelled target (U, or log(1 - U) in log-normal mode).
  GpPosterior posterior(const Eigen::MatrixXd& queries) const;
  void marginals(const Eigen::MatrixXd& queries, Eigen::VectorXd& mean,
                 Eigen::VectorXd& variance) const;
  // Expected utility at each query, log-normal corrected when applicable.
  Eigen::VectorXd expected_utility(const Eigen::MatrixXd& queries) const;
  // Maps a modelled-target value back to utility.
  double to_utility(double target) const;

  const Standardizer& input_scaling() const { return input_scaling_; }
  double target_shift() const { return target_shift_; }
  double target_scale() const { return target_scale_; }
  bool lognormal() const { return lognormal_; }
  const GaussianProcessState& state() const { return state_; }

 private:
  Standardizer input_scaling_;
  double target_shift_;
  double target_scale_;
  bool lognormal_;
  GaussianProcessState state_;
};

}  // namespace sbd
