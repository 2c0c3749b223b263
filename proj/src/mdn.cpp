#include "sbd/mdn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "sbd/errors.hpp"

namespace sbd {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kMinCholeskyDiagonal = 1e-6;
constexpr int kMaxDim = 8;

using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sum_exp(const double* v, int n) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

int tri_index(int i, int j) { return i * (i + 1) / 2 + j; }

// log N(t; mu, L L^T) and the whitened residual e = L^{-1}(t - mu).
template <class Vec, class Mat>
double gaussian_log_density(const Vec& t, const Vec& mu, const Mat& l, SmallVec& e) {
  const int d = int(t.size());
  e.resize(d);
  double logdet = 0.0;
  for (int i = 0; i < d; ++i) {
    double s = t(i) - mu(i);
    for (int j = 0; j < i; ++j) s -= l(i, j) * e(j);
    e(i) = s / l(i, i);
    logdet += std::log(l(i, i));
  }
  return -0.5 * d * kLog2Pi - logdet - 0.5 * e.squaredNorm();
}

struct HeadView {
  const MdnArchitecture& arch;
  int k() const { return arch.n_components; }
  int d() const { return arch.target_dim; }
  int logit(int c) const { return c; }
  int mean(int c, int i) const { return k() + c * d() + i; }
  int chol(int c, int i, int j) const {
    return k() + k() * d() + c * (d() * (d() + 1) / 2) + tri_index(i, j);
  }
};

}  // namespace

void MixtureDensity::validate() const {
  const Eigen::Index k = weights.size();
  if (k == 0 || Eigen::Index(means.size()) != k || Eigen::Index(cholesky.size()) != k) {
    throw std::invalid_argument("mixture: inconsistent component counts");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-9 || (weights.array() < 0.0).any()) {
    throw std::invalid_argument("mixture: weights are not a simplex");
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    if (means[c].size() != dim() || cholesky[c].rows() != dim() || cholesky[c].cols() != dim()) {
      throw std::invalid_argument("mixture: component dimension mismatch");
    }
    if (!(cholesky[c].diagonal().array() > 0.0).all()) {
      throw std::invalid_argument("mixture: Cholesky diagonal must be positive");
    }
  }
}

double mixture_log_prob(const MixtureDensity& mix, const Eigen::VectorXd& target) {
  if (target.size() != mix.dim()) throw std::invalid_argument("mixture_log_prob: dimension mismatch");
  const int k = int(mix.n_components());
  std::vector<double> terms(static_cast<std::size_t>(k));
  SmallVec e;
  for (int c = 0; c < k; ++c) {
    terms[std::size_t(c)] = std::log(mix.weights(c)) +
                            gaussian_log_density(target, mix.means[std::size_t(c)], mix.cholesky[std::size_t(c)], e);
  }
  return log_sum_exp(terms.data(), k);
}

Eigen::VectorXd mixture_sample(const MixtureDensity& mix, Rng& rng) {
  const double u = uniform01(rng);
  Eigen::Index comp = mix.n_components() - 1;
  double acc = 0.0;
  for (Eigen::Index c = 0; c < mix.n_components(); ++c) {
    acc += mix.weights(c);
    if (u < acc) {
      comp = c;
      break;
    }
  }
  const Eigen::VectorXd z = standard_normal_vector(mix.dim(), rng);
  const auto& l = mix.cholesky[std::size_t(comp)];
  return mix.means[std::size_t(comp)] + l.triangularView<Eigen::Lower>() * z;
}

Eigen::VectorXd mixture_mean(const MixtureDensity& mix) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(mix.dim());
  for (Eigen::Index c = 0; c < mix.n_components(); ++c) m += mix.weights(c) * mix.means[std::size_t(c)];
  return m;
}

MixtureDensity affine_transform(const MixtureDensity& mix, const Eigen::VectorXd& shift,
                                const Eigen::VectorXd& scale) {
  MixtureDensity out = mix;
  for (std::size_t c = 0; c < out.means.size(); ++c) {
    out.means[c] = shift + scale.cwiseProduct(mix.means[c]);
    out.cholesky[c] = scale.asDiagonal() * mix.cholesky[c];
  }
  return out;
}

EntropyEstimate mixture_entropy_mc(const MixtureDensity& mix, int n, Rng& rng) {
  if (n < 100) throw std::invalid_argument("mixture_entropy_mc needs n >= 100");
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double lp = mixture_log_prob(mix, mixture_sample(mix, rng));
    sum += lp;
    sum2 += lp * lp;
  }
  const double mean = sum / n;
  const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1));
  return {-mean, std::sqrt(var / n)};
}

MdnParameters mdn_init(const MdnArchitecture& arch, std::uint64_t seed, HeadInit head) {
  if (arch.target_dim < 1 || arch.target_dim > kMaxDim || arch.n_components < 1 ||
      arch.n_components > 64 || arch.input_dim < 1) {
    throw std::invalid_argument("mdn_init: invalid architecture");
  }
  Rng rng = make_rng(seed, "mdn-init");
  MdnParameters p;
  p.arch = arch;
  p.network = Mlp::create(arch.input_dim, arch.hidden, arch.output_size(), arch.activation, rng, true);
  if (head == HeadInit::random) {
    std::vector<DenseLayer> layers = p.network.layers();
    DenseLayer& out = layers.back();
    const double sd = 0.1 * std::sqrt(2.0 / double(out.weight.rows() + out.weight.cols()));
    for (Eigen::Index j = 0; j < out.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < out.weight.rows(); ++i) out.weight(i, j) = sd * standard_normal(rng);
    p.network = Mlp(std::move(layers));
  }
  p.conditioner_scaling = Standardizer::identity(arch.input_dim);
  p.target_scaling = Standardizer::identity(arch.target_dim);
  return p;
}

namespace {

MixtureDensity head_to_mixture(const MdnArchitecture& arch, const Eigen::VectorXd& out) {
  const HeadView h{arch};
  MixtureDensity mix;
  const int k = h.k(), d = h.d();
  Eigen::VectorXd logits(k);
  for (int c = 0; c < k; ++c) logits(c) = out(h.logit(c));
  const double lse = log_sum_exp(logits.data(), k);
  mix.weights = (logits.array() - lse).exp().matrix();
  mix.weights /= mix.weights.sum();
  for (int c = 0; c < k; ++c) {
    Eigen::VectorXd mu(d);
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
      mu(i) = out(h.mean(c, i));
      for (int j = 0; j < i; ++j) l(i, j) = out(h.chol(c, i, j));
      l(i, i) = softplus(out(h.chol(c, i, i))) + kMinCholeskyDiagonal;
    }
    mix.means.push_back(std::move(mu));
    mix.cholesky.push_back(std::move(l));
  }
  return mix;
}

// Loss contribution -coef * log p(t) and its gradient w.r.t. the head output.
double head_nll(const MdnArchitecture& arch, const double* out, const double* t, double coef,
                double* grad) {
  const HeadView h{arch};
  const int k = h.k(), d = h.d();
  double logits[64];
  double terms[64];
  SmallMat ls[64];
  SmallVec es[64];
  const double lse_logits = log_sum_exp(out, k);
  for (int c = 0; c < k; ++c) logits[c] = out[h.logit(c)] - lse_logits;

  SmallVec tv(d), mu(d);
  for (int i = 0; i < d; ++i) tv(i) = t[i];
  for (int c = 0; c < k; ++c) {
    SmallMat& l = ls[c];
    l.setZero(d, d);
    for (int i = 0; i < d; ++i) {
      mu(i) = out[h.mean(c, i)];
      for (int j = 0; j < i; ++j) l(i, j) = out[h.chol(c, i, j)];
      l(i, i) = softplus(out[h.chol(c, i, i)]) + kMinCholeskyDiagonal;
    }
    terms[c] = logits[c] + gaussian_log_density(tv, mu, l, es[c]);
  }
  const double logp = log_sum_exp(terms, k);
  if (grad != nullptr) {
    for (int c = 0; c < k; ++c) {
      const double r = std::exp(terms[c] - logp);
      const double pi = std::exp(logits[c]);
      grad[h.logit(c)] += coef * (pi - r);
      const SmallMat& l = ls[c];
      const SmallVec& e = es[c];
      // v = L^{-T} e
      SmallVec v(d);
      for (int i = d - 1; i >= 0; --i) {
        double s = e(i);
        for (int j = i + 1; j < d; ++j) s -= l(j, i) * v(j);
        v(i) = s / l(i, i);
      }
      for (int i = 0; i < d; ++i) {
        grad[h.mean(c, i)] += -coef * r * v(i);
        for (int j = 0; j < i; ++j) grad[h.chol(c, i, j)] += coef * r * (-v(i) * e(j));
        const double g_diag = coef * r * (-v(i) * e(i) + 1.0 / l(i, i));
        grad[h.chol(c, i, i)] += g_diag * sigmoid(out[h.chol(c, i, i)]);
      }
    }
  }
  return -coef * logp;
}

// Loss over the columns `idx` of standardized data; returns sum_i w_i nll_i / sum_i w_i.
double batch_loss(const MdnParameters& p, const Eigen::MatrixXd& cond_std, const Eigen::MatrixXd& targ_std,
                  const Eigen::VectorXd& w, const std::vector<Eigen::Index>& idx, Eigen::VectorXd* grad) {
  const Eigen::Index b = Eigen::Index(idx.size());
  Eigen::MatrixXd x(cond_std.rows(), b);
  Eigen::MatrixXd t(targ_std.rows(), b);
  double wsum = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    x.col(i) = cond_std.col(idx[std::size_t(i)]);
    t.col(i) = targ_std.col(idx[std::size_t(i)]);
    wsum += w(idx[std::size_t(i)]);
  }
  Mlp::Tape tape;
  const Eigen::MatrixXd out = p.network.forward(x, tape);
  Eigen::MatrixXd dout;
  if (grad != nullptr) dout = Eigen::MatrixXd::Zero(out.rows(), out.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double coef = w(idx[std::size_t(i)]) / wsum;
    loss += head_nll(p.arch, out.col(i).data(), t.col(i).data(), coef,
                     grad != nullptr ? dout.col(i).data() : nullptr);
  }
  if (grad != nullptr) *grad = p.network.backward(tape, dout);
  return loss;
}

}  // namespace

MixtureDensity mdn_forward(const MdnParameters& params, const Eigen::VectorXd& conditioner) {
  if (conditioner.size() != params.arch.input_dim) {
    throw std::invalid_argument("mdn_forward: conditioner has dimension " +
                                std::to_string(conditioner.size()) + ", network expects " +
                                std::to_string(params.arch.input_dim));
  }
  const Eigen::VectorXd out = params.network.forward(params.conditioner_scaling.apply(conditioner));
  return affine_transform(head_to_mixture(params.arch, out), params.target_scaling.shift,
                          params.target_scaling.scale);
}

void TrainingConfig::validate() const {
  if (!(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
    throw std::invalid_argument("validation fraction must lie in (0, 0.5]");
  }
  if (batch_size < 1 || max_epochs < 1 || patience < 1 || !(learning_rate > 0.0)) {
    throw std::invalid_argument("training counts and learning rate must be positive");
  }
}

double mdn_weighted_nll(const MdnParameters& params, const WeightedDataset& data, Eigen::VectorXd* gradient) {
  const Eigen::MatrixXd c = params.conditioner_scaling.apply_rows(data.conditioners).transpose();
  const Eigen::MatrixXd t = params.target_scaling.apply_rows(data.targets).transpose();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(data.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  return batch_loss(params, c, t, data.weights, idx, gradient);
}

TrainingResult mdn_train_weighted(const WeightedDataset& data, MdnParameters init,
                                  const TrainingConfig& config) {
  config.validate();
  const Eigen::Index n = data.size();
  const MdnArchitecture& arch = init.arch;
  if (data.conditioners.cols() != arch.input_dim || data.targets.cols() != arch.target_dim ||
      data.targets.rows() != n || data.weights.size() != n) {
    throw std::invalid_argument("mdn_train_weighted: dataset shape does not match architecture");
  }
  if (n < 10 * arch.n_components) {
    throw std::invalid_argument("mdn_train_weighted: need at least 10 records per component, got " +
                                std::to_string(n));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(data.weights(i) > 0.0) || !std::isfinite(data.weights(i))) {
      throw std::invalid_argument("mdn_train_weighted: weights must be positive and finite");
    }
  }
  if (!init.standardized) {
    init.conditioner_scaling = Standardizer::fit(data.conditioners);
    init.target_scaling = Standardizer::fit(data.targets);
    init.standardized = true;
  }
  Eigen::VectorXd w = data.weights;
  if (w.maxCoeff() == w.minCoeff()) w.setOnes();
  else w /= w.mean();

  const Eigen::MatrixXd cond = init.conditioner_scaling.apply_rows(data.conditioners).transpose();
  const Eigen::MatrixXd targ = init.target_scaling.apply_rows(data.targets).transpose();

  std::vector<Eigen::Index> val, train;
  if (config.split_seed) {
    std::vector<double> u(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      Rng r = make_rng(*config.split_seed, "mdn-split", 0, std::uint64_t(i));
      u[std::size_t(i)] = uniform01(r);
      (u[std::size_t(i)] < config.validation_fraction ? val : train).push_back(i);
    }
    if (val.empty() || train.empty()) {
      const auto pick = val.empty() ? std::min_element(u.begin(), u.end()) : std::max_element(u.begin(), u.end());
      const Eigen::Index k = Eigen::Index(pick - u.begin());
      auto& from = val.empty() ? train : val;
      from.erase(std::find(from.begin(), from.end(), k));
      (val.empty() ? val : train).push_back(k);
    }
  } else {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng split_rng = make_rng(config.seed, "mdn-split");
    std::shuffle(perm.begin(), perm.end(), split_rng);
    const Eigen::Index n_val =
        std::max<Eigen::Index>(1, Eigen::Index(std::lround(config.validation_fraction * double(n))));
    val.assign(perm.begin(), perm.begin() + n_val);
    train.assign(perm.begin() + n_val, perm.end());
  }
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  const Eigen::Index n_train = Eigen::Index(train.size());
  const Eigen::Index batch = n_train < config.full_batch_below ? n_train : config.batch_size;

  TrainingResult result;
  result.params = init;
  MdnParameters current = init;
  Eigen::VectorXd theta = current.network.parameters();
  Adam adam(theta.size(), config.learning_rate);
  double best_val = batch_loss(current, cond, targ, w, val, nullptr);
  int wait = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<Eigen::Index> order = train;
    if (batch < n_train) {
      Rng rng = make_rng(config.seed, "mdn-epoch", std::uint64_t(epoch));
      std::shuffle(order.begin(), order.end(), rng);
    }
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n_train; start += batch) {
      const Eigen::Index end = std::min(n_train, start + batch);
      std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + end);
      Eigen::VectorXd grad;
      double loss = 0.0;
      try {
        loss = batch_loss(current, cond, targ, w, idx, &grad);
      } catch (const NumericalError& e) {
        throw TrainingError(std::string("mixture density training diverged: ") + e.what(), epoch);
      }
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw TrainingError("mixture density training produced a non-finite loss", epoch);
      }
      epoch_loss += loss * double(end - start);
      adam.step(theta, grad);
      current.network.set_parameters(theta);
    }
    result.train_loss.push_back(epoch_loss / double(n_train));
    double v = 0.0;
    try {
      v = batch_loss(current, cond, targ, w, val, nullptr);
    } catch (const NumericalError& e) {
      throw TrainingError(std::string("mixture density training diverged: ") + e.what(), epoch);
    }
    if (!std::isfinite(v)) throw TrainingError("non-finite validation loss", epoch);
    result.validation_loss.push_back(v);
    if (v < best_val) {
      best_val = v;
      result.params = current;
      result.best_epoch = epoch;
      wait = 0;
    } else if (++wait >= config.patience) {
      break;
    }
  }
  return result;
}

}  // namespace sbd
