#include "doctest.h"

#include <cmath>
#include <numbers>

#include "sbd/errors.hpp"
#include "sbd/mdn.hpp"
#include "sbd/random.hpp"

using namespace sbd;

namespace {

MixtureDensity one_d(std::vector<double> w, std::vector<double> mu, std::vector<double> sd) {
  MixtureDensity m;
  m.weights = Eigen::Map<Eigen::VectorXd>(w.data(), Eigen::Index(w.size()));
  for (std::size_t k = 0; k < mu.size(); ++k) {
    m.means.push_back(Eigen::VectorXd::Constant(1, mu[k]));
    m.cholesky.push_back(Eigen::MatrixXd::Constant(1, 1, sd[k]));
  }
  return m;
}

MixtureDensity two_d_pair() {
  MixtureDensity m;
  m.weights = Eigen::Vector2d(0.35, 0.65);
  m.means = {Eigen::Vector2d(-1.0, 0.5), Eigen::Vector2d(1.5, -0.5)};
  Eigen::Matrix2d l1, l2;
  l1 << 0.8, 0.0, 0.4, 0.6;
  l2 << 0.5, 0.0, -0.3, 1.1;
  m.cholesky = {l1, l2};
  return m;
}

WeightedDataset linear_gaussian(int n, std::uint64_t seed) {
  Rng rng(seed);
  WeightedDataset d;
  d.conditioners.resize(n, 1);
  d.targets.resize(n, 1);
  d.weights = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    const double c = uniform01(rng);
    d.conditioners(i, 0) = c;
    d.targets(i, 0) = 2.0 * c + 0.5 * standard_normal(rng);
  }
  return d;
}

double mixture_sd_1d(const MixtureDensity& m) {
  double mean = 0.0, second = 0.0;
  for (Eigen::Index k = 0; k < m.n_components(); ++k) {
    const double mu = m.means[std::size_t(k)](0), s = m.cholesky[std::size_t(k)](0, 0);
    mean += m.weights(k) * mu;
    second += m.weights(k) * (s * s + mu * mu);
  }
  return std::sqrt(second - mean * mean);
}

}  // namespace

TEST_CASE("mixture log density of a standard normal") {
  const MixtureDensity m = one_d({1.0}, {0.0}, {1.0});
  CHECK(mixture_log_prob(m, Eigen::VectorXd::Zero(1)) == doctest::Approx(-0.918938533).epsilon(1e-9));
  const MixtureDensity twin = one_d({0.3, 0.7}, {0.0, 0.0}, {1.0, 1.0});
  const Eigen::VectorXd t = Eigen::VectorXd::Constant(1, 0.7);
  CHECK(mixture_log_prob(twin, t) == doctest::Approx(mixture_log_prob(m, t)).epsilon(1e-12));
}

TEST_CASE("mixture densities integrate to one") {
  const MixtureDensity m = one_d({0.2, 0.5, 0.3}, {-3.0, 0.0, 4.0}, {0.5, 1.0, 2.0});
  const double lo = -3.0 - 12 * 2.0, hi = 4.0 + 12 * 2.0;
  const int steps = 20000;
  const double h = (hi - lo) / steps;
  double s = 0.0;
  for (int i = 0; i < steps; ++i) s += std::exp(mixture_log_prob(m, Eigen::VectorXd::Constant(1, lo + (i + 0.5) * h)));
  CHECK(std::abs(s * h - 1.0) < 1e-3);

  const MixtureDensity m2 = two_d_pair();
  const int g = 400;
  const double a = -10.0, b = 10.0, hh = (b - a) / g;
  double s2 = 0.0;
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j)
      s2 += std::exp(mixture_log_prob(m2, Eigen::Vector2d(a + (i + 0.5) * hh, a + (j + 0.5) * hh)));
  CHECK(std::abs(s2 * hh * hh - 1.0) < 1e-3);
}

TEST_CASE("mixture sampling") {
  SUBCASE("degenerate component returns its mean") {
    const MixtureDensity m = one_d({1.0}, {1.25}, {1e-300});
    Rng rng(1);
    CHECK(mixture_sample(m, rng)(0) == 1.25);
  }
  SUBCASE("sample mean matches the mixture mean") {
    const MixtureDensity m = one_d({0.3, 0.7}, {-2.0, 1.0}, {0.5, 1.5});
    Rng rng(2);
    const int n = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = mixture_sample(m, rng)(0);
      s += v;
      s2 += v * v;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean - mixture_mean(m)(0)) < 3.0 * std::sqrt(var / n));
  }
  SUBCASE("single-component covariance") {
    MixtureDensity m = two_d_pair();
    m.weights = Eigen::VectorXd::Ones(1);
    m.means.resize(1);
    m.cholesky.resize(1);
    Rng rng(3);
    const int n = 100000;
    Eigen::MatrixXd x(n, 2);
    for (int i = 0; i < n; ++i) x.row(i) = mixture_sample(m, rng).transpose();
    const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = c.transpose() * c / double(n - 1);
    const Eigen::MatrixXd ref = m.cholesky[0] * m.cholesky[0].transpose();
    CHECK((cov - ref).norm() / ref.norm() < 0.05);
  }
  SUBCASE("fixed seed is reproducible") {
    const MixtureDensity m = two_d_pair();
    Rng r1(9), r2(9);
    for (int i = 0; i < 10; ++i) CHECK(mixture_sample(m, r1) == mixture_sample(m, r2));
  }
}

TEST_CASE("Monte-Carlo entropy") {
  const double gauss = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  Rng rng(4);
  const EntropyEstimate h1 = mixture_entropy_mc(one_d({1.0}, {0.0}, {1.0}), 20000, rng);
  CHECK(std::abs(h1.value - gauss) < 3.0 * h1.std_error);
  const EntropyEstimate he = mixture_entropy_mc(one_d({1.0}, {0.0}, {std::numbers::e}), 20000, rng);
  CHECK(std::abs(he.value - (gauss + 1.0)) < 3.0 * he.std_error);
  const EntropyEstimate h2 = mixture_entropy_mc(one_d({0.5, 0.5}, {-50.0, 50.0}, {1.0, 1.0}), 20000, rng);
  CHECK(std::abs(h2.value - (gauss + std::log(2.0))) < 3.0 * h2.std_error);
  CHECK_THROWS(mixture_entropy_mc(one_d({1.0}, {0.0}, {1.0}), 99, rng));
}

TEST_CASE("untrained network gives a symmetric valid mixture") {
  MdnArchitecture arch;
  arch.input_dim = 3;
  arch.target_dim = 2;
  arch.n_components = 4;
  const MdnParameters p = mdn_init(arch, 11, HeadInit::zero);
  const MixtureDensity m = mdn_forward(p, Eigen::Vector3d(0.3, -1.0, 2.0));
  REQUIRE(m.n_components() == 4);
  CHECK(std::abs(m.weights.sum() - 1.0) < 1e-12);
  for (Eigen::Index k = 0; k < 4; ++k) {
    CHECK(m.weights(k) == doctest::Approx(0.25));
    CHECK(m.means[std::size_t(k)] == m.means[0]);
    CHECK(m.cholesky[std::size_t(k)] == m.cholesky[0]);
  }
  CHECK_THROWS(mdn_forward(p, Eigen::Vector4d(0.3, -1.0, 2.0, 5.0)));
  CHECK_THROWS(mdn_forward(p, Eigen::Vector2d(0.3, -1.0)));
}

TEST_CASE("weighted NLL gradient matches finite differences") {
  MdnArchitecture arch;
  arch.input_dim = 2;
  arch.target_dim = 2;
  arch.n_components = 2;
  arch.hidden = {8, 8};
  MdnParameters p = mdn_init(arch, 5);
  Rng rng(6);
  Eigen::VectorXd theta = p.network.parameters();
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) += 0.3 * standard_normal(rng);
  p.network.set_parameters(theta);

  WeightedDataset d;
  d.conditioners = Eigen::MatrixXd::Random(5, 2);
  d.targets = Eigen::MatrixXd::Random(5, 2);
  d.weights = Eigen::VectorXd(5);
  d.weights << 0.5, 1.0, 2.0, 0.7, 1.3;

  Eigen::VectorXd g;
  mdn_weighted_nll(p, d, &g);
  REQUIRE(g.size() == theta.size());
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double h = 1e-5;
    Eigen::VectorXd tp = theta, tm = theta;
    tp(i) += h;
    tm(i) -= h;
    MdnParameters pp = p, pm = p;
    pp.network.set_parameters(tp);
    pm.network.set_parameters(tm);
    const double fd = (mdn_weighted_nll(pp, d) - mdn_weighted_nll(pm, d)) / (2 * h);
    worst = std::max(worst, std::abs(fd - g(i)) / std::max(1.0, std::abs(fd)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("training recovers a linear-Gaussian conditional") {
  const WeightedDataset d = linear_gaussian(5000, 12);
  MdnArchitecture arch;
  TrainingConfig cfg;
  cfg.seed = 3;
  const TrainingResult r = mdn_train_weighted(d, mdn_init(arch, 1), cfg);
  const MixtureDensity m = mdn_forward(r.params, Eigen::VectorXd::Constant(1, 0.5));
  CHECK(std::abs(mixture_mean(m)(0) - 1.0) < 0.1);
  CHECK(std::abs(mixture_sd_1d(m) - 0.5) < 0.1);

  CHECK(r.train_loss.back() < r.train_loss.front());
}

TEST_CASE("full-batch training loss is non-increasing") {
  // below the full-batch threshold each epoch is one deterministic step
  WeightedDataset d = linear_gaussian(400, 15);
  for (Eigen::Index i = 0; i < d.size(); i += 2) d.targets(i, 0) = -d.targets(i, 0) + 3.0;
  MdnArchitecture arch;
  arch.n_components = 2;
  TrainingConfig cfg;
  cfg.seed = 5;
  cfg.max_epochs = 300;
  cfg.patience = 300;
  const TrainingResult r = mdn_train_weighted(d, mdn_init(arch, 3), cfg);
  int up = 0;
  for (std::size_t i = 1; i < r.train_loss.size(); ++i)
    if (r.train_loss[i] > r.train_loss[i - 1]) ++up;
  CHECK(r.train_loss.size() == 300);
  CHECK(up <= 0.05 * double(r.train_loss.size()));
}

TEST_CASE("training is deterministic and invariant to a common weight scale") {
  WeightedDataset d = linear_gaussian(300, 13);
  MdnArchitecture arch;
  arch.n_components = 2;
  arch.hidden = {16};
  TrainingConfig cfg;
  cfg.seed = 8;
  cfg.max_epochs = 50;
  const TrainingResult a = mdn_train_weighted(d, mdn_init(arch, 2), cfg);
  const TrainingResult b = mdn_train_weighted(d, mdn_init(arch, 2), cfg);
  CHECK(a.params.network.parameters() == b.params.network.parameters());
  d.weights.setConstant(3.0);
  const TrainingResult c = mdn_train_weighted(d, mdn_init(arch, 2), cfg);
  CHECK(a.params.network.parameters() == c.params.network.parameters());
  CHECK(a.train_loss == c.train_loss);
}

TEST_CASE("importance weights correct a skewed proposal") {
  // targets drawn from density 2t on (0, 1), weighted by 1/(2t) back to uniform
  const int n = 4000;
  Rng rng(14);
  WeightedDataset skew, flat;
  skew.conditioners.resize(n, 1);
  skew.targets.resize(n, 1);
  skew.weights.resize(n);
  flat.conditioners.resize(n, 1);
  flat.targets.resize(n, 1);
  flat.weights = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    const double t = std::sqrt(uniform01(rng));
    skew.conditioners(i, 0) = uniform01(rng);
    skew.targets(i, 0) = t;
    skew.weights(i) = 1.0 / (2.0 * t);
    flat.conditioners(i, 0) = uniform01(rng);
    flat.targets(i, 0) = uniform01(rng);
  }
  MdnArchitecture arch;
  arch.hidden = {16};
  TrainingConfig cfg;
  cfg.seed = 4;
  const MixtureDensity ms = mdn_forward(mdn_train_weighted(skew, mdn_init(arch, 1), cfg).params, Eigen::VectorXd::Constant(1, 0.5));
  const MixtureDensity mf = mdn_forward(mdn_train_weighted(flat, mdn_init(arch, 1), cfg).params, Eigen::VectorXd::Constant(1, 0.5));
  // unweighted fit of the skewed data would sit near mean 2/3
  CHECK(std::abs(mixture_mean(ms)(0) - mixture_mean(mf)(0)) < 0.05);
  CHECK(std::abs(mixture_sd_1d(ms) - mixture_sd_1d(mf)) < 0.05);
  CHECK(std::abs(mixture_mean(ms)(0) - 0.5) < 0.05);
}

TEST_CASE("training rejects bad input") {
  MdnArchitecture arch;
  arch.n_components = 3;
  WeightedDataset d = linear_gaussian(29, 1);
  CHECK_THROWS_AS(mdn_train_weighted(d, mdn_init(arch, 1), TrainingConfig{}), std::invalid_argument);
  d = linear_gaussian(30, 1);
  d.weights(3) = 0.0;
  CHECK_THROWS_AS(mdn_train_weighted(d, mdn_init(arch, 1), TrainingConfig{}), std::invalid_argument);
  TrainingConfig bad;
  bad.validation_fraction = 0.6;
  CHECK_THROWS(bad.validate());
}
