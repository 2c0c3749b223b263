#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "sbd/action.hpp"
#include "sbd/gp.hpp"
#include "sbd/random.hpp"

using namespace sbd;

namespace {

ActionSpace line(double lo, double hi, int res) {
  ActionSpace s;
  s.lo = Eigen::VectorXd::Constant(1, lo);
  s.hi = Eigen::VectorXd::Constant(1, hi);
  s.resolution = {res};
  return s;
}

KernelHyper hyper(double amp, double ell, double noise, int dim) {
  KernelHyper h;
  h.amplitude = amp;
  h.lengthscales = Eigen::VectorXd::Constant(dim, ell);
  h.noise_variance = noise;
  return h;
}

// Surrogate over joint inputs (a, s) with identity scaling.
GpSurrogate raw_surrogate(const GaussianProcessState& st, bool lognormal = false) {
  return GpSurrogate(Standardizer::identity(st.dim()), 0.0, 1.0, lognormal, st);
}

double ks_uniform(std::vector<double> x, double lo, double hi) {
  std::sort(x.begin(), x.end());
  const double n = double(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = (x[i] - lo) / (hi - lo);
    d = std::max({d, double(i + 1) / n - f, f - double(i) / n});
  }
  return d;
}

}  // namespace

TEST_CASE("candidate grids use cell centres") {
  const ActionSpace s = line(200, 300, 256);
  const Eigen::MatrixXd c = s.candidates();
  REQUIRE(c.rows() == 256);
  CHECK(c(0, 0) == doctest::Approx(200 + 100.0 / 512));
  CHECK(c(255, 0) == doctest::Approx(300 - 100.0 / 512));

  ActionSpace s2;
  s2.lo = Eigen::Vector2d(0, 0);
  s2.hi = Eigen::Vector2d(20, 8);
  s2.resolution = {64, 64};
  const Eigen::MatrixXd c2 = s2.candidates();
  REQUIRE(c2.rows() == 4096);
  CHECK(c2(1, 0) == c2(0, 0));  // first dimension varies slowest
  CHECK(c2(1, 1) > c2(0, 1));
  CHECK(c2(64, 0) > c2(0, 0));

  ActionSpace bad = line(0, 1, 8);
  CHECK_THROWS(bad.validate());
  bad = line(1, 1, 16);
  CHECK_THROWS(bad.validate());
}

TEST_CASE("function draws from an untrained surrogate follow the prior") {
  const KernelHyper h = hyper(2.0, 1.0, 0.1, 2);
  const GaussianProcessState st(h, Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), Eigen::VectorXd(0), 0.5);
  const GpSurrogate gp = raw_surrogate(st);
  const Eigen::MatrixXd cand = line(0, 3, 16).candidates();
  Rng rng(1);
  const Eigen::MatrixXd d = draw_utility_functions(gp, Eigen::VectorXd::Zero(1), cand, 1000, rng);
  REQUIRE(d.rows() == 1000);
  REQUIRE(d.cols() == 16);
  for (Eigen::Index j = 0; j < d.cols(); j += 5) {
    const double mean = d.col(j).mean();
    const double var = (d.col(j).array() - mean).square().sum() / 999.0;
    CHECK(std::abs(mean - 0.5) < 3.0 * std::sqrt(2.0 / 1000.0));
    CHECK(std::abs(var - 2.0) < 0.2);
  }
}

TEST_CASE("noiseless draws are pinned at training inputs") {
  Eigen::MatrixXd z(3, 2);
  z << 0.0, 0.2, 1.0, 0.2, 2.0, 0.2;
  const Eigen::Vector3d u(1.0, -0.5, 0.25);
  const GaussianProcessState st(hyper(1.0, 0.7, 0.0, 2), z, u, Eigen::VectorXd::Ones(3));
  const GpSurrogate gp = raw_surrogate(st);
  Eigen::MatrixXd cand(4, 1);
  cand << 0.0, 1.0, 1.5, 2.0;
  Rng rng(2);
  const Eigen::MatrixXd d = draw_utility_functions(gp, Eigen::VectorXd::Constant(1, 0.2), cand, 200, rng);
  CHECK((d.col(0).array() - 1.0).abs().maxCoeff() < 1e-4);
  CHECK((d.col(1).array() + 0.5).abs().maxCoeff() < 1e-4);
  CHECK((d.col(3).array() - 0.25).abs().maxCoeff() < 1e-4);

  Rng a(3), b(3);
  CHECK(draw_utility_functions(gp, Eigen::VectorXd::Constant(1, 0.2), cand, 5, a) ==
        draw_utility_functions(gp, Eigen::VectorXd::Constant(1, 0.2), cand, 5, b));
}

TEST_CASE("log-normal draws are mapped through 1 - exp") {
  Eigen::MatrixXd z(1, 2);
  z << 0.0, 0.0;
  const GaussianProcessState st(hyper(1.0, 1.0, 0.0, 2), z, Eigen::VectorXd::Constant(1, std::log(3.0)),
                                Eigen::VectorXd::Ones(1));
  const GpSurrogate gp = raw_surrogate(st, true);
  Eigen::MatrixXd cand(2, 1);
  cand << 0.0, 5.0;
  Rng rng(4);
  const Eigen::MatrixXd d = draw_utility_functions(gp, Eigen::VectorXd::Zero(1), cand, 50, rng);
  CHECK((d.col(0).array() + 2.0).abs().maxCoeff() < 1e-3);
  CHECK(d.col(1).maxCoeff() < 1.0);
}

TEST_CASE("optimal-action posterior from draws") {
  const Eigen::MatrixXd cand = line(0, 3, 16).candidates().topRows(3);
  SUBCASE("argmax by construction") {
    Rng rng(5);
    Eigen::MatrixXd d(100, 3);
    for (int i = 0; i < 100; ++i)
      for (int j = 0; j < 3; ++j) d(i, j) = double(j + 1) + 1e-6 * standard_normal(rng);
    const OptimalActionPosterior p = optimal_action_posterior(d, cand);
    CHECK(p.probabilities(2) == 1.0);
    CHECK(p.draws_used == 100);
  }
  SUBCASE("exchangeable draws split evenly") {
    Rng rng(6);
    Eigen::MatrixXd d(1000, 2);
    for (int i = 0; i < 1000; ++i) d.row(i) = Eigen::RowVector2d(standard_normal(rng), standard_normal(rng));
    const OptimalActionPosterior p = optimal_action_posterior(d, cand.topRows(2));
    CHECK(std::abs(p.probabilities(0) - 0.5) < 3.0 * std::sqrt(0.25 / 1000));
    CHECK(std::abs(p.probabilities.sum() - 1.0) < 1e-12);
    // argmax invariance under a monotone transform
    const OptimalActionPosterior q = optimal_action_posterior(d.array().exp().matrix() * 3.0, cand.topRows(2));
    CHECK(q.probabilities == p.probabilities);
  }
  SUBCASE("ties go to the lowest index") {
    const Eigen::MatrixXd d = Eigen::MatrixXd::Ones(10, 3);
    const OptimalActionPosterior p = optimal_action_posterior(d, cand);
    CHECK(p.probabilities(0) == 1.0);
  }
}

TEST_CASE("action proposals") {
  const ActionSpace s = line(200, 300, 256);
  const Eigen::MatrixXd cand = s.candidates();
  const OptimalActionPosterior point = point_mass_posterior(cand, 100);
  Rng rng(7);
  SUBCASE("pure exploration matches the prior") {
    const Eigen::MatrixXd a = propose_actions(point, s, 1.0, 10000, rng);
    std::vector<double> x(a.data(), a.data() + a.size());
    CHECK(ks_uniform(x, 200, 300) < 1.628 / std::sqrt(10000.0));
  }
  SUBCASE("pure exploitation stays in one cell") {
    const Eigen::MatrixXd a = propose_actions(point, s, 0.0, 500, rng);
    CHECK((a.col(0).array() - cand(100, 0)).abs().maxCoeff() <= s.cell_width(0) / 2 + 1e-12);
  }
  SUBCASE("outputs stay in the box and are reproducible") {
    const OptimalActionPosterior edge = point_mass_posterior(cand, 255);
    Rng a(8), b(8);
    const Eigen::MatrixXd p1 = propose_actions(edge, s, 0.3, 300, a);
    CHECK(p1 == propose_actions(edge, s, 0.3, 300, b));
    for (Eigen::Index i = 0; i < p1.rows(); ++i) CHECK(s.contains(p1.row(i).transpose()));
  }
  CHECK_THROWS(propose_actions(point, s, 1.5, 1, rng));
  CHECK_THROWS(propose_actions(point, s, -0.1, 1, rng));
}

TEST_CASE("posterior spread") {
  const ActionSpace s = line(0, 10, 100);
  const Eigen::MatrixXd cand = s.candidates();
  CHECK(posterior_spread(point_mass_posterior(cand, 30))(0) == 0.0);
  OptimalActionPosterior two{cand, Eigen::VectorXd::Zero(100), 1000};
  two.probabilities(19) = 0.5;  // centre 1.95
  two.probabilities(79) = 0.5;  // centre 7.95
  CHECK(posterior_spread(two)(0) >= 3.0);
}

TEST_CASE("grid maximization with in-cell polish") {
  const ActionSpace s = line(0, 10, 256);
  const Eigen::MatrixXd cand = s.candidates();
  const ActionObjective f = [](const Eigen::VectorXd& a) { return -(a(0) - 3.0) * (a(0) - 3.0); };
  Eigen::VectorXd values(cand.rows());
  for (Eigen::Index i = 0; i < cand.rows(); ++i) values(i) = f(cand.row(i).transpose());
  const GridOptimum g = maximize_on_grid(values, f, s);
  CHECK(std::abs(g.action(0) - 3.0) < 1e-3);
  CHECK_FALSE(g.non_identifiable);

  const GridOptimum flat = maximize_on_grid(Eigen::VectorXd::Constant(cand.rows(), -4.0),
                                            [](const Eigen::VectorXd&) { return -4.0; }, s);
  CHECK(flat.non_identifiable);
  CHECK(flat.candidate == 0);

  ActionSpace s2;
  s2.lo = Eigen::Vector2d(0, 0);
  s2.hi = Eigen::Vector2d(20, 8);
  s2.resolution = {64, 64};
  const Eigen::MatrixXd c2 = s2.candidates();
  const ActionObjective f2 = [](const Eigen::VectorXd& a) {
    return -(a(0) - 12.34) * (a(0) - 12.34) - 4.0 * (a(1) - 1.1) * (a(1) - 1.1);
  };
  Eigen::VectorXd v2(c2.rows());
  for (Eigen::Index i = 0; i < c2.rows(); ++i) v2(i) = f2(c2.row(i).transpose());
  const GridOptimum g2 = maximize_on_grid(v2, f2, s2);
  CHECK(std::abs(g2.action(0) - 12.34) < 1e-3);
  CHECK(std::abs(g2.action(1) - 1.1) < 1e-3);
}

TEST_CASE("point estimate from a surrogate with a known peak") {
  // noiseless GP through samples of -(a - 3)^2: the posterior mean peaks near 3
  const int n = 21;
  Eigen::MatrixXd z(n, 2);
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) {
    z(i, 0) = 0.5 * i;
    z(i, 1) = 0.0;
    u(i) = -(z(i, 0) - 3.0) * (z(i, 0) - 3.0);
  }
  const GaussianProcessState st(hyper(30.0, 2.0, 1e-8, 2), z, u, Eigen::VectorXd::Ones(n));
  const GpSurrogate gp = raw_surrogate(st);
  const ActionSpace s = line(0, 10, 256);
  const PointEstimate e = point_estimate(point_mass_posterior(s.candidates(), 77), gp, Eigen::VectorXd::Zero(1), s);
  CHECK(std::abs(e.action(0) - 3.0) < 1e-2);
  CHECK(e.spread(0) == 0.0);
  CHECK(e.expected_utility == doctest::Approx(0.0).epsilon(1e-3).scale(1.0));
}

TEST_CASE("more draws settle the action posterior") {
  Rng rng(9);
  Eigen::MatrixXd z(6, 2);
  Eigen::VectorXd u(6);
  for (int i = 0; i < 6; ++i) {
    z(i, 0) = 2.0 * i;
    z(i, 1) = 0.0;
    u(i) = std::sin(z(i, 0));
  }
  const GpSurrogate gp = raw_surrogate(GaussianProcessState(hyper(1.0, 1.5, 0.05, 2), z, u, Eigen::VectorXd::Ones(6)));
  const Eigen::MatrixXd cand = line(0, 10, 32).candidates();
  Rng r1(10), r2(11);
  const auto p1 = optimal_action_posterior(draw_utility_functions(gp, Eigen::VectorXd::Zero(1), cand, 1000, r1), cand);
  const auto p2 = optimal_action_posterior(draw_utility_functions(gp, Eigen::VectorXd::Zero(1), cand, 10000, r2), cand);
  CHECK(0.5 * (p1.probabilities - p2.probabilities).cwiseAbs().sum() <= 0.1);
}
