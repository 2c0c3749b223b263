#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "sbd/errors.hpp"
#include "sbd/prior.hpp"
#include "sbd/proposal.hpp"
#include "sbd/random.hpp"

using namespace sbd;

namespace {

PriorSpec unit_prior() { return PriorSpec({ParameterPrior::uniform(0.0, 1.0)}); }

// Q = 1/2 U(0,1) + 1/2 U(0,0.5): the second component is a uniform prior on
// (0, 0.5), which is entirely inside the support.
ProposalMixture half_mixture() {
  const PriorSpec p = unit_prior();
  return ProposalMixture(p).with_component(ProposalComponent{PriorSpec({ParameterPrior::uniform(0.0, 0.5)}), 1.0});
}

Eigen::VectorXd v1(double x) { return Eigen::VectorXd::Constant(1, x); }

MixtureDensity gaussian_1d(double mu, double sd) {
  MixtureDensity m;
  m.weights = Eigen::VectorXd::Ones(1);
  m.means = {v1(mu)};
  m.cholesky = {Eigen::MatrixXd::Constant(1, 1, sd)};
  return m;
}

// Two-sided Kolmogorov-Smirnov statistic against U(lo, hi).
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

TEST_CASE("prior-only proposal has unit weights") {
  const PriorSpec p({ParameterPrior::normal(230, 10), ParameterPrior::uniform(1, 10)});
  const ProposalMixture q(p);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd t = p.sample_fit(rng);
    CHECK(proposal_density(q, t) == p.density_fit(t));
    CHECK(importance_weight(p, q, t) == 1.0);
  }
}

TEST_CASE("hand-computed mixture densities and weights") {
  const ProposalMixture q = half_mixture();
  CHECK(q.size() == 2);
  CHECK(proposal_density(q, v1(0.25)) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(proposal_density(q, v1(0.75)) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(importance_weight(unit_prior(), q, v1(0.25)) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(importance_weight(unit_prior(), q, v1(0.75)) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK_THROWS_AS(proposal_density(q, v1(1.5)), std::invalid_argument);
}

TEST_CASE("self-normalized weighted mean is consistent") {
  const ProposalMixture q = half_mixture();
  Rng rng(2);
  const std::vector<Eigen::VectorXd> draws = sample_proposal(q, 10000, rng);
  double sw = 0.0, swf = 0.0;
  std::vector<double> w(draws.size()), f(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    w[i] = importance_weight(unit_prior(), q, draws[i]);
    f[i] = draws[i](0);
    CHECK(w[i] > 0.0);
    sw += w[i];
    swf += w[i] * f[i];
  }
  const double est = swf / sw;
  // delta-method standard error of the ratio estimator
  double s = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) s += (w[i] * (f[i] - est)) * (w[i] * (f[i] - est));
  const double se = std::sqrt(s) / sw;
  CHECK(std::abs(est - 0.5) < 3.0 * se);
}

TEST_CASE("proposal sampling") {
  const ProposalMixture q(unit_prior());
  Rng rng(3);
  const std::vector<Eigen::VectorXd> draws = sample_proposal(q, 10000, rng);
  std::vector<double> x;
  for (const auto& d : draws) x.push_back(d(0));
  // critical value of the KS statistic at p = 0.01 for n = 10^4
  CHECK(ks_uniform(x, 0.0, 1.0) < 1.628 / std::sqrt(10000.0));

  Rng a(4), b(4);
  CHECK(sample_proposal(half_mixture(), 20, a) == sample_proposal(half_mixture(), 20, b));
  CHECK_THROWS(sample_proposal(q, 0, a));
}

TEST_CASE("truncated Gaussian components stay inside the support") {
  const PriorSpec p = unit_prior();
  Rng rng(5);
  const ProposalComponent c = truncate_to_support(gaussian_1d(0.9, 0.3), p, 10000, rng);
  // exact in-support mass of N(0.9, 0.3^2) on (0, 1) is about 0.6293
  CHECK(std::abs(c.support_mass - 0.6293) < 0.015);
  const ProposalMixture q = ProposalMixture(p).with_component(c);
  CHECK(q.size() == 2);
  for (const auto& t : sample_proposal(q, 2000, rng)) CHECK(p.in_support_fit(t));

  // the density integrates to the average in-support mass of the
  // renormalized components, which is 1
  const int steps = 20000;
  double s = 0.0;
  for (int i = 0; i < steps; ++i) s += proposal_density(q, v1((i + 0.5) / steps));
  CHECK(s / steps == doctest::Approx(1.0).epsilon(1e-3));

  // a component with no mass in the support cannot be used
  CHECK_THROWS_AS(truncate_to_support(gaussian_1d(50.0, 0.1), p, 1000, rng), ProposalDegeneracyError);
  const ProposalMixture far = ProposalMixture(p).with_component(ProposalComponent{gaussian_1d(2.5, 0.1), 1e-40});
  Rng r2(6);
  std::vector<Eigen::VectorXd> out;
  bool threw = false;
  try {
    for (int i = 0; i < 20; ++i) sample_proposal(far, 1, r2);
  } catch (const ProposalDegeneracyError&) {
    threw = true;
  }
  CHECK(threw);
}

TEST_CASE("updating appends one equally weighted component") {
  const PriorSpec p({ParameterPrior::uniform(-3, 3), ParameterPrior::uniform(-3, 3)});
  MdnArchitecture arch;
  arch.input_dim = 1;
  arch.target_dim = 2;
  arch.n_components = 2;
  const MdnParameters post = mdn_init(arch, 1);
  Rng rng(7);
  ProposalMixture q(p);
  const Eigen::Vector2d t(0.3, -0.2);
  const double before = proposal_density(q, t);
  q = update_proposal(q, post, v1(0.0), rng, 5000);
  CHECK(q.size() == 2);
  q = update_proposal(q, post, v1(0.0), rng, 5000);
  CHECK(q.size() == 3);
  const double mix = std::exp(mixture_log_prob(std::get<MixtureDensity>(q.component(1).density), t));
  const double expected = (before + mix / q.component(1).support_mass + mix / q.component(2).support_mass) / 3.0;
  CHECK(proposal_density(q, t) == doctest::Approx(expected).epsilon(1e-12));
  arch.target_dim = 3;
  CHECK_THROWS(update_proposal(q, mdn_init(arch, 1), v1(0.0), rng, 100));
}

TEST_CASE("log-uniform priors work in log space") {
  const PriorSpec p({ParameterPrior::log_uniform(std::exp(-5.0), std::exp(2.0))});
  CHECK(p.to_fit(v1(1.0))(0) == doctest::Approx(0.0));
  CHECK(p.from_fit(v1(-1.0))(0) == doctest::Approx(std::exp(-1.0)));
  CHECK(p.density_fit(v1(0.0)) == doctest::Approx(1.0 / 7.0));
  CHECK(p.entropy_fit() == doctest::Approx(std::log(7.0)));
  CHECK_FALSE(p.in_support_fit(v1(2.5)));
}
