#include "doctest.h"

#include <atomic>
#include <cmath>

#include "sbd/baseline.hpp"
#include "sbd/random.hpp"
#include "sbd/warehouse.hpp"

using namespace sbd;

namespace {

ActionSpace box(std::vector<double> lo, std::vector<double> hi) {
  ActionSpace s;
  s.lo = Eigen::Map<Eigen::VectorXd>(lo.data(), Eigen::Index(lo.size()));
  s.hi = Eigen::Map<Eigen::VectorXd>(hi.data(), Eigen::Index(hi.size()));
  s.resolution.assign(lo.size(), 32);
  return s;
}

PosteriorSampler fixed_theta(double mu, double sigma) {
  return [mu, sigma](Rng&) { return Eigen::Vector2d(mu, sigma).eval(); };
}

}  // namespace

TEST_CASE("Monte-Carlo expected utility") {
  const WarehouseEconomics econ;
  const OutcomeUtility warehouse = [&](const Eigen::VectorXd& th, const Eigen::VectorXd& a, Rng& r) {
    return warehouse_utility(th(0) + th(1) * standard_normal(r), a(0), econ);
  };

  SUBCASE("degenerate posterior and simulator") {
    const OutcomeUtility det = [](const Eigen::VectorXd& th, const Eigen::VectorXd& a, Rng&) { return th(0) * a(0); };
    Rng rng(1);
    const McEstimate m = mc_expected_utility(Eigen::VectorXd::Constant(1, 2.0), fixed_theta(3.0, 1.0), det, 50, rng);
    CHECK(m.estimate == doctest::Approx(6.0));
    CHECK(m.std_error == 0.0);
    CHECK(m.calls == 50);
    CHECK(std::isnan(mc_expected_utility(Eigen::VectorXd::Constant(1, 2.0), fixed_theta(3.0, 1.0), det, 1, rng).std_error));
    CHECK_THROWS(mc_expected_utility(Eigen::VectorXd::Constant(1, 2.0), fixed_theta(3.0, 1.0), det, 0, rng));
  }
  SUBCASE("closed form at the critical fractile") {
    Rng rng(2);
    const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, 234.63);
    const McEstimate m = mc_expected_utility(a, fixed_theta(234.0, 5.0), warehouse, 100000, rng);
    const double exact = warehouse_expected_utility(234.63, 234.0, 5.0, econ);
    CHECK(std::abs(m.estimate - exact) < 3.0 * m.std_error);
  }
  SUBCASE("standard error scales as one over root N") {
    Rng rng(3);
    const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, 240.0);
    double ratio = 0.0;
    for (int t = 0; t < 20; ++t) {
      const double s1 = mc_expected_utility(a, fixed_theta(234.0, 5.0), warehouse, 2000, rng).std_error;
      const double s2 = mc_expected_utility(a, fixed_theta(234.0, 5.0), warehouse, 4000, rng).std_error;
      ratio += s1 / s2 / 20.0;
    }
    CHECK(std::abs(ratio - std::sqrt(2.0)) < 0.2 * std::sqrt(2.0));
  }
}

TEST_CASE("differential evolution") {
  DeConfig cfg;
  cfg.seed = 4;

  SUBCASE("noiseless quadratic") {
    const DeResult r = differential_evolution([](const Eigen::VectorXd& a, Rng&) { return -(a(0) - 3) * (a(0) - 3); },
                                              box({0.0}, {10.0}), cfg);
    CHECK(std::abs(r.best(0) - 3.0) < 1e-3);
  }
  SUBCASE("call accounting on a flat objective") {
    const NoisyObjective flat = [](const Eigen::VectorXd&, Rng&) { return 1.0; };
    cfg.generations = 7;
    cfg.reevaluate_parents = false;
    DeResult r = differential_evolution(flat, box({0.0}, {10.0}), cfg);
    CHECK(r.objective_calls == 16 * 7);
    CHECK(r.generations_run == 7);
    cfg.reevaluate_parents = true;
    r = differential_evolution(flat, box({0.0}, {10.0}), cfg);
    CHECK(r.objective_calls == 16 + 2 * 16 * 6);
  }
  SUBCASE("negated Rosenbrock") {
    const NoisyObjective rosen = [](const Eigen::VectorXd& a, Rng&) {
      return -(std::pow(1 - a(0), 2) + 100 * std::pow(a(1) - a(0) * a(0), 2));
    };
    cfg.population = 32;
    cfg.generations = 200;
    cfg.reevaluate_parents = false;
    const DeResult r = differential_evolution(rosen, box({-2.0, -2.0}, {2.0, 2.0}), cfg);
    CHECK(std::abs(r.best(0) - 1.0) < 1e-2);
    CHECK(std::abs(r.best(1) - 1.0) < 1e-2);
  }
  SUBCASE("never leaves the box") {
    const ActionSpace s = box({-1.0, 5.0}, {1.0, 6.0});
    std::atomic<long> outside{0};
    const NoisyObjective edge = [&](const Eigen::VectorXd& a, Rng& r) {
      if (!s.contains(a)) ++outside;
      return a(0) + a(1) + 0.5 * standard_normal(r);
    };
    differential_evolution(edge, s, cfg);
    CHECK(outside == 0);
  }
  SUBCASE("determinism and thread independence") {
    const NoisyObjective noisy = [](const Eigen::VectorXd& a, Rng& r) { return -std::abs(a(0) - 2) + standard_normal(r); };
    const DeResult a = differential_evolution(noisy, box({0.0}, {10.0}), cfg);
    cfg.threads = 3;
    const DeResult b = differential_evolution(noisy, box({0.0}, {10.0}), cfg);
    CHECK(a.best == b.best);
    CHECK(a.best_value == b.best_value);
  }
  SUBCASE("configuration errors") {
    cfg.population = 4;
    CHECK_THROWS(cfg.validate());
    cfg.population = 16;
    cfg.F = 0.0;
    CHECK_THROWS(cfg.validate());
    cfg.F = 0.8;
    cfg.CR = 1.5;
    CHECK_THROWS(cfg.validate());
  }
}

TEST_CASE("baseline pipeline on the warehouse") {
  const WarehouseProblem p;
  DeConfig cfg;
  cfg.seed = 5;
  cfg.generations = 10;
  const BaselineResult a = run_baseline(p, fixed_theta(234.0, 5.0), 20, cfg);
  CHECK(a.objective_calls == 16 + 2 * 16 * 9);
  CHECK(a.total_calls == 20 * a.objective_calls);
  CHECK(p.actions().contains(a.a_star));
  const BaselineResult b = run_baseline(p, fixed_theta(234.0, 5.0), 20, cfg);
  CHECK(a.a_star == b.a_star);
  CHECK(a.value == b.value);

  // the fixed-theta optimum is the critical fractile 234 + 5 z(0.55)
  cfg.generations = 50;
  const BaselineResult c = run_baseline(p, fixed_theta(234.0, 5.0), 100, cfg);
  CHECK(std::abs(c.a_star(0) - 234.628) < 0.01 * 234.628);
}

TEST_CASE("baseline variance shrinks with more Monte-Carlo draws") {
  const WarehouseProblem p;
  auto spread = [&](int n_mc) {
    double s = 0.0, ss = 0.0;
    for (int seed = 1; seed <= 8; ++seed) {
      DeConfig cfg;
      cfg.seed = std::uint64_t(seed);
      cfg.generations = 15;
      const double a = run_baseline(p, fixed_theta(234.0, 5.0), n_mc, cfg).a_star(0);
      s += a;
      ss += a * a;
    }
    return std::sqrt(ss / 8 - (s / 8) * (s / 8));
  };
  CHECK(spread(1) > spread(100));
}
