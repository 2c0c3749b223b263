#include "sbd/warehouse.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sbd/errors.hpp"

namespace sbd {

namespace {

double norm_pdf(double z) { return 0.3989422804014327 * std::exp(-0.5 * z * z); }
double norm_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

void WarehouseEconomics::validate() const {
  if (!(cost >= 0 && value >= 0 && penalty >= 0)) throw std::invalid_argument("economics must be non-negative");
}

double warehouse_utility(double demand, double stock, const WarehouseEconomics& econ) {
  return econ.value * std::min(stock, demand) - econ.cost * stock - econ.penalty * std::max(0.0, demand - stock);
}

Eigen::VectorXd warehouse_summaries(const Eigen::VectorXd& history) {
  if (history.size() != kWarehouseMonths) {
    throw std::invalid_argument("warehouse history must have 12 months, got " + std::to_string(history.size()));
  }
  const double mean = history.mean();
  const double ss = (history.array() - mean).square().sum();
  Eigen::VectorXd s(2);
  s << mean, std::sqrt(ss / double(history.size() - 1));
  return s;
}

double warehouse_expected_utility(double stock, double mu, double sigma, const WarehouseEconomics& econ) {
  const double z = (stock - mu) / sigma;
  // E[(y - a)+] = sigma * psi(z)
  const double shortfall = sigma * (norm_pdf(z) - z * norm_sf(z));
  return econ.value * (mu - shortfall) - econ.cost * stock - econ.penalty * shortfall;
}

PriorSpec warehouse_prior() {
  return PriorSpec({ParameterPrior::normal(230.0, 10.0), ParameterPrior::uniform(1.0, 10.0)});
}

ActionSpace warehouse_action_space(int resolution) {
  ActionSpace s;
  s.lo = Eigen::VectorXd::Constant(1, 200.0);
  s.hi = Eigen::VectorXd::Constant(1, 300.0);
  s.resolution = {resolution};
  s.validate();
  return s;
}

Eigen::VectorXd warehouse_fixture(std::uint64_t seed) {
  Rng rng = make_rng(seed, "warehouse-fixture");
  Eigen::VectorXd x(kWarehouseMonths);
  for (int i = 0; i < kWarehouseMonths; ++i) x(i) = 234.0 + 5.0 * standard_normal(rng);
  return x;
}

WarehouseOracleResult warehouse_optimal_action(const std::vector<double>& mu, const std::vector<double>& sigma,
                                               const std::vector<double>& weight,
                                               const WarehouseEconomics& econ, double lo, double hi) {
  if (mu.size() != sigma.size() || mu.size() != weight.size() || mu.empty()) {
    throw std::invalid_argument("warehouse_optimal_action: inconsistent quadrature points");
  }
  const double total = [&] {
    double t = 0.0;
    for (double w : weight) t += w;
    return t;
  }();
  auto u = [&](double a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i)
      if (weight[i] > 0.0) acc += weight[i] * warehouse_expected_utility(a, mu[i], sigma[i], econ);
    return acc / total;
  };
  constexpr int kScan = 401;
  const double step = (hi - lo) / (kScan - 1);
  std::vector<double> vals(kScan);
  int best = 0;
  for (int k = 0; k < kScan; ++k) {
    vals[std::size_t(k)] = u(lo + k * step);
    if (vals[std::size_t(k)] > vals[std::size_t(best)]) best = k;
  }
  // Non-identifiable when the near-optimal set covers a tenth of the box.
  // The tolerance is 1e-4 of the utility scale (V + P) * sigma.
  double mean_sigma = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) mean_sigma += weight[i] * sigma[i];
  mean_sigma /= total;
  const double tol = 1e-4 * (econ.value + econ.penalty) * mean_sigma;
  const double peak = vals[std::size_t(best)];
  const long near = std::count_if(vals.begin(), vals.end(), [&](double v) { return v >= peak - tol; });
  WarehouseOracleResult r;
  r.non_identifiable = double(near - 1) * step >= 0.1 * (hi - lo);
  if (r.non_identifiable) {
    r.action = lo + best * step;
    r.expected_utility = peak;
    return r;
  }
  double a = std::max(lo, lo + (best - 1) * step), b = std::min(hi, lo + (best + 1) * step);
  const double g = 0.61803398874989484820;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = u(c), fd = u(d);
  while (b - a > 1e-9) {
    if (fc >= fd) {
      b = d; d = c; fd = fc; c = b - g * (b - a); fc = u(c);
    } else {
      a = c; c = d; fc = fd; d = a + g * (b - a); fd = u(d);
    }
  }
  r.action = 0.5 * (a + b);
  r.expected_utility = u(r.action);
  if (r.expected_utility < vals[std::size_t(best)]) {
    r.action = lo + best * step;
    r.expected_utility = vals[std::size_t(best)];
  }
  return r;
}

WarehouseOracleResult warehouse_oracle(const Eigen::VectorXd& history, const WarehouseEconomics& econ,
                                       const PriorSpec& prior, int grid) {
  econ.validate();
  if (prior.dim() != 2) throw std::invalid_argument("warehouse_oracle: prior must be 2-D");
  const Eigen::VectorXd s = warehouse_summaries(history);
  const auto& pmu = prior.parameters()[0];
  const auto& psig = prior.parameters()[1];
  if (psig.kind != ParameterPrior::Kind::uniform) throw std::invalid_argument("warehouse_oracle: sigma prior must be uniform");
  const double n = double(history.size());
  double half = 3.0 * std::max(s(1), 1.0) / std::sqrt(n) + 1.0;
  for (int widen = 0; widen < 20; ++widen, half *= 2.0) {
    const double mlo = s(0) - half, mhi = s(0) + half;
    const double dmu = (mhi - mlo) / grid, dsig = (psig.b - psig.a) / grid;
    std::vector<double> mu, sg, lw;
    mu.reserve(std::size_t(grid) * std::size_t(grid));
    double lmax = -INFINITY;
    for (int i = 0; i < grid; ++i) {
      const double m = mlo + (i + 0.5) * dmu;
      double lp_mu = 0.0;
      if (pmu.kind == ParameterPrior::Kind::normal) lp_mu = -0.5 * std::pow((m - pmu.a) / pmu.b, 2);
      else if (!pmu.in_support_fit(m)) lp_mu = -INFINITY;
      for (int j = 0; j < grid; ++j) {
        const double sd = psig.a + (j + 0.5) * dsig;
        const double ll = -n * std::log(sd) - 0.5 * (history.array() - m).square().sum() / (sd * sd);
        mu.push_back(m);
        sg.push_back(sd);
        lw.push_back(ll + lp_mu);
        lmax = std::max(lmax, ll + lp_mu);
      }
    }
    std::vector<double> w(lw.size());
    double total = 0.0, edge = 0.0;
    const int strip = std::max(1, grid / 20);
    for (std::size_t k = 0; k < lw.size(); ++k) {
      w[k] = std::exp(lw[k] - lmax);
      total += w[k];
      const int i = int(k) / grid;
      if (i < strip || i >= grid - strip) edge += w[k];
    }
    if (edge / total > 1e-3) continue;
    for (double& v : w) v = v < 1e-14 * total ? 0.0 : v;
    WarehouseOracleResult r = warehouse_optimal_action(mu, sg, w, econ, 200.0, 300.0);
    r.mu_lo = mlo;
    r.mu_hi = mhi;
    r.widenings = widen;
    return r;
  }
  throw NumericalError("warehouse_oracle: posterior mass never contained by the quadrature grid", 0.0);
}

WarehouseProblem::WarehouseProblem(WarehouseEconomics econ, int resolution)
    : WarehouseProblem(econ, read_numeric_csv(data_path("warehouse_observed.csv")).col(1), resolution) {}

WarehouseProblem::WarehouseProblem(WarehouseEconomics econ, Eigen::VectorXd observed, int resolution)
    : econ_(econ), prior_(warehouse_prior()), space_(warehouse_action_space(resolution)),
      observed_(std::move(observed)) {
  econ_.validate();
  warehouse_summaries(observed_);
}

SimulationResult WarehouseProblem::do_simulate(const Eigen::VectorXd& theta, const Eigen::VectorXd& action,
                                               Rng& rng) const {
  SimulationResult r;
  r.history.resize(kWarehouseMonths);
  for (int i = 0; i < kWarehouseMonths; ++i) r.history(i) = theta(0) + theta(1) * standard_normal(rng);
  r.outcome = Eigen::VectorXd::Constant(1, theta(0) + theta(1) * standard_normal(rng));
  r.utility = warehouse_utility(r.outcome(0), action(0), econ_);
  return r;
}

SimulationResult WarehouseProblem::do_simulate_outcome(const Eigen::VectorXd& theta,
                                                       const Eigen::VectorXd& action, Rng& rng) const {
  SimulationResult r;
  r.history = observed_;
  r.outcome = Eigen::VectorXd::Constant(1, theta(0) + theta(1) * standard_normal(rng));
  r.utility = warehouse_utility(r.outcome(0), action(0), econ_);
  return r;
}

}  // namespace sbd
