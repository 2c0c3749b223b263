#include "sbd/prior.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sbd {

namespace {
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
}

ParameterPrior ParameterPrior::normal(double mean, double sd) {
  ParameterPrior p{Kind::normal, mean, sd};
  p.validate();
  return p;
}

ParameterPrior ParameterPrior::uniform(double lo, double hi) {
  ParameterPrior p{Kind::uniform, lo, hi};
  p.validate();
  return p;
}

ParameterPrior ParameterPrior::log_uniform(double lo, double hi) {
  ParameterPrior p{Kind::log_uniform, lo, hi};
  p.validate();
  return p;
}

void ParameterPrior::validate() const {
  switch (kind) {
    case Kind::normal:
      if (!(b > 0.0)) throw std::invalid_argument("normal prior needs sd > 0");
      break;
    case Kind::uniform:
      if (!(a < b)) throw std::invalid_argument("uniform prior needs lo < hi");
      break;
    case Kind::log_uniform:
      if (!(a > 0.0 && a < b)) throw std::invalid_argument("log-uniform prior needs 0 < lo < hi");
      break;
  }
}

double ParameterPrior::to_fit(double theta) const {
  return kind == Kind::log_uniform ? std::log(theta) : theta;
}

double ParameterPrior::from_fit(double t) const {
  return kind == Kind::log_uniform ? std::exp(t) : t;
}

bool ParameterPrior::in_support_fit(double t) const {
  if (!std::isfinite(t)) return false;
  switch (kind) {
    case Kind::normal: return true;
    case Kind::uniform: return t >= a && t <= b;
    case Kind::log_uniform: return t >= std::log(a) && t <= std::log(b);
  }
  return false;
}

double ParameterPrior::log_density_fit(double t) const {
  if (!in_support_fit(t)) return -std::numeric_limits<double>::infinity();
  switch (kind) {
    case Kind::normal: {
      const double z = (t - a) / b;
      return -0.5 * z * z - std::log(b) - kLogSqrt2Pi;
    }
    case Kind::uniform: return -std::log(b - a);
    case Kind::log_uniform: return -std::log(std::log(b) - std::log(a));
  }
  return 0.0;
}

double ParameterPrior::sample_fit(Rng& rng) const {
  switch (kind) {
    case Kind::normal: return a + b * standard_normal(rng);
    case Kind::uniform: return a + (b - a) * uniform01(rng);
    case Kind::log_uniform: {
      const double lo = std::log(a), hi = std::log(b);
      return lo + (hi - lo) * uniform01(rng);
    }
  }
  return 0.0;
}

double ParameterPrior::entropy_fit() const {
  switch (kind) {
    case Kind::normal: return 0.5 * std::log(2.0 * M_PI * M_E * b * b);
    case Kind::uniform: return std::log(b - a);
    case Kind::log_uniform: return std::log(std::log(b) - std::log(a));
  }
  return 0.0;
}

PriorSpec::PriorSpec(std::vector<ParameterPrior> params) : params_(std::move(params)) {
  for (const auto& p : params_) p.validate();
}

Eigen::VectorXd PriorSpec::to_fit(const Eigen::VectorXd& theta) const {
  if (theta.size() != dim()) throw std::invalid_argument("prior: parameter dimension mismatch");
  Eigen::VectorXd t(dim());
  for (Eigen::Index i = 0; i < dim(); ++i) t(i) = params_[std::size_t(i)].to_fit(theta(i));
  return t;
}

Eigen::VectorXd PriorSpec::from_fit(const Eigen::VectorXd& t) const {
  if (t.size() != dim()) throw std::invalid_argument("prior: parameter dimension mismatch");
  Eigen::VectorXd theta(dim());
  for (Eigen::Index i = 0; i < dim(); ++i) theta(i) = params_[std::size_t(i)].from_fit(t(i));
  return theta;
}

bool PriorSpec::in_support_fit(const Eigen::VectorXd& t) const {
  if (t.size() != dim()) return false;
  for (Eigen::Index i = 0; i < dim(); ++i)
    if (!params_[std::size_t(i)].in_support_fit(t(i))) return false;
  return true;
}

double PriorSpec::log_density_fit(const Eigen::VectorXd& t) const {
  if (t.size() != dim()) throw std::invalid_argument("prior: parameter dimension mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < dim(); ++i) s += params_[std::size_t(i)].log_density_fit(t(i));
  return s;
}

double PriorSpec::density_fit(const Eigen::VectorXd& t) const { return std::exp(log_density_fit(t)); }

Eigen::VectorXd PriorSpec::sample_fit(Rng& rng) const {
  Eigen::VectorXd t(dim());
  for (Eigen::Index i = 0; i < dim(); ++i) t(i) = params_[std::size_t(i)].sample_fit(rng);
  return t;
}

double PriorSpec::entropy_fit() const {
  double h = 0.0;
  for (const auto& p : params_) h += p.entropy_fit();
  return h;
}

}  // namespace sbd
