#include "sbd/linalg.hpp"

#include <cmath>

#include "sbd/errors.hpp"

namespace sbd {

JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& matrix, double scale,
                                      double start, double max) {
  JitteredCholesky out;
  out.llt.compute(matrix);
  if (out.llt.info() == Eigen::Success) return out;

  const double base = std::abs(scale) > 0.0 ? std::abs(scale) : 1.0;
  double jitter = start * base;
  double last = 0.0;
  while (jitter <= max * base * (1.0 + 1e-12)) {
    Eigen::MatrixXd jittered = matrix;
    jittered.diagonal().array() += jitter;
    out.llt.compute(jittered);
    last = jitter;
    if (out.llt.info() == Eigen::Success) {
      out.jitter = jitter;
      return out;
    }
    jitter *= 10.0;
  }
  throw NumericalError("Cholesky factorization failed after jitter escalation", last);
}

Standardizer Standardizer::identity(Eigen::Index dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index d = rows.cols();
  Standardizer s = identity(d);
  if (n == 0) return s;
  s.shift = rows.colwise().mean().transpose();
  if (n < 2) return s;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double var = (rows.col(j).array() - s.shift(j)).square().sum() / double(n - 1);
    const double sd = std::sqrt(var);
    s.scale(j) = (sd > 1e-12 * (1.0 + std::abs(s.shift(j))) && std::isfinite(sd)) ? sd : 1.0;
  }
  return s;
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& v) const {
  return (v - shift).cwiseQuotient(scale);
}

Eigen::VectorXd Standardizer::invert(const Eigen::VectorXd& v) const {
  return v.cwiseProduct(scale) + shift;
}

Eigen::MatrixXd Standardizer::apply_rows(const Eigen::MatrixXd& rows) const {
  Eigen::MatrixXd out = rows;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = (rows.row(i).transpose() - shift).cwiseQuotient(scale).transpose();
  }
  return out;
}

}  // namespace sbd
