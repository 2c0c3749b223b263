#pragma once

#include <Eigen/Dense>

namespace sbd {

struct JitteredCholesky {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;  // absolute value added to the diagonal
};

// Factorizes `matrix`, first as given and then with diagonal jitter
// start*scale, escalating x10 up to max*scale. Throws NumericalError carrying
// the last attempted jitter when every attempt fails.
JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& matrix, double scale,
                                      double start = 1e-8, double max = 1e-2);

// Per-column mean/sd standardization. A column with zero (or undefined)
// spread keeps scale 1 so that constant inputs stay finite.
struct Standardizer {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;

  static Standardizer identity(Eigen::Index dim);
  static Standardizer fit(const Eigen::MatrixXd& rows);

  bool empty() const { return shift.size() == 0; }
  Eigen::Index dim() const { return shift.size(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::VectorXd invert(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& rows) const;
};

}  // namespace sbd
