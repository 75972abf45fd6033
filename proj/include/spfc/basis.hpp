#pragma once

#include <Eigen/Dense>
#include <vector>

#include "spfc/error.hpp"

namespace spfc {

/// Observation times standardized to [0,1].
inline Eigen::VectorXd unit_time_grid(int T) {
  if (T == 1) return Eigen::VectorXd::Zero(1);
  return Eigen::VectorXd::LinSpaced(T, 0.0, 1.0);
}

/// Columns t, t^2, ..., t^degree on the unit time grid (no constant column).
inline Eigen::MatrixXd monomial_basis(int T, int degree) {
  Eigen::VectorXd t = unit_time_grid(T);
  Eigen::MatrixXd Z(T, degree);
  for (int d = 0; d < degree; ++d) Z.col(d) = t.array().pow(d + 1).matrix();
  return Z;
}

/// Clamped B-spline basis with equally spaced interior knots on [0,1].
/// Rows are evaluation points, columns the n_basis basis functions.
inline Eigen::MatrixXd bspline_basis(const Eigen::VectorXd& x, int n_basis, int degree) {
  if (degree < 0 || n_basis < degree + 1)
    throw Error(ErrorKind::InvalidConfig, "bspline needs n_basis >= degree + 1");
  const int n_interior = n_basis - degree - 1;
  std::vector<double> knots;
  knots.reserve(n_basis + degree + 1);
  for (int i = 0; i <= degree; ++i) knots.push_back(0.0);
  for (int i = 1; i <= n_interior; ++i) knots.push_back(static_cast<double>(i) / (n_interior + 1));
  for (int i = 0; i <= degree; ++i) knots.push_back(1.0);

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(x.size(), n_basis);
  const int n_knots = static_cast<int>(knots.size());
  for (Eigen::Index r = 0; r < x.size(); ++r) {
    const double xv = x[r];
    // degree-0 indicators; the right end belongs to the last non-empty span
    std::vector<double> N(n_knots - 1, 0.0);
    for (int i = 0; i < n_knots - 1; ++i) {
      bool inside = knots[i] <= xv && xv < knots[i + 1];
      if (xv >= 1.0) inside = knots[i] < knots[i + 1] && knots[i + 1] >= 1.0;
      N[i] = inside ? 1.0 : 0.0;
    }
    for (int p = 1; p <= degree; ++p) {
      for (int i = 0; i < n_knots - 1 - p; ++i) {
        double left = 0.0, right = 0.0;
        double d1 = knots[i + p] - knots[i];
        double d2 = knots[i + p + 1] - knots[i + 1];
        if (d1 > 0) left = (xv - knots[i]) / d1 * N[i];
        if (d2 > 0) right = (knots[i + p + 1] - xv) / d2 * N[i + 1];
        N[i] = left + right;
      }
    }
    for (int j = 0; j < n_basis; ++j) B(r, j) = N[j];
  }
  return B;
}

inline Eigen::MatrixXd bspline_basis(int T, int n_basis, int degree) {
  return bspline_basis(unit_time_grid(T), n_basis, degree);
}

}  // namespace spfc
