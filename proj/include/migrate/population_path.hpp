#pragma once

#include <Eigen/Core>

#include "migrate/constraints.hpp"
#include "migrate/error.hpp"

namespace migrate {

// Design matrix tying yearly populations x_2009..x_2019 (columns) to the 11
// observation windows (rows): the decennial count reads off x_2010 exactly,
// and each 5-year estimate averages the years it covers (truncated to
// >= 2009 for the early windows).
Eigen::MatrixXd population_design_matrix();

struct NnlsSolution {
  Eigen::VectorXd x;
  double residual_norm = 0.0;  // ||A x - b||_2
  int iterations = 0;
};

// Non-negative least squares, min ||A x - b|| s.t. x >= 0, by the
// Lawson-Hanson active-set method.  Ties in the entering variable pick the
// lowest index, so the path is deterministic.  At the solution the gradient
// g = A^T (A x - b) satisfies g_i >= -tol on active coordinates and
// |g_i| <= tol * ||A^T b|| on free ones.
NnlsSolution nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

// Smoothed yearly population per CBG.  values is n_cbg x 11 (years
// kPathFirstYear..kPathFirstYear+10); residuals holds the per-CBG fit
// residual norm.
class PopulationPaths {
 public:
  // One NNLS solve per CBG against the shared design matrix.  obs is
  // kObsWindows x n_cbg.
  static PopulationPaths solve(const Eigen::MatrixXd& obs);

  // Wraps already-known yearly populations (n_cbg x 11); residuals are zero.
  static PopulationPaths from_values(Eigen::MatrixXd values, int first_year = kPathFirstYear);

  Eigen::Index cbg_count() const { return values_.rows(); }
  int first_year() const { return first_year_; }
  int last_year() const { return first_year_ + static_cast<int>(values_.cols()) - 1; }
  bool covers_year(int year) const { return year >= first_year() && year <= last_year(); }

  double value(Eigen::Index cbg, int year) const;
  const Eigen::MatrixXd& values() const { return values_; }
  const Eigen::VectorXd& residuals() const { return residuals_; }

 private:
  Eigen::MatrixXd values_;
  Eigen::VectorXd residuals_;
  int first_year_ = kPathFirstYear;
};

}  // namespace migrate
