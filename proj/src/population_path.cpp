#include "migrate/population_path.hpp"

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "migrate/parallel.hpp"

namespace migrate {

Eigen::MatrixXd population_design_matrix() {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(kObsWindows, kPathYears);
  // Decennial 2010 count: exactly x_2010.
  a(0, 1) = 1.0;
  // 5-year windows ending 2010..2013 are truncated at 2009.
  for (int w = 1; w <= 4; ++w) {
    int years = w + 1;  // 2009..(2009 + w)
    for (int y = 0; y < years; ++y) a(w, y) = 1.0 / years;
  }
  // Windows ending 2014..2019 cover five full years.
  for (int w = 5; w < kObsWindows; ++w) {
    int last = w - 5 + 5;  // column of the window's final year
    for (int y = last - 4; y <= last; ++y) a(w, y) = 1.0 / 5.0;
  }
  return a;
}

NnlsSolution nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  if (A.rows() != b.size())
    fail(ErrorCode::LengthMismatch, "design rows " + std::to_string(A.rows()) + " vs rhs " +
                                        std::to_string(b.size()));
  if (!A.allFinite() || !b.allFinite()) fail(ErrorCode::NonFiniteInput, "nnls input");

  const Eigen::Index n = A.cols();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  Eigen::VectorXd w = A.transpose() * b;  // gradient of -1/2 ||Ax-b||^2 at x = 0
  // Comfortably above least-squares rounding noise, far below any real dual
  // violation at the data magnitudes this fit sees.
  const double tol = std::max(1e-10, 1e-13 * w.cwiseAbs().maxCoeff());

  auto solve_passive = [&](Eigen::VectorXd& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i)
      if (passive[static_cast<std::size_t>(i)]) idx.push_back(i);
    Eigen::MatrixXd ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) ap.col(static_cast<Eigen::Index>(k)) = A.col(idx[k]);
    Eigen::VectorXd zp = ap.colPivHouseholderQr().solve(b);
    z.setZero();
    for (std::size_t k = 0; k < idx.size(); ++k) z[idx[k]] = zp[static_cast<Eigen::Index>(k)];
    return idx;
  };

  NnlsSolution out;
  const int max_outer = static_cast<int>(3 * n) + 10;
  for (int outer = 0; outer < max_outer; ++outer) {
    // Pick the most violated dual coordinate among active ones.
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (passive[static_cast<std::size_t>(i)]) continue;
      if (w[i] > best_w) {
        best_w = w[i];
        best = i;
      }
    }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    Eigen::VectorXd z(n);
    for (int inner = 0; inner <= 3 * static_cast<int>(n); ++inner) {
      auto idx = solve_passive(z);
      bool feasible = true;
      for (Eigen::Index i : idx)
        if (z[i] <= 0.0) feasible = false;
      if (feasible) {
        x = z;
        break;
      }
      // Step toward z until the first passive coordinate hits zero.
      double alpha = 1.0;
      Eigen::Index leaving = -1;
      for (Eigen::Index i : idx) {
        if (z[i] > 0.0) continue;
        double a = x[i] / (x[i] - z[i]);
        if (a < alpha) {
          alpha = a;
          leaving = i;
        }
      }
      x += alpha * (z - x);
      if (leaving >= 0) x[leaving] = 0.0;
      for (Eigen::Index i : idx)
        if (x[i] <= 0.0) {
          passive[static_cast<std::size_t>(i)] = false;
          x[i] = 0.0;
        }
      ++out.iterations;
    }
    ++out.iterations;
    w = A.transpose() * (b - A * x);
  }

  out.x = x;
  out.residual_norm = (A * x - b).norm();
  return out;
}

PopulationPaths PopulationPaths::solve(const Eigen::MatrixXd& obs) {
  if (obs.rows() != kObsWindows)
    fail(ErrorCode::LengthMismatch, "observation matrix must have " +
                                        std::to_string(kObsWindows) + " rows, got " +
                                        std::to_string(obs.rows()));
  if (!obs.allFinite()) fail(ErrorCode::NonFiniteInput, "cbg observations");
  const Eigen::MatrixXd design = population_design_matrix();

  PopulationPaths out;
  out.values_.resize(obs.cols(), kPathYears);
  out.residuals_.resize(obs.cols());
  parallel_rows(obs.cols(), [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index c = begin; c < end; ++c) {
      NnlsSolution s = nnls(design, obs.col(c));
      out.values_.row(c) = s.x.transpose();
      out.residuals_[c] = s.residual_norm;
    }
  });
  return out;
}

PopulationPaths PopulationPaths::from_values(Eigen::MatrixXd values, int first_year) {
  if (!values.allFinite()) fail(ErrorCode::NonFiniteInput, "population path values");
  if (values.minCoeff() < 0.0) fail(ErrorCode::NegativeEntry, "population path values");
  PopulationPaths out;
  out.values_ = std::move(values);
  out.residuals_ = Eigen::VectorXd::Zero(out.values_.rows());
  out.first_year_ = first_year;
  return out;
}

double PopulationPaths::value(Eigen::Index cbg, int year) const {
  if (!covers_year(year))
    fail(ErrorCode::UnknownArea, "no population path for year " + std::to_string(year));
  return values_(cbg, year - first_year_);
}

}  // namespace migrate
