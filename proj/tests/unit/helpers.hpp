#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <stdexcept>
#include <vector>

#include "patternkit/dataset.hpp"
#include "patternkit/rng.hpp"

namespace testutil {

// Independent least-squares oracle: solve the normal equations X'X b = X'y by
// Gaussian elimination with partial pivoting, no Eigen anywhere. Only valid
// for full-rank designs.
inline std::vector<double> normal_equation_solve(
    const std::vector<std::vector<double>>& design,
    const std::vector<double>& y) {
  const std::size_t n = design.size();
  const std::size_t p = design.front().size();
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t c = 0; c < p; ++c)
      for (std::size_t i = 0; i < n; ++i)
        a[r][c] += design[i][r] * design[i][c];
    for (std::size_t i = 0; i < n; ++i) a[r][p] += design[i][r] * y[i];
  }
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < p; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-12)
      throw std::runtime_error("oracle: singular normal equations");
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= p; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> solution(p);
  for (std::size_t r = 0; r < p; ++r) solution[r] = a[r][p] / a[r][r];
  return solution;
}

// Hat diagonal h = x' (X'X)^-1 x via the same elimination (solve once per rhs).
inline double hat_value(const std::vector<std::vector<double>>& design,
                        const std::vector<double>& point) {
  const std::size_t n = design.size();
  const std::size_t p = point.size();
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t c = 0; c < p; ++c)
      for (std::size_t i = 0; i < n; ++i)
        a[r][c] += design[i][r] * design[i][c];
    a[r][p] = point[r];
  }
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < p; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-12)
      throw std::runtime_error("oracle: singular normal equations");
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= p; ++c) a[r][c] -= f * a[col][c];
    }
  }
  double h = 0.0;
  for (std::size_t r = 0; r < p; ++r) h += point[r] * (a[r][p] / a[r][r]);
  return h;
}

// Small dataset builder: NaN marks a missing cell.
inline patternkit::Dataset make_dataset(
    const std::vector<std::vector<double>>& x_rows,
    const std::vector<double>& y,
    std::vector<std::string> col_names = {}) {
  const int n = static_cast<int>(x_rows.size());
  const int p = n > 0 ? static_cast<int>(x_rows.front().size()) : 0;
  Eigen::MatrixXd x(n, p);
  patternkit::MaskMatrix mask = patternkit::MaskMatrix::Zero(n, p);
  Eigen::VectorXd yv(n);
  for (int i = 0; i < n; ++i) {
    yv(i) = y[static_cast<std::size_t>(i)];
    for (int j = 0; j < p; ++j) {
      const double v = x_rows[static_cast<std::size_t>(i)]
                             [static_cast<std::size_t>(j)];
      if (std::isnan(v)) {
        mask(i, j) = 1;
        x(i, j) = v;
      } else {
        x(i, j) = v;
      }
    }
  }
  if (col_names.empty())
    for (int j = 0; j < p; ++j) col_names.push_back("x" + std::to_string(j + 1));
  return patternkit::Dataset(std::move(x), std::move(mask), std::move(yv),
                             std::move(col_names));
}

inline constexpr double kNA = std::numeric_limits<double>::quiet_NaN();

// Random correlated two-covariate dataset with a mask on x1 and a linear
// outcome; handy across the imputation/predictor tests.
struct TwoColSample {
  Eigen::MatrixXd x;
  patternkit::MaskMatrix mask;
  Eigen::VectorXd y;
};

inline TwoColSample sample_two_col(int n, double rho, double p_missing,
                                   std::uint64_t seed, double beta1 = 3.0,
                                   double beta2 = 1.0, double noise_sd = 1.0) {
  patternkit::Rng rng(seed);
  TwoColSample out;
  out.x.resize(n, 2);
  out.mask = patternkit::MaskMatrix::Zero(n, 2);
  out.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const double z1 = rng.normal();
    const double z2 = rho * z1 + std::sqrt(1.0 - rho * rho) * rng.normal();
    out.x(i, 0) = 3.0 + z1;
    out.x(i, 1) = 3.0 + z2;
    out.y(i) = 1.0 + beta1 * out.x(i, 0) + beta2 * out.x(i, 1) +
               noise_sd * rng.normal();
    if (rng.uniform() < p_missing) out.mask(i, 0) = 1;
  }
  return out;
}

inline patternkit::Dataset to_dataset(const TwoColSample& s) {
  return patternkit::Dataset(s.x, s.mask, s.y, {"x1", "x2"});
}

}  // namespace testutil
