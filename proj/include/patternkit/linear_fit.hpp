#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "patternkit/rng.hpp"

namespace patternkit {

// Describes how a raw record (covariate values + missingness bits) expands
// into a design row: optional intercept, covariate columns, missingness
// indicators, and covariate-by-indicator products.
struct DesignSpec {
  bool intercept = true;
  std::vector<int> columns;
  std::vector<int> indicator_columns;
  std::vector<std::pair<int, int>> interactions;  // (covariate, indicator)

  int term_count() const {
    return (intercept ? 1 : 0) + static_cast<int>(columns.size()) +
           static_cast<int>(indicator_columns.size()) +
           static_cast<int>(interactions.size());
  }

  std::vector<std::string> term_labels(
      const std::vector<std::string>& col_names) const;

  // values: width-p vector (entries for referenced covariates must be finite);
  // mask_bits supplies the indicator values.
  Eigen::VectorXd expand(const Eigen::VectorXd& values,
                         std::uint64_t mask_bits) const;
};

// Minimum-norm least-squares solution plus what the analytic EPE formulas
// need: the rank, residual variance, and Gram pseudo-inverse.
struct LinearFit {
  Eigen::VectorXd coefficients;
  int rank = 0;
  std::optional<double> sigma2;    // RSS/(n-rank); empty when n_fit <= rank
  Eigen::MatrixXd gram_inverse;    // pseudo-inverse of X'X
  Eigen::MatrixXd coef_noise_half; // H with H H' = gram_inverse (terms x rank)
  int n_fit = 0;

  double rss() const {
    return sigma2 ? *sigma2 * (n_fit - rank) : 0.0;
  }
};

// Relative singular-value tolerance for rank decisions. Collinear designs
// (duplicated columns, structurally dependent MIMI terms) must resolve to the
// minimum-norm solution instead of failing.
inline constexpr double kRankTolerance = 1e-10;

LinearFit fit_design(const Eigen::MatrixXd& design, const Eigen::VectorXd& y);

// Expands each raw row through `spec` and fits. `row_bits`, when provided,
// gives per-row indicator values (size n); otherwise all indicators are 0.
LinearFit fit_least_squares(const Eigen::MatrixXd& rows,
                            const Eigen::VectorXd& y, const DesignSpec& spec,
                            const std::vector<std::uint64_t>& row_bits = {});

double predict_linear(const LinearFit& fit, const Eigen::VectorXd& values,
                      std::uint64_t mask_bits, const DesignSpec& spec);

// One draw from the standard noninformative-prior posterior:
// sigma*^2 = RSS/chi2(n-rank), beta* ~ N(beta_hat, sigma*^2 * gram_inverse).
Eigen::VectorXd draw_posterior_coefficients(const LinearFit& fit, Rng& rng);

}  // namespace patternkit
