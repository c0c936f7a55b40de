#include "patternkit/linear_fit.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>

namespace patternkit {

std::vector<std::string> DesignSpec::term_labels(
    const std::vector<std::string>& col_names) const {
  auto name = [&](int j) {
    if (j >= 0 && j < static_cast<int>(col_names.size()))
      return col_names[static_cast<std::size_t>(j)];
    return "x" + std::to_string(j);
  };
  std::vector<std::string> labels;
  if (intercept) labels.push_back("(intercept)");
  for (int j : columns) labels.push_back(name(j));
  for (int j : indicator_columns) labels.push_back("m(" + name(j) + ")");
  for (auto [j, k] : interactions)
    labels.push_back(name(j) + ":m(" + name(k) + ")");
  return labels;
}

Eigen::VectorXd DesignSpec::expand(const Eigen::VectorXd& values,
                                   std::uint64_t mask_bits) const {
  Eigen::VectorXd row(term_count());
  int t = 0;
  auto fetch = [&](int j) {
    if (j < 0 || j >= values.size())
      throw std::invalid_argument("DesignSpec: column index out of range");
    const double v = values(j);
    if (!std::isfinite(v))
      throw std::invalid_argument("DesignSpec: required column " +
                                  std::to_string(j) + " is missing");
    return v;
  };
  if (intercept) row(t++) = 1.0;
  for (int j : columns) row(t++) = fetch(j);
  for (int j : indicator_columns)
    row(t++) = ((mask_bits >> j) & 1u) ? 1.0 : 0.0;
  for (auto [j, k] : interactions)
    row(t++) = ((mask_bits >> k) & 1u) ? fetch(j) : 0.0;
  return row;
}

LinearFit fit_design(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
  const Eigen::Index n = design.rows();
  const Eigen::Index terms = design.cols();
  if (n == 0) throw std::invalid_argument("fit_design: zero rows");
  if (terms == 0) throw std::invalid_argument("fit_design: zero terms");
  if (y.size() != n)
    throw std::invalid_argument("fit_design: y length does not match rows");

  Eigen::BDCSVD<Eigen::MatrixXd> svd;
  svd.setThreshold(kRankTolerance);
  svd.compute(design, Eigen::ComputeThinU | Eigen::ComputeThinV);

  LinearFit fit;
  fit.n_fit = static_cast<int>(n);
  fit.rank = static_cast<int>(svd.rank());
  fit.coefficients = svd.solve(y);  // minimum-norm solution

  const Eigen::VectorXd resid = y - design * fit.coefficients;
  const double rss = resid.squaredNorm();
  if (fit.n_fit > fit.rank)
    fit.sigma2 = rss / static_cast<double>(fit.n_fit - fit.rank);

  const int r = fit.rank;
  const Eigen::MatrixXd v_r = svd.matrixV().leftCols(r);
  const Eigen::VectorXd s_r = svd.singularValues().head(r);
  fit.coef_noise_half = v_r * s_r.cwiseInverse().asDiagonal();
  fit.gram_inverse = fit.coef_noise_half * fit.coef_noise_half.transpose();
  return fit;
}

LinearFit fit_least_squares(const Eigen::MatrixXd& rows,
                            const Eigen::VectorXd& y, const DesignSpec& spec,
                            const std::vector<std::uint64_t>& row_bits) {
  const Eigen::Index n = rows.rows();
  if (n == 0) throw std::invalid_argument("fit_least_squares: zero rows");
  if (!row_bits.empty() && static_cast<Eigen::Index>(row_bits.size()) != n)
    throw std::invalid_argument("fit_least_squares: row_bits length mismatch");
  Eigen::MatrixXd design(n, spec.term_count());
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::uint64_t bits =
        row_bits.empty() ? 0 : row_bits[static_cast<std::size_t>(i)];
    design.row(i) = spec.expand(rows.row(i).transpose(), bits).transpose();
  }
  return fit_design(design, y);
}

double predict_linear(const LinearFit& fit, const Eigen::VectorXd& values,
                      std::uint64_t mask_bits, const DesignSpec& spec) {
  if (fit.coefficients.size() != spec.term_count())
    throw std::invalid_argument("predict_linear: fit/spec term mismatch");
  return spec.expand(values, mask_bits).dot(fit.coefficients);
}

Eigen::VectorXd draw_posterior_coefficients(const LinearFit& fit, Rng& rng) {
  if (!fit.sigma2)
    throw std::invalid_argument(
        "draw_posterior_coefficients: undefined residual variance");
  const double df = static_cast<double>(fit.n_fit - fit.rank);
  const double sigma2_draw = fit.rss() / rng.chi_squared(df);
  Eigen::VectorXd z(fit.rank);
  for (int i = 0; i < fit.rank; ++i) z(i) = rng.normal();
  return fit.coefficients +
         std::sqrt(sigma2_draw) * (fit.coef_noise_half * z);
}

}  // namespace patternkit
