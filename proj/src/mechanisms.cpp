#include "patternkit/mechanisms.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <stdexcept>

namespace patternkit {

namespace {

double sample_sd(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  const double ss = (v.array() - mean).square().sum();
  return std::sqrt(ss / (v.size() - 1));
}

double sample_cor(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ma = a.mean(), mb = b.mean();
  const Eigen::ArrayXd da = a.array() - ma, db = b.array() - mb;
  const double denom = std::sqrt(da.square().sum() * db.square().sum());
  if (denom == 0.0) throw std::runtime_error("sample_cor: zero variance");
  return (da * db).sum() / denom;
}

// linear term of the mechanism for every row (everything except nu0)
Eigen::VectorXd mechanism_terms(const MechanismSpec& spec,
                                const Eigen::MatrixXd& x,
                                const Eigen::VectorXd* y) {
  const int n = static_cast<int>(x.rows());
  if (spec.target_column < 0 || spec.target_column >= x.cols())
    throw std::invalid_argument("mechanism: target column out of range");
  if (mechanism_depends_on_y(spec.kind) && y == nullptr)
    throw std::invalid_argument("mechanism: " + mechanism_name(spec.kind) +
                                " requires the response");
  Eigen::VectorXd terms = Eigen::VectorXd::Zero(n);
  switch (spec.kind) {
    case MechanismKind::Mcar:
      break;
    case MechanismKind::Mar: {
      if (spec.driver_column < 0 || spec.driver_column >= x.cols())
        throw std::invalid_argument("mechanism: driver column out of range");
      terms = spec.nu2 * x.col(spec.driver_column);
      break;
    }
    case MechanismKind::Mnar:
      terms = spec.nu1 * x.col(spec.target_column);
      break;
    case MechanismKind::MarY:
    case MechanismKind::MnarY: {
      const int col = spec.kind == MechanismKind::MarY ? spec.driver_column
                                                       : spec.target_column;
      if (col < 0 || col >= x.cols())
        throw std::invalid_argument("mechanism: composite column out of range");
      const double nu =
          spec.kind == MechanismKind::MarY ? spec.nu2y : spec.nu1y;
      const double sd_y = sample_sd(*y);
      const double cor = sample_cor(*y, x.col(col));
      const double scale = std::sqrt(2.0 * (1.0 + cor));
      if (scale == 0.0 || sd_y == 0.0)
        throw std::runtime_error("mechanism: degenerate composite scale");
      terms = nu * ((y->array() / sd_y + x.col(col).array()) / scale).matrix();
      break;
    }
  }
  return terms;
}

}  // namespace

std::string mechanism_name(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::Mcar: return "MCAR";
    case MechanismKind::Mar: return "MAR";
    case MechanismKind::MarY: return "MARY";
    case MechanismKind::Mnar: return "MNAR";
    case MechanismKind::MnarY: return "MNARY";
  }
  return "unknown";
}

MechanismKind mechanism_from_name(const std::string& name) {
  if (name == "MCAR") return MechanismKind::Mcar;
  if (name == "MAR") return MechanismKind::Mar;
  if (name == "MARY") return MechanismKind::MarY;
  if (name == "MNAR") return MechanismKind::Mnar;
  if (name == "MNARY") return MechanismKind::MnarY;
  throw std::invalid_argument("unknown mechanism \"" + name + "\"");
}

bool mechanism_depends_on_y(MechanismKind kind) {
  return kind == MechanismKind::MarY || kind == MechanismKind::MnarY;
}

std::string formulation_name(Formulation f) {
  return f == Formulation::Selection ? "selection" : "pattern_mixture";
}

Formulation formulation_from_name(const std::string& name) {
  if (name == "selection") return Formulation::Selection;
  if (name == "pattern_mixture") return Formulation::PatternMixture;
  throw std::invalid_argument("unknown formulation \"" + name + "\"");
}

GenConfig reference_gen_config() {
  GenConfig cfg;
  cfg.n = 1000;
  cfg.mu = Eigen::Vector2d(3.0, 3.0);
  cfg.sigma = Eigen::Matrix2d{{1.0, 0.5}, {0.5, 1.0}};
  cfg.beta = Eigen::Vector3d(1.0, 3.0, 1.0);
  cfg.delta_indicator = Eigen::Vector2d(1.0, 0.0);
  cfg.delta_interaction = Eigen::Matrix2d{{1.0, 0.0}, {0.0, 0.0}};
  cfg.noise_sd = 1.0;
  return cfg;
}

Eigen::MatrixXd gen_predictors(const GenConfig& cfg, Rng& rng) {
  const int p = cfg.p();
  if (cfg.sigma.rows() != p || cfg.sigma.cols() != p)
    throw std::invalid_argument("gen_predictors: sigma shape mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(cfg.sigma);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument(
        "gen_predictors: sigma is not positive definite");
  const Eigen::MatrixXd chol = llt.matrixL();
  Eigen::MatrixXd x(cfg.n, p);
  Eigen::VectorXd z(p);
  for (int i = 0; i < cfg.n; ++i) {
    for (int j = 0; j < p; ++j) z(j) = rng.normal();
    x.row(i) = (cfg.mu + chol * z).transpose();
  }
  return x;
}

double expit(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double calibrate_nu0(MechanismSpec& spec, const Eigen::MatrixXd& x,
                     const Eigen::VectorXd* y, double tol) {
  if (!(spec.target_prob > 0.01 && spec.target_prob < 0.99))
    throw std::invalid_argument("calibrate_nu0: target_prob outside (0.01, 0.99)");
  if (x.rows() < 2) throw std::invalid_argument("calibrate_nu0: empty sample");

  const Eigen::VectorXd terms = mechanism_terms(spec, x, y);
  auto mean_prob = [&](double nu0) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < terms.size(); ++i)
      sum += expit(nu0 + terms(i));
    return sum / static_cast<double>(terms.size());
  };

  double lo = -50.0, hi = 50.0;
  if (mean_prob(lo) > spec.target_prob || mean_prob(hi) < spec.target_prob)
    throw std::runtime_error("calibrate_nu0: target not bracketed");
  double mid = 0.0;
  for (int iter = 0; iter < 200 && hi - lo > 1e-10; ++iter) {
    mid = 0.5 * (lo + hi);
    if (mean_prob(mid) < spec.target_prob)
      lo = mid;
    else
      hi = mid;
  }
  mid = 0.5 * (lo + hi);
  if (std::abs(mean_prob(mid) - spec.target_prob) > tol)
    throw std::runtime_error("calibrate_nu0: did not reach tolerance");
  spec.nu0 = mid;
  return mid;
}

std::vector<std::uint8_t> gen_missingness(const MechanismSpec& spec,
                                          const Eigen::MatrixXd& x,
                                          const Eigen::VectorXd* y, Rng& rng) {
  const Eigen::VectorXd terms = mechanism_terms(spec, x, y);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(terms.size()), 0);
  for (Eigen::Index i = 0; i < terms.size(); ++i)
    if (rng.uniform() < expit(spec.nu0 + terms(i)))
      mask[static_cast<std::size_t>(i)] = 1;
  return mask;
}

Eigen::VectorXd gen_outcome_selection(const Eigen::MatrixXd& x,
                                      const GenConfig& cfg, Rng& rng) {
  const int p = static_cast<int>(x.cols());
  if (cfg.beta.size() != p + 1)
    throw std::invalid_argument("gen_outcome_selection: beta must have p+1 entries");
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    y(i) = cfg.beta(0) + x.row(i).dot(cfg.beta.tail(p)) +
           cfg.noise_sd * rng.normal();
  return y;
}

double pattern_mixture_mean(const GenConfig& cfg, const Eigen::VectorXd& x_row,
                            std::uint64_t mask_bits) {
  const int p = static_cast<int>(x_row.size());
  double mean = cfg.beta(0) + x_row.dot(cfg.beta.tail(p));
  for (int k = 0; k < p; ++k) {
    if (!((mask_bits >> k) & 1u)) continue;
    if (cfg.delta_indicator.size() == p) mean += cfg.delta_indicator(k);
    if (cfg.delta_interaction.rows() == p)
      for (int j = 0; j < p; ++j)
        mean += cfg.delta_interaction(j, k) * x_row(j);
  }
  return mean;
}

Eigen::VectorXd gen_outcome_pattern_mixture(const Eigen::MatrixXd& x,
                                            const MaskMatrix& mask,
                                            const GenConfig& cfg, Rng& rng) {
  const int p = static_cast<int>(x.cols());
  if (cfg.beta.size() != p + 1)
    throw std::invalid_argument(
        "gen_outcome_pattern_mixture: beta must have p+1 entries");
  if (mask.rows() != x.rows() || mask.cols() != x.cols())
    throw std::invalid_argument("gen_outcome_pattern_mixture: mask shape mismatch");
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::uint64_t bits = 0;
    for (int j = 0; j < p; ++j)
      if (mask(i, j)) bits |= (1ULL << j);
    y(i) = pattern_mixture_mean(cfg, x.row(i).transpose(), bits) +
           cfg.noise_sd * rng.normal();
  }
  return y;
}

double cond_draw_x2_given_x1(double x1, double mu1, double mu2, double sigma1,
                             double sigma2, double rho, Rng& rng) {
  if (!(std::abs(rho) < 1.0))
    throw std::invalid_argument("cond_draw_x2_given_x1: |rho| must be < 1");
  if (sigma1 <= 0.0 || sigma2 <= 0.0)
    throw std::invalid_argument("cond_draw_x2_given_x1: sigmas must be positive");
  const double mean = mu2 + (sigma2 / sigma1) * rho * (x1 - mu1);
  const double sd = sigma2 * std::sqrt(1.0 - rho * rho);
  return rng.normal(mean, sd);
}

}  // namespace patternkit
