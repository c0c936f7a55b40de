#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "patternkit/dataset.hpp"
#include "patternkit/rng.hpp"

namespace patternkit {

enum class MechanismKind { Mcar, Mar, MarY, Mnar, MnarY };

std::string mechanism_name(MechanismKind kind);
MechanismKind mechanism_from_name(const std::string& name);
bool mechanism_depends_on_y(MechanismKind kind);

// Missingness mechanism for a single target column:
//   MCAR : P(M) = expit(nu0)
//   MAR  : P(M) = expit(nu0 + nu2 * X_driver)
//   MNAR : P(M) = expit(nu0 + nu1 * X_target)
//   MARY : P(M) = expit(nu0 + nu2y * (Y/sd_y + X_driver) / sqrt(2(1+cor(Y,X_driver))))
//   MNARY: P(M) = expit(nu0 + nu1y * (Y/sd_y + X_target) / sqrt(2(1+cor(Y,X_target))))
// nu0 is calibrated empirically so the mean missingness hits target_prob.
struct MechanismSpec {
  MechanismKind kind = MechanismKind::Mcar;
  double nu0 = 0.0;
  double nu1 = 1.0;
  double nu2 = 1.0;
  double nu1y = 1.0;
  double nu2y = 1.0;
  double target_prob = 0.5;
  int target_column = 0;
  int driver_column = 1;
};

enum class Formulation { Selection, PatternMixture };

std::string formulation_name(Formulation f);
Formulation formulation_from_name(const std::string& name);

// Generator for predictors and outcomes. beta has p+1 entries (intercept
// first). delta_indicator (p) and delta_interaction (p x p, entry (j,k) is
// the coefficient on X_j * M_k) define the pattern-mixture mean model.
struct GenConfig {
  int n = 1000;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  Eigen::VectorXd beta;
  Eigen::VectorXd delta_indicator;
  Eigen::MatrixXd delta_interaction;
  double noise_sd = 1.0;
  Formulation formulation = Formulation::Selection;

  int p() const { return static_cast<int>(mu.size()); }
};

GenConfig reference_gen_config();  // beta=(1,3,1), mu=(3,3), rho=0.5, delta1=delta3=1

// Rows i.i.d. N(mu, sigma) via the lower Cholesky factor.
Eigen::MatrixXd gen_predictors(const GenConfig& cfg, Rng& rng);

// Numerically stable logistic function.
double expit(double u);

// Bisection on the monotone calibration function over [-50, 50]; returns nu0
// with |mean_i expit(nu0 + term_i) - target| <= tol on the given sample and
// stores it in spec. y must be supplied for the Y-dependent kinds.
double calibrate_nu0(MechanismSpec& spec, const Eigen::MatrixXd& x,
                     const Eigen::VectorXd* y, double tol = 1e-3);

// Bernoulli(expit(nu0 + term_i)) mask for the target column. Composite terms
// use sample statistics of the data being masked.
std::vector<std::uint8_t> gen_missingness(const MechanismSpec& spec,
                                          const Eigen::MatrixXd& x,
                                          const Eigen::VectorXd* y, Rng& rng);

// y_i = beta0 + x_i'beta + eps, generated before any Y-dependent mask.
Eigen::VectorXd gen_outcome_selection(const Eigen::MatrixXd& x,
                                      const GenConfig& cfg, Rng& rng);

// y_i from the indicator-dependent mean model evaluated at the true x and the
// already-generated mask. Only covariate-driven mechanisms may feed this.
Eigen::VectorXd gen_outcome_pattern_mixture(const Eigen::MatrixXd& x,
                                            const MaskMatrix& mask,
                                            const GenConfig& cfg, Rng& rng);

// Mean of the pattern-mixture model for one row (no noise).
double pattern_mixture_mean(const GenConfig& cfg, const Eigen::VectorXd& x_row,
                            std::uint64_t mask_bits);

// One draw from X2 | X1 = x1 ~ N(mu2 + (s2/s1) rho (x1 - mu1), (1-rho^2) s2^2).
double cond_draw_x2_given_x1(double x1, double mu1, double mu2, double sigma1,
                             double sigma2, double rho, Rng& rng);

}  // namespace patternkit
