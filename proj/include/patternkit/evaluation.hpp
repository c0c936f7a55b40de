#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "patternkit/dataset.hpp"
#include "patternkit/imputation.hpp"
#include "patternkit/linear_fit.hpp"
#include "patternkit/mechanisms.hpp"
#include "patternkit/predictors.hpp"

namespace patternkit {

// Pattern-specific squared-error losses with their frequency-weighted total.
struct PatternLossReport {
  struct Cell {
    int count = 0;
    double mse = 0.0;
  };
  std::map<PatternId, Cell> per_pattern;
  double weighted_total = 0.0;
  std::string method_label;
  std::uint64_t replicate_seed = 0;
};

PatternLossReport pattern_losses(const Eigen::VectorXd& preds,
                                 const Eigen::VectorXd& truth,
                                 const PatternIndex& patterns);

// sigma2 * (1 + d' G^- d) for an expanded design row d: variance of a new
// observation at that point under the fitted full model.
double epe_large(const LinearFit& fit, const Eigen::VectorXd& design_row);

// Two-covariate underspecified model: squared bias of the small mean line
// against the true mean at (x1, x2) plus the prediction-variance quadratic
// form, plus the irreducible error. The small fit's coefficients are the
// population projection (fit the small design to the noiseless means).
double epe_small(const LinearFit& small_fit, const Eigen::VectorXd& true_beta,
                 double sigma2_true, double x1, double x2);

// Convex combination (1-p) EPE_L + p EPE_S.
double epe_pmks(double epe_l, double epe_s, double p_missing);

// Pattern-stratified k-fold cross-validation: every pattern's rows are split
// round-robin across folds after a seeded shuffle, so each training split
// retains the pattern mix.
PatternLossReport kfold_cv(const Dataset& ds, const MethodConfig& method,
                           int k, std::uint64_t seed);

// ---- Monte Carlo comparison harness (the seven-step protocol) ----

struct ScenarioSetting {
  MechanismSpec mechanism;
  Formulation formulation = Formulation::Selection;
  std::string label() const {
    return mechanism_name(mechanism.kind) +
           (formulation == Formulation::PatternMixture ? "-PMY" : "");
  }
};

struct EngineSetting {
  std::string label;
  ImputeMethod method = ImputeMethod::CondMean;
  ImputeOptions options;
};

struct SimConfig {
  GenConfig gen;        // training-set generator (formulation overridden per scenario)
  int n_out = 1000;     // fresh out-of-sample population per replicate
  std::vector<ScenarioSetting> scenarios;
  std::vector<MethodConfig> methods;
  std::vector<EngineSetting> error_engines;  // per-engine out-of-sample imputation errors
  int reps = 1000;
  std::uint64_t seed = 0;
  int calibration_rows = 100000;
};

struct SimReport {
  struct Row {
    std::string scenario;
    std::string method;
    std::string scope;  // "total" or "pattern-<bits>"
    double mean_pe = 0.0;
    double mc_se = 0.0;
    int reps = 0;
  };
  struct ImputationRow {
    std::string scenario;
    std::string engine;
    double mean_error = 0.0;
    double mc_se = 0.0;
    int reps = 0;
  };
  std::vector<Row> rows;
  std::vector<ImputationRow> imputation;
  int failed_replicates = 0;

  const Row* find(const std::string& scenario, const std::string& method,
                  const std::string& scope) const;
  const ImputationRow* find_imputation(const std::string& scenario,
                                       const std::string& engine) const;
};

SimReport run_simulation(const SimConfig& config);

// ---- analytic-versus-simulated EPE curves (two-covariate setup) ----

struct Fig1Config {
  std::vector<double> grid;  // out-of-sample x1 values
  int n_train = 200;
  int mc_draws = 10000;
  double p_missing = 0.5;
  Eigen::Vector2d mu{3.0, 3.0};
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  double rho = 0.5;
  Eigen::Vector3d beta{1.0, 3.0, 1.0};
  double noise_sd = 1.0;
  std::uint64_t seed = 0;
};

struct Fig1Row {
  double x1 = 0.0;
  double epe_l = 0.0;
  double epe_s = 0.0;
  double epe_pmks = 0.0;
  double mc_estimate = 0.0;
  double mc_se = 0.0;
};

std::vector<Fig1Row> figure1_experiment(const Fig1Config& cfg);

}  // namespace patternkit
