#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "patternkit/dataset.hpp"
#include "patternkit/linear_fit.hpp"
#include "patternkit/rng.hpp"

namespace patternkit {

enum class ImputeMethod { Zero, UncondMean, CondMean, CondMeanBayes, PmmMice };

std::string impute_method_name(ImputeMethod m);
ImputeMethod impute_method_from_name(const std::string& name);

struct ImputeOptions {
  int m = 10;            // completions (PmmMice; others always produce 1)
  int k_donors = 5;      // predictive-mean-matching pool size
  int cycles = 10;       // chained-equation sweeps
  bool include_y = false;  // let the response enter the chained model
};

// One or more fully observed covariate matrices. Deterministic engines yield
// a single completion; PmmMice yields m.
struct CompletedData {
  std::vector<Eigen::MatrixXd> completions;

  int m() const { return static_cast<int>(completions.size()); }
};

// Frozen imputation artifact: fit once on the in-sample population, then
// applied unchanged to out-of-sample records one by one.
class ImputationEngine {
 public:
  struct CondModel {
    DesignSpec spec;  // intercept + the pattern's observed columns
    LinearFit fit;
  };

  // Chained-equation state for one variable. Donor pools hold
  // (predicted mean, observed value) sorted by predicted mean.
  struct PmmColumn {
    int column = 0;  // covariate index, or kResponseColumn for y
    DesignSpec spec; // intercept + every other variable, over augmented records
    std::vector<LinearFit> fits;                            // one per completion
    std::vector<std::vector<std::pair<double, double>>> donors;  // per completion
  };

  static constexpr int kResponseColumn = -1;

  ImputeMethod method = ImputeMethod::Zero;
  ImputeOptions options;
  std::uint64_t rng_seed = 0;
  int p = 0;
  Eigen::VectorXd column_means;  // observed-cell means (fallback for all paths)
  double y_mean = 0.0;

  std::map<std::pair<int, std::uint64_t>, CondModel> cond_models;
  std::vector<PmmColumn> pmm_columns;  // in visit order (ascending missingness)

  // In-sample completions: the final state of the chained run for PmmMice,
  // the deterministic row-wise completion otherwise.
  CompletedData training_completions;

  int completions_per_record() const {
    return method == ImputeMethod::PmmMice ? options.m : 1;
  }
};

ImputationEngine fit_engine(const Dataset& ds, ImputeMethod method,
                            const ImputeOptions& options, std::uint64_t seed);

// Imputes a single partially observed record with the frozen engine.
// Observed entries pass through unchanged. `used_fallback` (optional) reports
// whether any cell had to fall back to an unconditional mean because the
// engine had no model for the record's pattern.
CompletedData impute_record(const ImputationEngine& engine,
                            const Eigen::VectorXd& values,
                            std::uint64_t mask_bits, Rng& rng,
                            bool* used_fallback = nullptr);

// Row-wise frozen imputation of a whole dataset (records treated one by one,
// with per-row substreams derived from the engine seed).
CompletedData impute_dataset(const ImputationEngine& engine, const Dataset& ds);

// Re-runs the full chained PMM with the new record appended to the training
// data (the response of the new record is treated as missing when the chain
// includes y). Returns the m completions of the new record only.
CompletedData refit_mi_with_record(const Dataset& train,
                                   const Eigen::VectorXd& values,
                                   std::uint64_t mask_bits,
                                   const ImputeOptions& options,
                                   std::uint64_t seed);

// Mean over all n records of the squared gap between the true value and the
// across-completion mean imputation; observed cells contribute zero.
double imputation_error(const Eigen::VectorXd& true_col,
                        const CompletedData& completed, int column,
                        const std::vector<std::uint8_t>& mask_col);

}  // namespace patternkit
