#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "patternkit/dataset.hpp"
#include "patternkit/imputation.hpp"
#include "patternkit/linear_fit.hpp"
#include "patternkit/rng.hpp"

namespace patternkit {

class ModelIo;  // serialization access

struct Submodel {
  DesignSpec spec;
  LinearFit fit;
  int pattern_rows = 0;  // rows of the keyed pattern itself
};

// How a prediction was produced, for audit output.
enum class PredictRoute {
  Direct,            // submodel keyed by the record's own pattern
  StoredCcsFallback, // sparse pattern, CCS submodel stored at fit time
  OnDemandCcs,       // unseen pattern, CCS fit from retained training data
  WidestSubpattern,  // unseen pattern, sealed model: widest usable submodel
  Imputed            // imputation-based predictor (complete-case / MI / MIMI)
};

std::string route_name(PredictRoute route);

struct PredictOutcome {
  double value = 0.0;
  std::uint64_t pattern_bits = 0;
  PredictRoute route = PredictRoute::Direct;
  bool engine_fallback = false;  // imputation fell back to column means
};

// Uniform predict-a-partial-record contract over all five strategies.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string method_name() const = 0;
  virtual PredictOutcome predict(const Eigen::VectorXd& values,
                                 std::uint64_t mask_bits, Rng& rng) const = 0;
};

double predict_one(const Predictor& model, const Eigen::VectorXd& values,
                   const std::vector<std::uint8_t>& mask_row, Rng& rng);

// CCS submodel for `pattern`: fit on every row whose observed columns cover
// the pattern's observed set, over exactly those columns.
Submodel fit_ccs_submodel(const Dataset& ds, const PatternId& pattern);

// Common routing for the submodel-per-pattern predictors.
class SubmodelPredictor : public Predictor {
 public:
  PredictOutcome predict(const Eigen::VectorXd& values,
                         std::uint64_t mask_bits, Rng& rng) const override;

  const std::map<std::uint64_t, Submodel>& submodels() const {
    return submodels_;
  }
  const Dataset* training_data() const { return training_.get(); }
  int n_covariates() const { return p_; }
  const std::vector<std::string>& col_names() const { return col_names_; }

  // Drops retained training data; unseen patterns then use the widest stored
  // sub-pattern instead of an on-demand CCS fit.
  void seal() { training_.reset(); }

 protected:
  friend class ModelIo;
  virtual PredictRoute direct_route(std::uint64_t bits) const {
    (void)bits;
    return PredictRoute::Direct;
  }

  int p_ = 0;
  std::vector<std::string> col_names_;
  std::map<std::uint64_t, Submodel> submodels_;
  std::shared_ptr<const Dataset> training_;

 private:
  mutable std::mutex on_demand_mutex_;
  mutable std::map<std::uint64_t, Submodel> on_demand_;
};

class PmksModel final : public SubmodelPredictor {
 public:
  std::string method_name() const override { return "pmks"; }
  const std::set<std::uint64_t>& fallback_ids() const { return fallback_ids_; }
  std::optional<int> min_pattern_size() const { return min_pattern_size_; }

 protected:
  PredictRoute direct_route(std::uint64_t bits) const override {
    return fallback_ids_.count(bits) ? PredictRoute::StoredCcsFallback
                                     : PredictRoute::Direct;
  }

 private:
  friend class ModelIo;
  friend std::unique_ptr<PmksModel> fit_pmks(const Dataset&,
                                             std::optional<int>, bool);
  std::set<std::uint64_t> fallback_ids_;
  std::optional<int> min_pattern_size_;
};

class CcsModel final : public SubmodelPredictor {
 public:
  std::string method_name() const override { return "ccs"; }

 private:
  friend class ModelIo;
  friend std::unique_ptr<CcsModel> fit_ccs(const Dataset&, bool);
};

// Pattern-specific fits; sparse patterns (group size <= threshold, default
// 2*(p_obs+1)) fall back to the CCS submodel.
std::unique_ptr<PmksModel> fit_pmks(const Dataset& ds,
                                    std::optional<int> min_pattern_size = {},
                                    bool retain_training = true);

std::unique_ptr<CcsModel> fit_ccs(const Dataset& ds,
                                  bool retain_training = true);

class CompleteCaseModel final : public Predictor {
 public:
  std::string method_name() const override { return "complete-case"; }
  PredictOutcome predict(const Eigen::VectorXd& values,
                         std::uint64_t mask_bits, Rng& rng) const override;

  const Submodel& model() const { return model_; }
  const ImputationEngine& engine() const { return *engine_; }
  const std::vector<std::string>& col_names() const { return col_names_; }

 private:
  friend class ModelIo;
  friend std::unique_ptr<CompleteCaseModel> fit_complete_case(
      const Dataset&, std::shared_ptr<const ImputationEngine>);
  Submodel model_;
  std::shared_ptr<const ImputationEngine> engine_;
  std::vector<std::string> col_names_;
};

std::unique_ptr<CompleteCaseModel> fit_complete_case(
    const Dataset& ds, std::shared_ptr<const ImputationEngine> engine);

// One full-design fit per completion; predictions averaged across completions.
class MiModel final : public Predictor {
 public:
  std::string method_name() const override { return "mi"; }
  PredictOutcome predict(const Eigen::VectorXd& values,
                         std::uint64_t mask_bits, Rng& rng) const override;

  const DesignSpec& spec() const { return spec_; }
  const std::vector<LinearFit>& fits() const { return fits_; }
  const ImputationEngine& engine() const { return *engine_; }
  bool refit_mode() const { return refit_mode_; }
  const std::vector<std::string>& col_names() const { return col_names_; }

 private:
  friend class ModelIo;
  friend std::unique_ptr<MiModel> fit_mi(const Dataset&,
                                         std::shared_ptr<const ImputationEngine>,
                                         std::optional<int>, bool);
  DesignSpec spec_;
  std::vector<LinearFit> fits_;
  std::shared_ptr<const ImputationEngine> engine_;
  std::shared_ptr<const Dataset> training_;  // kept only for refit mode
  bool refit_mode_ = false;
  std::vector<std::string> col_names_;
};

std::unique_ptr<MiModel> fit_mi(const Dataset& ds,
                                std::shared_ptr<const ImputationEngine> engine,
                                std::optional<int> m = {},
                                bool refit_mode = false);

// MI with missingness indicators and covariate-by-indicator interactions in
// the mean model. Indicator terms exist only for columns with observed
// training missingness.
class MimiModel final : public Predictor {
 public:
  std::string method_name() const override { return "mimi"; }
  PredictOutcome predict(const Eigen::VectorXd& values,
                         std::uint64_t mask_bits, Rng& rng) const override;

  const DesignSpec& spec() const { return spec_; }
  const std::vector<LinearFit>& fits() const { return fits_; }
  const ImputationEngine& engine() const { return *engine_; }
  const std::vector<std::string>& col_names() const { return col_names_; }

 private:
  friend class ModelIo;
  friend std::unique_ptr<MimiModel> fit_mimi(
      const Dataset&, std::shared_ptr<const ImputationEngine>,
      std::optional<int>, bool);
  DesignSpec spec_;
  std::vector<LinearFit> fits_;
  std::shared_ptr<const ImputationEngine> engine_;
  std::vector<std::string> col_names_;
};

std::unique_ptr<MimiModel> fit_mimi(
    const Dataset& ds, std::shared_ptr<const ImputationEngine> engine,
    std::optional<int> m = {}, bool own_interactions_only = false);

// Descriptive pooling of the auxiliary (delta) terms: across-completion mean
// and spread. No formal inference.
struct DeltaReport {
  struct Row {
    std::string label;
    double mean = 0.0;
    double sd = 0.0;
  };
  std::vector<Row> rows;
};

DeltaReport delta_report(const MimiModel& model);

// One-stop configuration for fitting any of the five strategies.
struct MethodConfig {
  std::string method = "pmks";  // pmks | ccs | complete-case | mi | mimi
  std::optional<int> min_pattern_size;
  std::optional<ImputeMethod> engine;  // default: cond_mean for complete-case,
                                       // pmm for mi/mimi
  ImputeOptions impute;
  bool mimi_own_interactions_only = false;
  bool refit_mode = false;
  bool retain_training = true;
};

ImputeMethod default_engine_for(const std::string& method);

std::unique_ptr<Predictor> fit_predictor(const Dataset& train,
                                         const MethodConfig& config,
                                         std::uint64_t seed);

}  // namespace patternkit
