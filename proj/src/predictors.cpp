#include "patternkit/predictors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace patternkit {

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x,
                            const std::vector<int>& rows) {
  Eigen::MatrixXd out(rows.size(), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out(static_cast<Eigen::Index>(r)) = v(rows[r]);
  return out;
}

DesignSpec observed_spec(const PatternId& pattern) {
  DesignSpec spec;
  spec.intercept = true;
  spec.columns = observed_columns(pattern);
  return spec;
}

}  // namespace

std::string route_name(PredictRoute route) {
  switch (route) {
    case PredictRoute::Direct: return "direct";
    case PredictRoute::StoredCcsFallback: return "ccs_fallback";
    case PredictRoute::OnDemandCcs: return "on_demand_ccs";
    case PredictRoute::WidestSubpattern: return "widest_subpattern";
    case PredictRoute::Imputed: return "imputed";
  }
  return "unknown";
}

double predict_one(const Predictor& model, const Eigen::VectorXd& values,
                   const std::vector<std::uint8_t>& mask_row, Rng& rng) {
  return model.predict(values, pattern_of(mask_row).bits, rng).value;
}

Submodel fit_ccs_submodel(const Dataset& ds, const PatternId& pattern) {
  std::vector<int> eligible;
  for (int i = 0; i < ds.n_rows(); ++i) {
    // usable iff the row observes every column the pattern observes
    if ((ds.row_bits(i) & ~pattern.bits) == 0) eligible.push_back(i);
  }
  if (eligible.empty())
    throw std::runtime_error("fit_ccs_submodel: no training row covers pattern " +
                             pattern.to_string());
  Submodel sub;
  sub.spec = observed_spec(pattern);
  sub.fit = fit_least_squares(gather_rows(ds.x_raw(), eligible),
                              gather(ds.y(), eligible), sub.spec);
  return sub;
}

PredictOutcome SubmodelPredictor::predict(const Eigen::VectorXd& values,
                                          std::uint64_t mask_bits,
                                          Rng& rng) const {
  (void)rng;
  PredictOutcome out;
  out.pattern_bits = mask_bits;

  auto it = submodels_.find(mask_bits);
  if (it != submodels_.end()) {
    out.route = direct_route(mask_bits);
    out.value = predict_linear(it->second.fit, values, 0, it->second.spec);
    return out;
  }

  // Unseen pattern. Prefer an on-demand CCS fit from retained training data;
  // a sealed model uses the widest stored sub-pattern instead.
  if (training_) {
    std::lock_guard<std::mutex> lock(on_demand_mutex_);
    auto cached = on_demand_.find(mask_bits);
    if (cached == on_demand_.end()) {
      PatternId pattern;
      pattern.bits = mask_bits;
      pattern.width = p_;
      try {
        cached = on_demand_.emplace(mask_bits,
                                    fit_ccs_submodel(*training_, pattern)).first;
      } catch (const std::runtime_error&) {
        cached = on_demand_.end();  // fall through to widest sub-pattern
      }
    }
    if (cached != on_demand_.end()) {
      out.route = PredictRoute::OnDemandCcs;
      out.value =
          predict_linear(cached->second.fit, values, 0, cached->second.spec);
      return out;
    }
  }

  // widest usable sub-pattern: observes a subset of what this record observes
  const Submodel* best = nullptr;
  int best_missing = 65;
  for (const auto& [bits, sub] : submodels_) {
    if ((mask_bits & bits) != mask_bits) continue;  // needs a column we lack
    const int missing = std::popcount(bits);
    if (missing < best_missing) {
      best_missing = missing;
      best = &sub;
    }
  }
  if (!best)
    throw std::runtime_error(
        "predict: no usable submodel for pattern and no fallback path");
  out.route = PredictRoute::WidestSubpattern;
  out.value = predict_linear(best->fit, values, 0, best->spec);
  return out;
}

std::unique_ptr<PmksModel> fit_pmks(const Dataset& ds,
                                    std::optional<int> min_pattern_size,
                                    bool retain_training) {
  if (ds.n_rows() < 1) throw std::invalid_argument("fit_pmks: empty dataset");
  auto model = std::unique_ptr<PmksModel>(new PmksModel());
  model->p_ = ds.n_cols();
  model->col_names_ = ds.col_names();
  model->min_pattern_size_ = min_pattern_size;
  if (retain_training) model->training_ = std::make_shared<Dataset>(ds);

  const PatternIndex index = partition(ds);
  for (const auto& [pattern, rows] : index.groups) {
    const int p_obs = static_cast<int>(observed_columns(pattern).size());
    const int threshold = min_pattern_size.value_or(2 * (p_obs + 1));
    if (static_cast<int>(rows.size()) > threshold) {
      Submodel sub;
      sub.spec = observed_spec(pattern);
      sub.fit = fit_least_squares(gather_rows(ds.x_raw(), rows),
                                  gather(ds.y(), rows), sub.spec);
      sub.pattern_rows = static_cast<int>(rows.size());
      model->submodels_.emplace(pattern.bits, std::move(sub));
    } else {
      Submodel sub = fit_ccs_submodel(ds, pattern);
      sub.pattern_rows = static_cast<int>(rows.size());
      model->submodels_.emplace(pattern.bits, std::move(sub));
      model->fallback_ids_.insert(pattern.bits);
    }
  }
  return model;
}

std::unique_ptr<CcsModel> fit_ccs(const Dataset& ds, bool retain_training) {
  if (ds.n_rows() < 1) throw std::invalid_argument("fit_ccs: empty dataset");
  auto model = std::unique_ptr<CcsModel>(new CcsModel());
  model->p_ = ds.n_cols();
  model->col_names_ = ds.col_names();
  if (retain_training) model->training_ = std::make_shared<Dataset>(ds);

  const PatternIndex index = partition(ds);
  for (const auto& [pattern, rows] : index.groups) {
    Submodel sub = fit_ccs_submodel(ds, pattern);
    sub.pattern_rows = static_cast<int>(rows.size());
    model->submodels_.emplace(pattern.bits, std::move(sub));
  }
  return model;
}

std::unique_ptr<CompleteCaseModel> fit_complete_case(
    const Dataset& ds, std::shared_ptr<const ImputationEngine> engine) {
  if (!engine) throw std::invalid_argument("fit_complete_case: null engine");
  std::vector<int> complete;
  for (int i = 0; i < ds.n_rows(); ++i)
    if (ds.row_bits(i) == 0) complete.push_back(i);
  if (static_cast<int>(complete.size()) < ds.n_cols() + 2)
    throw std::invalid_argument(
        "fit_complete_case: need at least p+2 fully observed rows, have " +
        std::to_string(complete.size()));

  auto model = std::unique_ptr<CompleteCaseModel>(new CompleteCaseModel());
  PatternId all_observed;
  all_observed.width = ds.n_cols();
  model->model_.spec = observed_spec(all_observed);
  model->model_.fit =
      fit_least_squares(gather_rows(ds.x_raw(), complete),
                        gather(ds.y(), complete), model->model_.spec);
  model->model_.pattern_rows = static_cast<int>(complete.size());
  model->engine_ = std::move(engine);
  model->col_names_ = ds.col_names();
  return model;
}

PredictOutcome CompleteCaseModel::predict(const Eigen::VectorXd& values,
                                          std::uint64_t mask_bits,
                                          Rng& rng) const {
  PredictOutcome out;
  out.pattern_bits = mask_bits;
  out.route = mask_bits == 0 ? PredictRoute::Direct : PredictRoute::Imputed;
  const CompletedData completed =
      impute_record(*engine_, values, mask_bits, rng, &out.engine_fallback);
  double sum = 0.0;
  for (const auto& completion : completed.completions)
    sum += predict_linear(model_.fit, completion, 0, model_.spec);
  out.value = sum / completed.m();
  return out;
}

std::unique_ptr<MiModel> fit_mi(const Dataset& ds,
                                std::shared_ptr<const ImputationEngine> engine,
                                std::optional<int> m, bool refit_mode) {
  if (!engine) throw std::invalid_argument("fit_mi: null engine");
  const CompletedData& completed = engine->training_completions;
  const int use_m = m.value_or(completed.m());
  if (use_m < 1 || use_m > completed.m())
    throw std::invalid_argument("fit_mi: m exceeds engine completions");

  auto model = std::unique_ptr<MiModel>(new MiModel());
  model->spec_.intercept = true;
  for (int j = 0; j < ds.n_cols(); ++j) model->spec_.columns.push_back(j);
  for (int c = 0; c < use_m; ++c)
    model->fits_.push_back(fit_least_squares(
        completed.completions[static_cast<std::size_t>(c)], ds.y(),
        model->spec_));
  model->engine_ = std::move(engine);
  model->refit_mode_ = refit_mode;
  model->col_names_ = ds.col_names();
  if (refit_mode) model->training_ = std::make_shared<Dataset>(ds);
  return model;
}

PredictOutcome MiModel::predict(const Eigen::VectorXd& values,
                                std::uint64_t mask_bits, Rng& rng) const {
  PredictOutcome out;
  out.pattern_bits = mask_bits;
  out.route = mask_bits == 0 ? PredictRoute::Direct : PredictRoute::Imputed;

  CompletedData completed;
  if (refit_mode_ && mask_bits != 0) {
    completed = refit_mi_with_record(*training_, values, mask_bits,
                                     engine_->options, rng.next_u64());
  } else {
    completed =
        impute_record(*engine_, values, mask_bits, rng, &out.engine_fallback);
  }
  if (completed.m() < static_cast<int>(fits_.size()))
    throw std::runtime_error("MiModel::predict: completion count mismatch");
  double sum = 0.0;
  for (std::size_t c = 0; c < fits_.size(); ++c)
    sum += predict_linear(fits_[c], completed.completions[c], 0, spec_);
  out.value = sum / static_cast<double>(fits_.size());
  return out;
}

std::unique_ptr<MimiModel> fit_mimi(
    const Dataset& ds, std::shared_ptr<const ImputationEngine> engine,
    std::optional<int> m, bool own_interactions_only) {
  if (!engine) throw std::invalid_argument("fit_mimi: null engine");
  const CompletedData& completed = engine->training_completions;
  const int use_m = m.value_or(completed.m());
  if (use_m < 1 || use_m > completed.m())
    throw std::invalid_argument("fit_mimi: m exceeds engine completions");

  auto model = std::unique_ptr<MimiModel>(new MimiModel());
  DesignSpec& spec = model->spec_;
  spec.intercept = true;
  for (int j = 0; j < ds.n_cols(); ++j) spec.columns.push_back(j);
  for (int k = 0; k < ds.n_cols(); ++k) {
    bool seen_missing = false;
    for (int i = 0; i < ds.n_rows() && !seen_missing; ++i)
      seen_missing = ds.is_missing(i, k);
    if (seen_missing) spec.indicator_columns.push_back(k);
  }
  for (int k : spec.indicator_columns) {
    if (own_interactions_only) {
      spec.interactions.emplace_back(k, k);
    } else {
      for (int j = 0; j < ds.n_cols(); ++j) spec.interactions.emplace_back(j, k);
    }
  }

  std::vector<std::uint64_t> row_bits(static_cast<std::size_t>(ds.n_rows()));
  for (int i = 0; i < ds.n_rows(); ++i)
    row_bits[static_cast<std::size_t>(i)] = ds.row_bits(i);
  for (int c = 0; c < use_m; ++c)
    model->fits_.push_back(fit_least_squares(
        completed.completions[static_cast<std::size_t>(c)], ds.y(), spec,
        row_bits));
  model->engine_ = std::move(engine);
  model->col_names_ = ds.col_names();
  return model;
}

PredictOutcome MimiModel::predict(const Eigen::VectorXd& values,
                                  std::uint64_t mask_bits, Rng& rng) const {
  PredictOutcome out;
  out.pattern_bits = mask_bits;
  out.route = mask_bits == 0 ? PredictRoute::Direct : PredictRoute::Imputed;
  const CompletedData completed =
      impute_record(*engine_, values, mask_bits, rng, &out.engine_fallback);
  if (completed.m() < static_cast<int>(fits_.size()))
    throw std::runtime_error("MimiModel::predict: completion count mismatch");
  double sum = 0.0;
  for (std::size_t c = 0; c < fits_.size(); ++c)
    sum += predict_linear(fits_[c], completed.completions[c], mask_bits, spec_);
  out.value = sum / static_cast<double>(fits_.size());
  return out;
}

DeltaReport delta_report(const MimiModel& model) {
  DeltaReport report;
  const DesignSpec& spec = model.spec();
  const int offset =
      (spec.intercept ? 1 : 0) + static_cast<int>(spec.columns.size());
  const int delta_terms = static_cast<int>(spec.indicator_columns.size()) +
                          static_cast<int>(spec.interactions.size());
  const auto labels = spec.term_labels(std::vector<std::string>{});
  const double m = static_cast<double>(model.fits().size());
  for (int t = 0; t < delta_terms; ++t) {
    DeltaReport::Row row;
    row.label = labels[static_cast<std::size_t>(offset + t)];
    double mean = 0.0;
    for (const auto& fit : model.fits()) mean += fit.coefficients(offset + t);
    mean /= m;
    double ss = 0.0;
    for (const auto& fit : model.fits()) {
      const double d = fit.coefficients(offset + t) - mean;
      ss += d * d;
    }
    row.mean = mean;
    row.sd = m > 1 ? std::sqrt(ss / (m - 1)) : 0.0;
    report.rows.push_back(std::move(row));
  }
  return report;
}

ImputeMethod default_engine_for(const std::string& method) {
  if (method == "complete-case") return ImputeMethod::CondMean;
  return ImputeMethod::PmmMice;
}

std::unique_ptr<Predictor> fit_predictor(const Dataset& train,
                                         const MethodConfig& config,
                                         std::uint64_t seed) {
  if (config.method == "pmks")
    return fit_pmks(train, config.min_pattern_size, config.retain_training);
  if (config.method == "ccs") return fit_ccs(train, config.retain_training);

  const ImputeMethod engine_method =
      config.engine.value_or(default_engine_for(config.method));
  auto engine = std::make_shared<ImputationEngine>(
      fit_engine(train, engine_method, config.impute, seed));
  if (config.method == "complete-case")
    return fit_complete_case(train, std::move(engine));
  if (config.method == "mi")
    return fit_mi(train, std::move(engine), {}, config.refit_mode);
  if (config.method == "mimi")
    return fit_mimi(train, std::move(engine), {},
                    config.mimi_own_interactions_only);
  throw std::invalid_argument("fit_predictor: unknown method \"" +
                              config.method + "\"");
}

}  // namespace patternkit
