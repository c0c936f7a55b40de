#include "patternkit/imputation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace patternkit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kRowStream = 0xD5;
constexpr std::uint64_t kChainStream = 0xC4;

Eigen::VectorXd observed_column_means(const Dataset& ds, bool require_all) {
  Eigen::VectorXd means(ds.n_cols());
  for (int j = 0; j < ds.n_cols(); ++j) {
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < ds.n_rows(); ++i) {
      if (!ds.is_missing(i, j)) {
        sum += ds.value(i, j);
        ++count;
      }
    }
    if (count == 0) {
      if (require_all)
        throw std::invalid_argument("fit_engine: column " +
                                    ds.col_names()[static_cast<std::size_t>(j)] +
                                    " has no observed values");
      means(j) = 0.0;
    } else {
      means(j) = sum / count;
    }
  }
  return means;
}

// ---- chained predictive-mean-matching machinery ----

struct ChainVariable {
  int augmented_index = 0;  // position in the working matrix
  int column = 0;           // covariate index or kResponseColumn
  int missing_count = 0;
  std::vector<int> obs_rows;
  std::vector<int> mis_rows;
};

struct ChainResult {
  std::vector<Eigen::MatrixXd> x_completions;  // n x p
  std::vector<ImputationEngine::PmmColumn> states;
};

DesignSpec chain_spec(int augmented_width, int skip_index) {
  DesignSpec spec;
  spec.intercept = true;
  for (int v = 0; v < augmented_width; ++v)
    if (v != skip_index) spec.columns.push_back(v);
  return spec;
}

Eigen::MatrixXd chain_design(const Eigen::MatrixXd& work,
                             const std::vector<int>& rows, int skip_index) {
  Eigen::MatrixXd design(rows.size(), work.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    design(static_cast<Eigen::Index>(r), 0) = 1.0;
    int t = 1;
    for (int v = 0; v < work.cols(); ++v)
      if (v != skip_index)
        design(static_cast<Eigen::Index>(r), t++) = work(rows[r], v);
  }
  return design;
}

// k nearest donors by predicted mean; donors sorted ascending by .first
std::pair<std::size_t, std::size_t> nearest_window(
    const std::vector<std::pair<double, double>>& donors, double target,
    int k) {
  const std::size_t n = donors.size();
  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(k), n);
  auto it = std::lower_bound(
      donors.begin(), donors.end(), target,
      [](const std::pair<double, double>& d, double t) { return d.first < t; });
  std::size_t hi = static_cast<std::size_t>(it - donors.begin());
  std::size_t lo = hi;
  while (hi - lo < want) {
    if (lo == 0) {
      ++hi;
    } else if (hi == n) {
      --lo;
    } else if (target - donors[lo - 1].first <= donors[hi].first - target) {
      --lo;
    } else {
      ++hi;
    }
  }
  return {lo, hi};
}

double pmm_draw(const std::vector<std::pair<double, double>>& donors,
                double target, int k, Rng& rng) {
  auto [lo, hi] = nearest_window(donors, target, k);
  const std::size_t pick = lo + rng.uniform_int(hi - lo);
  return donors[pick].second;
}

Eigen::VectorXd stable_draw(const LinearFit& fit, Rng& rng) {
  // posterior draw when the residual variance is estimable, plain
  // coefficients otherwise (exact-fit or saturated designs)
  if (!fit.sigma2) return fit.coefficients;
  return draw_posterior_coefficients(fit, rng);
}

ChainResult run_pmm_chain(const Eigen::MatrixXd& x, const MaskMatrix& mask,
                          const Eigen::VectorXd& y,
                          const std::vector<std::uint8_t>& y_missing,
                          const Eigen::VectorXd& column_means, double y_mean,
                          const ImputeOptions& opts, std::uint64_t seed) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  const int width = p + (opts.include_y ? 1 : 0);

  std::vector<ChainVariable> variables;
  for (int j = 0; j < p; ++j) {
    ChainVariable v;
    v.augmented_index = j;
    v.column = j;
    for (int i = 0; i < n; ++i)
      (mask(i, j) ? v.mis_rows : v.obs_rows).push_back(i);
    v.missing_count = static_cast<int>(v.mis_rows.size());
    if (v.missing_count > 0) variables.push_back(std::move(v));
  }
  if (opts.include_y) {
    ChainVariable v;
    v.augmented_index = p;
    v.column = ImputationEngine::kResponseColumn;
    for (int i = 0; i < n; ++i)
      ((i < static_cast<int>(y_missing.size()) && y_missing[i]) ? v.mis_rows
                                                                : v.obs_rows)
          .push_back(i);
    v.missing_count = static_cast<int>(v.mis_rows.size());
    variables.push_back(std::move(v));
  }
  // least missing data first
  std::stable_sort(variables.begin(), variables.end(),
                   [](const ChainVariable& a, const ChainVariable& b) {
                     if (a.missing_count != b.missing_count)
                       return a.missing_count < b.missing_count;
                     return a.augmented_index < b.augmented_index;
                   });

  for (const auto& v : variables) {
    if (static_cast<int>(v.obs_rows.size()) < opts.k_donors)
      throw std::invalid_argument(
          "fit_engine: fewer than k_donors observed values for variable " +
          std::to_string(v.column));
  }
  if (opts.m < 2 && !variables.empty())
    throw std::invalid_argument("fit_engine: PmmMice requires m >= 2");

  ChainResult result;
  result.states.reserve(variables.size());
  for (const auto& v : variables) {
    ImputationEngine::PmmColumn state;
    state.column = v.column;
    state.spec = chain_spec(width, v.augmented_index);
    result.states.push_back(std::move(state));
  }

  for (int c = 0; c < opts.m; ++c) {
    Rng rng(Rng::mix(seed, kChainStream, static_cast<std::uint64_t>(c)));
    Eigen::MatrixXd work(n, width);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j)
        work(i, j) = mask(i, j) ? column_means(j) : x(i, j);
    if (opts.include_y)
      for (int i = 0; i < n; ++i)
        work(i, p) = (i < static_cast<int>(y_missing.size()) && y_missing[i])
                         ? y_mean
                         : y(i);

    for (int cycle = 0; cycle < opts.cycles; ++cycle) {
      for (const auto& v : variables) {
        if (v.mis_rows.empty()) continue;
        const Eigen::MatrixXd design = chain_design(work, v.obs_rows, v.augmented_index);
        Eigen::VectorXd target(v.obs_rows.size());
        for (std::size_t r = 0; r < v.obs_rows.size(); ++r)
          target(static_cast<Eigen::Index>(r)) = work(v.obs_rows[r], v.augmented_index);
        const LinearFit fit = fit_design(design, target);
        const Eigen::VectorXd beta_dot = stable_draw(fit, rng);

        std::vector<std::pair<double, double>> donors(v.obs_rows.size());
        for (std::size_t r = 0; r < v.obs_rows.size(); ++r)
          donors[r] = {design.row(static_cast<Eigen::Index>(r)).dot(fit.coefficients),
                       target(static_cast<Eigen::Index>(r))};
        std::sort(donors.begin(), donors.end());

        const Eigen::MatrixXd mis_design = chain_design(work, v.mis_rows, v.augmented_index);
        for (std::size_t r = 0; r < v.mis_rows.size(); ++r) {
          const double pred = mis_design.row(static_cast<Eigen::Index>(r)).dot(beta_dot);
          work(v.mis_rows[r], v.augmented_index) =
              pmm_draw(donors, pred, opts.k_donors, rng);
        }
      }
    }

    // freeze pass: final per-variable fits and donor pools on the settled data
    for (std::size_t s = 0; s < variables.size(); ++s) {
      const auto& v = variables[s];
      const Eigen::MatrixXd design = chain_design(work, v.obs_rows, v.augmented_index);
      Eigen::VectorXd target(v.obs_rows.size());
      for (std::size_t r = 0; r < v.obs_rows.size(); ++r)
        target(static_cast<Eigen::Index>(r)) = work(v.obs_rows[r], v.augmented_index);
      const LinearFit fit = fit_design(design, target);
      std::vector<std::pair<double, double>> donors(v.obs_rows.size());
      for (std::size_t r = 0; r < v.obs_rows.size(); ++r)
        donors[r] = {design.row(static_cast<Eigen::Index>(r)).dot(fit.coefficients),
                     target(static_cast<Eigen::Index>(r))};
      std::sort(donors.begin(), donors.end());
      result.states[s].fits.push_back(fit);
      result.states[s].donors.push_back(std::move(donors));
    }
    result.x_completions.push_back(work.leftCols(p));
  }
  return result;
}

}  // namespace

std::string impute_method_name(ImputeMethod m) {
  switch (m) {
    case ImputeMethod::Zero: return "zero";
    case ImputeMethod::UncondMean: return "uncond_mean";
    case ImputeMethod::CondMean: return "cond_mean";
    case ImputeMethod::CondMeanBayes: return "cond_mean_bayes";
    case ImputeMethod::PmmMice: return "pmm";
  }
  return "unknown";
}

ImputeMethod impute_method_from_name(const std::string& name) {
  if (name == "zero") return ImputeMethod::Zero;
  if (name == "uncond_mean") return ImputeMethod::UncondMean;
  if (name == "cond_mean") return ImputeMethod::CondMean;
  if (name == "cond_mean_bayes") return ImputeMethod::CondMeanBayes;
  if (name == "pmm") return ImputeMethod::PmmMice;
  throw std::invalid_argument("unknown imputation method \"" + name + "\"");
}

ImputationEngine fit_engine(const Dataset& ds, ImputeMethod method,
                            const ImputeOptions& options, std::uint64_t seed) {
  ImputationEngine engine;
  engine.method = method;
  engine.options = options;
  engine.rng_seed = seed;
  engine.p = ds.n_cols();
  engine.column_means =
      observed_column_means(ds, /*require_all=*/method != ImputeMethod::Zero);
  engine.y_mean = ds.n_rows() > 0 ? ds.y().mean() : 0.0;

  if (method == ImputeMethod::CondMean || method == ImputeMethod::CondMeanBayes) {
    const PatternIndex patterns = partition(ds);
    for (const auto& [pattern, rows] : patterns.groups) {
      if (pattern.fully_observed()) continue;
      const std::vector<int> observed = observed_columns(pattern);
      for (int target : missing_columns(pattern)) {
        std::vector<int> usable;
        for (int i = 0; i < ds.n_rows(); ++i) {
          if (ds.is_missing(i, target)) continue;
          bool ok = true;
          for (int j : observed)
            if (ds.is_missing(i, j)) { ok = false; break; }
          if (ok) usable.push_back(i);
        }
        if (static_cast<int>(usable.size()) < 2)
          throw std::invalid_argument(
              "fit_engine: fewer than 2 usable rows for conditional model of "
              "column " + std::to_string(target) + " in pattern " +
              pattern.to_string());
        ImputationEngine::CondModel model;
        model.spec.intercept = true;
        model.spec.columns = observed;
        Eigen::MatrixXd rows_x(usable.size(), ds.n_cols());
        Eigen::VectorXd rows_y(usable.size());
        for (std::size_t r = 0; r < usable.size(); ++r) {
          rows_x.row(static_cast<Eigen::Index>(r)) = ds.x_raw().row(usable[r]);
          rows_y(static_cast<Eigen::Index>(r)) = ds.value(usable[r], target);
        }
        model.fit = fit_least_squares(rows_x, rows_y, model.spec);
        engine.cond_models.emplace(std::make_pair(target, pattern.bits),
                                   std::move(model));
      }
    }
  }

  if (method == ImputeMethod::PmmMice) {
    std::vector<std::uint8_t> y_missing(static_cast<std::size_t>(ds.n_rows()), 0);
    ChainResult chain =
        run_pmm_chain(ds.x_raw(), ds.mask(), ds.y(), y_missing,
                      engine.column_means, engine.y_mean, options, seed);
    engine.pmm_columns = std::move(chain.states);
    engine.training_completions.completions = std::move(chain.x_completions);
  } else {
    engine.training_completions = impute_dataset(engine, ds);
  }
  return engine;
}

CompletedData impute_record(const ImputationEngine& engine,
                            const Eigen::VectorXd& values,
                            std::uint64_t mask_bits, Rng& rng,
                            bool* used_fallback) {
  if (values.size() != engine.p)
    throw std::invalid_argument("impute_record: record width mismatch");
  if (used_fallback) *used_fallback = false;
  const int p = engine.p;
  const int m = engine.completions_per_record();
  CompletedData out;
  out.completions.reserve(static_cast<std::size_t>(m));

  if (mask_bits == 0) {
    for (int c = 0; c < m; ++c) out.completions.push_back(values);
    return out;
  }

  auto base_record = [&]() {
    Eigen::VectorXd rec = values;
    for (int j = 0; j < p; ++j)
      if ((mask_bits >> j) & 1u) rec(j) = kNaN;
    return rec;
  };

  switch (engine.method) {
    case ImputeMethod::Zero: {
      Eigen::VectorXd rec = base_record();
      for (int j = 0; j < p; ++j)
        if ((mask_bits >> j) & 1u) rec(j) = 0.0;
      out.completions.push_back(std::move(rec));
      break;
    }
    case ImputeMethod::UncondMean: {
      Eigen::VectorXd rec = base_record();
      for (int j = 0; j < p; ++j)
        if ((mask_bits >> j) & 1u) rec(j) = engine.column_means(j);
      out.completions.push_back(std::move(rec));
      break;
    }
    case ImputeMethod::CondMean:
    case ImputeMethod::CondMeanBayes: {
      Eigen::VectorXd rec = base_record();
      for (int j = 0; j < p; ++j) {
        if (!((mask_bits >> j) & 1u)) continue;
        auto it = engine.cond_models.find({j, mask_bits});
        if (it == engine.cond_models.end()) {
          rec(j) = engine.column_means(j);
          if (used_fallback) *used_fallback = true;
          continue;
        }
        const auto& model = it->second;
        if (engine.method == ImputeMethod::CondMean) {
          rec(j) = predict_linear(model.fit, values, 0, model.spec);
        } else {
          const Eigen::VectorXd beta = stable_draw(model.fit, rng);
          rec(j) = model.spec.expand(values, 0).dot(beta);
        }
      }
      out.completions.push_back(std::move(rec));
      break;
    }
    case ImputeMethod::PmmMice: {
      const int width = p + (engine.options.include_y ? 1 : 0);
      for (int c = 0; c < m; ++c) {
        Eigen::VectorXd work(width);
        for (int j = 0; j < p; ++j)
          work(j) = ((mask_bits >> j) & 1u) ? engine.column_means(j) : values(j);
        if (engine.options.include_y) work(p) = engine.y_mean;

        std::uint64_t remaining = mask_bits;
        for (int cycle = 0; cycle < engine.options.cycles; ++cycle) {
          for (const auto& state : engine.pmm_columns) {
            const bool is_y = state.column == ImputationEngine::kResponseColumn;
            if (!is_y && !((mask_bits >> state.column) & 1u)) continue;
            const std::size_t ci = static_cast<std::size_t>(c);
            const double pred =
                state.spec.expand(work, 0).dot(state.fits[ci].coefficients);
            work(is_y ? p : state.column) = pmm_draw(
                state.donors[ci], pred, engine.options.k_donors, rng);
            if (!is_y) remaining &= ~(1ULL << state.column);
          }
        }
        if (remaining && used_fallback) *used_fallback = true;  // mean-filled
        out.completions.push_back(work.head(p));
      }
      break;
    }
  }
  return out;
}

CompletedData impute_dataset(const ImputationEngine& engine, const Dataset& ds) {
  if (ds.n_cols() != engine.p)
    throw std::invalid_argument("impute_dataset: column count mismatch");
  const int m = engine.completions_per_record();
  CompletedData out;
  for (int c = 0; c < m; ++c)
    out.completions.emplace_back(ds.n_rows(), ds.n_cols());
  for (int i = 0; i < ds.n_rows(); ++i) {
    Rng rng(Rng::mix(engine.rng_seed, kRowStream, static_cast<std::uint64_t>(i)));
    const CompletedData rec =
        impute_record(engine, ds.row_values(i), ds.row_bits(i), rng);
    for (int c = 0; c < m; ++c)
      out.completions[static_cast<std::size_t>(c)].row(i) =
          rec.completions[static_cast<std::size_t>(c)].transpose();
  }
  return out;
}

CompletedData refit_mi_with_record(const Dataset& train,
                                   const Eigen::VectorXd& values,
                                   std::uint64_t mask_bits,
                                   const ImputeOptions& options,
                                   std::uint64_t seed) {
  const int n = train.n_rows();
  const int p = train.n_cols();
  if (values.size() != p)
    throw std::invalid_argument("refit_mi_with_record: record width mismatch");

  Eigen::MatrixXd x(n + 1, p);
  MaskMatrix mask(n + 1, p);
  Eigen::VectorXd y(n + 1);
  x.topRows(n) = train.x_raw();
  mask.topRows(n) = train.mask();
  y.head(n) = train.y();
  for (int j = 0; j < p; ++j) {
    const bool miss = (mask_bits >> j) & 1u;
    mask(n, j) = miss ? 1 : 0;
    x(n, j) = miss ? kNaN : values(j);
  }
  y(n) = train.y().mean();  // placeholder; flagged missing below when y chains

  Eigen::VectorXd column_means(p);
  for (int j = 0; j < p; ++j) {
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < n + 1; ++i)
      if (!mask(i, j)) { sum += x(i, j); ++count; }
    if (count == 0)
      throw std::invalid_argument("refit_mi_with_record: column " +
                                  std::to_string(j) + " has no observed values");
    column_means(j) = sum / count;
  }

  std::vector<std::uint8_t> y_missing(static_cast<std::size_t>(n + 1), 0);
  if (options.include_y) y_missing[static_cast<std::size_t>(n)] = 1;
  const double y_mean = train.y().mean();

  ChainResult chain = run_pmm_chain(x, mask, y, y_missing, column_means,
                                    y_mean, options, seed);
  CompletedData out;
  for (const auto& completion : chain.x_completions)
    out.completions.push_back(completion.row(n).transpose());
  return out;
}

double imputation_error(const Eigen::VectorXd& true_col,
                        const CompletedData& completed, int column,
                        const std::vector<std::uint8_t>& mask_col) {
  const int n = static_cast<int>(true_col.size());
  if (static_cast<int>(mask_col.size()) != n)
    throw std::invalid_argument("imputation_error: mask length mismatch");
  if (completed.m() == 0)
    throw std::invalid_argument("imputation_error: no completions");
  for (const auto& mat : completed.completions)
    if (mat.rows() != n || column < 0 || column >= mat.cols())
      throw std::invalid_argument("imputation_error: shape mismatch");
  if (n == 0) return 0.0;

  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!mask_col[static_cast<std::size_t>(i)]) continue;
    double mean = 0.0;
    for (const auto& mat : completed.completions) mean += mat(i, column);
    mean /= completed.m();
    const double diff = true_col(i) - mean;
    total += diff * diff;
  }
  return total / n;
}

}  // namespace patternkit
