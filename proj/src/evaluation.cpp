#include "patternkit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "patternkit/parallel.hpp"

namespace patternkit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  int count = 0;
};

MeanSe mean_se(const std::vector<double>& values) {
  MeanSe out;
  out.count = static_cast<int>(values.size());
  if (out.count == 0) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / out.count;
  if (out.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.se = std::sqrt(ss / (out.count - 1)) / std::sqrt(double(out.count));
  }
  return out;
}

std::string pattern_scope(const PatternId& id) {
  return "pattern-" + id.to_string();
}

}  // namespace

PatternLossReport pattern_losses(const Eigen::VectorXd& preds,
                                 const Eigen::VectorXd& truth,
                                 const PatternIndex& patterns) {
  if (preds.size() != truth.size())
    throw std::invalid_argument("pattern_losses: length mismatch");
  if (preds.size() == 0)
    throw std::invalid_argument("pattern_losses: empty input");

  PatternLossReport report;
  int total_rows = 0;
  for (const auto& [id, rows] : patterns.groups) {
    PatternLossReport::Cell cell;
    cell.count = static_cast<int>(rows.size());
    double sse = 0.0;
    for (int i : rows) {
      const double d = preds(i) - truth(i);
      sse += d * d;
    }
    cell.mse = cell.count ? sse / cell.count : 0.0;
    total_rows += cell.count;
    report.per_pattern.emplace(id, cell);
  }
  if (total_rows != static_cast<int>(preds.size()))
    throw std::invalid_argument("pattern_losses: patterns do not cover input");
  // fixed pattern order keeps the floating-point reduction reproducible
  double total = 0.0;
  for (const auto& [id, cell] : report.per_pattern)
    total += (static_cast<double>(cell.count) / total_rows) * cell.mse;
  report.weighted_total = total;
  return report;
}

double epe_large(const LinearFit& fit, const Eigen::VectorXd& design_row) {
  if (!fit.sigma2) throw std::invalid_argument("epe_large: undefined sigma2");
  if (design_row.size() != fit.gram_inverse.rows())
    throw std::invalid_argument("epe_large: design row length mismatch");
  const double leverage = design_row.dot(fit.gram_inverse * design_row);
  return *fit.sigma2 * (1.0 + leverage);
}

double epe_small(const LinearFit& small_fit, const Eigen::VectorXd& true_beta,
                 double sigma2_true, double x1, double x2) {
  if (true_beta.size() != 3)
    throw std::invalid_argument("epe_small: true beta must have 3 entries");
  if (small_fit.coefficients.size() != 2)
    throw std::invalid_argument("epe_small: small fit must have 2 terms");
  Eigen::Vector2d d(1.0, x1);
  const double small_mean = d.dot(small_fit.coefficients);
  const double true_mean = true_beta(0) + true_beta(1) * x1 + true_beta(2) * x2;
  const double bias = small_mean - true_mean;
  const double variance = sigma2_true * d.dot(small_fit.gram_inverse * d);
  return sigma2_true + bias * bias + variance;
}

double epe_pmks(double epe_l, double epe_s, double p_missing) {
  if (!(p_missing >= 0.0 && p_missing <= 1.0))
    throw std::invalid_argument("epe_pmks: p_missing outside [0, 1]");
  return (1.0 - p_missing) * epe_l + p_missing * epe_s;
}

PatternLossReport kfold_cv(const Dataset& ds, const MethodConfig& method,
                           int k, std::uint64_t seed) {
  const int n = ds.n_rows();
  if (k < 2) throw std::invalid_argument("kfold_cv: k must be >= 2");
  if (k > n) throw std::invalid_argument("kfold_cv: k exceeds row count");

  // Pattern-stratified assignment via one global fold cursor: rows of each
  // pattern land round-robin on consecutive folds, and k == n degenerates to
  // leave-one-out.
  std::vector<int> fold(static_cast<std::size_t>(n), 0);
  const PatternIndex index = partition(ds);
  int cursor = 0;
  for (const auto& [id, rows] : index.groups) {
    std::vector<int> shuffled = rows;
    Rng rng(Rng::mix(seed, 0xF01D, id.bits));
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[rng.uniform_int(i)]);
    for (int row : shuffled) fold[static_cast<std::size_t>(row)] = cursor++ % k;
  }

  struct FoldAccum {
    std::map<std::uint64_t, std::pair<int, double>> sse;  // bits -> count, sse
  };
  std::vector<FoldAccum> accums(static_cast<std::size_t>(k));

  parallel_for(k, [&](int f) {
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < n; ++i)
      (fold[static_cast<std::size_t>(i)] == f ? test_rows : train_rows)
          .push_back(i);
    if (test_rows.empty()) return;
    const Dataset train = ds.subset(train_rows);
    const auto predictor = fit_predictor(
        train, method, Rng::mix(seed, 0xF17, static_cast<std::uint64_t>(f)));
    auto& accum = accums[static_cast<std::size_t>(f)];
    for (int i : test_rows) {
      Rng rng(Rng::mix(seed, 0x94ED, static_cast<std::uint64_t>(i)));
      const PredictOutcome outcome =
          predictor->predict(ds.row_values(i), ds.row_bits(i), rng);
      const double d = outcome.value - ds.y()(i);
      auto& cell = accum.sse[ds.row_bits(i)];
      cell.first += 1;
      cell.second += d * d;
    }
  });

  std::map<std::uint64_t, std::pair<int, double>> pooled;
  for (const auto& accum : accums)
    for (const auto& [bits, cell] : accum.sse) {
      pooled[bits].first += cell.first;
      pooled[bits].second += cell.second;
    }

  PatternLossReport report;
  report.method_label = method.method;
  report.replicate_seed = seed;
  double total = 0.0;
  for (const auto& [bits, cell] : pooled) {
    PatternId id;
    id.bits = bits;
    id.width = ds.n_cols();
    PatternLossReport::Cell out;
    out.count = cell.first;
    out.mse = cell.second / cell.first;
    total += (static_cast<double>(cell.first) / n) * out.mse;
    report.per_pattern.emplace(id, out);
  }
  report.weighted_total = total;
  return report;
}

const SimReport::Row* SimReport::find(const std::string& scenario,
                                      const std::string& method,
                                      const std::string& scope) const {
  for (const auto& row : rows)
    if (row.scenario == scenario && row.method == method && row.scope == scope)
      return &row;
  return nullptr;
}

const SimReport::ImputationRow* SimReport::find_imputation(
    const std::string& scenario, const std::string& engine) const {
  for (const auto& row : imputation)
    if (row.scenario == scenario && row.engine == engine) return &row;
  return nullptr;
}

namespace {

struct ReplicateOutcome {
  bool failed = false;
  std::string error;
  std::vector<double> method_total;
  std::vector<std::map<std::uint64_t, double>> method_pattern_mse;
  std::vector<double> engine_error;
};

struct GeneratedSet {
  Eigen::MatrixXd x;
  MaskMatrix mask;
  Eigen::VectorXd y;
  std::vector<std::uint8_t> mask_col;
};

GeneratedSet generate_set(const GenConfig& cfg, const MechanismSpec& mech,
                          Formulation formulation, Rng& rng) {
  GeneratedSet out;
  out.x = gen_predictors(cfg, rng);
  out.mask = MaskMatrix::Zero(cfg.n, cfg.p());
  if (formulation == Formulation::Selection) {
    out.y = gen_outcome_selection(out.x, cfg, rng);
    out.mask_col = gen_missingness(mech, out.x, &out.y, rng);
    for (int i = 0; i < cfg.n; ++i)
      out.mask(i, mech.target_column) = out.mask_col[static_cast<std::size_t>(i)];
  } else {
    if (mechanism_depends_on_y(mech.kind))
      throw std::invalid_argument(
          mechanism_name(mech.kind) +
          " can only be simulated in the selection formulation");
    out.mask_col = gen_missingness(mech, out.x, nullptr, rng);
    for (int i = 0; i < cfg.n; ++i)
      out.mask(i, mech.target_column) = out.mask_col[static_cast<std::size_t>(i)];
    out.y = gen_outcome_pattern_mixture(out.x, out.mask, cfg, rng);
  }
  return out;
}

std::vector<std::string> default_col_names(int p) {
  std::vector<std::string> names;
  for (int j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

}  // namespace

SimReport run_simulation(const SimConfig& config) {
  if (config.scenarios.empty())
    throw std::invalid_argument("run_simulation: no scenarios");
  if (config.reps < 1) throw std::invalid_argument("run_simulation: reps < 1");
  for (const auto& scenario : config.scenarios)
    if (scenario.formulation == Formulation::PatternMixture &&
        mechanism_depends_on_y(scenario.mechanism.kind))
      throw std::invalid_argument(
          "run_simulation: " + mechanism_name(scenario.mechanism.kind) +
          " requires the selection formulation");

  const std::vector<std::string> col_names = default_col_names(config.gen.p());
  SimReport report;

  for (std::size_t s = 0; s < config.scenarios.size(); ++s) {
    const ScenarioSetting& scenario = config.scenarios[s];
    const std::string label = scenario.label();
    std::vector<ReplicateOutcome> outcomes(
        static_cast<std::size_t>(config.reps));

    parallel_for(config.reps, [&](int r) {
      ReplicateOutcome& out = outcomes[static_cast<std::size_t>(r)];
      const std::uint64_t rep_seed =
          Rng::mix(Rng::mix(config.seed, 0x5CE0 + s), static_cast<std::uint64_t>(r));
      try {
        // nu0 calibrated on a dedicated large sample, seed-offset from the
        // replicate stream
        MechanismSpec mech = scenario.mechanism;
        {
          GenConfig cal_cfg = config.gen;
          cal_cfg.n = config.calibration_rows;
          Rng cal_rng(Rng::mix(rep_seed, 0xCA1B));
          const Eigen::MatrixXd x_cal = gen_predictors(cal_cfg, cal_rng);
          if (mechanism_depends_on_y(mech.kind)) {
            const Eigen::VectorXd y_cal =
                gen_outcome_selection(x_cal, cal_cfg, cal_rng);
            calibrate_nu0(mech, x_cal, &y_cal);
          } else {
            calibrate_nu0(mech, x_cal, nullptr);
          }
        }

        Rng train_rng(Rng::mix(rep_seed, 0x7E41));
        GenConfig train_cfg = config.gen;
        train_cfg.formulation = scenario.formulation;
        const GeneratedSet train_set =
            generate_set(train_cfg, mech, scenario.formulation, train_rng);
        const Dataset train(train_set.x, train_set.mask, train_set.y,
                            col_names);

        Rng oos_rng(Rng::mix(rep_seed, 0x00C5));
        GenConfig oos_cfg = train_cfg;
        oos_cfg.n = config.n_out;
        const GeneratedSet oos_set =
            generate_set(oos_cfg, mech, scenario.formulation, oos_rng);
        const Dataset oos(oos_set.x, oos_set.mask, oos_set.y, col_names);
        const PatternIndex oos_patterns = partition(oos);

        out.method_total.resize(config.methods.size(), kNaN);
        out.method_pattern_mse.resize(config.methods.size());
        for (std::size_t midx = 0; midx < config.methods.size(); ++midx) {
          const auto predictor =
              fit_predictor(train, config.methods[midx],
                            Rng::mix(rep_seed, 0xFE10 + midx));
          Eigen::VectorXd preds(oos.n_rows());
          for (int i = 0; i < oos.n_rows(); ++i) {
            Rng rng(Rng::mix(Rng::mix(rep_seed, 0x9E00 + midx),
                             static_cast<std::uint64_t>(i)));
            preds(i) =
                predictor->predict(oos.row_values(i), oos.row_bits(i), rng)
                    .value;
          }
          const PatternLossReport losses =
              pattern_losses(preds, oos.y(), oos_patterns);
          out.method_total[midx] = losses.weighted_total;
          for (const auto& [id, cell] : losses.per_pattern)
            out.method_pattern_mse[midx][id.bits] = cell.mse;
        }

        // out-of-sample records imputed one by one with frozen engines
        out.engine_error.resize(config.error_engines.size(), kNaN);
        for (std::size_t eidx = 0; eidx < config.error_engines.size(); ++eidx) {
          const EngineSetting& setting = config.error_engines[eidx];
          const ImputationEngine engine =
              fit_engine(train, setting.method, setting.options,
                         Rng::mix(rep_seed, 0xE600 + eidx));
          CompletedData completed;
          completed.completions.assign(
              static_cast<std::size_t>(engine.completions_per_record()),
              Eigen::MatrixXd(oos.n_rows(), oos.n_cols()));
          for (int i = 0; i < oos.n_rows(); ++i) {
            Rng rng(Rng::mix(Rng::mix(rep_seed, 0xE660 + eidx),
                             static_cast<std::uint64_t>(i)));
            const CompletedData rec =
                impute_record(engine, oos.row_values(i), oos.row_bits(i), rng);
            for (int c = 0; c < rec.m(); ++c)
              completed.completions[static_cast<std::size_t>(c)].row(i) =
                  rec.completions[static_cast<std::size_t>(c)].transpose();
          }
          Eigen::VectorXd true_col(oos.n_rows());
          for (int i = 0; i < oos.n_rows(); ++i)
            true_col(i) = oos_set.x(i, mech.target_column);
          out.engine_error[eidx] = imputation_error(
              true_col, completed, mech.target_column, oos_set.mask_col);
        }
      } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
      }
    });

    int failed = 0;
    for (const auto& out : outcomes)
      if (out.failed) ++failed;
    report.failed_replicates += failed;

    for (std::size_t midx = 0; midx < config.methods.size(); ++midx) {
      std::vector<double> totals;
      std::map<std::uint64_t, std::vector<double>> per_pattern;
      for (const auto& out : outcomes) {
        if (out.failed) continue;
        totals.push_back(out.method_total[midx]);
        for (const auto& [bits, mse] : out.method_pattern_mse[midx])
          per_pattern[bits].push_back(mse);
      }
      const MeanSe total_stats = mean_se(totals);
      report.rows.push_back({label, config.methods[midx].method, "total",
                             total_stats.mean, total_stats.se,
                             total_stats.count});
      for (const auto& [bits, values] : per_pattern) {
        PatternId id;
        id.bits = bits;
        id.width = config.gen.p();
        const MeanSe stats = mean_se(values);
        report.rows.push_back({label, config.methods[midx].method,
                               pattern_scope(id), stats.mean, stats.se,
                               stats.count});
      }
    }
    for (std::size_t eidx = 0; eidx < config.error_engines.size(); ++eidx) {
      std::vector<double> values;
      for (const auto& out : outcomes)
        if (!out.failed) values.push_back(out.engine_error[eidx]);
      const MeanSe stats = mean_se(values);
      report.imputation.push_back({label, config.error_engines[eidx].label,
                                   stats.mean, stats.se, stats.count});
    }
  }
  return report;
}

std::vector<Fig1Row> figure1_experiment(const Fig1Config& cfg) {
  if (cfg.grid.empty())
    throw std::invalid_argument("figure1_experiment: empty grid");

  GenConfig gen;
  gen.n = cfg.n_train;
  gen.mu = cfg.mu;
  gen.sigma = Eigen::Matrix2d{
      {cfg.sigma1 * cfg.sigma1, cfg.rho * cfg.sigma1 * cfg.sigma2},
      {cfg.rho * cfg.sigma1 * cfg.sigma2, cfg.sigma2 * cfg.sigma2}};
  gen.beta = cfg.beta;
  gen.noise_sd = cfg.noise_sd;

  Rng design_rng(Rng::mix(cfg.seed, 0xF161));
  const Eigen::MatrixXd x = gen_predictors(gen, design_rng);
  const int n = cfg.n_train;

  Eigen::MatrixXd design_l(n, 3), design_s(n, 2);
  for (int i = 0; i < n; ++i) {
    design_l(i, 0) = 1.0;
    design_l(i, 1) = x(i, 0);
    design_l(i, 2) = x(i, 1);
    design_s(i, 0) = 1.0;
    design_s(i, 1) = x(i, 0);
  }
  const Eigen::VectorXd true_means = design_l * cfg.beta;
  const double sigma2_true = cfg.noise_sd * cfg.noise_sd;

  // population fits: noiseless projections carry the limiting coefficients;
  // the generating residual variance drives the analytic curves
  LinearFit fit_l = fit_design(design_l, true_means);
  fit_l.sigma2 = sigma2_true;
  LinearFit fit_s = fit_design(design_s, true_means);
  fit_s.sigma2 = sigma2_true;

  // coefficient response to a fresh noise draw: beta_hat = beta_bar + P eps
  const Eigen::MatrixXd proj_l = fit_l.gram_inverse * design_l.transpose();
  const Eigen::MatrixXd proj_s = fit_s.gram_inverse * design_s.transpose();

  const double m2_slope = (cfg.sigma2 / cfg.sigma1) * cfg.rho;
  const double v2 = (1.0 - cfg.rho * cfg.rho) * cfg.sigma2 * cfg.sigma2;

  std::vector<Fig1Row> table(cfg.grid.size());
  parallel_for(static_cast<int>(cfg.grid.size()), [&](int g) {
    const double x1 = cfg.grid[static_cast<std::size_t>(g)];
    const double m2 = cfg.mu(1) + m2_slope * (x1 - cfg.mu(0));

    Fig1Row row;
    row.x1 = x1;
    // analytic curves, integrated over X2 | X1 = x1
    const Eigen::Vector3d d_mean(1.0, x1, m2);
    row.epe_l = epe_large(fit_l, d_mean) +
                sigma2_true * fit_l.gram_inverse(2, 2) * v2;
    row.epe_s = epe_small(fit_s, cfg.beta, sigma2_true, x1, m2) +
                cfg.beta(2) * cfg.beta(2) * v2;
    row.epe_pmks = epe_pmks(row.epe_l, row.epe_s, cfg.p_missing);

    // Monte Carlo: redraw training noise, refit both models, draw the
    // out-of-sample record and its pattern
    Rng rng(Rng::mix(cfg.seed, 0x9C70, static_cast<std::uint64_t>(g)));
    Eigen::VectorXd eps(n);
    double sum = 0.0, sum_sq = 0.0;
    for (int d = 0; d < cfg.mc_draws; ++d) {
      for (int i = 0; i < n; ++i) eps(i) = cfg.noise_sd * rng.normal();
      const Eigen::Vector3d beta_hat =
          fit_l.coefficients + proj_l * eps;
      const Eigen::Vector2d gamma_hat =
          fit_s.coefficients + proj_s * eps;
      const double x2 = cond_draw_x2_given_x1(x1, cfg.mu(0), cfg.mu(1),
                                              cfg.sigma1, cfg.sigma2, cfg.rho,
                                              rng);
      const double y =
          cfg.beta(0) + cfg.beta(1) * x1 + cfg.beta(2) * x2 +
          cfg.noise_sd * rng.normal();
      const bool missing = rng.uniform() < cfg.p_missing;
      const double pred = missing
                              ? gamma_hat(0) + gamma_hat(1) * x1
                              : beta_hat(0) + beta_hat(1) * x1 + beta_hat(2) * x2;
      const double err = (y - pred) * (y - pred);
      sum += err;
      sum_sq += err * err;
    }
    const double mean = sum / cfg.mc_draws;
    const double var = (sum_sq - cfg.mc_draws * mean * mean) / (cfg.mc_draws - 1);
    row.mc_estimate = mean;
    row.mc_se = std::sqrt(var / cfg.mc_draws);
    table[static_cast<std::size_t>(g)] = row;
  });
  return table;
}

}  // namespace patternkit
