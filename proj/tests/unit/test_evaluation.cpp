#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "patternkit/evaluation.hpp"

using namespace patternkit;
using testutil::kNA;

TEST_CASE("pattern_losses splits and reweights exactly") {
  SUBCASE("perfect predictions give zeros") {
    const auto ds = testutil::make_dataset({{1, 2}, {kNA, 3}, {4, 5}}, {1, 2, 3});
    const PatternIndex index = partition(ds);
    Eigen::VectorXd preds(3), truth(3);
    preds << 1, 2, 3;
    truth << 1, 2, 3;
    const auto report = pattern_losses(preds, truth, index);
    CHECK(report.weighted_total == 0.0);
    for (const auto& [id, cell] : report.per_pattern) CHECK(cell.mse == 0.0);
  }
  SUBCASE("weighted total from sizes 1 and 3 with mses 4 and 0") {
    const auto ds = testutil::make_dataset(
        {{kNA, 1.0}, {1, 1}, {2, 2}, {3, 3}}, {0, 0, 0, 0});
    const PatternIndex index = partition(ds);
    Eigen::VectorXd truth = Eigen::VectorXd::Zero(4);
    Eigen::VectorXd preds(4);
    preds << 2.0, 0.0, 0.0, 0.0;  // row 0 alone in its pattern, error^2 = 4
    const auto report = pattern_losses(preds, truth, index);
    CHECK(report.weighted_total == doctest::Approx(1.0));
  }
  SUBCASE("weighted total equals the plain overall mse") {
    Rng rng(3);
    const auto sample = testutil::sample_two_col(500, 0.5, 0.4, 33);
    const Dataset ds = testutil::to_dataset(sample);
    Eigen::VectorXd preds(500), truth(500);
    for (int i = 0; i < 500; ++i) {
      preds(i) = rng.normal();
      truth(i) = rng.normal();
    }
    const auto report = pattern_losses(preds, truth, partition(ds));
    const double direct = (preds - truth).squaredNorm() / 500.0;
    CHECK(std::abs(report.weighted_total - direct) < 1e-10);
  }
  SUBCASE("empty input is an error") {
    Eigen::VectorXd none(0);
    CHECK_THROWS(pattern_losses(none, none, PatternIndex{}));
  }
}

TEST_CASE("epe_large follows sigma2 (1 + leverage)") {
  SUBCASE("intercept-only design") {
    Eigen::MatrixXd design = Eigen::MatrixXd::Ones(10, 1);
    Eigen::VectorXd y(10);
    Rng rng(4);
    for (int i = 0; i < 10; ++i) y(i) = rng.normal();
    LinearFit fit = fit_design(design, y);
    fit.sigma2 = 1.0;
    Eigen::VectorXd point = Eigen::VectorXd::Ones(1);
    CHECK(epe_large(fit, point) == doctest::Approx(1.0 + 0.1));
  }
  SUBCASE("never below the irreducible error; matches the hat oracle") {
    Rng rng(5);
    const int n = 20;
    Eigen::MatrixXd design(n, 3);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < n; ++i) {
      design(i, 0) = 1.0;
      design(i, 1) = rng.normal();
      design(i, 2) = rng.normal();
      rows.push_back({design(i, 0), design(i, 1), design(i, 2)});
    }
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = rng.normal();
    const LinearFit fit = fit_design(design, y);
    REQUIRE(fit.sigma2.has_value());
    for (int i = 0; i < n; ++i) {
      const double h = testutil::hat_value(
          rows, {design(i, 0), design(i, 1), design(i, 2)});
      const double value = epe_large(fit, design.row(i).transpose());
      CHECK(value >= *fit.sigma2);
      CHECK(value == doctest::Approx(*fit.sigma2 * (1.0 + h)).epsilon(1e-8));
    }
  }
  SUBCASE("undefined sigma2 is an error") {
    Eigen::MatrixXd design(2, 2);
    design << 1, 0, 1, 1;
    Eigen::VectorXd y(2);
    y << 1, 2;
    const LinearFit fit = fit_design(design, y);
    CHECK_THROWS(epe_large(fit, Eigen::Vector2d(1.0, 0.5)));
  }
}

TEST_CASE("epe_small separates bias and fitting variance") {
  Rng rng(6);
  const int n = 40;
  Eigen::MatrixXd design(n, 2);
  for (int i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = 3.0 + rng.normal();
  }

  SUBCASE("matched truth has zero bias") {
    // beta2 = 0 and the small line equal to the true line
    Eigen::VectorXd mean = design * Eigen::Vector2d(1.0, 3.0);
    LinearFit small = fit_design(design, mean);
    const Eigen::Vector3d beta(1.0, 3.0, 0.0);
    const double x1 = 2.0;
    const double value = epe_small(small, beta, 1.0, x1, 9.9);
    const Eigen::Vector2d d(1.0, x1);
    const double quad = d.dot(small.gram_inverse * d);
    CHECK(value == doctest::Approx(1.0 + 1.0 * quad).epsilon(1e-10));
  }
  SUBCASE("bias grows quadratically as x2 leaves its conditional mean") {
    Eigen::VectorXd mean = design * Eigen::Vector2d(4.0, 3.5);  // some small line
    LinearFit small = fit_design(design, mean);
    const Eigen::Vector3d beta(1.0, 3.0, 1.0);
    const double x1 = 3.0;
    // small mean at x1:
    const double small_mean = 4.0 + 3.5 * x1;
    const double x2_star = small_mean - beta(0) - beta(1) * x1;  // zero-bias x2
    const double base = epe_small(small, beta, 1.0, x1, x2_star);
    for (double step : {0.5, 1.0, 2.0}) {
      const double up = epe_small(small, beta, 1.0, x1, x2_star + step);
      const double down = epe_small(small, beta, 1.0, x1, x2_star - step);
      CHECK(up - base == doctest::Approx(step * step).epsilon(1e-8));
      CHECK(down - base == doctest::Approx(step * step).epsilon(1e-8));
    }
  }
  SUBCASE("matches a brute-force refit oracle") {
    // fixed training design; redraw noise, refit the small model, and score a
    // fresh observation at (x1, x2)
    const Eigen::Vector3d beta(1.0, 3.0, 1.0);
    const double sigma = 1.0;
    Eigen::MatrixXd full(n, 3);
    for (int i = 0; i < n; ++i) {
      full(i, 0) = 1.0;
      full(i, 1) = design(i, 1);
      full(i, 2) = 3.0 + 0.5 * (design(i, 1) - 3.0) + std::sqrt(0.75) * rng.normal();
    }
    const Eigen::VectorXd true_mean = full * beta;
    LinearFit small = fit_design(design, true_mean);  // population projection
    const Eigen::MatrixXd projector = small.gram_inverse * design.transpose();

    const double x1 = 4.2, x2 = 2.7;
    const double analytic = epe_small(small, beta, sigma * sigma, x1, x2);

    Rng mc(77);
    const int draws = 20000;
    double sum = 0.0, sum_sq = 0.0;
    Eigen::VectorXd eps(n);
    for (int d = 0; d < draws; ++d) {
      for (int i = 0; i < n; ++i) eps(i) = sigma * mc.normal();
      const Eigen::Vector2d gamma_hat = small.coefficients + projector * eps;
      const double y_new =
          beta(0) + beta(1) * x1 + beta(2) * x2 + sigma * mc.normal();
      const double err = y_new - (gamma_hat(0) + gamma_hat(1) * x1);
      sum += err * err;
      sum_sq += err * err * err * err;
    }
    const double mean = sum / draws;
    const double se =
        std::sqrt((sum_sq / draws - mean * mean) / static_cast<double>(draws));
    CHECK(std::abs(mean - analytic) < 3.0 * se);
  }
}

TEST_CASE("epe_pmks is the convex combination") {
  CHECK(epe_pmks(1.0, 2.0, 0.0) == 1.0);
  CHECK(epe_pmks(1.0, 2.0, 1.0) == 2.0);
  CHECK(epe_pmks(1.0, 2.0, 0.5) == doctest::Approx(1.5));
  // exactly affine in p
  const double a = epe_pmks(3.0, 7.0, 0.25);
  const double b = epe_pmks(3.0, 7.0, 0.75);
  CHECK(epe_pmks(3.0, 7.0, 0.5) == doctest::Approx(0.5 * (a + b)).epsilon(1e-15));
  CHECK_THROWS(epe_pmks(1.0, 2.0, 1.5));
}

TEST_CASE("kfold_cv is stratified, deterministic, and exact on noiseless data") {
  SUBCASE("noiseless linear data scores zero") {
    Rng rng(8);
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 80; ++i) {
      const double a = rng.normal(), b = rng.normal();
      if (i % 4 == 0) {
        rows.push_back({kNA, b});
        y.push_back(2.0 + 2.0 * b);  // pattern-specific exact line
      } else {
        rows.push_back({a, b});
        y.push_back(1.0 + a + 2.0 * b);
      }
    }
    const Dataset ds = testutil::make_dataset(rows, y);
    MethodConfig method;
    method.method = "pmks";
    const auto report = kfold_cv(ds, method, 5, 42);
    CHECK(report.weighted_total <= 1e-10);
  }
  SUBCASE("k = n reduces to leave-one-out") {
    const auto sample = testutil::sample_two_col(20, 0.5, 0.0, 61);
    const Dataset ds = testutil::to_dataset(sample);
    MethodConfig method;
    method.method = "pmks";
    const auto report = kfold_cv(ds, method, 20, 7);

    double sse = 0.0;
    for (int i = 0; i < 20; ++i) {
      std::vector<int> keep;
      for (int r = 0; r < 20; ++r)
        if (r != i) keep.push_back(r);
      const Dataset train = ds.subset(keep);
      const auto model = fit_pmks(train);
      Rng rng(0);
      const double pred =
          model->predict(ds.row_values(i), ds.row_bits(i), rng).value;
      sse += (pred - ds.y()(i)) * (pred - ds.y()(i));
    }
    CHECK(report.weighted_total == doctest::Approx(sse / 20.0).epsilon(1e-10));
  }
  SUBCASE("same seed, same report") {
    const auto sample = testutil::sample_two_col(120, 0.5, 0.4, 91);
    const Dataset ds = testutil::to_dataset(sample);
    MethodConfig method;
    method.method = "ccs";
    const auto a = kfold_cv(ds, method, 4, 17);
    const auto b = kfold_cv(ds, method, 4, 17);
    CHECK(a.weighted_total == b.weighted_total);
    REQUIRE(a.per_pattern.size() == b.per_pattern.size());
    for (const auto& [id, cell] : a.per_pattern) {
      CHECK(b.per_pattern.at(id).count == cell.count);
      CHECK(b.per_pattern.at(id).mse == cell.mse);
    }
  }
  SUBCASE("bad fold counts are rejected") {
    const auto sample = testutil::sample_two_col(30, 0.5, 0.3, 5);
    const Dataset ds = testutil::to_dataset(sample);
    MethodConfig method;
    method.method = "pmks";
    CHECK_THROWS(kfold_cv(ds, method, 1, 1));
    CHECK_THROWS(kfold_cv(ds, method, 31, 1));
  }
}

TEST_CASE("run_simulation sanity and determinism") {
  SimConfig config;
  config.gen = reference_gen_config();
  config.gen.n = 400;
  config.gen.noise_sd = 0.0;
  config.n_out = 200;
  config.reps = 1;
  config.seed = 99;
  config.calibration_rows = 20000;
  ScenarioSetting scenario;
  scenario.mechanism.kind = MechanismKind::Mcar;
  scenario.mechanism.target_prob = 0.5;
  scenario.formulation = Formulation::Selection;
  config.scenarios.push_back(scenario);
  MethodConfig pmks;
  pmks.method = "pmks";
  config.methods.push_back(pmks);

  SUBCASE("noiseless MCAR data is predicted exactly") {
    // the masked covariate must not drive y, otherwise the missing pattern
    // keeps irreducible error even without noise
    config.gen.beta = Eigen::Vector3d(1.0, 0.0, 1.0);
    const SimReport report = run_simulation(config);
    const auto* row = report.find("MCAR", "pmks", "total");
    REQUIRE(row != nullptr);
    CHECK(row->mean_pe <= 1e-6);
    CHECK(report.failed_replicates == 0);
  }
  SUBCASE("identical master seeds reproduce every number") {
    SimConfig noisy = config;
    noisy.gen.noise_sd = 1.0;
    noisy.reps = 3;
    EngineSetting engine;
    engine.label = "cond_mean";
    engine.method = ImputeMethod::CondMean;
    noisy.error_engines.push_back(engine);
    const SimReport a = run_simulation(noisy);
    const SimReport b = run_simulation(noisy);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      CHECK(a.rows[i].mean_pe == b.rows[i].mean_pe);
      CHECK(a.rows[i].mc_se == b.rows[i].mc_se);
    }
    REQUIRE(a.imputation.size() == 1);
    CHECK(a.imputation[0].mean_error == b.imputation[0].mean_error);
  }
  SUBCASE("pattern mixture formulation rejects Y-dependent mechanisms") {
    SimConfig bad = config;
    bad.scenarios[0].mechanism.kind = MechanismKind::MnarY;
    bad.scenarios[0].formulation = Formulation::PatternMixture;
    CHECK_THROWS(run_simulation(bad));
  }
}

TEST_CASE("figure1 table keeps pmks between the large and small curves") {
  Fig1Config cfg;
  cfg.grid = {1.5, 3.0, 4.5};
  cfg.n_train = 150;
  cfg.mc_draws = 4000;
  cfg.seed = 12;
  const auto table = figure1_experiment(cfg);
  REQUIRE(table.size() == 3);
  for (const auto& row : table) {
    const double lo = std::min(row.epe_l, row.epe_s);
    const double hi = std::max(row.epe_l, row.epe_s);
    CHECK(row.epe_pmks >= lo);
    CHECK(row.epe_pmks <= hi);
    CHECK(row.epe_pmks ==
          doctest::Approx(0.5 * row.epe_l + 0.5 * row.epe_s).epsilon(1e-12));
    CHECK(std::abs(row.mc_estimate - row.epe_pmks) < 3.0 * row.mc_se);
  }
}
