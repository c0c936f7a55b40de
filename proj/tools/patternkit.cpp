#include <CLI11.hpp>

#include <cstdint>
#include <string>

#include "patternkit/commands.hpp"
#include "patternkit/serialize.hpp"

int main(int argc, char** argv) {
  CLI::App app{"patternkit: prediction with missing covariates "
               "(pattern submodels, imputation engines, simulation harness)"};
  app.set_version_flag("--version", patternkit::kToolkitVersion);
  app.require_subcommand(1);

  patternkit::SimulateArgs sim;
  auto* simulate = app.add_subcommand(
      "simulate", "Run the Monte Carlo comparison or the EPE-curve experiment");
  simulate->add_option("--config", sim.config_path, "JSON run configuration")
      ->required();
  int reps = 0;
  std::uint64_t seed = 0;
  auto* reps_opt = simulate->add_option("--reps", reps, "Override replicate count");
  auto* seed_opt = simulate->add_option("--seed", seed, "Override master seed");
  simulate->add_option("--out", sim.out_dir, "Output directory")->required();

  patternkit::FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a prediction model");
  fit_cmd->add_option("--train", fit.train_csv, "Training CSV")->required();
  fit_cmd->add_option("--response", fit.response, "Response column name")
      ->required();
  fit_cmd
      ->add_option("--method", fit.method,
                   "pmks | ccs | complete-case | mi | mimi")
      ->required();
  fit_cmd->add_option("--config", fit.config_path, "Optional JSON options");
  fit_cmd->add_option("--model-out", fit.model_out, "Model JSON output path")
      ->required();
  fit_cmd->add_option("--na-token", fit.na_token, "Missing-cell token");

  patternkit::PredictArgs predict;
  auto* predict_cmd =
      app.add_subcommand("predict", "Predict partially observed records");
  predict_cmd->add_option("--model", predict.model_path, "Model JSON")
      ->required();
  predict_cmd->add_option("--input", predict.input_csv, "Input CSV with gaps")
      ->required();
  predict_cmd->add_option("--out", predict.out_csv, "Predictions CSV")
      ->required();
  predict_cmd->add_option("--seed", predict.seed, "Seed for stochastic engines");
  predict_cmd->add_option("--na-token", predict.na_token, "Missing-cell token");

  patternkit::EvaluateArgs evaluate;
  auto* eval_cmd = app.add_subcommand(
      "evaluate", "Pattern-stratified k-fold cross-validation");
  eval_cmd->add_option("--data", evaluate.data_csv, "Dataset CSV")->required();
  eval_cmd->add_option("--response", evaluate.response, "Response column name")
      ->required();
  eval_cmd
      ->add_option("--method", evaluate.method,
                   "pmks | ccs | complete-case | mi | mimi")
      ->required();
  eval_cmd->add_option("--folds", evaluate.folds, "Fold count (default 10)");
  std::uint64_t eval_seed = 0;
  auto* eval_seed_opt =
      eval_cmd->add_option("--seed", eval_seed, "Master seed")->required();
  eval_cmd->add_option("--out", evaluate.out_csv, "Report CSV")->required();
  eval_cmd->add_option("--config", evaluate.config_path, "Optional JSON options");
  eval_cmd->add_option("--na-token", evaluate.na_token, "Missing-cell token");

  CLI11_PARSE(app, argc, argv);

  if (simulate->parsed()) {
    if (*reps_opt) sim.reps = reps;
    if (*seed_opt) sim.seed = seed;
    return patternkit::cmd_simulate(sim);
  }
  if (fit_cmd->parsed()) return patternkit::cmd_fit(fit);
  if (predict_cmd->parsed()) return patternkit::cmd_predict(predict);
  if (eval_cmd->parsed()) {
    if (*eval_seed_opt) evaluate.seed = eval_seed;
    return patternkit::cmd_evaluate(evaluate);
  }
  return patternkit::kExitConfig;
}
