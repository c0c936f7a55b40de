#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "patternkit/commands.hpp"
#include "patternkit/serialize.hpp"
#include "patternkit/synthetic.hpp"

using namespace patternkit;
using testutil::kNA;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "pk_cli_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string write_file(const std::string& name, const std::string& content) {
  const auto path = temp_dir() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

std::string four_pattern_csv(const std::string& name) {
  Rng rng(2023);
  std::ostringstream csv;
  csv << "x1,x2,y\n";
  for (int i = 0; i < 160; ++i) {
    const double a = 3.0 + rng.normal();
    const double b = 3.0 + 0.5 * (a - 3.0) + std::sqrt(0.75) * rng.normal();
    const double y = 1.0 + 3.0 * a + b + rng.normal();
    const int pattern = i % 4;
    const std::string x1 = (pattern == 1 || pattern == 3) ? "NA" : format_double(a);
    const std::string x2 = (pattern == 2 || pattern == 3) ? "NA" : format_double(b);
    csv << x1 << ',' << x2 << ',' << format_double(y) << '\n';
  }
  return write_file(name, csv.str());
}

}  // namespace

TEST_CASE("simulate rejects unknown config keys by name") {
  const std::string config = write_file(
      "bad_key.json", R"({"seed": 1, "repz": 10, "mechanisms": []})");
  SimulateArgs args;
  args.config_path = config;
  args.out_dir = (temp_dir() / "bad_key_out").string();
  CHECK(cmd_simulate(args) == kExitConfig);
}

TEST_CASE("simulate requires a master seed") {
  const std::string config = write_file(
      "no_seed.json", R"({"mechanisms": [{"kind": "MCAR"}]})");
  SimulateArgs args;
  args.config_path = config;
  args.out_dir = (temp_dir() / "no_seed_out").string();
  CHECK(cmd_simulate(args) == kExitConfig);
}

TEST_CASE("simulate writes byte-identical outputs for identical seeds") {
  const std::string config = write_file("sim_det.json", R"({
    "seed": 7,
    "reps": 2,
    "calibration_rows": 5000,
    "generator": {"n": 120, "n_out": 60},
    "mechanisms": [{"kind": "MCAR", "target_prob": 0.5}],
    "methods": ["pmks", "ccs"],
    "error_engines": ["cond_mean"]
  })");
  SimulateArgs args;
  args.config_path = config;
  args.out_dir = (temp_dir() / "sim_a").string();
  REQUIRE(cmd_simulate(args) == kExitOk);
  SimulateArgs again = args;
  again.out_dir = (temp_dir() / "sim_b").string();
  REQUIRE(cmd_simulate(again) == kExitOk);
  CHECK(slurp((temp_dir() / "sim_a" / "report.csv").string()) ==
        slurp((temp_dir() / "sim_b" / "report.csv").string()));
  CHECK(slurp((temp_dir() / "sim_a" / "imputation_error.csv").string()) ==
        slurp((temp_dir() / "sim_b" / "imputation_error.csv").string()));
  // metadata carries the config hash and seed
  const json meta =
      json::parse(slurp((temp_dir() / "sim_a" / "meta.json").string()));
  CHECK(meta.at("seed").get<int>() == 7);
  CHECK(meta.contains("config_hash"));
}

TEST_CASE("fit writes a model with one submodel per pattern") {
  const std::string train = four_pattern_csv("fit_train.csv");
  FitArgs args;
  args.train_csv = train;
  args.response = "y";
  args.method = "pmks";
  args.model_out = (temp_dir() / "pmks_model.json").string();
  REQUIRE(cmd_fit(args) == kExitOk);

  const json model = json::parse(slurp(args.model_out));
  CHECK(model.at("method") == "pmks");
  CHECK(model.at("submodels").size() == 4);
  CHECK(model.at("col_names") == json::array({"x1", "x2"}));
}

TEST_CASE("fit on complete data gives mimi no indicator terms") {
  Rng rng(5);
  std::ostringstream csv;
  csv << "a,b,y\n";
  for (int i = 0; i < 60; ++i) {
    const double a = rng.normal(), b = rng.normal();
    csv << format_double(a) << ',' << format_double(b) << ','
        << format_double(1 + a - b + 0.2 * rng.normal()) << '\n';
  }
  const std::string train = write_file("mimi_complete.csv", csv.str());
  FitArgs args;
  args.train_csv = train;
  args.response = "y";
  args.method = "mimi";
  args.model_out = (temp_dir() / "mimi_model.json").string();
  REQUIRE(cmd_fit(args) == kExitOk);
  const json model = json::parse(slurp(args.model_out));
  CHECK(model.at("spec").at("indicator_columns").empty());
  CHECK(model.at("spec").at("interactions").empty());
}

TEST_CASE("pmks with a forced full fallback matches ccs coefficients") {
  const std::string train = four_pattern_csv("fallback_train.csv");
  FitArgs pmks_args;
  pmks_args.train_csv = train;
  pmks_args.response = "y";
  pmks_args.method = "pmks";
  const std::string cfg =
      write_file("fallback_cfg.json", R"({"min_pattern_size": 100000})");
  pmks_args.config_path = cfg;
  pmks_args.model_out = (temp_dir() / "pmks_fb.json").string();
  REQUIRE(cmd_fit(pmks_args) == kExitOk);

  FitArgs ccs_args = pmks_args;
  ccs_args.method = "ccs";
  ccs_args.config_path.clear();
  ccs_args.model_out = (temp_dir() / "ccs_fb.json").string();
  REQUIRE(cmd_fit(ccs_args) == kExitOk);

  const json pmks_model = json::parse(slurp(pmks_args.model_out));
  const json ccs_model = json::parse(slurp(ccs_args.model_out));
  REQUIRE(pmks_model.at("fallback_ids").size() == 4);
  REQUIRE(pmks_model.at("submodels").size() == ccs_model.at("submodels").size());
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(pmks_model.at("submodels")[k].at("fit").at("coefficients") ==
          ccs_model.at("submodels")[k].at("fit").at("coefficients"));
}

TEST_CASE("predict serves gaps, routes by pattern, and is seed-deterministic") {
  const std::string train = four_pattern_csv("predict_train.csv");
  FitArgs fit_args;
  fit_args.train_csv = train;
  fit_args.response = "y";
  fit_args.method = "pmks";
  fit_args.model_out = (temp_dir() / "predict_model.json").string();
  REQUIRE(cmd_fit(fit_args) == kExitOk);

  const std::string input = write_file("predict_input.csv",
                                       "x1,x2\n"
                                       "3.25,2.5\n"
                                       "NA,3.1\n"
                                       "NA,NA\n");
  PredictArgs args;
  args.model_path = fit_args.model_out;
  args.input_csv = input;
  args.out_csv = (temp_dir() / "predictions.csv").string();
  args.seed = 11;
  REQUIRE(cmd_predict(args) == kExitOk);

  const std::string out = slurp(args.out_csv);
  std::istringstream lines(out);
  std::string header, row0, row1, row2;
  std::getline(lines, header);
  std::getline(lines, row0);
  std::getline(lines, row1);
  std::getline(lines, row2);
  CHECK(header == "row,pattern,route,engine_fallback,prediction,error");
  CHECK(row0.find("0,00,direct") == 0);
  CHECK(row1.find("1,10,direct") == 0);
  CHECK(row2.find("2,11,direct") == 0);

  // fully observed row equals the pattern-0 least-squares prediction
  const Dataset ds = load_csv(train, {.response = "y", .na_token = "NA"});
  const auto model = fit_pmks(ds);
  Rng rng(0);
  Eigen::VectorXd record(2);
  record << 3.25, 2.5;
  const double expected = model->predict(record, 0, rng).value;
  const double got = std::stod(row0.substr(row0.find("direct,") + 9));
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));

  PredictArgs rerun = args;
  rerun.out_csv = (temp_dir() / "predictions2.csv").string();
  REQUIRE(cmd_predict(rerun) == kExitOk);
  CHECK(slurp(args.out_csv) == slurp(rerun.out_csv));
}

TEST_CASE("predict reports column mismatches as config errors") {
  const std::string train = four_pattern_csv("mismatch_train.csv");
  FitArgs fit_args;
  fit_args.train_csv = train;
  fit_args.response = "y";
  fit_args.method = "pmks";
  fit_args.model_out = (temp_dir() / "mismatch_model.json").string();
  REQUIRE(cmd_fit(fit_args) == kExitOk);

  const std::string input = write_file("mismatch_input.csv", "x1,zz\n1,2\n");
  PredictArgs args;
  args.model_path = fit_args.model_out;
  args.input_csv = input;
  args.out_csv = (temp_dir() / "mismatch_out.csv").string();
  CHECK(cmd_predict(args) == kExitConfig);
}

TEST_CASE("sealed models mark unservable rows and exit nonzero") {
  // training covers only patterns 00 and 01 (x1 missing)
  Rng rng(31);
  std::ostringstream csv;
  csv << "x1,x2,y\n";
  for (int i = 0; i < 100; ++i) {
    const double a = 3 + rng.normal(), b = 3 + rng.normal();
    const double y = 1 + a + b + 0.1 * rng.normal();
    csv << ((i % 3 == 0) ? std::string("NA") : format_double(a)) << ','
        << format_double(b) << ',' << format_double(y) << '\n';
  }
  const std::string train = write_file("sealed_train.csv", csv.str());
  FitArgs fit_args;
  fit_args.train_csv = train;
  fit_args.response = "y";
  fit_args.method = "pmks";
  fit_args.config_path = write_file("sealed_cfg.json", R"({"sealed": true})");
  fit_args.model_out = (temp_dir() / "sealed_model.json").string();
  REQUIRE(cmd_fit(fit_args) == kExitOk);

  const std::string input =
      write_file("sealed_input.csv", "x1,x2\n2.5,NA\n3.0,3.0\n");
  PredictArgs args;
  args.model_path = fit_args.model_out;
  args.input_csv = input;
  args.out_csv = (temp_dir() / "sealed_out.csv").string();
  CHECK(cmd_predict(args) == kExitRuntime);
  const std::string out = slurp(args.out_csv);
  CHECK(out.find("no_submodel") != std::string::npos);
}

TEST_CASE("evaluate emits per-pattern rows plus the weighted total") {
  const SupportSynthOptions options{.n = 900, .seed = 3, .mnary_shift = false};
  const Dataset ds = make_support_synth(options);
  const std::string data = (temp_dir() / "synth_eval.csv").string();
  save_csv(ds, data, {.response = "sps", .na_token = "NA"});

  EvaluateArgs args;
  args.data_csv = data;
  args.response = "sps";
  args.method = "pmks";
  args.folds = 5;
  args.seed = 41;
  args.out_csv = (temp_dir() / "eval_report.csv").string();
  REQUIRE(cmd_evaluate(args) == kExitOk);

  const std::string out = slurp(args.out_csv);
  std::istringstream lines(out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "method,scope,count,mse");
  int pattern_rows = 0;
  bool total_seen = false;
  while (std::getline(lines, line)) {
    if (line.find(",pattern-") != std::string::npos) ++pattern_rows;
    if (line.find(",total,") != std::string::npos) total_seen = true;
  }
  CHECK(pattern_rows == 23);
  CHECK(total_seen);

  SUBCASE("same seed gives byte-identical output") {
    EvaluateArgs rerun = args;
    rerun.out_csv = (temp_dir() / "eval_report2.csv").string();
    REQUIRE(cmd_evaluate(rerun) == kExitOk);
    CHECK(slurp(args.out_csv) == slurp(rerun.out_csv));
  }
  SUBCASE("a seed is mandatory") {
    EvaluateArgs bad = args;
    bad.seed.reset();
    CHECK(cmd_evaluate(bad) == kExitConfig);
  }
}

TEST_CASE("model json round trip preserves predictions") {
  const std::string train = four_pattern_csv("roundtrip_train.csv");
  const Dataset ds = load_csv(train, {.response = "y", .na_token = "NA"});

  for (const char* method : {"pmks", "ccs", "complete-case", "mi", "mimi"}) {
    MethodConfig config;
    config.method = method;
    config.impute.m = 3;
    const auto model = fit_predictor(ds, config, 21);
    const json j = model_to_json(*model);
    const auto restored = model_from_json(json::parse(j.dump()));

    Eigen::VectorXd record(2);
    record << kNA, 3.2;
    Rng r1(4), r2(4);
    const double a = model->predict(record, 0b01, r1).value;
    const double b = restored->predict(record, 0b01, r2).value;
    CHECK(a == b);
  }
}

TEST_CASE("named columns flow through fit and predict for engine methods") {
  Rng rng(71);
  std::ostringstream csv;
  csv << "age,score,outcome\n";
  for (int i = 0; i < 120; ++i) {
    const double a = 50 + 5 * rng.normal();
    const double b = 10 + 2 * rng.normal();
    const double y = 3 + 0.5 * a + b + rng.normal();
    csv << ((i % 4 == 0) ? std::string("NA") : format_double(a)) << ','
        << format_double(b) << ',' << format_double(y) << '\n';
  }
  const std::string train = write_file("named_train.csv", csv.str());
  for (const char* method : {"complete-case", "mi", "mimi"}) {
    FitArgs fit_args;
    fit_args.train_csv = train;
    fit_args.response = "outcome";
    fit_args.method = method;
    fit_args.config_path =
        write_file("named_cfg.json", R"({"imputation": {"m": 3}})");
    fit_args.model_out =
        (temp_dir() / (std::string("named_") + method + ".json")).string();
    REQUIRE(cmd_fit(fit_args) == kExitOk);

    const std::string input =
        write_file("named_input.csv", "age,score\nNA,11.5\n48.0,9.0\n");
    PredictArgs args;
    args.model_path = fit_args.model_out;
    args.input_csv = input;
    args.out_csv =
        (temp_dir() / (std::string("named_out_") + method + ".csv")).string();
    args.seed = 2;
    REQUIRE(cmd_predict(args) == kExitOk);
    const std::string out = slurp(args.out_csv);
    CHECK(out.find("0,10,imputed") != std::string::npos);
    CHECK(out.find("1,00,direct") != std::string::npos);
  }
}
