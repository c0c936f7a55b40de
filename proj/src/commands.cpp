#include "patternkit/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "patternkit/evaluation.hpp"
#include "patternkit/serialize.hpp"

namespace patternkit {

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
  return j;
}

void check_keys(const json& obj, const std::string& context,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object())
    throw ConfigError("config section " + context + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* name : allowed)
      if (key == name) { ok = true; break; }
    if (!ok)
      throw ConfigError("unknown config key \"" + key + "\" in " + context);
  }
}

Eigen::VectorXd vector_from_config(const json& j, const std::string& context) {
  if (!j.is_array()) throw ConfigError(context + " must be an array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_config(const json& j, const std::string& context) {
  if (!j.is_array() || j.empty())
    throw ConfigError(context + " must be a non-empty array of rows");
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != cols) throw ConfigError(context + " rows are ragged");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          j[i][c].get<double>();
  }
  return m;
}

ImputeOptions impute_options_from(const json& j, const std::string& context,
                                  const ImputeOptions& base) {
  ImputeOptions opts = base;
  check_keys(j, context,
             {"method", "m", "k_donors", "cycles", "include_y", "mode"});
  if (j.contains("m")) opts.m = j.at("m").get<int>();
  if (j.contains("k_donors")) opts.k_donors = j.at("k_donors").get<int>();
  if (j.contains("cycles")) opts.cycles = j.at("cycles").get<int>();
  if (j.contains("include_y")) opts.include_y = j.at("include_y").get<bool>();
  return opts;
}

GenConfig generator_from_config(const json& j, int* n_out) {
  check_keys(j, "generator",
             {"n", "n_out", "mu", "sigma", "beta", "delta_indicator",
              "delta_interaction", "noise_sd"});
  GenConfig gen;
  gen.n = j.value("n", 1000);
  if (n_out) *n_out = j.value("n_out", 1000);
  if (j.contains("mu"))
    gen.mu = vector_from_config(j.at("mu"), "generator.mu");
  else
    gen.mu = Eigen::Vector2d(3.0, 3.0);
  if (j.contains("sigma"))
    gen.sigma = matrix_from_config(j.at("sigma"), "generator.sigma");
  else
    gen.sigma = Eigen::Matrix2d{{1.0, 0.5}, {0.5, 1.0}};
  if (j.contains("beta"))
    gen.beta = vector_from_config(j.at("beta"), "generator.beta");
  else
    gen.beta = Eigen::Vector3d(1.0, 3.0, 1.0);
  if (j.contains("delta_indicator"))
    gen.delta_indicator =
        vector_from_config(j.at("delta_indicator"), "generator.delta_indicator");
  if (j.contains("delta_interaction"))
    gen.delta_interaction = matrix_from_config(j.at("delta_interaction"),
                                               "generator.delta_interaction");
  gen.noise_sd = j.value("noise_sd", 1.0);
  if (gen.beta.size() != gen.p() + 1)
    throw ConfigError("generator.beta must have p+1 entries");
  return gen;
}

ScenarioSetting scenario_from_config(const json& j) {
  check_keys(j, "mechanisms[]",
             {"kind", "formulation", "target_prob", "nu1", "nu2", "nu1y",
              "nu2y", "target_column", "driver_column"});
  ScenarioSetting s;
  s.mechanism.kind = mechanism_from_name(j.at("kind").get<std::string>());
  if (j.contains("formulation"))
    s.formulation = formulation_from_name(j.at("formulation").get<std::string>());
  s.mechanism.target_prob = j.value("target_prob", 0.5);
  s.mechanism.nu1 = j.value("nu1", 1.0);
  s.mechanism.nu2 = j.value("nu2", 1.0);
  s.mechanism.nu1y = j.value("nu1y", 1.0);
  s.mechanism.nu2y = j.value("nu2y", 1.0);
  s.mechanism.target_column = j.value("target_column", 0);
  s.mechanism.driver_column = j.value("driver_column", 1);
  return s;
}

MethodConfig method_from_config(const json& j, const ImputeOptions& defaults) {
  MethodConfig m;
  if (j.is_string()) {
    m.method = j.get<std::string>();
    m.impute = defaults;
    return m;
  }
  check_keys(j, "methods[]",
             {"method", "min_pattern_size", "engine", "m", "k_donors",
              "cycles", "include_y", "refit", "own_interactions_only"});
  m.method = j.at("method").get<std::string>();
  if (j.contains("min_pattern_size"))
    m.min_pattern_size = j.at("min_pattern_size").get<int>();
  if (j.contains("engine"))
    m.engine = impute_method_from_name(j.at("engine").get<std::string>());
  m.impute = defaults;
  if (j.contains("m")) m.impute.m = j.at("m").get<int>();
  if (j.contains("k_donors")) m.impute.k_donors = j.at("k_donors").get<int>();
  if (j.contains("cycles")) m.impute.cycles = j.at("cycles").get<int>();
  if (j.contains("include_y"))
    m.impute.include_y = j.at("include_y").get<bool>();
  if (j.contains("refit")) m.refit_mode = j.at("refit").get<bool>();
  if (j.contains("own_interactions_only"))
    m.mimi_own_interactions_only = j.at("own_interactions_only").get<bool>();
  return m;
}

EngineSetting engine_from_config(const json& j, const ImputeOptions& defaults) {
  EngineSetting e;
  e.options = defaults;
  if (j.is_string()) {
    const std::string name = j.get<std::string>();
    if (name == "pmm_y") {
      e.method = ImputeMethod::PmmMice;
      e.options.include_y = true;
      e.label = "pmm_y";
    } else {
      e.method = impute_method_from_name(name);
      e.label = name;
    }
    return e;
  }
  check_keys(j, "error_engines[]",
             {"label", "method", "m", "k_donors", "cycles", "include_y"});
  e.method = impute_method_from_name(j.at("method").get<std::string>());
  if (j.contains("m")) e.options.m = j.at("m").get<int>();
  if (j.contains("k_donors")) e.options.k_donors = j.at("k_donors").get<int>();
  if (j.contains("cycles")) e.options.cycles = j.at("cycles").get<int>();
  if (j.contains("include_y"))
    e.options.include_y = j.at("include_y").get<bool>();
  e.label = j.value("label", impute_method_name(e.method));
  return e;
}

std::string meta_json(const std::string& command, const json& effective_config,
                      std::uint64_t seed, const json& extra = json::object()) {
  json meta;
  meta["command"] = command;
  meta["toolkit_version"] = kToolkitVersion;
  meta["config_hash"] = hash_hex(effective_config.dump());
  meta["seed"] = seed;
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  return meta.dump(2) + "\n";
}

MethodConfig build_method_config(const std::string& method,
                                 const std::string& config_path,
                                 std::uint64_t* seed_out, bool* sealed_out,
                                 json* effective) {
  MethodConfig config;
  config.method = method;
  std::uint64_t seed = 1;
  bool sealed = false;
  json j = json::object();
  if (!config_path.empty()) j = load_json_file(config_path);
  check_keys(j, "config",
             {"seed", "min_pattern_size", "imputation", "sealed",
              "own_interactions_only", "refit", "engine"});
  if (j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("min_pattern_size"))
    config.min_pattern_size = j.at("min_pattern_size").get<int>();
  if (j.contains("engine"))
    config.engine = impute_method_from_name(j.at("engine").get<std::string>());
  if (j.contains("imputation")) {
    config.impute =
        impute_options_from(j.at("imputation"), "imputation", ImputeOptions{});
    if (j.at("imputation").contains("method"))
      config.engine = impute_method_from_name(
          j.at("imputation").at("method").get<std::string>());
    if (j.at("imputation").contains("mode"))
      config.refit_mode =
          j.at("imputation").at("mode").get<std::string>() == "refit";
  }
  if (j.contains("refit")) config.refit_mode = j.at("refit").get<bool>();
  if (j.contains("own_interactions_only"))
    config.mimi_own_interactions_only =
        j.at("own_interactions_only").get<bool>();
  if (j.contains("sealed")) sealed = j.at("sealed").get<bool>();
  if (seed_out) *seed_out = seed;
  if (sealed_out) *sealed_out = sealed;
  if (effective) *effective = j;
  return config;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int cmd_simulate(const SimulateArgs& args) {
  return guarded([&]() {
    json config = load_json_file(args.config_path);
    check_keys(config, "config",
               {"experiment", "seed", "reps", "generator", "mechanisms",
                "methods", "error_engines", "imputation", "calibration_rows",
                "figure1"});
    if (args.seed) config["seed"] = *args.seed;
    if (args.reps) config["reps"] = *args.reps;
    if (!config.contains("seed"))
      throw ConfigError("simulate requires a master seed (config key \"seed\" "
                        "or --seed)");
    const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
    const std::string experiment = config.value("experiment", "comparison");

    std::filesystem::create_directories(args.out_dir);
    const auto out_path = [&](const std::string& name) {
      return (std::filesystem::path(args.out_dir) / name).string();
    };

    if (experiment == "figure1") {
      Fig1Config fig;
      fig.seed = seed;
      if (config.contains("figure1")) {
        const json& f = config.at("figure1");
        check_keys(f, "figure1",
                   {"grid", "n_train", "mc_draws", "p_missing", "mu", "sigma1",
                    "sigma2", "rho", "beta", "noise_sd"});
        if (f.contains("grid"))
          fig.grid = f.at("grid").get<std::vector<double>>();
        fig.n_train = f.value("n_train", 200);
        fig.mc_draws = f.value("mc_draws", 10000);
        fig.p_missing = f.value("p_missing", 0.5);
        if (f.contains("mu")) {
          const auto mu = vector_from_config(f.at("mu"), "figure1.mu");
          if (mu.size() != 2) throw ConfigError("figure1.mu must have 2 entries");
          fig.mu = mu;
        }
        fig.sigma1 = f.value("sigma1", 1.0);
        fig.sigma2 = f.value("sigma2", 1.0);
        fig.rho = f.value("rho", 0.5);
        if (f.contains("beta")) {
          const auto beta = vector_from_config(f.at("beta"), "figure1.beta");
          if (beta.size() != 3)
            throw ConfigError("figure1.beta must have 3 entries");
          fig.beta = beta;
        }
        fig.noise_sd = f.value("noise_sd", 1.0);
      }
      if (fig.grid.empty())
        fig.grid = {1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0};

      const auto table = figure1_experiment(fig);
      std::ostringstream csv;
      csv << "x1,epe_l,epe_s,epe_pmks,mc_estimate,mc_se\n";
      for (const auto& row : table)
        csv << format_double(row.x1) << ',' << format_double(row.epe_l) << ','
            << format_double(row.epe_s) << ',' << format_double(row.epe_pmks)
            << ',' << format_double(row.mc_estimate) << ','
            << format_double(row.mc_se) << '\n';
      write_text_atomic(out_path("figure1.csv"), csv.str());
      write_text_atomic(out_path("meta.json"),
                        meta_json("simulate", config, seed,
                                  {{"experiment", "figure1"}}));
      return kExitOk;
    }
    if (experiment != "comparison")
      throw ConfigError("unknown experiment \"" + experiment + "\"");

    SimConfig sim;
    sim.seed = seed;
    sim.reps = config.value("reps", 1000);
    sim.calibration_rows = config.value("calibration_rows", 100000);
    sim.gen = generator_from_config(config.value("generator", json::object()),
                                    &sim.n_out);
    if (!config.contains("mechanisms") || !config.at("mechanisms").is_array() ||
        config.at("mechanisms").empty())
      throw ConfigError("simulate requires a non-empty \"mechanisms\" array");
    for (const auto& m : config.at("mechanisms"))
      sim.scenarios.push_back(scenario_from_config(m));

    ImputeOptions defaults;
    if (config.contains("imputation"))
      defaults = impute_options_from(config.at("imputation"), "imputation",
                                     ImputeOptions{});
    if (config.contains("methods"))
      for (const auto& m : config.at("methods"))
        sim.methods.push_back(method_from_config(m, defaults));
    else
      for (const char* name : {"pmks", "ccs", "mi", "mimi"})
        sim.methods.push_back(method_from_config(json(name), defaults));
    if (config.contains("error_engines"))
      for (const auto& e : config.at("error_engines"))
        sim.error_engines.push_back(engine_from_config(e, defaults));

    const SimReport report = run_simulation(sim);

    std::ostringstream csv;
    csv << "scenario,method,scope,mean_pe,mc_se,reps\n";
    for (const auto& row : report.rows)
      csv << row.scenario << ',' << row.method << ',' << row.scope << ','
          << format_double(row.mean_pe) << ',' << format_double(row.mc_se)
          << ',' << row.reps << '\n';
    write_text_atomic(out_path("report.csv"), csv.str());

    std::ostringstream imp;
    imp << "scenario,engine,mean_error,mc_se,reps\n";
    for (const auto& row : report.imputation)
      imp << row.scenario << ',' << row.engine << ','
          << format_double(row.mean_error) << ',' << format_double(row.mc_se)
          << ',' << row.reps << '\n';
    write_text_atomic(out_path("imputation_error.csv"), imp.str());

    write_text_atomic(
        out_path("meta.json"),
        meta_json("simulate", config, seed,
                  {{"experiment", "comparison"},
                   {"reps", sim.reps},
                   {"failed_replicates", report.failed_replicates}}));
    return kExitOk;
  });
}

int cmd_fit(const FitArgs& args) {
  return guarded([&]() {
    std::uint64_t seed = 1;
    bool sealed = false;
    json effective;
    MethodConfig config = build_method_config(args.method, args.config_path,
                                              &seed, &sealed, &effective);
    CsvOptions csv_opts;
    csv_opts.response = args.response;
    csv_opts.na_token = args.na_token;
    const Dataset train = load_csv(args.train_csv, csv_opts);
    const auto model = fit_predictor(train, config, seed);
    const json j = model_to_json(*model, sealed);
    write_text_atomic(args.model_out, j.dump(2) + "\n");
    write_text_atomic(args.model_out + ".meta.json",
                      meta_json("fit", effective, seed,
                                {{"method", args.method},
                                 {"train", args.train_csv},
                                 {"response", args.response}}));
    return kExitOk;
  });
}

int cmd_predict(const PredictArgs& args) {
  return guarded([&]() {
    const json model_json = load_json_file(args.model_path);
    const auto model = model_from_json(model_json);
    std::vector<std::string> col_names;
    if (model_json.contains("col_names"))
      col_names = model_json.at("col_names").get<std::vector<std::string>>();
    const int p = model_json.at("p").get<int>();
    if (col_names.empty())
      for (int j = 0; j < p; ++j) col_names.push_back("x" + std::to_string(j + 1));

    std::ifstream in(args.input_csv);
    if (!in) throw std::runtime_error("cannot open " + args.input_csv);
    std::string line;
    if (!std::getline(in, line))
      throw std::runtime_error("empty input file " + args.input_csv);
    std::vector<std::string> header;
    {
      std::stringstream ss(line);
      std::string field;
      while (std::getline(ss, field, ',')) {
        while (!field.empty() && (field.back() == '\r' || field.back() == ' '))
          field.pop_back();
        header.push_back(field);
      }
    }
    std::vector<int> source(col_names.size(), -1);
    for (std::size_t c = 0; c < col_names.size(); ++c) {
      for (std::size_t h = 0; h < header.size(); ++h)
        if (header[h] == col_names[c]) source[c] = static_cast<int>(h);
      if (source[c] < 0)
        throw ConfigError("input is missing model column \"" + col_names[c] +
                          "\"");
    }

    std::ostringstream out;
    out << "row,pattern,route,engine_fallback,prediction,error\n";
    int row = 0;
    int failures = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> fields;
      {
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
          while (!field.empty() && (field.back() == '\r' || field.back() == ' '))
            field.pop_back();
          fields.push_back(field);
        }
        while (fields.size() < header.size()) fields.push_back("");
      }
      Eigen::VectorXd values(p);
      std::uint64_t bits = 0;
      std::string parse_error;
      for (std::size_t c = 0; c < col_names.size(); ++c) {
        const std::string& cell = fields[static_cast<std::size_t>(source[c])];
        if (cell == args.na_token) {
          bits |= (1ULL << c);
          values(static_cast<Eigen::Index>(c)) =
              std::numeric_limits<double>::quiet_NaN();
        } else {
          try {
            values(static_cast<Eigen::Index>(c)) = std::stod(cell);
          } catch (...) {
            parse_error = "bad_value:" + col_names[c];
          }
        }
      }
      PatternId id;
      id.bits = bits;
      id.width = p;
      out << row << ',' << id.to_string() << ',';
      if (!parse_error.empty()) {
        out << ",," << ',' << parse_error << '\n';
        ++failures;
        ++row;
        continue;
      }
      Rng rng(Rng::mix(args.seed, static_cast<std::uint64_t>(row)));
      try {
        const PredictOutcome outcome = model->predict(values, bits, rng);
        out << route_name(outcome.route) << ','
            << (outcome.engine_fallback ? 1 : 0) << ','
            << format_double(outcome.value) << ",\n";
      } catch (const std::exception&) {
        out << ",,," << "no_submodel" << '\n';
        ++failures;
      }
      ++row;
    }
    write_text_atomic(args.out_csv, out.str());
    json extra;
    extra["model"] = args.model_path;
    extra["rows"] = row;
    extra["failed_rows"] = failures;
    write_text_atomic(args.out_csv + ".meta.json",
                      meta_json("predict", model_json.at("method"), args.seed,
                                extra));
    if (failures > 0) {
      std::cerr << "predict: " << failures << " of " << row
                << " rows could not be served\n";
      return kExitRuntime;
    }
    return kExitOk;
  });
}

int cmd_evaluate(const EvaluateArgs& args) {
  return guarded([&]() {
    if (!args.seed)
      throw ConfigError("evaluate requires an explicit --seed");
    std::uint64_t config_seed = 1;
    json effective;
    MethodConfig config = build_method_config(args.method, args.config_path,
                                              &config_seed, nullptr, &effective);
    CsvOptions csv_opts;
    csv_opts.response = args.response;
    csv_opts.na_token = args.na_token;
    const Dataset ds = load_csv(args.data_csv, csv_opts);
    const PatternLossReport report =
        kfold_cv(ds, config, args.folds, *args.seed);

    std::ostringstream out;
    out << "method,scope,count,mse\n";
    for (const auto& [id, cell] : report.per_pattern)
      out << report.method_label << ",pattern-" << id.to_string() << ','
          << cell.count << ',' << format_double(cell.mse) << '\n';
    out << report.method_label << ",total," << ds.n_rows() << ','
        << format_double(report.weighted_total) << '\n';
    write_text_atomic(args.out_csv, out.str());

    json extra;
    extra["data"] = args.data_csv;
    extra["method"] = args.method;
    extra["folds"] = args.folds;
    write_text_atomic(args.out_csv + ".meta.json",
                      meta_json("evaluate", effective, *args.seed, extra));
    return kExitOk;
  });
}

}  // namespace patternkit
