#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace patternkit {

// Exit codes: 0 success, 1 runtime failure, 2 config/validation failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SimulateArgs {
  std::string config_path;
  std::optional<int> reps;             // overrides config
  std::optional<std::uint64_t> seed;   // overrides config
  std::string out_dir;
};

struct FitArgs {
  std::string train_csv;
  std::string response;
  std::string method;
  std::string config_path;  // optional
  std::string model_out;
  std::string na_token = "NA";
};

struct PredictArgs {
  std::string model_path;
  std::string input_csv;
  std::string out_csv;
  std::uint64_t seed = 1;
  std::string na_token = "NA";
};

struct EvaluateArgs {
  std::string data_csv;
  std::string response;
  std::string method;
  int folds = 10;
  std::optional<std::uint64_t> seed;  // required: no silent nondeterminism
  std::string out_csv;
  std::string config_path;  // optional
  std::string na_token = "NA";
};

int cmd_simulate(const SimulateArgs& args);
int cmd_fit(const FitArgs& args);
int cmd_predict(const PredictArgs& args);
int cmd_evaluate(const EvaluateArgs& args);

}  // namespace patternkit
