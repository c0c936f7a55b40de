// Writes the bundled synthetic clinical-style dataset (10 covariates, 23
// observed missingness patterns) used by the examples and the test suite.
#include <CLI11.hpp>

#include <iostream>

#include "patternkit/dataset.hpp"
#include "patternkit/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic multi-pattern example dataset"};
  std::string out;
  patternkit::SupportSynthOptions options;
  app.add_option("--out", out, "Output CSV path")->required();
  app.add_option("--n", options.n, "Row count (default 4000)");
  app.add_option("--seed", options.seed, "Seed");
  app.add_flag("--mnary-shift", options.mnary_shift,
               "Add 25 to the outcome of records missing pafi");
  CLI11_PARSE(app, argc, argv);

  try {
    const patternkit::Dataset ds = patternkit::make_support_synth(options);
    patternkit::CsvOptions csv;
    csv.response = "sps";
    patternkit::save_csv(ds, out, csv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
