#pragma once

#include <json.hpp>

#include <memory>
#include <string>

#include "patternkit/dataset.hpp"
#include "patternkit/imputation.hpp"
#include "patternkit/linear_fit.hpp"
#include "patternkit/predictors.hpp"

namespace patternkit {

inline constexpr const char* kToolkitVersion = "0.1.0";

using json = nlohmann::ordered_json;

json design_spec_to_json(const DesignSpec& spec,
                         const std::vector<std::string>& col_names);
DesignSpec design_spec_from_json(const json& j);

json linear_fit_to_json(const LinearFit& fit);
LinearFit linear_fit_from_json(const json& j);

json engine_to_json(const ImputationEngine& engine);
ImputationEngine engine_from_json(const json& j);

json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const json& j);

// Model envelope: {format, version, method, p, col_names, ...}. `sealed`
// drops retained training data; sealed models serve unseen patterns through
// the widest stored sub-pattern.
json model_to_json(const Predictor& model, bool sealed = false);
std::unique_ptr<Predictor> model_from_json(const json& j);

void write_text_atomic(const std::string& path, const std::string& content);
std::uint64_t fnv1a64(const std::string& text);
std::string hash_hex(const std::string& text);

}  // namespace patternkit
