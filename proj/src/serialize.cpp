#include "patternkit/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace patternkit {

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols_hint = 0) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols =
      rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : cols_hint;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(i, c) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]
                    .get<double>();
  return m;
}

}  // namespace

json design_spec_to_json(const DesignSpec& spec,
                         const std::vector<std::string>& col_names) {
  json j;
  j["intercept"] = spec.intercept;
  j["columns"] = spec.columns;
  j["indicator_columns"] = spec.indicator_columns;
  json inter = json::array();
  for (auto [a, b] : spec.interactions) inter.push_back(json::array({a, b}));
  j["interactions"] = std::move(inter);
  j["terms"] = spec.term_labels(col_names);
  return j;
}

DesignSpec design_spec_from_json(const json& j) {
  DesignSpec spec;
  spec.intercept = j.at("intercept").get<bool>();
  spec.columns = j.at("columns").get<std::vector<int>>();
  spec.indicator_columns = j.at("indicator_columns").get<std::vector<int>>();
  for (const auto& pair : j.at("interactions"))
    spec.interactions.emplace_back(pair[0].get<int>(), pair[1].get<int>());
  return spec;
}

json linear_fit_to_json(const LinearFit& fit) {
  json j;
  j["coefficients"] = vector_to_json(fit.coefficients);
  j["rank"] = fit.rank;
  j["sigma2"] = fit.sigma2 ? json(*fit.sigma2) : json(nullptr);
  j["n_fit"] = fit.n_fit;
  j["gram_inverse"] = matrix_to_json(fit.gram_inverse);
  j["coef_noise_half"] = matrix_to_json(fit.coef_noise_half);
  return j;
}

LinearFit linear_fit_from_json(const json& j) {
  LinearFit fit;
  fit.coefficients = vector_from_json(j.at("coefficients"));
  fit.rank = j.at("rank").get<int>();
  if (!j.at("sigma2").is_null()) fit.sigma2 = j.at("sigma2").get<double>();
  fit.n_fit = j.at("n_fit").get<int>();
  fit.gram_inverse = matrix_from_json(j.at("gram_inverse"),
                                      fit.coefficients.size());
  fit.coef_noise_half = matrix_from_json(j.at("coef_noise_half"));
  return fit;
}

json engine_to_json(const ImputationEngine& engine) {
  json j;
  j["method"] = impute_method_name(engine.method);
  j["options"] = {{"m", engine.options.m},
                  {"k_donors", engine.options.k_donors},
                  {"cycles", engine.options.cycles},
                  {"include_y", engine.options.include_y}};
  j["rng_seed"] = engine.rng_seed;
  j["p"] = engine.p;
  j["column_means"] = vector_to_json(engine.column_means);
  j["y_mean"] = engine.y_mean;
  json cond = json::array();
  for (const auto& [key, model] : engine.cond_models) {
    json entry;
    entry["target"] = key.first;
    entry["pattern_bits"] = key.second;
    entry["spec"] = design_spec_to_json(model.spec, {});
    entry["fit"] = linear_fit_to_json(model.fit);
    cond.push_back(std::move(entry));
  }
  j["cond_models"] = std::move(cond);
  json pmm = json::array();
  for (const auto& state : engine.pmm_columns) {
    json entry;
    entry["column"] = state.column;
    entry["spec"] = design_spec_to_json(state.spec, {});
    json fits = json::array();
    for (const auto& fit : state.fits) fits.push_back(linear_fit_to_json(fit));
    entry["fits"] = std::move(fits);
    json donors = json::array();
    for (const auto& pool : state.donors) {
      json flat = json::array();
      for (const auto& [pred, value] : pool) {
        flat.push_back(pred);
        flat.push_back(value);
      }
      donors.push_back(std::move(flat));
    }
    entry["donors"] = std::move(donors);
    pmm.push_back(std::move(entry));
  }
  j["pmm_columns"] = std::move(pmm);
  return j;
}

ImputationEngine engine_from_json(const json& j) {
  ImputationEngine engine;
  engine.method = impute_method_from_name(j.at("method").get<std::string>());
  const json& opts = j.at("options");
  engine.options.m = opts.at("m").get<int>();
  engine.options.k_donors = opts.at("k_donors").get<int>();
  engine.options.cycles = opts.at("cycles").get<int>();
  engine.options.include_y = opts.at("include_y").get<bool>();
  engine.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  engine.p = j.at("p").get<int>();
  engine.column_means = vector_from_json(j.at("column_means"));
  engine.y_mean = j.at("y_mean").get<double>();
  for (const auto& entry : j.at("cond_models")) {
    ImputationEngine::CondModel model;
    model.spec = design_spec_from_json(entry.at("spec"));
    model.fit = linear_fit_from_json(entry.at("fit"));
    engine.cond_models.emplace(
        std::make_pair(entry.at("target").get<int>(),
                       entry.at("pattern_bits").get<std::uint64_t>()),
        std::move(model));
  }
  for (const auto& entry : j.at("pmm_columns")) {
    ImputationEngine::PmmColumn state;
    state.column = entry.at("column").get<int>();
    state.spec = design_spec_from_json(entry.at("spec"));
    for (const auto& fit : entry.at("fits"))
      state.fits.push_back(linear_fit_from_json(fit));
    for (const auto& pool : entry.at("donors")) {
      std::vector<std::pair<double, double>> donors;
      for (std::size_t i = 0; i + 1 < pool.size(); i += 2)
        donors.emplace_back(pool[i].get<double>(), pool[i + 1].get<double>());
      state.donors.push_back(std::move(donors));
    }
    engine.pmm_columns.push_back(std::move(state));
  }
  return engine;
}

json dataset_to_json(const Dataset& ds) {
  json j;
  j["col_names"] = ds.col_names();
  j["y"] = vector_to_json(ds.y());
  json rows = json::array();
  for (int i = 0; i < ds.n_rows(); ++i) {
    json row = json::array();
    for (int c = 0; c < ds.n_cols(); ++c) {
      if (ds.is_missing(i, c))
        row.push_back(nullptr);
      else
        row.push_back(ds.value(i, c));
    }
    rows.push_back(std::move(row));
  }
  j["x"] = std::move(rows);
  return j;
}

Dataset dataset_from_json(const json& j) {
  const auto col_names = j.at("col_names").get<std::vector<std::string>>();
  const Eigen::VectorXd y = vector_from_json(j.at("y"));
  const json& rows = j.at("x");
  const int n = static_cast<int>(rows.size());
  const int p = static_cast<int>(col_names.size());
  Eigen::MatrixXd x(n, p);
  MaskMatrix mask = MaskMatrix::Zero(n, p);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < p; ++c) {
      const json& cell = rows[static_cast<std::size_t>(i)]
                             [static_cast<std::size_t>(c)];
      if (cell.is_null()) {
        mask(i, c) = 1;
        x(i, c) = std::numeric_limits<double>::quiet_NaN();
      } else {
        x(i, c) = cell.get<double>();
      }
    }
  }
  return Dataset(std::move(x), std::move(mask), y, col_names);
}

// Serialization needs to reach into the model internals; ModelIo is the one
// friend that does.
class ModelIo {
 public:
  static json submodels_to_json(const SubmodelPredictor& model) {
    json out = json::array();
    for (const auto& [bits, sub] : model.submodels_) {
      json entry;
      entry["pattern_bits"] = bits;
      PatternId id;
      id.bits = bits;
      id.width = model.p_;
      entry["pattern"] = id.to_string();
      entry["pattern_rows"] = sub.pattern_rows;
      entry["spec"] = design_spec_to_json(sub.spec, model.col_names_);
      entry["fit"] = linear_fit_to_json(sub.fit);
      out.push_back(std::move(entry));
    }
    return out;
  }

  static void submodels_from_json(SubmodelPredictor& model, const json& j) {
    for (const auto& entry : j) {
      Submodel sub;
      sub.spec = design_spec_from_json(entry.at("spec"));
      sub.fit = linear_fit_from_json(entry.at("fit"));
      sub.pattern_rows = entry.at("pattern_rows").get<int>();
      model.submodels_.emplace(entry.at("pattern_bits").get<std::uint64_t>(),
                               std::move(sub));
    }
  }

  static void set_header(SubmodelPredictor& model, int p,
                         std::vector<std::string> col_names) {
    model.p_ = p;
    model.col_names_ = std::move(col_names);
  }

  static void set_training(SubmodelPredictor& model,
                           std::shared_ptr<const Dataset> training) {
    model.training_ = std::move(training);
  }

  static json to_json(const Predictor& model, bool sealed) {
    json j;
    j["format"] = "patternkit-model";
    j["version"] = kToolkitVersion;
    j["method"] = model.method_name();
    if (const auto* pmks = dynamic_cast<const PmksModel*>(&model)) {
      j["p"] = pmks->n_covariates();
      j["col_names"] = pmks->col_names();
      j["min_pattern_size"] = pmks->min_pattern_size()
                                  ? json(*pmks->min_pattern_size())
                                  : json(nullptr);
      j["fallback_ids"] = std::vector<std::uint64_t>(
          pmks->fallback_ids().begin(), pmks->fallback_ids().end());
      j["submodels"] = submodels_to_json(*pmks);
      if (!sealed && pmks->training_data())
        j["training"] = dataset_to_json(*pmks->training_data());
    } else if (const auto* ccs = dynamic_cast<const CcsModel*>(&model)) {
      j["p"] = ccs->n_covariates();
      j["col_names"] = ccs->col_names();
      j["submodels"] = submodels_to_json(*ccs);
      if (!sealed && ccs->training_data())
        j["training"] = dataset_to_json(*ccs->training_data());
    } else if (const auto* cc = dynamic_cast<const CompleteCaseModel*>(&model)) {
      j["p"] = cc->engine().p;
      j["col_names"] = cc->col_names();
      j["spec"] = design_spec_to_json(cc->model().spec, cc->col_names());
      j["fit"] = linear_fit_to_json(cc->model().fit);
      j["n_complete"] = cc->model().pattern_rows;
      j["engine"] = engine_to_json(cc->engine());
    } else if (const auto* mi = dynamic_cast<const MiModel*>(&model)) {
      j["p"] = mi->engine().p;
      j["col_names"] = mi->col_names();
      j["spec"] = design_spec_to_json(mi->spec(), mi->col_names());
      json fits = json::array();
      for (const auto& fit : mi->fits()) fits.push_back(linear_fit_to_json(fit));
      j["fits"] = std::move(fits);
      j["refit_mode"] = mi->refit_mode();
      j["engine"] = engine_to_json(mi->engine());
      if (mi->refit_mode() && !sealed && mi->training_)
        j["training"] = dataset_to_json(*mi->training_);
    } else if (const auto* mimi = dynamic_cast<const MimiModel*>(&model)) {
      j["p"] = mimi->engine().p;
      j["col_names"] = mimi->col_names();
      j["spec"] = design_spec_to_json(mimi->spec(), mimi->col_names());
      json fits = json::array();
      for (const auto& fit : mimi->fits())
        fits.push_back(linear_fit_to_json(fit));
      j["fits"] = std::move(fits);
      j["engine"] = engine_to_json(mimi->engine());
    } else {
      throw std::runtime_error("model_to_json: unknown predictor type");
    }
    j["sealed"] = sealed || !j.contains("training");
    return j;
  }

  static std::unique_ptr<Predictor> from_json(const json& j) {
    if (j.at("format").get<std::string>() != "patternkit-model")
      throw std::runtime_error("model_from_json: not a patternkit model file");
    const std::string method = j.at("method").get<std::string>();
    if (method == "pmks" || method == "ccs") {
      std::unique_ptr<SubmodelPredictor> model;
      if (method == "pmks") {
        auto pmks = std::unique_ptr<PmksModel>(new PmksModel());
        if (!j.at("min_pattern_size").is_null())
          pmks->min_pattern_size_ = j.at("min_pattern_size").get<int>();
        for (const auto& bits : j.at("fallback_ids"))
          pmks->fallback_ids_.insert(bits.get<std::uint64_t>());
        model = std::move(pmks);
      } else {
        model = std::unique_ptr<CcsModel>(new CcsModel());
      }
      set_header(*model, j.at("p").get<int>(),
                 j.at("col_names").get<std::vector<std::string>>());
      submodels_from_json(*model, j.at("submodels"));
      if (j.contains("training"))
        set_training(*model,
                     std::make_shared<Dataset>(dataset_from_json(j.at("training"))));
      return model;
    }
    if (method == "complete-case") {
      auto model = std::unique_ptr<CompleteCaseModel>(new CompleteCaseModel());
      if (j.contains("col_names"))
        model->col_names_ = j.at("col_names").get<std::vector<std::string>>();
      model->model_.spec = design_spec_from_json(j.at("spec"));
      model->model_.fit = linear_fit_from_json(j.at("fit"));
      model->model_.pattern_rows = j.at("n_complete").get<int>();
      model->engine_ = std::make_shared<ImputationEngine>(
          engine_from_json(j.at("engine")));
      return model;
    }
    if (method == "mi") {
      auto model = std::unique_ptr<MiModel>(new MiModel());
      if (j.contains("col_names"))
        model->col_names_ = j.at("col_names").get<std::vector<std::string>>();
      model->spec_ = design_spec_from_json(j.at("spec"));
      for (const auto& fit : j.at("fits"))
        model->fits_.push_back(linear_fit_from_json(fit));
      model->refit_mode_ = j.at("refit_mode").get<bool>();
      model->engine_ = std::make_shared<ImputationEngine>(
          engine_from_json(j.at("engine")));
      if (j.contains("training"))
        model->training_ =
            std::make_shared<Dataset>(dataset_from_json(j.at("training")));
      else
        model->refit_mode_ = false;  // refit impossible without training data
      return model;
    }
    if (method == "mimi") {
      auto model = std::unique_ptr<MimiModel>(new MimiModel());
      if (j.contains("col_names"))
        model->col_names_ = j.at("col_names").get<std::vector<std::string>>();
      model->spec_ = design_spec_from_json(j.at("spec"));
      for (const auto& fit : j.at("fits"))
        model->fits_.push_back(linear_fit_from_json(fit));
      model->engine_ = std::make_shared<ImputationEngine>(
          engine_from_json(j.at("engine")));
      return model;
    }
    throw std::runtime_error("model_from_json: unknown method \"" + method +
                             "\"");
  }
};

json model_to_json(const Predictor& model, bool sealed) {
  return ModelIo::to_json(model, sealed);
}

std::unique_ptr<Predictor> model_from_json(const json& j) {
  return ModelIo::from_json(j);
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string hash_hex(const std::string& text) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

}  // namespace patternkit
