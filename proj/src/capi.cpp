#include "tgv.h"

#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>

#include "tgv/config.hpp"
#include "tgv/errors.hpp"
#include "tgv/gateviz.hpp"
#include "tgv/harness.hpp"
#include "tgv/oracle.hpp"
#include "tgv/pipeline.hpp"
#include "tgv/synth.hpp"

// Handle types live in the global namespace so the opaque struct tags in
// tgv.h name them directly.
struct tgv_config {
  tgv::RunConfig cfg;
};

struct tgv_dataset {
  tgv::DatasetSpec spec;
  tgv::Dataset data;
};

struct tgv_model {
  tgv::Model model;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

/// Runs `fn`, translating C++ exceptions into status codes and stashing the
/// message for tgv_last_error. ShapeError counts as usage: the shapes the C
/// surface can produce are all argument-driven.
template <typename Fn>
tgv_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    return fn();
  } catch (const tgv::ConfigError& e) {
    g_last_error = e.what();
    return TGV_ERR_CONFIG;
  } catch (const tgv::UsageError& e) {
    g_last_error = e.what();
    return TGV_ERR_USAGE;
  } catch (const tgv::ShapeError& e) {
    g_last_error = e.what();
    return TGV_ERR_USAGE;
  } catch (const tgv::IoError& e) {
    g_last_error = e.what();
    return TGV_ERR_IO;
  } catch (const tgv::NumericError& e) {
    g_last_error = e.what();
    return TGV_ERR_NUMERIC;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TGV_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return TGV_ERR_INTERNAL;
  }
}

tgv_status usage_error(const std::string& msg) {
  g_last_error = msg;
  return TGV_ERR_USAGE;
}

tgv::Submodule submodule_from_name(const std::string& s) {
  if (s == "spatial") return tgv::Submodule::Spatial;
  if (s == "temporal") return tgv::Submodule::Temporal;
  if (s == "mlp") return tgv::Submodule::Mlp;
  throw tgv::ConfigError("unknown submodule '" + s +
                         "' (expected spatial|temporal|mlp)");
}

}  // namespace

extern "C" {

const char* tgv_last_error(void) { return g_last_error.c_str(); }

void tgv_string_free(char* s) { delete[] s; }

const char* tgv_version(void) { return "0.1.0"; }

const char* tgv_status_name(tgv_status status) {
  switch (status) {
    case TGV_OK:
      return "TGV_OK";
    case TGV_CHECK_FAILED:
      return "TGV_CHECK_FAILED";
    case TGV_ERR_CONFIG:
      return "TGV_ERR_CONFIG";
    case TGV_ERR_USAGE:
      return "TGV_ERR_USAGE";
    case TGV_ERR_IO:
      return "TGV_ERR_IO";
    case TGV_ERR_NUMERIC:
      return "TGV_ERR_NUMERIC";
    case TGV_ERR_INTERNAL:
      return "TGV_ERR_INTERNAL";
  }
  return "TGV_ERR_INTERNAL";
}

tgv_status tgv_config_create(tgv_config** out) {
  if (!out) return usage_error("tgv_config_create: out is NULL");
  return guarded([&] {
    *out = new tgv_config{};
    return TGV_OK;
  });
}

tgv_status tgv_config_load(const char* path, tgv_config** out) {
  if (!out) return usage_error("tgv_config_load: out is NULL");
  if (!path) return usage_error("tgv_config_load: path is NULL");
  return guarded([&] {
    *out = new tgv_config{tgv::load_run_config(path)};
    return TGV_OK;
  });
}

tgv_status tgv_config_parse(const char* json_text, const char* origin,
                            tgv_config** out) {
  if (!out) return usage_error("tgv_config_parse: out is NULL");
  if (!json_text) return usage_error("tgv_config_parse: json_text is NULL");
  return guarded([&] {
    *out = new tgv_config{
        tgv::parse_run_config(json_text, origin ? origin : "<string>")};
    return TGV_OK;
  });
}

tgv_status tgv_config_set(tgv_config* cfg, const char* assignment) {
  if (!cfg) return usage_error("tgv_config_set: cfg is NULL");
  if (!assignment) return usage_error("tgv_config_set: assignment is NULL");
  return guarded([&] {
    tgv::apply_override(cfg->cfg, assignment);
    return TGV_OK;
  });
}

tgv_status tgv_config_validate(const tgv_config* cfg) {
  if (!cfg) return usage_error("tgv_config_validate: cfg is NULL");
  return guarded([&] {
    cfg->cfg.validate();
    return TGV_OK;
  });
}

tgv_status tgv_config_json(const tgv_config* cfg, char** out_json) {
  if (!cfg) return usage_error("tgv_config_json: cfg is NULL");
  if (!out_json) return usage_error("tgv_config_json: out_json is NULL");
  return guarded([&] {
    *out_json = dup_string(tgv::run_config_json(cfg->cfg));
    return TGV_OK;
  });
}

tgv_status tgv_config_get(const tgv_config* cfg, const char* key,
                          char** out_value) {
  if (!cfg) return usage_error("tgv_config_get: cfg is NULL");
  if (!key) return usage_error("tgv_config_get: key is NULL");
  if (!out_value) return usage_error("tgv_config_get: out_value is NULL");
  return guarded([&] {
    std::map<std::string, std::string> flat;
    for (const auto& [k, v] : tgv::config_to_manifest(cfg->cfg.model))
      flat["model." + k] = v;
    for (const auto& [k, v] : tgv::data_to_manifest(cfg->cfg.data))
      flat["data." + k] = v;
    for (const auto& [k, v] : tgv::train_to_manifest(cfg->cfg.train))
      flat["train." + k] = v;
    const auto it = flat.find(key);
    if (it == flat.end())
      throw tgv::ConfigError(std::string("unknown config key '") + key + "'");
    *out_value = dup_string(it->second);
    return TGV_OK;
  });
}

void tgv_config_free(tgv_config* cfg) { delete cfg; }

tgv_status tgv_dataset_create(const tgv_config* cfg, tgv_dataset** out) {
  if (!out) return usage_error("tgv_dataset_create: out is NULL");
  if (!cfg) return usage_error("tgv_dataset_create: cfg is NULL");
  return guarded([&] {
    cfg->cfg.data.validate();
    *out = new tgv_dataset{cfg->cfg.data, tgv::gen_dataset(cfg->cfg.data)};
    return TGV_OK;
  });
}

tgv_status tgv_dataset_sizes(const tgv_dataset* data, int64_t* out_train,
                             int64_t* out_test) {
  if (!data) return usage_error("tgv_dataset_sizes: data is NULL");
  if (out_train) *out_train = static_cast<int64_t>(data->data.train.size());
  if (out_test) *out_test = static_cast<int64_t>(data->data.test.size());
  g_last_error.clear();
  return TGV_OK;
}

void tgv_dataset_free(tgv_dataset* data) { delete data; }

tgv_status tgv_model_create(const tgv_config* cfg, uint64_t seed,
                            tgv_model** out) {
  if (!out) return usage_error("tgv_model_create: out is NULL");
  if (!cfg) return usage_error("tgv_model_create: cfg is NULL");
  return guarded([&] {
    *out = new tgv_model{tgv::Model(cfg->cfg.model, seed)};
    return TGV_OK;
  });
}

tgv_status tgv_model_load(const char* checkpoint_path, tgv_model** out) {
  if (!out) return usage_error("tgv_model_load: out is NULL");
  if (!checkpoint_path)
    return usage_error("tgv_model_load: checkpoint_path is NULL");
  return guarded([&] {
    *out = new tgv_model{tgv::Model::load(checkpoint_path)};
    return TGV_OK;
  });
}

tgv_status tgv_model_save(const tgv_model* model, const char* checkpoint_path) {
  if (!model) return usage_error("tgv_model_save: model is NULL");
  if (!checkpoint_path)
    return usage_error("tgv_model_save: checkpoint_path is NULL");
  return guarded([&] {
    model->model.save(checkpoint_path);
    return TGV_OK;
  });
}

void tgv_model_free(tgv_model* model) { delete model; }

tgv_status tgv_grad_check(uint64_t seed, char** out_table) {
  return guarded([&] {
    tgv::GradCheckReport report = tgv::grad_check_suite(seed);
    if (out_table) *out_table = dup_string(tgv::grad_check_table(report));
    if (report.pass) return TGV_OK;
    g_last_error = "gradient check failed; see the table for offenders";
    return TGV_CHECK_FAILED;
  });
}

tgv_status tgv_oracle_check(uint64_t seed, char** out_table) {
  return guarded([&] {
    tgv::OracleReport report = tgv::run_oracles(seed);
    if (out_table) *out_table = dup_string(tgv::oracle_table(report));
    if (report.pass()) return TGV_OK;
    g_last_error = "oracle checks failed; see the table for details";
    return TGV_CHECK_FAILED;
  });
}

tgv_status tgv_train(tgv_model* model, const tgv_dataset* data,
                     const tgv_config* cfg, const char* out_dir,
                     const char* label, char** out_report_json) {
  if (!model) return usage_error("tgv_train: model is NULL");
  if (!data) return usage_error("tgv_train: data is NULL");
  if (!cfg) return usage_error("tgv_train: cfg is NULL");
  return guarded([&] {
    tgv::RunReport report =
        tgv::train(model->model, data->data, cfg->cfg.train,
                   out_dir ? out_dir : "", label ? label : "run");
    if (out_report_json) *out_report_json = dup_string(tgv::report_json(report));
    return TGV_OK;
  });
}

tgv_status tgv_evaluate(const tgv_model* model, const tgv_dataset* data,
                        double* out_accuracy) {
  if (!model) return usage_error("tgv_evaluate: model is NULL");
  if (!data) return usage_error("tgv_evaluate: data is NULL");
  if (!out_accuracy) return usage_error("tgv_evaluate: out_accuracy is NULL");
  return guarded([&] {
    *out_accuracy = tgv::evaluate(model->model, data->data.test);
    return TGV_OK;
  });
}

tgv_status tgv_ablate(const tgv_dataset* data, const tgv_config* cfg,
                      const char* out_dir, int64_t workers, char** out_csv) {
  if (!data) return usage_error("tgv_ablate: data is NULL");
  if (!cfg) return usage_error("tgv_ablate: cfg is NULL");
  if (!out_dir || !*out_dir)
    return usage_error("tgv_ablate: out_dir is required");
  return guarded([&] {
    const auto variants = tgv::ablation_variants(cfg->cfg.model);
    const auto reports =
        tgv::run_ablation(variants, data->data, cfg->cfg.train, out_dir, workers);
    const std::string csv = tgv::ablation_csv(variants, reports);
    const std::string path = std::string(out_dir) + "/ablation.csv";
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw tgv::IoError("cannot open for writing: " + path);
    f << csv;
    if (!f) throw tgv::IoError("failed writing: " + path);
    if (out_csv) *out_csv = dup_string(csv);
    return TGV_OK;
  });
}

tgv_status tgv_export_gates(const tgv_model* model, const tgv_dataset* data,
                            int64_t sample_index, int64_t layer,
                            const char* submodule, const char* format,
                            const char* path) {
  if (!model) return usage_error("tgv_export_gates: model is NULL");
  if (!data) return usage_error("tgv_export_gates: data is NULL");
  if (!submodule) return usage_error("tgv_export_gates: submodule is NULL");
  if (!format) return usage_error("tgv_export_gates: format is NULL");
  if (!path) return usage_error("tgv_export_gates: path is NULL");
  return guarded([&] {
    const auto& test = data->data.test;
    if (sample_index < 0 || sample_index >= static_cast<int64_t>(test.size()))
      throw tgv::UsageError("sample index " + std::to_string(sample_index) +
                            " outside the test split [0, " +
                            std::to_string(test.size()) + ")");
    const tgv::Submodule which = submodule_from_name(submodule);
    tgv::Tensor gates = tgv::capture_gates(
        model->model, test[static_cast<size_t>(sample_index)].video, layer, which);
    tgv::Heatmap heatmap = tgv::pool_gates(gates);
    heatmap.layer = layer;
    heatmap.submodule = which;
    heatmap.sample_id = "test/" + std::to_string(sample_index);
    tgv::export_heatmap(heatmap, path, format);
    return TGV_OK;
  });
}

}  // extern "C"
