// tgv — command-line front end over the C API (tgv.h). Exit codes:
//   0  success
//   1  a check suite or run failed
//   2  usage or configuration error (including missing/invalid files)
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tgv.h"

namespace {

using ConfigPtr = std::unique_ptr<tgv_config, decltype(&tgv_config_free)>;
using DatasetPtr = std::unique_ptr<tgv_dataset, decltype(&tgv_dataset_free)>;
using ModelPtr = std::unique_ptr<tgv_model, decltype(&tgv_model_free)>;

int exit_code_for(tgv_status status) {
  switch (status) {
    case TGV_OK:
      return 0;
    case TGV_CHECK_FAILED:
    case TGV_ERR_NUMERIC:
    case TGV_ERR_INTERNAL:
      return 1;
    case TGV_ERR_CONFIG:
    case TGV_ERR_USAGE:
    case TGV_ERR_IO:
      return 2;
  }
  return 1;
}

int fail(tgv_status status) {
  std::fprintf(stderr, "tgv: %s: %s\n", tgv_status_name(status), tgv_last_error());
  return exit_code_for(status);
}

std::string take(char* s) {
  std::string out = s ? s : "";
  tgv_string_free(s);
  return out;
}

// Loads + overrides + validates. Returns -1 on success (cfg filled), else
// the process exit code. Nothing is written before this returns, so a bad
// config never leaves partial outputs.
int load_config(const std::string& path, const std::vector<std::string>& sets,
                ConfigPtr& cfg) {
  tgv_config* raw = nullptr;
  tgv_status s = tgv_config_load(path.c_str(), &raw);
  if (s != TGV_OK) return fail(s);
  cfg = ConfigPtr(raw, &tgv_config_free);
  for (const std::string& kv : sets) {
    s = tgv_config_set(cfg.get(), kv.c_str());
    if (s != TGV_OK) return fail(s);
  }
  s = tgv_config_validate(cfg.get());
  if (s != TGV_OK) return fail(s);
  return -1;
}

int make_dataset(const ConfigPtr& cfg, DatasetPtr& data) {
  tgv_dataset* raw = nullptr;
  const tgv_status s = tgv_dataset_create(cfg.get(), &raw);
  if (s != TGV_OK) return fail(s);
  data = DatasetPtr(raw, &tgv_dataset_free);
  return -1;
}

// Fresh model seeded from the config's train.seed, so every source of
// randomness in a run traces back to the config file.
int make_model(const ConfigPtr& cfg, ModelPtr& model) {
  char* seed_str = nullptr;
  tgv_status s = tgv_config_get(cfg.get(), "train.seed", &seed_str);
  if (s != TGV_OK) return fail(s);
  const uint64_t seed = std::strtoull(take(seed_str).c_str(), nullptr, 10);
  tgv_model* raw = nullptr;
  s = tgv_model_create(cfg.get(), seed, &raw);
  if (s != TGV_OK) return fail(s);
  model = ModelPtr(raw, &tgv_model_free);
  return -1;
}

int load_model(const std::string& checkpoint, ModelPtr& model) {
  tgv_model* raw = nullptr;
  const tgv_status s = tgv_model_load(checkpoint.c_str(), &raw);
  if (s != TGV_OK) return fail(s);
  model = ModelPtr(raw, &tgv_model_free);
  return -1;
}

int write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (f) f << text;
  if (!f) {
    std::fprintf(stderr, "tgv: TGV_ERR_IO: cannot write %s\n", path.c_str());
    return 2;
  }
  return -1;
}

// The resolved-config sidecar that makes every artifact self-describing.
int write_resolved_config(const ConfigPtr& cfg, const std::string& path) {
  char* json = nullptr;
  const tgv_status s = tgv_config_json(cfg.get(), &json);
  if (s != TGV_OK) return fail(s);
  return write_text(path, take(json));
}

int run_check(tgv_status (*check)(uint64_t, char**), uint64_t seed) {
  char* table = nullptr;
  const tgv_status s = check(seed, &table);
  if (table) std::fputs(take(table).c_str(), stdout);
  if (s == TGV_OK) return 0;
  return fail(s);
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& out_dir, const std::string& label) {
  ConfigPtr cfg(nullptr, &tgv_config_free);
  if (int rc = load_config(config_path, sets, cfg); rc >= 0) return rc;
  DatasetPtr data(nullptr, &tgv_dataset_free);
  if (int rc = make_dataset(cfg, data); rc >= 0) return rc;
  ModelPtr model(nullptr, &tgv_model_free);
  if (int rc = make_model(cfg, model); rc >= 0) return rc;

  char* report = nullptr;
  const tgv_status s = tgv_train(model.get(), data.get(), cfg.get(),
                                 out_dir.c_str(), label.c_str(), &report);
  if (s != TGV_OK) return fail(s);
  if (int rc = write_resolved_config(cfg, out_dir + "/" + label + ".config.json");
      rc >= 0)
    return rc;
  std::fputs(take(report).c_str(), stdout);
  return 0;
}

int cmd_eval(const std::string& config_path, const std::vector<std::string>& sets,
             const std::string& checkpoint) {
  ConfigPtr cfg(nullptr, &tgv_config_free);
  if (int rc = load_config(config_path, sets, cfg); rc >= 0) return rc;
  DatasetPtr data(nullptr, &tgv_dataset_free);
  if (int rc = make_dataset(cfg, data); rc >= 0) return rc;
  ModelPtr model(nullptr, &tgv_model_free);
  if (int rc = load_model(checkpoint, model); rc >= 0) return rc;

  double accuracy = 0.0;
  const tgv_status s = tgv_evaluate(model.get(), data.get(), &accuracy);
  if (s != TGV_OK) return fail(s);
  int64_t n_train = 0, n_test = 0;
  tgv_dataset_sizes(data.get(), &n_train, &n_test);
  std::printf("{\n  \"checkpoint\": \"%s\",\n  \"n_test\": %lld,\n  \"test_accuracy\": %.17g\n}\n",
              checkpoint.c_str(), static_cast<long long>(n_test), accuracy);
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::vector<std::string>& sets,
               const std::string& out_dir, int64_t workers) {
  ConfigPtr cfg(nullptr, &tgv_config_free);
  if (int rc = load_config(config_path, sets, cfg); rc >= 0) return rc;
  DatasetPtr data(nullptr, &tgv_dataset_free);
  if (int rc = make_dataset(cfg, data); rc >= 0) return rc;

  char* csv = nullptr;
  const tgv_status s =
      tgv_ablate(data.get(), cfg.get(), out_dir.c_str(), workers, &csv);
  if (s != TGV_OK) return fail(s);
  if (int rc = write_resolved_config(cfg, out_dir + "/config.resolved.json");
      rc >= 0)
    return rc;
  std::fputs(take(csv).c_str(), stdout);
  return 0;
}

int cmd_viz_gates(const std::string& config_path, const std::vector<std::string>& sets,
                  const std::string& checkpoint, int64_t sample, int64_t layer,
                  const std::string& submodule, const std::string& format,
                  const std::string& out_path) {
  ConfigPtr cfg(nullptr, &tgv_config_free);
  if (int rc = load_config(config_path, sets, cfg); rc >= 0) return rc;
  DatasetPtr data(nullptr, &tgv_dataset_free);
  if (int rc = make_dataset(cfg, data); rc >= 0) return rc;
  ModelPtr model(nullptr, &tgv_model_free);
  if (checkpoint.empty()) {
    if (int rc = make_model(cfg, model); rc >= 0) return rc;
  } else {
    if (int rc = load_model(checkpoint, model); rc >= 0) return rc;
  }

  const tgv_status s =
      tgv_export_gates(model.get(), data.get(), sample, layer, submodule.c_str(),
                       format.c_str(), out_path.c_str());
  if (s != TGV_OK) return fail(s);
  if (int rc = write_resolved_config(cfg, out_path + ".config.json"); rc >= 0)
    return rc;
  std::printf("%s\n", out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-gated video transformer workbench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tgv_version());

  uint64_t gc_seed = 1;
  auto* grad_check = app.add_subcommand(
      "grad-check", "compare analytic gradients with finite differences");
  grad_check->add_option("--seed", gc_seed, "rng seed for the probe model");

  uint64_t oc_seed = 1;
  auto* oracle_check = app.add_subcommand(
      "oracle-check", "run the built-in consistency suite");
  oracle_check->add_option("--seed", oc_seed, "rng seed for random instances");

  std::string tr_config, tr_out, tr_label = "run";
  std::vector<std::string> tr_sets;
  auto* train = app.add_subcommand("train", "train one model from a config");
  train->add_option("--config", tr_config, "run config JSON")->required();
  train->add_option("--set", tr_sets, "dotted override, e.g. train.lr=0.002");
  train->add_option("--out", tr_out, "output directory")->required();
  train->add_option("--label", tr_label, "artifact basename (default: run)");

  std::string ev_config, ev_ckpt;
  std::vector<std::string> ev_sets;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  eval_cmd->add_option("--config", ev_config, "run config JSON (supplies the data)")
      ->required();
  eval_cmd->add_option("--set", ev_sets, "dotted override");
  eval_cmd->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();

  std::string ab_config, ab_out;
  std::vector<std::string> ab_sets;
  int64_t ab_workers = 1;
  auto* ablate = app.add_subcommand("ablate", "train the standard variant grid");
  ablate->add_option("--config", ab_config, "run config JSON")->required();
  ablate->add_option("--set", ab_sets, "dotted override");
  ablate->add_option("--out", ab_out, "output directory")->required();
  ablate->add_option("--workers", ab_workers, "concurrent training threads");

  std::string vz_config, vz_ckpt, vz_submodule = "temporal", vz_format = "csv", vz_out;
  std::vector<std::string> vz_sets;
  int64_t vz_sample = 0, vz_layer = 0;
  auto* viz = app.add_subcommand("viz-gates", "export a gate heatmap for one sample");
  viz->add_option("--config", vz_config, "run config JSON (supplies the data)")
      ->required();
  viz->add_option("--set", vz_sets, "dotted override");
  viz->add_option("--checkpoint", vz_ckpt,
                  "model checkpoint (default: fresh model from the config)");
  viz->add_option("--sample", vz_sample, "test-split sample index");
  viz->add_option("--layer", vz_layer, "layer index");
  viz->add_option("--submodule", vz_submodule, "spatial|temporal|mlp");
  viz->add_option("--format", vz_format, "csv|pgm");
  viz->add_option("--out", vz_out, "heatmap output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the diagnostic
    return 2;
  }

  if (*grad_check) return run_check(&tgv_grad_check, gc_seed);
  if (*oracle_check) return run_check(&tgv_oracle_check, oc_seed);
  if (*train) return cmd_train(tr_config, tr_sets, tr_out, tr_label);
  if (*eval_cmd) return cmd_eval(ev_config, ev_sets, ev_ckpt);
  if (*ablate) return cmd_ablate(ab_config, ab_sets, ab_out, ab_workers);
  if (*viz)
    return cmd_viz_gates(vz_config, vz_sets, vz_ckpt, vz_sample, vz_layer,
                         vz_submodule, vz_format, vz_out);
  return 2;
}
