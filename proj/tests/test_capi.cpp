#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "doctest.h"
#include "tgv.h"

namespace {

std::string take(char* s) {
  REQUIRE(s != nullptr);
  std::string out(s);
  tgv_string_free(s);
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

std::string fresh_dir(const char* name) {
  const std::string path = std::string("/tmp/tgv_capi_") + name;
  std::filesystem::remove_all(path);
  std::filesystem::create_directories(path);
  return path;
}

// A configuration small enough that every workflow below finishes in
// milliseconds-to-seconds.
tgv_config* tiny_config() {
  tgv_config* cfg = nullptr;
  REQUIRE(tgv_config_create(&cfg) == TGV_OK);
  const char* sets[] = {
      "model.tg.num_layers=1", "model.tg.d_model=8",  "model.tg.num_heads=2",
      "model.tg.mlp_hidden=16", "model.l_q=2",        "model.l_t=2",
      "data.task=direction",    "data.n_train=8",     "data.n_test=4",
      "data.T=3",               "data.g=3",           "data.d_v=8",
      "data.noise_std=0.05",    "data.seed=3",        "train.epochs=1",
      "train.batch=4",          "train.micro_batch=2", "train.lr=0.003",
      "train.seed=5",
  };
  for (const char* s : sets) {
    INFO("override: ", s);
    REQUIRE(tgv_config_set(cfg, s) == TGV_OK);
  }
  REQUIRE(tgv_config_validate(cfg) == TGV_OK);
  return cfg;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(tgv_version()) == "0.1.0");
  CHECK(std::string(tgv_status_name(TGV_OK)) == "TGV_OK");
  CHECK(std::string(tgv_status_name(TGV_CHECK_FAILED)) == "TGV_CHECK_FAILED");
  CHECK(std::string(tgv_status_name(TGV_ERR_CONFIG)) == "TGV_ERR_CONFIG");
  CHECK(std::string(tgv_status_name(TGV_ERR_NUMERIC)) == "TGV_ERR_NUMERIC");
  tgv_string_free(nullptr);  // must be a no-op
  tgv_config_free(nullptr);
  tgv_dataset_free(nullptr);
  tgv_model_free(nullptr);
}

TEST_CASE("config lifecycle through the C surface") {
  tgv_config* cfg = nullptr;
  REQUIRE(tgv_config_create(&cfg) == TGV_OK);

  char* json = nullptr;
  REQUIRE(tgv_config_json(cfg, &json) == TGV_OK);
  const std::string defaults = take(json);
  CHECK(defaults.find("\"num_layers\": 3") != std::string::npos);

  CHECK(tgv_config_set(cfg, "model.tg.num_layers=5") == TGV_OK);
  CHECK(std::string(tgv_last_error()).empty());

  // Unknown key and malformed value map to TGV_ERR_CONFIG with a message.
  CHECK(tgv_config_set(cfg, "model.tg.numm_layers=5") == TGV_ERR_CONFIG);
  CHECK(std::string(tgv_last_error()).find("numm_layers") != std::string::npos);
  CHECK(tgv_config_set(cfg, "train.epochs=2.5") == TGV_ERR_CONFIG);
  CHECK(tgv_config_set(cfg, "no equals sign") == TGV_ERR_CONFIG);

  // Round-trip: the resolved JSON reparses to the same resolved JSON.
  char* js2 = nullptr;
  REQUIRE(tgv_config_json(cfg, &js2) == TGV_OK);
  const std::string dumped = take(js2);
  CHECK(dumped.find("\"num_layers\": 5") != std::string::npos);
  tgv_config* cfg2 = nullptr;
  REQUIRE(tgv_config_parse(dumped.c_str(), "roundtrip", &cfg2) == TGV_OK);
  char* js3 = nullptr;
  REQUIRE(tgv_config_json(cfg2, &js3) == TGV_OK);
  CHECK(take(js3) == dumped);
  tgv_config_free(cfg2);

  // Invalid JSON names its origin.
  tgv_config* bad = nullptr;
  CHECK(tgv_config_parse("{nope", "inline-test", &bad) == TGV_ERR_CONFIG);
  CHECK(std::string(tgv_last_error()).find("inline-test") != std::string::npos);

  // Cross-field validation failure surfaces as config error.
  CHECK(tgv_config_set(cfg, "data.d_v=48") == TGV_OK);
  CHECK(tgv_config_validate(cfg) == TGV_ERR_CONFIG);

  // Key lookup mirrors the override paths and canonicalizes values.
  char* value = nullptr;
  REQUIRE(tgv_config_get(cfg, "model.tg.num_layers", &value) == TGV_OK);
  CHECK(take(value) == "5");
  REQUIRE(tgv_config_get(cfg, "train.seed", &value) == TGV_OK);
  CHECK(take(value) == "1");
  REQUIRE(tgv_config_get(cfg, "data.task", &value) == TGV_OK);
  CHECK(take(value) == "direction");
  CHECK(tgv_config_get(cfg, "train.sneed", &value) == TGV_ERR_CONFIG);

  // NULL arguments are usage errors, not crashes.
  CHECK(tgv_config_create(nullptr) == TGV_ERR_USAGE);
  CHECK(tgv_config_set(nullptr, "a=b") == TGV_ERR_USAGE);
  CHECK(tgv_config_json(cfg, nullptr) == TGV_ERR_USAGE);
  tgv_config_free(cfg);
}

TEST_CASE("config file loading") {
  const std::string dir = fresh_dir("cfg");
  const std::string path = dir + "/run.json";
  {
    std::ofstream f(path);
    f << "{\"model\": {\"tg\": {\"num_layers\": 2}}}\n";
  }
  tgv_config* cfg = nullptr;
  REQUIRE(tgv_config_load(path.c_str(), &cfg) == TGV_OK);
  char* json = nullptr;
  REQUIRE(tgv_config_json(cfg, &json) == TGV_OK);
  CHECK(take(json).find("\"num_layers\": 2") != std::string::npos);
  tgv_config_free(cfg);

  tgv_config* missing = nullptr;
  CHECK(tgv_config_load((dir + "/absent.json").c_str(), &missing) == TGV_ERR_IO);
  CHECK(std::string(tgv_last_error()).find("absent.json") != std::string::npos);
}

TEST_CASE("dataset and model lifecycle") {
  tgv_config* cfg = tiny_config();
  tgv_dataset* data = nullptr;
  REQUIRE(tgv_dataset_create(cfg, &data) == TGV_OK);
  int64_t n_train = 0, n_test = 0;
  REQUIRE(tgv_dataset_sizes(data, &n_train, &n_test) == TGV_OK);
  CHECK(n_train == 8);
  CHECK(n_test == 4);

  tgv_model* model = nullptr;
  REQUIRE(tgv_model_create(cfg, 11, &model) == TGV_OK);
  double acc_fresh = -1.0;
  REQUIRE(tgv_evaluate(model, data, &acc_fresh) == TGV_OK);
  CHECK(acc_fresh >= 0.0);
  CHECK(acc_fresh <= 1.0);

  const std::string dir = fresh_dir("model");
  const std::string ckpt = dir + "/m.ckpt";
  REQUIRE(tgv_model_save(model, ckpt.c_str()) == TGV_OK);
  tgv_model* again = nullptr;
  REQUIRE(tgv_model_load(ckpt.c_str(), &again) == TGV_OK);
  double acc_again = -1.0;
  REQUIRE(tgv_evaluate(again, data, &acc_again) == TGV_OK);
  CHECK(acc_again == acc_fresh);

  CHECK(tgv_model_load((dir + "/none.ckpt").c_str(), &again) == TGV_ERR_IO);
  CHECK(tgv_evaluate(nullptr, data, &acc_again) == TGV_ERR_USAGE);
  CHECK(tgv_evaluate(model, nullptr, &acc_again) == TGV_ERR_USAGE);

  tgv_model_free(again);
  tgv_model_free(model);
  tgv_dataset_free(data);
  tgv_config_free(cfg);
}

TEST_CASE("grad and oracle checks through the C surface") {
  char* table = nullptr;
  REQUIRE(tgv_grad_check(4, &table) == TGV_OK);
  const std::string grad = take(table);
  CHECK(grad.find("PASS") != std::string::npos);
  CHECK(grad.find("FAIL") == std::string::npos);
  CHECK(grad.find("tg.layers.1.gate.temporal") != std::string::npos);

  char* otable = nullptr;
  REQUIRE(tgv_oracle_check(4, &otable) == TGV_OK);
  const std::string oracle = take(otable);
  CHECK(oracle.find("9/9 checks") != std::string::npos);

  // A NULL out-table is allowed: status only.
  CHECK(tgv_grad_check(4, nullptr) == TGV_OK);
  CHECK(tgv_oracle_check(4, nullptr) == TGV_OK);
}

TEST_CASE("training writes artifacts and reports") {
  tgv_config* cfg = tiny_config();
  tgv_dataset* data = nullptr;
  REQUIRE(tgv_dataset_create(cfg, &data) == TGV_OK);
  tgv_model* model = nullptr;
  REQUIRE(tgv_model_create(cfg, 5, &model) == TGV_OK);

  const std::string dir = fresh_dir("train");
  char* report = nullptr;
  REQUIRE(tgv_train(model, data, cfg, dir.c_str(), "probe", &report) == TGV_OK);
  const std::string rj = take(report);
  CHECK(rj.find("\"final_train_loss\"") != std::string::npos);
  CHECK(rj.find("\"label\": \"probe\"") != std::string::npos);
  CHECK(std::filesystem::exists(dir + "/probe.ckpt"));
  CHECK(std::filesystem::exists(dir + "/probe.report.json"));
  CHECK(slurp(dir + "/probe.report.json") == rj);

  tgv_model_free(model);
  tgv_dataset_free(data);
  tgv_config_free(cfg);
}

TEST_CASE("ablation sweep through the C surface") {
  tgv_config* cfg = tiny_config();
  tgv_dataset* data = nullptr;
  REQUIRE(tgv_dataset_create(cfg, &data) == TGV_OK);

  const std::string dir = fresh_dir("ablate");
  char* csv = nullptr;
  REQUIRE(tgv_ablate(data, cfg, dir.c_str(), 3, &csv) == TGV_OK);
  const std::string table = take(csv);
  CHECK(table.rfind("label,n_layers,spatial,temporal,mlp,gating,", 0) == 0);
  CHECK(table.find("03_tg_full") != std::string::npos);
  CHECK(table.find("16_sweep_n6") != std::string::npos);
  CHECK(slurp(dir + "/ablation.csv") == table);
  CHECK(std::filesystem::exists(dir + "/03_tg_full.ckpt"));

  CHECK(tgv_ablate(data, cfg, nullptr, 1, &csv) == TGV_ERR_USAGE);
  CHECK(tgv_ablate(data, cfg, "", 1, &csv) == TGV_ERR_USAGE);

  tgv_dataset_free(data);
  tgv_config_free(cfg);
}

TEST_CASE("gate heatmap export through the C surface") {
  tgv_config* cfg = tiny_config();
  tgv_dataset* data = nullptr;
  REQUIRE(tgv_dataset_create(cfg, &data) == TGV_OK);
  tgv_model* model = nullptr;
  REQUIRE(tgv_model_create(cfg, 9, &model) == TGV_OK);

  const std::string dir = fresh_dir("gates");
  const std::string csv_path = dir + "/gates.csv";
  REQUIRE(tgv_export_gates(model, data, 0, 0, "temporal", "csv",
                           csv_path.c_str()) == TGV_OK);
  // Fresh gate projections are zero, so every pooled value is exactly 0.5.
  CHECK(slurp(csv_path).rfind("0.5,", 0) == 0);

  const std::string pgm_path = dir + "/gates.pgm";
  REQUIRE(tgv_export_gates(model, data, 1, 0, "spatial", "pgm",
                           pgm_path.c_str()) == TGV_OK);
  CHECK(slurp(pgm_path).rfind("P5\n", 0) == 0);

  CHECK(tgv_export_gates(model, data, 99, 0, "temporal", "csv",
                         csv_path.c_str()) == TGV_ERR_USAGE);
  CHECK(tgv_export_gates(model, data, 0, 7, "temporal", "csv",
                         csv_path.c_str()) == TGV_ERR_USAGE);
  CHECK(tgv_export_gates(model, data, 0, 0, "sideways", "csv",
                         csv_path.c_str()) == TGV_ERR_CONFIG);
  CHECK(tgv_export_gates(model, data, 0, 0, "temporal", "bmp",
                         csv_path.c_str()) == TGV_ERR_CONFIG);

  // A model with gating disabled refuses capture.
  tgv_config* ungated = tiny_config();
  REQUIRE(tgv_config_set(ungated, "model.tg.gating_enabled=false") == TGV_OK);
  tgv_model* plain = nullptr;
  REQUIRE(tgv_model_create(ungated, 9, &plain) == TGV_OK);
  CHECK(tgv_export_gates(plain, data, 0, 0, "temporal", "csv",
                         csv_path.c_str()) == TGV_ERR_USAGE);
  CHECK(std::string(tgv_last_error()).find("gating") != std::string::npos);

  tgv_model_free(plain);
  tgv_config_free(ungated);
  tgv_model_free(model);
  tgv_dataset_free(data);
  tgv_config_free(cfg);
}
