#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <string>

#include "doctest.h"
#include "tgv/config.hpp"

using namespace tgv;

TEST_CASE("defaults survive an empty document") {
  RunConfig cfg = parse_run_config("{}", "test");
  CHECK(cfg.model.tg.num_layers == 3);
  CHECK(cfg.model.tg.d_model == 64);
  CHECK(cfg.model.l_q == 32);
  CHECK(cfg.data.task == Task::Direction);
  CHECK(cfg.data.n_train == 2000);
  CHECK(cfg.data.n_test == 500);
  CHECK(cfg.train.epochs == 2);
  CHECK(cfg.train.batch == 64);
  CHECK(cfg.train.lr == 1e-3);
  CHECK(cfg.train.warmup_ratio == 0.03);
  cfg.validate();
}

TEST_CASE("nested values land in the right fields") {
  const std::string text = R"({
    "model": {
      "tg": { "num_layers": 4, "rope_enabled": false, "gate_override": "force_one",
              "ln_eps": 1e-6 },
      "l_q": 8, "num_classes": 3
    },
    "data": { "task": "order", "T": 12, "noise_std": 0.25, "seed": 77 },
    "train": { "epochs": 5, "lr": 0.002, "seed": 42 }
  })";
  RunConfig cfg = parse_run_config(text, "test");
  CHECK(cfg.model.tg.num_layers == 4);
  CHECK(cfg.model.tg.rope_enabled == false);
  CHECK(cfg.model.tg.gate_override == GateOverride::ForceOne);
  CHECK(cfg.model.tg.ln_eps == 1e-6);
  CHECK(cfg.model.l_q == 8);
  CHECK(cfg.model.num_classes == 3);
  CHECK(cfg.data.task == Task::Order);
  CHECK(cfg.data.T == 12);
  CHECK(cfg.data.noise_std == 0.25);
  CHECK(cfg.data.seed == 77);
  CHECK(cfg.train.epochs == 5);
  CHECK(cfg.train.lr == 0.002);
  CHECK(cfg.train.seed == 42);
  // Untouched fields keep defaults.
  CHECK(cfg.model.tg.gating_enabled == true);
  CHECK(cfg.train.batch == 64);
}

TEST_CASE("unknown keys are rejected with their full path") {
  try {
    parse_run_config(R"({"model": {"tg": {"numm_layers": 3}}})", "test");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("model.tg.numm_layers") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_run_config(R"({"modell": {}})", "test"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"tg": {"extra": 1}}})", "test"),
                  ConfigError);
}

TEST_CASE("types are checked strictly") {
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"epochs": 2.5}})", "test"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"epochs": "two"}})", "test"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"tg": {"rope_enabled": "maybe"}}})",
                                   "test"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"data": {"seed": -4}})", "test"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"data": {"task": "sorting"}})", "test"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"epochs": [1]}})", "test"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": 3})", "test"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[1,2]", "test"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{not json", "test"), ConfigError);
  // Floats are fine where reals are expected, including integral floats.
  RunConfig cfg = parse_run_config(R"({"train": {"lr": 1, "weight_decay": 0}})",
                                   "test");
  CHECK(cfg.train.lr == 1.0);
  CHECK(cfg.train.weight_decay == 0.0);
}

TEST_CASE("overrides reuse the same key space and strictness") {
  RunConfig cfg;
  apply_override(cfg, "model.tg.num_layers=5");
  apply_override(cfg, "train.lr=0.0005");
  apply_override(cfg, "data.task=static");
  apply_override(cfg, "model.tg.gating_enabled=false");
  CHECK(cfg.model.tg.num_layers == 5);
  CHECK(cfg.train.lr == 0.0005);
  CHECK(cfg.data.task == Task::Static);
  CHECK(cfg.model.tg.gating_enabled == false);

  CHECK_THROWS_AS(apply_override(cfg, "nonsense"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "=5"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "train.speed=9"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "train.lr=fast"), ConfigError);
  apply_overrides(cfg, {"train.batch=16", "train.micro_batch=4"});
  CHECK(cfg.train.batch == 16);
  CHECK(cfg.train.micro_batch == 4);
}

TEST_CASE("resolved dumps reparse to the same configuration") {
  RunConfig cfg;
  apply_overrides(cfg, {"model.tg.num_layers=2", "model.tg.ln_eps=3e-7",
                        "data.noise_std=0.125", "data.task=order",
                        "train.lr=0.00073", "train.warmup_ratio=0.05",
                        "train.seed=1234567890123"});
  const std::string dump = run_config_json(cfg);
  RunConfig back = parse_run_config(dump, "dump");
  CHECK(run_config_json(back) == dump);
  CHECK(back.model.tg.num_layers == 2);
  CHECK(back.model.tg.ln_eps == 3e-7);
  CHECK(back.data.noise_std == 0.125);
  CHECK(back.data.task == Task::Order);
  CHECK(back.train.lr == 0.00073);
  CHECK(back.train.warmup_ratio == 0.05);
  CHECK(back.train.seed == 1234567890123ull);
}

TEST_CASE("file loading reports by path") {
  const std::string path = "/tmp/tgv_test_config.json";
  {
    std::ofstream f(path);
    f << R"({"train": {"epochs": 9}})";
  }
  RunConfig cfg = load_run_config(path);
  CHECK(cfg.train.epochs == 9);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_run_config("/tmp/tgv_missing_config.json"), IoError);
}

TEST_CASE("cross-field validation catches width mismatches") {
  RunConfig cfg;
  apply_override(cfg, "data.d_v=32");
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  apply_override(cfg, "model.tg.d_model=32");
  cfg.validate();
}
