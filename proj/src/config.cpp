#include "tgv/config.hpp"

#include <fstream>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace tgv {

namespace {

/// One dotted key into its field, with strict value parsing. This is the
/// single authority for both JSON documents and command-line overrides.
void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  const Manifest kv{{key, value}};
  auto I = [&] { return manifest_int(kv, key); };
  auto U = [&] { return manifest_u64(kv, key); };
  auto R = [&] { return manifest_real(kv, key); };
  auto B = [&] { return manifest_flag(kv, key); };

  if (key == "model.tg.num_layers") c.model.tg.num_layers = I();
  else if (key == "model.tg.d_model") c.model.tg.d_model = I();
  else if (key == "model.tg.num_heads") c.model.tg.num_heads = I();
  else if (key == "model.tg.mlp_hidden") c.model.tg.mlp_hidden = I();
  else if (key == "model.tg.rope_enabled") c.model.tg.rope_enabled = B();
  else if (key == "model.tg.gating_enabled") c.model.tg.gating_enabled = B();
  else if (key == "model.tg.spatial_enabled") c.model.tg.spatial_enabled = B();
  else if (key == "model.tg.temporal_enabled") c.model.tg.temporal_enabled = B();
  else if (key == "model.tg.mlp_enabled") c.model.tg.mlp_enabled = B();
  else if (key == "model.tg.gate_override")
    c.model.tg.gate_override = gate_override_from_name(value);
  else if (key == "model.tg.ln_eps") c.model.tg.ln_eps = R();
  else if (key == "model.l_q") c.model.l_q = I();
  else if (key == "model.d_t") c.model.d_t = I();
  else if (key == "model.l_t") c.model.l_t = I();
  else if (key == "model.num_classes") c.model.num_classes = I();
  else if (key == "data.task") c.data.task = task_from_name(value);
  else if (key == "data.n_train") c.data.n_train = I();
  else if (key == "data.n_test") c.data.n_test = I();
  else if (key == "data.T") c.data.T = I();
  else if (key == "data.g") c.data.g = I();
  else if (key == "data.d_v") c.data.d_v = I();
  else if (key == "data.noise_std") c.data.noise_std = R();
  else if (key == "data.seed") c.data.seed = U();
  else if (key == "train.epochs") c.train.epochs = I();
  else if (key == "train.batch") c.train.batch = I();
  else if (key == "train.micro_batch") c.train.micro_batch = I();
  else if (key == "train.lr") c.train.lr = R();
  else if (key == "train.beta1") c.train.beta1 = R();
  else if (key == "train.beta2") c.train.beta2 = R();
  else if (key == "train.eps") c.train.eps = R();
  else if (key == "train.weight_decay") c.train.weight_decay = R();
  else if (key == "train.warmup_ratio") c.train.warmup_ratio = R();
  else if (key == "train.eval_every") c.train.eval_every = I();
  else if (key == "train.seed") c.train.seed = U();
  else throw ConfigError("unknown config key '" + key + "'");
}

void flatten(const nlohmann::json& j, const std::string& prefix,
             const std::string& origin,
             std::vector<std::pair<std::string, std::string>>& out) {
  if (!j.is_object())
    throw ConfigError(origin + ": expected an object at '" +
                      (prefix.empty() ? "<root>" : prefix) + "'");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    const nlohmann::json& v = it.value();
    if (v.is_object()) {
      // An empty object contributes no keys, so name-check it explicitly.
      if (v.empty() && key != "model" && key != "model.tg" && key != "data" &&
          key != "train")
        throw ConfigError(origin + ": unknown config section '" + key + "'");
      flatten(v, key, origin, out);
    } else if (v.is_boolean()) {
      out.emplace_back(key, v.get<bool>() ? "true" : "false");
    } else if (v.is_number_unsigned()) {
      out.emplace_back(key, std::to_string(v.get<uint64_t>()));
    } else if (v.is_number_integer()) {
      out.emplace_back(key, std::to_string(v.get<int64_t>()));
    } else if (v.is_number_float()) {
      out.emplace_back(key, manifest_double(v.get<double>()));
    } else if (v.is_string()) {
      out.emplace_back(key, v.get<std::string>());
    } else {
      throw ConfigError(origin + ": unsupported value at '" + key +
                        "' (expected an object, number, boolean, or string)");
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  data.validate();
  train.validate();
  if (data.d_v != model.tg.d_model)
    throw ConfigError("data.d_v (" + std::to_string(data.d_v) +
                      ") must equal model.tg.d_model (" +
                      std::to_string(model.tg.d_model) + ")");
}

RunConfig parse_run_config(const std::string& json_text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  std::vector<std::pair<std::string, std::string>> kv;
  flatten(j, "", origin, kv);
  RunConfig cfg;
  for (const auto& [key, value] : kv) set_key(cfg, key, value);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), path);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' must look like key=value");
  set_key(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments) {
  for (const std::string& a : assignments) apply_override(cfg, a);
}

std::string run_config_json(const RunConfig& c) {
  nlohmann::json j;
  nlohmann::json& tg = j["model"]["tg"];
  tg["num_layers"] = c.model.tg.num_layers;
  tg["d_model"] = c.model.tg.d_model;
  tg["num_heads"] = c.model.tg.num_heads;
  tg["mlp_hidden"] = c.model.tg.mlp_hidden;
  tg["rope_enabled"] = c.model.tg.rope_enabled;
  tg["gating_enabled"] = c.model.tg.gating_enabled;
  tg["spatial_enabled"] = c.model.tg.spatial_enabled;
  tg["temporal_enabled"] = c.model.tg.temporal_enabled;
  tg["mlp_enabled"] = c.model.tg.mlp_enabled;
  tg["gate_override"] = gate_override_name(c.model.tg.gate_override);
  tg["ln_eps"] = c.model.tg.ln_eps;
  j["model"]["l_q"] = c.model.l_q;
  j["model"]["d_t"] = c.model.d_t;
  j["model"]["l_t"] = c.model.l_t;
  j["model"]["num_classes"] = c.model.num_classes;
  j["data"]["task"] = task_name(c.data.task);
  j["data"]["n_train"] = c.data.n_train;
  j["data"]["n_test"] = c.data.n_test;
  j["data"]["T"] = c.data.T;
  j["data"]["g"] = c.data.g;
  j["data"]["d_v"] = c.data.d_v;
  j["data"]["noise_std"] = c.data.noise_std;
  j["data"]["seed"] = c.data.seed;
  j["train"]["epochs"] = c.train.epochs;
  j["train"]["batch"] = c.train.batch;
  j["train"]["micro_batch"] = c.train.micro_batch;
  j["train"]["lr"] = c.train.lr;
  j["train"]["beta1"] = c.train.beta1;
  j["train"]["beta2"] = c.train.beta2;
  j["train"]["eps"] = c.train.eps;
  j["train"]["weight_decay"] = c.train.weight_decay;
  j["train"]["warmup_ratio"] = c.train.warmup_ratio;
  j["train"]["eval_every"] = c.train.eval_every;
  j["train"]["seed"] = c.train.seed;
  return j.dump(2) + "\n";
}

}  // namespace tgv
