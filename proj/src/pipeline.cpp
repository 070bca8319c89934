#include "tgv/pipeline.hpp"

#include <cmath>
#include <cstdio>

#include "tgv/errors.hpp"
#include "tgv/ops.hpp"

namespace tgv {

void PipelineConfig::validate() const {
  if (tg.num_layers < 0)
    throw ConfigError("num_layers must be >= 0, got " + std::to_string(tg.num_layers));
  if (tg.num_layers == 0) {
    // No TG stack; only the shared embedding-width constraints apply.
    if (tg.d_model < 2 || tg.d_model % 2 != 0)
      throw ConfigError("d_model must be a positive even integer, got " +
                        std::to_string(tg.d_model));
  } else {
    tg.validate();
  }
  if (l_q < 1) throw ConfigError("l_q must be >= 1, got " + std::to_string(l_q));
  if (l_t < 0) throw ConfigError("l_t must be >= 0, got " + std::to_string(l_t));
  if (d_t < 0) throw ConfigError("d_t must be positive (or 0 for the default)");
  if (num_classes < 2)
    throw ConfigError("num_classes must be >= 2, got " + std::to_string(num_classes));
}

Tensor compress_frames(const Tensor& v, const CompressorParams& p) {
  if (v.rank() != 3)
    throw ShapeError("compress_frames expects [T, L_V, D_V], got " +
                     shape_str(v.shape()));
  const int64_t d = v.shape()[2];
  if (p.queries.rank() != 2 || p.queries.shape()[1] != d)
    throw ShapeError("queries must be [L_q, " + std::to_string(d) + "], got " +
                     shape_str(p.queries.shape()));
  Tensor tokens = layer_norm(v, p.ln.gain, p.ln.bias);
  Tensor q = matmul(p.queries, p.w_q);    // [L_q, D]
  Tensor k = matmul(tokens, p.w_k);       // [T, L_V, D]
  Tensor val = matmul(tokens, p.w_v);
  Tensor scores = scale(matmul(q, permute(k, {0, 2, 1})),
                        1.0 / std::sqrt(static_cast<double>(d)));  // [T, L_q, L_V]
  Tensor mixed = matmul(softmax(scores, -1), val);                 // [T, L_q, D]
  return matmul(mixed, p.w_o);
}

Tensor fuse_video_text(const Tensor& v_q, const Tensor& text, const FusionParams& f) {
  if (v_q.rank() != 3)
    throw ShapeError("fuse_video_text expects [T, L_q, D_V], got " +
                     shape_str(v_q.shape()));
  if (f.w_vt.rank() != 2 || f.w_vt.shape()[0] != v_q.shape()[2])
    throw ShapeError("w_vt must be [" + std::to_string(v_q.shape()[2]) +
                     ", D_T], got " + shape_str(f.w_vt.shape()));
  if (text.rank() != 2 || text.shape()[1] != f.w_vt.shape()[1])
    throw ShapeError("text width " + shape_str(text.shape()) +
                     " does not match projection " + shape_str(f.w_vt.shape()));
  const int64_t t = v_q.shape()[0], lq = v_q.shape()[1], d = v_q.shape()[2];
  Tensor rows = matmul(reshape(v_q, {t * lq, d}), f.w_vt);  // [T*L_q, D_T]
  return concat(rows, text, 0);
}

Tensor classify(const Tensor& fused, const HeadParams& head) {
  if (fused.rank() != 2)
    throw ShapeError("classify expects [n, D_T], got " + shape_str(fused.shape()));
  const int64_t dt = fused.shape()[1];
  if (head.w.rank() != 2 || head.w.shape()[0] != dt)
    throw ShapeError("head weight must be [" + std::to_string(dt) + ", classes], got " +
                     shape_str(head.w.shape()));
  const int64_t c = head.w.shape()[1];
  Tensor pooled = mean_rows(fused);  // [D_T]
  Tensor logits = add(matmul(reshape(pooled, {1, dt}), head.w), reshape(head.b, {1, c}));
  return reshape(logits, {c});
}

Model::Model(PipelineConfig cfg, uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  const int64_t d = cfg_.tg.d_model;
  const int64_t dt = cfg_.resolved_d_t();
  Rng init = Rng(seed).substream("init");

  // Maps get fan-in scaling (see init_layer); the learned query and text
  // rows are activation-like, so they start at unit per-channel scale.
  auto trunc = [&](const std::string& name, Shape shape, double stddev) {
    Rng stream = init.substream(name);
    return Tensor::truncated_normal(std::move(shape), stddev, stream, true);
  };
  auto fan_in = [&](const std::string& name, Shape shape) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(shape[0]));
    return trunc(name, std::move(shape), stddev);
  };

  for (int64_t i = 0; i < cfg_.tg.num_layers; ++i)
    stack_.push_back(init_layer(cfg_.tg, init, i));

  compressor_.queries = trunc("compressor.queries", {cfg_.l_q, d}, 1.0);
  compressor_.w_q = fan_in("compressor.w_q", {d, d});
  compressor_.w_k = fan_in("compressor.w_k", {d, d});
  compressor_.w_v = fan_in("compressor.w_v", {d, d});
  compressor_.w_o = fan_in("compressor.w_o", {d, d});
  compressor_.ln = {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
  fusion_.w_vt = fan_in("fusion.w_vt", {d, dt});
  text_ = trunc("text.embed", {cfg_.l_t, dt}, 1.0);
  head_.w = fan_in("head.w", {dt, cfg_.num_classes});
  head_.b = Tensor::zeros({cfg_.num_classes}, true);

  for (int64_t i = 0; i < cfg_.tg.num_layers; ++i) {
    const std::string prefix = "tg.layers." + std::to_string(i) + ".";
    for (auto& [rel, t] : stack_[static_cast<size_t>(i)].named())
      params_.emplace_back(prefix + rel, t);
  }
  params_.emplace_back("compressor.queries", compressor_.queries);
  params_.emplace_back("compressor.w_q", compressor_.w_q);
  params_.emplace_back("compressor.w_k", compressor_.w_k);
  params_.emplace_back("compressor.w_v", compressor_.w_v);
  params_.emplace_back("compressor.w_o", compressor_.w_o);
  params_.emplace_back("compressor.ln_gain", compressor_.ln.gain);
  params_.emplace_back("compressor.ln_bias", compressor_.ln.bias);
  params_.emplace_back("fusion.w_vt", fusion_.w_vt);
  params_.emplace_back("text.embed", text_);
  params_.emplace_back("head.w", head_.w);
  params_.emplace_back("head.b", head_.b);
}

ModelOutput Model::forward(const Tensor& video, GateCaptureSink* sink) const {
  if (video.rank() != 3 || video.shape()[2] != cfg_.tg.d_model)
    throw ShapeError("model expects video [T, L_V, " + std::to_string(cfg_.tg.d_model) +
                     "], got " + shape_str(video.shape()));
  Tensor x = video;
  if (cfg_.tg.num_layers > 0) x = tg_forward(x, stack_, cfg_.tg, sink);
  Tensor compressed = compress_frames(x, compressor_);
  Tensor fused = fuse_video_text(compressed, text_, fusion_);
  ModelOutput out;
  out.logits = classify(fused, head_);
  out.fused_length = fused.shape()[0];
  return out;
}

Tensor Model::loss(const Tensor& video, int64_t label, GateCaptureSink* sink) const {
  return cross_entropy_logits(forward(video, sink).logits, label);
}

void Model::zero_grad() const {
  for (const auto& [name, t] : params_) {
    Tensor handle = t;
    handle.zero_grad();
  }
}

std::string gate_override_name(GateOverride o) {
  switch (o) {
    case GateOverride::None:
      return "none";
    case GateOverride::ForceZero:
      return "force_zero";
    case GateOverride::ForceOne:
      return "force_one";
  }
  return "none";
}

GateOverride gate_override_from_name(const std::string& s) {
  if (s == "none") return GateOverride::None;
  if (s == "force_zero") return GateOverride::ForceZero;
  if (s == "force_one") return GateOverride::ForceOne;
  throw ConfigError("unknown gate_override '" + s +
                    "' (expected none|force_zero|force_one)");
}

std::map<std::string, std::string> config_to_manifest(const PipelineConfig& cfg) {
  std::map<std::string, std::string> m;
  m["format_version"] = "1";
  m["tg.num_layers"] = std::to_string(cfg.tg.num_layers);
  m["tg.d_model"] = std::to_string(cfg.tg.d_model);
  m["tg.num_heads"] = std::to_string(cfg.tg.num_heads);
  m["tg.mlp_hidden"] = std::to_string(cfg.tg.mlp_hidden);
  m["tg.rope_enabled"] = manifest_bool(cfg.tg.rope_enabled);
  m["tg.gating_enabled"] = manifest_bool(cfg.tg.gating_enabled);
  m["tg.spatial_enabled"] = manifest_bool(cfg.tg.spatial_enabled);
  m["tg.temporal_enabled"] = manifest_bool(cfg.tg.temporal_enabled);
  m["tg.mlp_enabled"] = manifest_bool(cfg.tg.mlp_enabled);
  m["tg.gate_override"] = gate_override_name(cfg.tg.gate_override);
  m["tg.ln_eps"] = manifest_double(cfg.tg.ln_eps);
  m["l_q"] = std::to_string(cfg.l_q);
  m["d_t"] = std::to_string(cfg.d_t);
  m["l_t"] = std::to_string(cfg.l_t);
  m["num_classes"] = std::to_string(cfg.num_classes);
  return m;
}

PipelineConfig config_from_manifest(const std::map<std::string, std::string>& m) {
  PipelineConfig cfg;
  cfg.tg.num_layers = manifest_int(m, "tg.num_layers");
  cfg.tg.d_model = manifest_int(m, "tg.d_model");
  cfg.tg.num_heads = manifest_int(m, "tg.num_heads");
  cfg.tg.mlp_hidden = manifest_int(m, "tg.mlp_hidden");
  cfg.tg.rope_enabled = manifest_flag(m, "tg.rope_enabled");
  cfg.tg.gating_enabled = manifest_flag(m, "tg.gating_enabled");
  cfg.tg.spatial_enabled = manifest_flag(m, "tg.spatial_enabled");
  cfg.tg.temporal_enabled = manifest_flag(m, "tg.temporal_enabled");
  cfg.tg.mlp_enabled = manifest_flag(m, "tg.mlp_enabled");
  cfg.tg.gate_override = gate_override_from_name(manifest_get(m, "tg.gate_override"));
  cfg.tg.ln_eps = manifest_real(m, "tg.ln_eps");
  cfg.l_q = manifest_int(m, "l_q");
  cfg.d_t = manifest_int(m, "d_t");
  cfg.l_t = manifest_int(m, "l_t");
  cfg.num_classes = manifest_int(m, "num_classes");
  return cfg;
}

void Model::save(const std::string& path,
                 const std::map<std::string, std::string>& extra_manifest) const {
  Container c;
  c.manifest = config_to_manifest(cfg_);
  c.manifest["seed"] = std::to_string(seed_);
  for (const auto& [k, v] : extra_manifest) c.manifest[k] = v;
  for (const auto& [name, t] : params_) c.tensors.emplace_back(name, t);
  write_container(c, path);
}

Model Model::load(const std::string& path) {
  Container c = read_container(path);
  PipelineConfig cfg = config_from_manifest(c.manifest);
  const uint64_t seed = manifest_u64(c.manifest, "seed");
  Model m(cfg, seed);
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : c.tensors) by_name.emplace(name, t);
  for (auto& [name, t] : m.params_) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw IoError("checkpoint " + path + " missing tensor '" + name + "'");
    if (it->second.shape() != t.shape())
      throw IoError("checkpoint tensor '" + name + "' has shape " +
                    shape_str(it->second.shape()) + ", expected " +
                    shape_str(t.shape()));
    std::copy(it->second.data(), it->second.data() + it->second.size(), t.data());
  }
  return m;
}

}  // namespace tgv
