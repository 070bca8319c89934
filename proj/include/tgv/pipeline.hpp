#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tgv/block.hpp"
#include "tgv/checkpoint.hpp"

namespace tgv {

/// End-to-end model configuration. The TG stack sits between the raw video
/// embeddings and the per-frame compressor; num_layers == 0 means "no TG
/// stack at all" (the ablation baseline) and bypasses TGConfig's own
/// at-least-one-layer invariant.
struct PipelineConfig {
  TGConfig tg;
  int64_t l_q = 32;        // query tokens per frame
  int64_t d_t = 0;         // text width; 0 = same as tg.d_model
  int64_t l_t = 4;         // learnable text rows
  int64_t num_classes = 2;

  int64_t resolved_d_t() const { return d_t > 0 ? d_t : tg.d_model; }
  void validate() const;
};

/// Single-block cross-attention that shrinks each frame from L_V tokens to
/// L_q learned queries.
struct CompressorParams {
  Tensor queries;             // [L_q, D_V]
  Tensor w_q, w_k, w_v, w_o;  // [D_V, D_V]
  LayerNormParams ln;         // applied to the frame tokens
};

struct FusionParams {
  Tensor w_vt;  // [D_V, D_T]
};

struct HeadParams {
  Tensor w;  // [D_T, num_classes]
  Tensor b;  // [num_classes]
};

struct ModelOutput {
  Tensor logits;  // [num_classes], graph-connected
  int64_t fused_length = 0;
};

/// Per frame: queries attend over that frame's (normalized) tokens with a
/// single full-width head. Frames never mix.
Tensor compress_frames(const Tensor& v, const CompressorParams& p);

/// [V_Q W_VT ; text]: flatten to [T*L_q, D_V], project into text space, and
/// append the text rows.
Tensor fuse_video_text(const Tensor& v_q, const Tensor& text, const FusionParams& f);

/// Mean-pool the fused rows and project to class logits.
Tensor classify(const Tensor& fused, const HeadParams& head);

/// The full desk-scale model: TG stack -> compressor -> fusion with
/// learnable text rows -> classification head. One instance, one thread.
class Model {
 public:
  Model(PipelineConfig cfg, uint64_t seed);

  const PipelineConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }

  ModelOutput forward(const Tensor& video, GateCaptureSink* sink = nullptr) const;
  /// Cross-entropy of forward(video) against an integer label.
  Tensor loss(const Tensor& video, int64_t label,
              GateCaptureSink* sink = nullptr) const;

  /// Stable name->tensor listing of every trainable parameter.
  const std::vector<std::pair<std::string, Tensor>>& named_params() const {
    return params_;
  }
  void zero_grad() const;

  /// Checkpoint I/O in the shared binary container; the manifest carries the
  /// config and seed, so load() reconstructs an identical model.
  void save(const std::string& path,
            const std::map<std::string, std::string>& extra_manifest = {}) const;
  static Model load(const std::string& path);

  const std::vector<TGLayerParams>& tg_stack() const { return stack_; }

 private:
  PipelineConfig cfg_;
  uint64_t seed_ = 0;
  std::vector<TGLayerParams> stack_;
  CompressorParams compressor_;
  FusionParams fusion_;
  Tensor text_;  // [L_T, D_T] learnable synthetic text rows
  HeadParams head_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

/// Flat key=value forms of PipelineConfig used in checkpoint manifests and
/// resolved-config dumps.
std::map<std::string, std::string> config_to_manifest(const PipelineConfig& cfg);
PipelineConfig config_from_manifest(const std::map<std::string, std::string>& m);

std::string gate_override_name(GateOverride o);
GateOverride gate_override_from_name(const std::string& s);

}  // namespace tgv
