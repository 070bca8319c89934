#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tgv/ops.hpp"
#include "tgv/tensor.hpp"

namespace tgv {

/// Gate behaviour for gated residuals: None computes the learned sigmoid
/// gate; ForceZero pins the gate to 0 (sublayer becomes the identity);
/// ForceOne pins it to 1 (plain ungated residual).
enum class GateOverride { None, ForceZero, ForceOne };

enum class Submodule { Spatial, Temporal, Mlp };
const char* submodule_name(Submodule s);

/// The factorized views of a [T, L_V, D_V] video tensor. S keeps frames as
/// the batch axis (attention over the L_V sites of one frame); T makes the
/// sites the batch axis (attention over the T frames at one site); M
/// restores the original arrangement.
enum class ViewMode { S, T, M };

struct TGConfig {
  int64_t num_layers = 3;
  int64_t d_model = 64;
  int64_t num_heads = 4;
  int64_t mlp_hidden = 0;  // 0 = auto: 4*d_model rounded up to a multiple of 8
  bool rope_enabled = true;
  bool gating_enabled = true;
  bool spatial_enabled = true;
  bool temporal_enabled = true;
  bool mlp_enabled = true;
  GateOverride gate_override = GateOverride::None;
  double ln_eps = 1e-5;

  int64_t resolved_mlp_hidden() const;
  int64_t head_dim() const { return d_model / num_heads; }
  /// Throws ConfigError when any field is out of contract.
  void validate() const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

struct AttentionParams {
  Tensor w_q, w_k, w_v, w_o;  // each [D_V, D_V]
  LayerNormParams ln;
};

struct MlpParams {
  Tensor w1, w3;  // [D_V, hidden]
  Tensor w2;      // [hidden, D_V]
  LayerNormParams ln;
};

struct TGLayerParams {
  AttentionParams spatial;
  AttentionParams temporal;
  MlpParams mlp;
  // Gate projections, each [2*D_V, D_V]; zero at init so gates start at 0.5.
  Tensor gate_spatial, gate_temporal, gate_mlp;

  /// Stable (name, handle) listing of every parameter in this layer.
  std::vector<std::pair<std::string, Tensor>> named() const;
};

/// One captured gate tensor: the sigmoid outputs of a gated residual,
/// shaped exactly as the sublayer output in its own view (temporal gates
/// arrive as [L_V, T, D_V]).
struct GateCapture {
  int64_t layer = 0;
  Submodule submodule = Submodule::Spatial;
  Tensor values;
};

/// Per-forward-pass collector; never shared across threads.
struct GateCaptureSink {
  std::vector<GateCapture> entries;
};

/// Pure index permutation between the factorized views; values unchanged.
Tensor axis_view(const Tensor& v, ViewMode mode);

/// Pre-normalized multi-head self-attention over [batch, seq, D_V]:
/// optional RoPE on queries/keys, scaled dot-product with scale
/// 1/sqrt(D_V/H), softmax over keys, value mix, head concat, output
/// projection. The caller applies layer norm; this op sees its input as-is.
Tensor multi_head_self_attention(const Tensor& x, const AttentionParams& p,
                                 int64_t num_heads, bool rope);

/// (SiLU(x W1) ⊙ x W3) W2, token-wise over the last axis.
Tensor swiglu_mlp(const Tensor& x, const MlpParams& p);

struct GatedResult {
  Tensor out;
  Tensor gate;
};

/// out = g ⊙ sub_out + sub_in with g = σ(Cat(sub_in, sub_out) w_gate).
/// ForceZero returns sub_in itself (bitwise identity); ForceOne returns the
/// plain residual sum.
GatedResult gated_residual(const Tensor& sub_in, const Tensor& sub_out,
                           const Tensor& w_gate, GateOverride override_mode);

/// One TG layer over [T, L_V, D_V]: gated spatial attention in the S view,
/// gated temporal attention in the T view, gated MLP in the M view.
/// Disabled submodules are skipped entirely. Gate tensors stream into
/// `sink` when provided.
Tensor tg_layer_forward(const Tensor& v, const TGLayerParams& params,
                        const TGConfig& cfg, int64_t layer_index = 0,
                        GateCaptureSink* sink = nullptr);

/// Sequential application of cfg.num_layers TG layers.
Tensor tg_forward(const Tensor& v, const std::vector<TGLayerParams>& stack,
                  const TGConfig& cfg, GateCaptureSink* sink = nullptr);

/// Fresh layer parameters: attention/MLP weights truncated normal with
/// fan-in scaling (std 1/sqrt(rows)), layer-norm gain 1 / bias 0, gate
/// projections exactly zero. Each tensor draws from its own name-derived
/// substream of `base`, so adding or removing other tensors never shifts
/// its values.
TGLayerParams init_layer(const TGConfig& cfg, const Rng& base,
                         int64_t layer_index = 0);

}  // namespace tgv
