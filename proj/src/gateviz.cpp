#include "tgv/gateviz.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "tgv/ops.hpp"

namespace tgv {

Tensor capture_gates(const Model& model, const Tensor& video, int64_t layer,
                     Submodule which) {
  const TGConfig& tg = model.config().tg;
  if (!tg.gating_enabled)
    throw UsageError("gate capture requires gating_enabled=true");
  if (tg.gate_override != GateOverride::None)
    throw UsageError("gate capture requires gate_override=none; '" +
                     gate_override_name(tg.gate_override) +
                     "' pins the gates to a constant");
  const bool submodule_on = which == Submodule::Spatial    ? tg.spatial_enabled
                            : which == Submodule::Temporal ? tg.temporal_enabled
                                                           : tg.mlp_enabled;
  if (!submodule_on)
    throw UsageError(std::string("gate capture: the ") + submodule_name(which) +
                     " submodule is disabled");
  if (layer < 0 || layer >= tg.num_layers)
    throw UsageError("gate capture: layer " + std::to_string(layer) +
                     " outside [0, " + std::to_string(tg.num_layers) + ")");

  NoGradGuard ng;
  GateCaptureSink sink;
  (void)model.forward(video, &sink);
  for (const GateCapture& c : sink.entries)
    if (c.layer == layer && c.submodule == which) return c.values;
  throw UsageError("gate capture: no gates recorded for layer " +
                   std::to_string(layer));
}

Tensor capture_temporal_gates(const Model& model, const Tensor& video,
                              int64_t layer) {
  return capture_gates(model, video, layer, Submodule::Temporal);
}

Heatmap pool_gates(const Tensor& gates) {
  if (gates.rank() != 3)
    throw ShapeError("pool_gates expects a rank-3 gate tensor, got " +
                     shape_str(gates.shape()));
  const int64_t a = gates.shape()[0], b = gates.shape()[1], d = gates.shape()[2];
  Heatmap h;
  Tensor out = Tensor::zeros({a, b});
  const double* src = gates.data();
  double* dst = out.data();
  for (int64_t i = 0; i < a * b; ++i) {
    double sum = 0.0;
    for (int64_t k = 0; k < d; ++k) sum += src[i * d + k];
    dst[i] = sum / static_cast<double>(d);
  }
  h.values = out;
  return h;
}

void export_heatmap_csv(const Heatmap& h, const std::string& path) {
  if (h.values.rank() != 2)
    throw ShapeError("heatmap values must be rank 2, got " +
                     shape_str(h.values.shape()));
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  const int64_t rows = h.values.shape()[0], cols = h.values.shape()[1];
  const double* v = h.values.data();
  char cell[64];
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      std::snprintf(cell, sizeof cell, "%.17g", v[r * cols + c]);
      f << cell;
      if (c + 1 < cols) f << ',';
    }
    f << '\n';
  }
  if (!f) throw IoError("failed writing: " + path);
}

void export_heatmap_pgm(const Heatmap& h, const std::string& path) {
  if (h.values.rank() != 2)
    throw ShapeError("heatmap values must be rank 2, got " +
                     shape_str(h.values.shape()));
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  const int64_t rows = h.values.shape()[0], cols = h.values.shape()[1];
  f << "P5\n" << cols << ' ' << rows << "\n255\n";
  const double* v = h.values.data();
  for (int64_t i = 0; i < rows * cols; ++i) {
    const double scaled = std::floor(v[i] * 255.0 + 0.5);  // round half-up
    const double clamped = scaled < 0.0 ? 0.0 : scaled > 255.0 ? 255.0 : scaled;
    const unsigned char byte = static_cast<unsigned char>(clamped);
    f.write(reinterpret_cast<const char*>(&byte), 1);
  }
  if (!f) throw IoError("failed writing: " + path);
}

void export_heatmap(const Heatmap& h, const std::string& path,
                    const std::string& format) {
  if (format == "csv")
    export_heatmap_csv(h, path);
  else if (format == "pgm")
    export_heatmap_pgm(h, path);
  else
    throw ConfigError("unknown heatmap format '" + format + "' (expected csv|pgm)");
}

}  // namespace tgv
