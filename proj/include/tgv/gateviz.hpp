#pragma once

#include <cstdint>
#include <string>

#include "tgv/pipeline.hpp"

namespace tgv {

/// Pooled gate activations for one (sample, layer, submodule): values[i][t]
/// is the channel-mean gate at spatial site i, frame t, always in (0, 1).
struct Heatmap {
  Tensor values;  // [L_V, T] for temporal gates, detached from any graph
  int64_t layer = 0;
  Submodule submodule = Submodule::Temporal;
  std::string sample_id;
};

/// Runs the model forward with a capture sink and returns the requested
/// layer's gate tensor, detached. Temporal gates come back as [L_V, T, D_V]
/// (sites as the batch axis), spatial and MLP gates in their own views.
/// Throws UsageError when gating is disabled, the submodule is disabled, an
/// override pins the gates, or the layer index is out of range.
Tensor capture_gates(const Model& model, const Tensor& video, int64_t layer,
                     Submodule which);

/// The standard visualization target: gating temporal attention.
Tensor capture_temporal_gates(const Model& model, const Tensor& video, int64_t layer);

/// Mean over the channel axis of a rank-3 gate tensor; the leading two axes
/// carry through ([L_V, T, D_V] -> [L_V, T]).
Heatmap pool_gates(const Tensor& gates);

/// CSV: one row per leading index, one column per frame, %.17g cells (they
/// reparse to the same doubles).
void export_heatmap_csv(const Heatmap& h, const std::string& path);

/// Binary PGM: header "P5\n<width> <height>\n255\n" with width = frames and
/// height = sites, then one byte per cell, row-major, rounded half-up from
/// value * 255.
void export_heatmap_pgm(const Heatmap& h, const std::string& path);

/// Dispatch on format name: "csv" or "pgm".
void export_heatmap(const Heatmap& h, const std::string& path,
                    const std::string& format);

}  // namespace tgv
