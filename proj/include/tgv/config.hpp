#pragma once

#include <string>
#include <vector>

#include "tgv/harness.hpp"

namespace tgv {

/// Everything one run needs: the model, the synthetic data it trains on,
/// and the optimization recipe. JSON layout mirrors the struct nesting:
///   { "model": { "tg": {...}, "l_q": ..., ... },
///     "data":  { "task": ..., ... },
///     "train": { "epochs": ..., ... } }
/// Absent keys keep their defaults; unknown keys are errors.
struct RunConfig {
  PipelineConfig model;
  DatasetSpec data;
  TrainConfig train;

  void validate() const;
};

/// Parses JSON text. `origin` names the source in error messages.
RunConfig parse_run_config(const std::string& json_text, const std::string& origin);

/// Reads and parses a JSON config file.
RunConfig load_run_config(const std::string& path);

/// Applies one dotted override, e.g. "train.lr=0.002" or
/// "model.tg.num_layers=4". Values parse with the same strictness as the
/// file form.
void apply_override(RunConfig& cfg, const std::string& assignment);
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments);

/// The fully-resolved nested JSON (2-space indent, trailing newline),
/// written next to every run's outputs so artifacts are self-describing.
std::string run_config_json(const RunConfig& cfg);

}  // namespace tgv
