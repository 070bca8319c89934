#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tgv/pipeline.hpp"
#include "tgv/synth.hpp"

namespace tgv {

/// Optimization hyper-parameters. Defaults follow the training recipe:
/// AdamW with beta = (0.9, 0.999), weight decay 0, two epochs, cosine decay
/// after a 3% linear warmup. The desk-scale learning rate is 1e-3.
struct TrainConfig {
  int64_t epochs = 2;
  int64_t batch = 64;
  /// Logical batches are processed as accumulated micro-batches of this
  /// size; the summed update is exact, so the value only bounds memory.
  int64_t micro_batch = 8;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double warmup_ratio = 0.03;
  /// When > 0, test accuracy is also measured every `eval_every` epochs
  /// (and after the last); 0 keeps the single end-of-run measurement.
  int64_t eval_every = 0;
  uint64_t seed = 1;

  void validate() const;
};

/// Everything a finished run reports. `wall_seconds` is timing, not content:
/// it is excluded from any byte-identity comparison between repeated runs
/// (all other fields are deterministic given the config).
struct RunReport {
  std::string label = "run";
  std::map<std::string, std::string> config;  // resolved flat snapshot
  std::vector<double> epoch_train_loss;       // mean sample loss per epoch
  std::vector<double> epoch_test_accuracy;    // only when eval_every > 0
  double final_train_loss = 0.0;
  double test_accuracy = 0.0;
  double wall_seconds = 0.0;
  std::string checkpoint_path;
  std::string checkpoint_sha1;  // git-blob hash of the checkpoint file
  std::vector<std::string> warnings;
  std::string error;  // non-empty iff the run failed

  bool ok() const { return error.empty(); }
};

/// Decoupled-weight-decay Adam over a fixed parameter list. State (m, v)
/// lives here, one slot per parameter tensor, and starts at zero.
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensor>> params, const TrainConfig& cfg);

  /// One update at the given learning rate using each parameter's current
  /// gradient buffer (missing buffers count as zero gradients).
  void step(double lr);
  int64_t steps_taken() const { return t_; }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_, weight_decay_;
  int64_t t_ = 0;
};

/// Scheduled learning rate: linear 0 -> lr over ceil(warmup_ratio * total)
/// steps, then cosine lr -> 0. lr_at(warmup end) == lr exactly and
/// lr_at(total) == 0.
double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg);

/// Argmax-logit accuracy; ties resolve to the lowest class index.
double evaluate(const Model& model, const std::vector<SyntheticSample>& data);

/// Full training loop: deterministic per-epoch shuffles, micro-batched
/// gradient accumulation, one AdamW step per logical batch. When `out_dir`
/// is non-empty the checkpoint (<label>.ckpt) and report (<label>.report.json)
/// are persisted there. Aborts with NumericError on a non-finite loss or
/// parameter, naming the first offender.
RunReport train(Model& model, const Dataset& data, const TrainConfig& cfg,
                const std::string& out_dir = "", const std::string& label = "run");

/// One ablation row: a label (used for ordering and file names) plus the
/// model configuration it trains.
struct AblationVariant {
  std::string label;
  PipelineConfig pipeline;
};

/// The standard grid: the six component/gating rows plus the layer-count
/// sweep N = 0..6. Labels sort in presentation order.
std::vector<AblationVariant> ablation_variants(const PipelineConfig& base);

/// Trains every variant on the same data and seed. `workers` > 1 runs
/// variants on that many threads, each with its own model and optimizer;
/// the returned rows are ordered by label regardless of completion order.
/// Per-variant failures land in RunReport::error and the sweep continues.
std::vector<RunReport> run_ablation(const std::vector<AblationVariant>& variants,
                                    const Dataset& data, const TrainConfig& base,
                                    const std::string& out_dir, int64_t workers = 1);

/// CSV table of ablation rows, sorted by label. Fixed header:
///   label,n_layers,spatial,temporal,mlp,gating,final_train_loss,
///   test_accuracy,checkpoint_sha1,error,wall_seconds
/// wall_seconds is the only non-deterministic column and is therefore last;
/// strip it before comparing repeated runs byte-for-byte.
std::string ablation_csv(const std::vector<AblationVariant>& variants,
                         const std::vector<RunReport>& reports);

/// Finite-difference verdict for one parameter tensor. rel is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-4), so the 1e-4
/// pass threshold doubles as an absolute floor of 1e-8.
struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool pass = true;
};

/// The tiny-model configuration used by the gradient-check suite
/// (T=3, L_V=4, D_V=16, H=2, L_q=2, N=2).
PipelineConfig grad_check_config();

/// Compares every parameter's analytic gradient on the tiny end-to-end
/// model against central finite differences (h = 1e-5).
GradCheckReport grad_check_suite(uint64_t seed);

/// Fixed-width text table of a gradient-check report.
std::string grad_check_table(const GradCheckReport& report);

/// Flat key=value snapshots used in manifests and resolved-config dumps.
std::map<std::string, std::string> train_to_manifest(const TrainConfig& cfg);
TrainConfig train_from_manifest(const std::map<std::string, std::string>& m);
std::map<std::string, std::string> data_to_manifest(const DatasetSpec& spec);
DatasetSpec data_from_manifest(const std::map<std::string, std::string>& m);

/// Pretty-printed JSON form of a report (2-space indent, trailing newline).
std::string report_json(const RunReport& report);

/// Serializes a report to JSON at `path` (pretty-printed, trailing newline).
void save_report(const RunReport& report, const std::string& path);

}  // namespace tgv
