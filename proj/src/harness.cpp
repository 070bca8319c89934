#include "tgv/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

#include "json.hpp"
#include "tgv/ops.hpp"

namespace tgv {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt(double v) { return manifest_double(v); }

/// RFC-4180 quoting for cells that might contain commas or quotes (labels
/// are clean by construction; error messages are not).
std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

struct FiniteChecksOn {
  bool prev;
  FiniteChecksOn() : prev(finite_checks_enabled()) { set_finite_checks(true); }
  ~FiniteChecksOn() { set_finite_checks(prev); }
};

/// Pinpoints the source of a non-finite loss: a poisoned parameter first,
/// otherwise the first op that produces a non-finite value on this sample.
[[noreturn]] void abort_non_finite(const Model& model, const SyntheticSample& sample,
                                   int64_t step) {
  for (const auto& [name, t] : model.named_params())
    for (int64_t i = 0; i < t.size(); ++i)
      if (!std::isfinite(t.data()[i]))
        throw NumericError("training aborted at step " + std::to_string(step) +
                           ": parameter '" + name + "' holds a non-finite value at index " +
                           std::to_string(i));
  FiniteChecksOn guard;
  try {
    NoGradGuard ng;
    (void)model.loss(sample.video, sample.label);
  } catch (const NumericError& e) {
    throw NumericError("training aborted at step " + std::to_string(step) +
                       ": non-finite loss (" + e.what() + ")");
  }
  throw NumericError("training aborted at step " + std::to_string(step) +
                     ": non-finite loss");
}

void check_params_finite(const Model& model, int64_t step) {
  for (const auto& [name, t] : model.named_params())
    for (int64_t i = 0; i < t.size(); ++i)
      if (!std::isfinite(t.data()[i]))
        throw NumericError("training aborted after step " + std::to_string(step) +
                           ": update produced a non-finite value in parameter '" +
                           name + "' at index " + std::to_string(i));
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
  if (batch < 1) throw ConfigError("batch must be >= 1, got " + std::to_string(batch));
  if (micro_batch < 1)
    throw ConfigError("micro_batch must be >= 1, got " + std::to_string(micro_batch));
  if (!(lr > 0)) throw ConfigError("lr must be > 0, got " + fmt(lr));
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw ConfigError("betas must lie in [0, 1), got (" + fmt(beta1) + ", " +
                      fmt(beta2) + ")");
  if (!(eps > 0)) throw ConfigError("eps must be > 0, got " + fmt(eps));
  if (!(weight_decay >= 0))
    throw ConfigError("weight_decay must be >= 0, got " + fmt(weight_decay));
  if (!(warmup_ratio >= 0 && warmup_ratio < 1))
    throw ConfigError("warmup_ratio must lie in [0, 1), got " + fmt(warmup_ratio));
  if (eval_every < 0)
    throw ConfigError("eval_every must be >= 0, got " + std::to_string(eval_every));
}

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.eps),
      weight_decay_(cfg.weight_decay) {
  cfg.validate();
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    m_.emplace_back(static_cast<size_t>(t.size()), 0.0);
    v_.emplace_back(static_cast<size_t>(t.size()), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t p = 0; p < params_.size(); ++p) {
    Tensor& t = params_[p].second;
    double* theta = t.data();
    const std::vector<double>& gbuf = t.grad();
    const double* g = gbuf.empty() ? nullptr : gbuf.data();
    std::vector<double>& m = m_[p];
    std::vector<double>& v = v_[p];
    for (int64_t i = 0; i < t.size(); ++i) {
      const double gi = g ? g[i] : 0.0;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * theta[i]);
    }
  }
}

double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg) {
  cfg.validate();
  if (total_steps < 1)
    throw UsageError("total_steps must be >= 1, got " + std::to_string(total_steps));
  if (step < 0 || step > total_steps)
    throw UsageError("step " + std::to_string(step) + " outside [0, " +
                     std::to_string(total_steps) + "]");
  // The tiny slack keeps ceil() exact when ratio * total is an integer up to
  // rounding (0.03 * 100 evaluates to 3.0000000000000004).
  int64_t warmup = static_cast<int64_t>(
      std::ceil(cfg.warmup_ratio * static_cast<double>(total_steps) - 1e-9));
  warmup = std::clamp<int64_t>(warmup, 0, total_steps);
  if (step < warmup)
    return cfg.lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total_steps) return 0.0;
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(total_steps - warmup);
  return cfg.lr * 0.5 * (1.0 + std::cos(kPi * progress));
}

double evaluate(const Model& model, const std::vector<SyntheticSample>& data) {
  if (data.empty()) throw UsageError("evaluate needs at least one sample");
  NoGradGuard ng;
  int64_t correct = 0;
  for (const SyntheticSample& s : data) {
    const Tensor logits = model.forward(s.video).logits;
    const double* l = logits.data();
    int64_t best = 0;  // strict > keeps ties at the lowest class index
    for (int64_t c = 1; c < logits.size(); ++c)
      if (l[c] > l[best]) best = c;
    correct += best == s.label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

RunReport train(Model& model, const Dataset& data, const TrainConfig& cfg,
                const std::string& out_dir, const std::string& label) {
  cfg.validate();
  if (data.train.empty()) throw UsageError("training dataset is empty");
  const auto t0 = std::chrono::steady_clock::now();

  RunReport report;
  report.label = label;
  report.config = config_to_manifest(model.config());
  for (const auto& [k, v] : train_to_manifest(cfg)) report.config["train." + k] = v;

  const int64_t n = static_cast<int64_t>(data.train.size());
  const int64_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const int64_t total_steps = cfg.epochs * steps_per_epoch;

  AdamW opt(model.named_params(), cfg);
  int64_t global_step = 0;

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = Rng(cfg.seed).substream("shuffle").substream(static_cast<uint64_t>(epoch));
    for (int64_t i = n - 1; i > 0; --i) {
      const int64_t j =
          static_cast<int64_t>(shuffle.next_u64() % static_cast<uint64_t>(i + 1));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    for (int64_t start = 0; start < n; start += cfg.batch) {
      const int64_t bsz = std::min(cfg.batch, n - start);
      model.zero_grad();
      for (int64_t mstart = start; mstart < start + bsz; mstart += cfg.micro_batch) {
        const int64_t msz = std::min(cfg.micro_batch, start + bsz - mstart);
        Tensor group;
        for (int64_t i = 0; i < msz; ++i) {
          const SyntheticSample& s = data.train[static_cast<size_t>(order[mstart + i])];
          Tensor ce = model.loss(s.video, s.label);
          if (!std::isfinite(ce.item())) abort_non_finite(model, s, global_step);
          loss_sum += ce.item();
          Tensor scaled = scale(ce, 1.0 / static_cast<double>(bsz));
          group = i == 0 ? scaled : add(group, scaled);
        }
        group.backward();
      }
      opt.step(lr_at(global_step, total_steps, cfg));
      ++global_step;
      check_params_finite(model, global_step);
    }
    report.epoch_train_loss.push_back(loss_sum / static_cast<double>(n));
    if (cfg.eval_every > 0 && !data.test.empty() &&
        ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs))
      report.epoch_test_accuracy.push_back(evaluate(model, data.test));
  }

  report.final_train_loss = report.epoch_train_loss.back();
  for (size_t e = 1; e < report.epoch_train_loss.size(); ++e)
    if (report.epoch_train_loss[e] > report.epoch_train_loss[e - 1])
      report.warnings.push_back("train loss rose from epoch " + std::to_string(e - 1) +
                                " (" + fmt(report.epoch_train_loss[e - 1]) + ") to epoch " +
                                std::to_string(e) + " (" + fmt(report.epoch_train_loss[e]) +
                                ")");
  if (!data.test.empty()) report.test_accuracy = evaluate(model, data.test);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    report.checkpoint_path = out_dir + "/" + label + ".ckpt";
    Manifest extra;
    for (const auto& [k, v] : train_to_manifest(cfg)) extra["train." + k] = v;
    model.save(report.checkpoint_path, extra);
    report.checkpoint_sha1 = git_blob_sha1_file(report.checkpoint_path);
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!out_dir.empty()) save_report(report, out_dir + "/" + label + ".report.json");
  return report;
}

std::vector<AblationVariant> ablation_variants(const PipelineConfig& base) {
  auto make = [&](std::string label, int64_t n, bool spatial, bool temporal, bool mlp,
                  bool gating) {
    AblationVariant a{std::move(label), base};
    a.pipeline.tg.num_layers = n;
    a.pipeline.tg.spatial_enabled = spatial;
    a.pipeline.tg.temporal_enabled = temporal;
    a.pipeline.tg.mlp_enabled = mlp;
    a.pipeline.tg.gating_enabled = gating;
    return a;
  };
  const int64_t n = base.tg.num_layers;
  std::vector<AblationVariant> out;
  out.push_back(make("01_baseline_no_tg", 0, true, true, true, true));
  out.push_back(make("02_st_vanilla", n, true, true, true, false));
  out.push_back(make("03_tg_full", n, true, true, true, true));
  out.push_back(make("04_tg_no_spatial", n, false, true, true, true));
  out.push_back(make("05_tg_no_temporal", n, true, false, true, true));
  out.push_back(make("06_tg_no_mlp", n, true, true, false, true));
  for (int64_t k = 0; k <= 6; ++k)
    out.push_back(make("1" + std::to_string(k) + "_sweep_n" + std::to_string(k), k,
                       true, true, true, true));
  return out;
}

std::vector<RunReport> run_ablation(const std::vector<AblationVariant>& variants,
                                    const Dataset& data, const TrainConfig& base,
                                    const std::string& out_dir, int64_t workers) {
  base.validate();
  if (workers < 1)
    throw ConfigError("workers must be >= 1, got " + std::to_string(workers));
  {
    std::set<std::string> seen;
    for (const AblationVariant& v : variants)
      if (!seen.insert(v.label).second)
        throw ConfigError("duplicate variant label '" + v.label + "'");
  }

  std::vector<RunReport> reports(variants.size());
  std::atomic<size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= variants.size()) return;
      RunReport& r = reports[i];
      r.label = variants[i].label;
      r.config = config_to_manifest(variants[i].pipeline);
      for (const auto& [k, v] : train_to_manifest(base)) r.config["train." + k] = v;
      try {
        Model model(variants[i].pipeline, base.seed);
        r = train(model, data, base, out_dir, variants[i].label);
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    const size_t count = std::min<size_t>(static_cast<size_t>(workers), variants.size());
    pool.reserve(count);
    for (size_t w = 0; w < count; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }

  std::sort(reports.begin(), reports.end(),
            [](const RunReport& a, const RunReport& b) { return a.label < b.label; });
  return reports;
}

std::string ablation_csv(const std::vector<AblationVariant>& variants,
                         const std::vector<RunReport>& reports) {
  (void)variants;  // flags travel inside each report's config snapshot
  std::vector<const RunReport*> rows;
  rows.reserve(reports.size());
  for (const RunReport& r : reports) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(),
            [](const RunReport* a, const RunReport* b) { return a->label < b->label; });

  std::string csv =
      "label,n_layers,spatial,temporal,mlp,gating,final_train_loss,"
      "test_accuracy,checkpoint_sha1,error,wall_seconds\n";
  auto field = [](const RunReport& r, const std::string& key) {
    auto it = r.config.find(key);
    return it == r.config.end() ? std::string() : it->second;
  };
  for (const RunReport* r : rows) {
    csv += csv_cell(r->label) + ',';
    csv += field(*r, "tg.num_layers") + ',';
    csv += field(*r, "tg.spatial_enabled") + ',';
    csv += field(*r, "tg.temporal_enabled") + ',';
    csv += field(*r, "tg.mlp_enabled") + ',';
    csv += field(*r, "tg.gating_enabled") + ',';
    if (r->ok()) {
      csv += fmt(r->final_train_loss) + ',';
      csv += fmt(r->test_accuracy) + ',';
      csv += r->checkpoint_sha1 + ",,";
    } else {
      csv += ",,," + csv_cell(r->error) + ',';
    }
    char wall[32];
    std::snprintf(wall, sizeof wall, "%.3f", r->wall_seconds);
    csv += wall;
    csv += '\n';
  }
  return csv;
}

PipelineConfig grad_check_config() {
  PipelineConfig cfg;
  cfg.tg.num_layers = 2;
  cfg.tg.d_model = 16;
  cfg.tg.num_heads = 2;
  cfg.tg.mlp_hidden = 32;
  cfg.l_q = 2;
  cfg.l_t = 4;
  cfg.num_classes = 2;
  return cfg;
}

GradCheckReport grad_check_suite(uint64_t seed) {
  const PipelineConfig cfg = grad_check_config();
  Model model(cfg, seed);
  Rng rng = Rng(seed).substream("grad-check");
  Tensor video = Tensor::randn({3, 4, cfg.tg.d_model}, rng);
  const int64_t label = 1;

  model.zero_grad();
  model.loss(video, label).backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(model.named_params().size());
  for (const auto& [name, t] : model.named_params())
    analytic.push_back(t.has_grad() ? t.grad()
                                    : std::vector<double>(static_cast<size_t>(t.size()), 0.0));

  const double h = 1e-5;
  GradCheckReport report;
  NoGradGuard ng;
  auto params = model.named_params();  // handle copies share storage
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& t = params[p].second;
    GradCheckEntry entry;
    entry.name = params[p].first;
    for (int64_t i = 0; i < t.size(); ++i) {
      const double orig = t.data()[i];
      t.data()[i] = orig + h;
      const double fp = model.loss(video, label).item();
      t.data()[i] = orig - h;
      const double fm = model.loss(video, label).item();
      t.data()[i] = orig;
      const double num = (fp - fm) / (2.0 * h);
      const double ana = analytic[p][static_cast<size_t>(i)];
      const double rel =
          std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-4});
      if (entry.worst_index < 0 || rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_index = i;
        entry.analytic = ana;
        entry.numeric = num;
      }
    }
    entry.pass = entry.max_rel_err <= 1e-4;
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

std::string grad_check_table(const GradCheckReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-34s  %12s  %10s  %s\n", "parameter",
                "max_rel_err", "worst_idx", "status");
  out += line;
  for (const GradCheckEntry& e : report.entries) {
    std::snprintf(line, sizeof line, "%-34s  %12.3e  %10lld  %s\n", e.name.c_str(),
                  e.max_rel_err, static_cast<long long>(e.worst_index),
                  e.pass ? "ok" : "FAIL");
    out += line;
    if (!e.pass) {
      std::snprintf(line, sizeof line,
                    "    analytic %.17g vs numeric %.17g at index %lld\n", e.analytic,
                    e.numeric, static_cast<long long>(e.worst_index));
      out += line;
    }
  }
  out += report.pass ? "gradient check: PASS\n" : "gradient check: FAIL\n";
  return out;
}

Manifest train_to_manifest(const TrainConfig& cfg) {
  Manifest m;
  m["epochs"] = std::to_string(cfg.epochs);
  m["batch"] = std::to_string(cfg.batch);
  m["micro_batch"] = std::to_string(cfg.micro_batch);
  m["lr"] = fmt(cfg.lr);
  m["beta1"] = fmt(cfg.beta1);
  m["beta2"] = fmt(cfg.beta2);
  m["eps"] = fmt(cfg.eps);
  m["weight_decay"] = fmt(cfg.weight_decay);
  m["warmup_ratio"] = fmt(cfg.warmup_ratio);
  m["eval_every"] = std::to_string(cfg.eval_every);
  m["seed"] = std::to_string(cfg.seed);
  return m;
}

TrainConfig train_from_manifest(const Manifest& m) {
  TrainConfig cfg;
  cfg.epochs = manifest_int(m, "epochs");
  cfg.batch = manifest_int(m, "batch");
  cfg.micro_batch = manifest_int(m, "micro_batch");
  cfg.lr = manifest_real(m, "lr");
  cfg.beta1 = manifest_real(m, "beta1");
  cfg.beta2 = manifest_real(m, "beta2");
  cfg.eps = manifest_real(m, "eps");
  cfg.weight_decay = manifest_real(m, "weight_decay");
  cfg.warmup_ratio = manifest_real(m, "warmup_ratio");
  cfg.eval_every = manifest_int(m, "eval_every");
  cfg.seed = manifest_u64(m, "seed");
  return cfg;
}

Manifest data_to_manifest(const DatasetSpec& spec) {
  Manifest m;
  m["task"] = task_name(spec.task);
  m["n_train"] = std::to_string(spec.n_train);
  m["n_test"] = std::to_string(spec.n_test);
  m["T"] = std::to_string(spec.T);
  m["g"] = std::to_string(spec.g);
  m["d_v"] = std::to_string(spec.d_v);
  m["noise_std"] = fmt(spec.noise_std);
  m["seed"] = std::to_string(spec.seed);
  return m;
}

DatasetSpec data_from_manifest(const Manifest& m) {
  DatasetSpec spec;
  spec.task = task_from_name(manifest_get(m, "task"));
  spec.n_train = manifest_int(m, "n_train");
  spec.n_test = manifest_int(m, "n_test");
  spec.T = manifest_int(m, "T");
  spec.g = manifest_int(m, "g");
  spec.d_v = manifest_int(m, "d_v");
  spec.noise_std = manifest_real(m, "noise_std");
  spec.seed = manifest_u64(m, "seed");
  return spec;
}

std::string report_json(const RunReport& report) {
  nlohmann::json j;
  j["label"] = report.label;
  j["config"] = report.config;
  j["epoch_train_loss"] = report.epoch_train_loss;
  j["epoch_test_accuracy"] = report.epoch_test_accuracy;
  j["final_train_loss"] = report.final_train_loss;
  j["test_accuracy"] = report.test_accuracy;
  j["wall_seconds"] = report.wall_seconds;
  j["checkpoint_path"] = report.checkpoint_path;
  j["checkpoint_sha1"] = report.checkpoint_sha1;
  j["warnings"] = report.warnings;
  j["error"] = report.error;
  return j.dump(2) + "\n";
}

void save_report(const RunReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << report_json(report);
  if (!f) throw IoError("failed writing: " + path);
}

}  // namespace tgv
