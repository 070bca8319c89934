#include "tgv/synth.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "tgv/checkpoint.hpp"
#include "tgv/errors.hpp"

namespace tgv {

const char* task_name(Task t) {
  switch (t) {
    case Task::Order:
      return "order";
    case Task::Direction:
      return "direction";
    case Task::Static:
      return "static";
  }
  return "?";
}

Task task_from_name(const std::string& s) {
  if (s == "order") return Task::Order;
  if (s == "direction") return Task::Direction;
  if (s == "static") return Task::Static;
  throw ConfigError("unknown task '" + s + "' (expected order|direction|static)");
}

void DatasetSpec::validate() const {
  if (g < 1) throw ConfigError("grid side must be >= 1, got " + std::to_string(g));
  if (d_v < 1) throw ConfigError("d_v must be >= 1, got " + std::to_string(d_v));
  if (T < 1) throw ConfigError("T must be >= 1, got " + std::to_string(T));
  if (noise_std < 0) throw ConfigError("noise_std must be >= 0");
  if (n_train < 0 || n_test < 0) throw ConfigError("split sizes must be >= 0");
  switch (task) {
    case Task::Order:
      if (T < 4) throw ConfigError("order task needs T >= 4, got " + std::to_string(T));
      break;
    case Task::Direction:
      if (T < 2) throw ConfigError("direction task needs T >= 2");
      if (g < 3) throw ConfigError("direction task needs g >= 3, got " + std::to_string(g));
      break;
    case Task::Static:
      if (g < 2) throw ConfigError("static task needs g >= 2 for a left/right split");
      break;
  }
}

namespace {

// Fixed unit event vectors shared by every sample of a dataset.
std::vector<double> unit_event(const DatasetSpec& spec, std::string_view tag) {
  Rng r = Rng(spec.seed).substream("events").substream(tag);
  std::vector<double> v(static_cast<size_t>(spec.d_v));
  double norm2 = 0.0;
  for (double& x : v) {
    x = r.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

void add_event(std::vector<double>& video, const DatasetSpec& spec, int64_t frame,
               int64_t cell, const std::vector<double>& e) {
  double* p = video.data() + (frame * spec.l_v() + cell) * spec.d_v;
  for (int64_t c = 0; c < spec.d_v; ++c) p[c] += e[static_cast<size_t>(c)];
}

}  // namespace

SyntheticSample gen_sample_forced(const DatasetSpec& spec, std::string_view split,
                                  uint64_t index, int64_t label) {
  spec.validate();
  if (label != 0 && label != 1) throw UsageError("labels are binary");
  const int64_t L = spec.l_v(), D = spec.d_v, T = spec.T, g = spec.g;
  Rng s = Rng(spec.seed).substream(split).substream(index);

  SyntheticSample out;
  out.label = label;
  out.task = spec.task;
  out.seed = s.seed();

  // All randomness is drawn before the label is consulted, so forced twins
  // share cells, rows, and noise exactly.
  switch (spec.task) {
    case Task::Order: {
      const int64_t cell = static_cast<int64_t>(s.next_u64() % static_cast<uint64_t>(L));
      std::vector<double> video(static_cast<size_t>(T * L * D));
      for (double& v : video) v = spec.noise_std * s.normal();
      const std::vector<double> ea = unit_event(spec, "a");
      const std::vector<double> eb = unit_event(spec, "b");
      const std::vector<double>& first = label == 1 ? ea : eb;
      const std::vector<double>& second = label == 1 ? eb : ea;
      const int64_t half = T / 2;
      for (int64_t t = 0; t < T; ++t)
        add_event(video, spec, t, cell, t < half ? first : second);
      out.video = Tensor::from_data({T, L, D}, std::move(video));
      break;
    }
    case Task::Direction: {
      const int64_t row = static_cast<int64_t>(s.next_u64() % static_cast<uint64_t>(g));
      std::vector<double> video(static_cast<size_t>(T * L * D));
      for (double& v : video) v = spec.noise_std * s.normal();
      const std::vector<double> e = unit_event(spec, "e");
      for (int64_t t = 0; t < T; ++t) {
        // Label 1 sweeps the columns left-to-right; label 0 runs the same
        // column sequence backwards, so the per-column visit counts (and
        // hence the time-averaged video) are label-independent.
        const int64_t step = label == 1 ? t : (T - 1 - t);
        const int64_t col = step % g;
        add_event(video, spec, t, row * g + col, e);
      }
      out.video = Tensor::from_data({T, L, D}, std::move(video));
      break;
    }
    case Task::Static: {
      const int64_t row = static_cast<int64_t>(s.next_u64() % static_cast<uint64_t>(g));
      const int64_t half_w = g / 2;
      const int64_t offset =
          static_cast<int64_t>(s.next_u64() % static_cast<uint64_t>(half_w));
      std::vector<double> frame(static_cast<size_t>(L * D));
      for (double& v : frame) v = spec.noise_std * s.normal();
      const std::vector<double> e = unit_event(spec, "e");
      const int64_t col = label == 0 ? offset : g - 1 - offset;
      double* p = frame.data() + (row * g + col) * D;
      for (int64_t c = 0; c < D; ++c) p[c] += e[static_cast<size_t>(c)];
      std::vector<double> video;
      video.reserve(static_cast<size_t>(T * L * D));
      for (int64_t t = 0; t < T; ++t) video.insert(video.end(), frame.begin(), frame.end());
      out.video = Tensor::from_data({T, L, D}, std::move(video));
      break;
    }
  }
  return out;
}

SyntheticSample gen_sample(const DatasetSpec& spec, std::string_view split,
                           uint64_t index) {
  return gen_sample_forced(spec, split, index, static_cast<int64_t>(index % 2));
}

std::vector<SyntheticSample> gen_split(const DatasetSpec& spec, std::string_view split,
                                       int64_t count) {
  spec.validate();
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i)
    out.push_back(gen_sample(spec, split, static_cast<uint64_t>(i)));
  return out;
}

namespace {
std::vector<SyntheticSample> gen_task(const DatasetSpec& spec, Task task,
                                      std::string_view split, int64_t count) {
  DatasetSpec s = spec;
  s.task = task;
  if (count < 0) count = (split == "test") ? s.n_test : s.n_train;
  return gen_split(s, split, count);
}
}  // namespace

std::vector<SyntheticSample> gen_order_task(const DatasetSpec& spec,
                                            std::string_view split, int64_t count) {
  return gen_task(spec, Task::Order, split, count);
}

std::vector<SyntheticSample> gen_direction_task(const DatasetSpec& spec,
                                                std::string_view split, int64_t count) {
  return gen_task(spec, Task::Direction, split, count);
}

std::vector<SyntheticSample> gen_static_control(const DatasetSpec& spec,
                                                std::string_view split, int64_t count) {
  return gen_task(spec, Task::Static, split, count);
}

Dataset gen_dataset(const DatasetSpec& spec) {
  Dataset d;
  d.train = gen_split(spec, "train", spec.n_train);
  d.test = gen_split(spec, "test", spec.n_test);
  return d;
}

void save_split(const std::vector<SyntheticSample>& samples, const DatasetSpec& spec,
                std::string_view split, const std::string& path) {
  Container c;
  c.manifest["kind"] = "dataset";
  c.manifest["task"] = task_name(spec.task);
  c.manifest["split"] = std::string(split);
  c.manifest["count"] = std::to_string(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    c.manifest["label." + std::to_string(i)] = std::to_string(samples[i].label);
    c.manifest["seed." + std::to_string(i)] = std::to_string(samples[i].seed);
    c.tensors.emplace_back("video." + std::to_string(i), samples[i].video);
  }
  write_container(c, path);

  nlohmann::json j;
  j["task"] = task_name(spec.task);
  j["n_train"] = spec.n_train;
  j["n_test"] = spec.n_test;
  j["T"] = spec.T;
  j["g"] = spec.g;
  j["d_v"] = spec.d_v;
  j["noise_std"] = spec.noise_std;
  j["seed"] = spec.seed;
  j["split"] = std::string(split);
  j["count"] = samples.size();
  std::ofstream f(path + ".json", std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path + ".json");
  f << j.dump(2) << "\n";
}

std::vector<SyntheticSample> load_split(const std::string& path) {
  Container c = read_container(path);
  auto get = [&](const std::string& key) {
    auto it = c.manifest.find(key);
    if (it == c.manifest.end())
      throw IoError("dataset " + path + " missing manifest key '" + key + "'");
    return it->second;
  };
  if (get("kind") != "dataset") throw IoError(path + " is not a dataset container");
  const Task task = task_from_name(get("task"));
  const size_t count = std::stoull(get("count"));
  if (c.tensors.size() != count)
    throw IoError("dataset " + path + " holds " + std::to_string(c.tensors.size()) +
                  " tensors, manifest says " + std::to_string(count));
  std::vector<SyntheticSample> out(count);
  for (size_t i = 0; i < count; ++i) {
    const std::string want = "video." + std::to_string(i);
    if (c.tensors[i].first != want)
      throw IoError("dataset " + path + " tensor " + std::to_string(i) +
                    " is named '" + c.tensors[i].first + "', expected '" + want + "'");
    out[i].video = c.tensors[i].second;
    out[i].label = std::stoll(get("label." + std::to_string(i)));
    out[i].seed = std::stoull(get("seed." + std::to_string(i)));
    out[i].task = task;
  }
  return out;
}

}  // namespace tgv
