#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tgv/tensor.hpp"

namespace tgv {

/// The three synthetic probes: `Order` and `Direction` are solvable only
/// with temporal information; `Static` is a purely spatial control.
enum class Task { Order, Direction, Static };

const char* task_name(Task t);
Task task_from_name(const std::string& s);

struct SyntheticSample {
  Tensor video;  // [T, L_V, D_V]
  int64_t label = 0;
  Task task = Task::Order;
  uint64_t seed = 0;  // the sample's own substream seed
};

struct DatasetSpec {
  Task task = Task::Direction;
  int64_t n_train = 2000;
  int64_t n_test = 500;
  int64_t T = 8;
  int64_t g = 4;  // grid side; L_V = g*g
  int64_t d_v = 64;
  double noise_std = 0.1;
  uint64_t seed = 1;

  int64_t l_v() const { return g * g; }
  void validate() const;
};

/// One sample of the spec's task; label alternates with the index so every
/// split is balanced to within one sample. Content is a pure function of
/// (spec, split, index).
SyntheticSample gen_sample(const DatasetSpec& spec, std::string_view split,
                           uint64_t index);

/// Same sample-level randomness (cell, row, noise) with the label imposed:
/// the matched twin used to demonstrate that time-averaged videos carry no
/// label information.
SyntheticSample gen_sample_forced(const DatasetSpec& spec, std::string_view split,
                                  uint64_t index, int64_t label);

std::vector<SyntheticSample> gen_split(const DatasetSpec& spec, std::string_view split,
                                       int64_t count);

/// Task-specific entry points; count < 0 picks the spec's size for the split.
std::vector<SyntheticSample> gen_order_task(const DatasetSpec& spec,
                                            std::string_view split = "train",
                                            int64_t count = -1);
std::vector<SyntheticSample> gen_direction_task(const DatasetSpec& spec,
                                                std::string_view split = "train",
                                                int64_t count = -1);
std::vector<SyntheticSample> gen_static_control(const DatasetSpec& spec,
                                                std::string_view split = "train",
                                                int64_t count = -1);

struct Dataset {
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> test;
};
Dataset gen_dataset(const DatasetSpec& spec);

/// Dump one split to the shared binary container ("video.<i>" tensors,
/// labels in the manifest) plus a JSON sidecar at `path` + ".json" holding
/// the DatasetSpec.
void save_split(const std::vector<SyntheticSample>& samples, const DatasetSpec& spec,
                std::string_view split, const std::string& path);
std::vector<SyntheticSample> load_split(const std::string& path);

}  // namespace tgv
