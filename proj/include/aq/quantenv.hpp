/* Copyright 2026 The aqtune Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef AQ_QUANTENV_HPP_
#define AQ_QUANTENV_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aq/json_io.hpp"
#include "aq/numerics.hpp"
#include "aq/types.hpp"

namespace aq {

// Range-based linear quantization of one tensor:
//   S = 2^bit / (max - min)
//   v_int = round((v - min) * S) - 2^(bit-1), clamped to the signed range
//   v'    = (v_int + 2^(bit-1)) / S + min
struct QuantParams {
  int bit = 8;
  double min_tensor = 0.0;
  double max_tensor = 1.0;
  double scale = 256.0;

  // Throws kDegenerateRange when max <= min and kInput for bit outside [1, 32].
  static QuantParams make(int bit, double min_tensor, double max_tensor);

  double step() const { return 1.0 / scale; }
};

double quantize_dequantize(double value, const QuantParams& params);
std::int64_t quantize_to_int(double value, const QuantParams& params);
std::vector<double> quantize_dequantize(std::span<const double> values, const QuantParams& params);

// Deterministic response surface standing in for a real model:
//   acc = a_min + (a_max - a_min) * sum_l w_l * min(bits_l, c_l) / c_l
struct SyntheticOracle {
  std::uint64_t seed = 0;
  std::vector<int> saturation;  // c_l in [4, 10]
  std::vector<double> weight;   // w_l > 0, sum 1
  double acc_floor = 0.05;
  double acc_ceiling = 0.95;

  static SyntheticOracle make(std::uint64_t seed, std::size_t layer_count);
  std::size_t layer_count() const { return saturation.size(); }
};

double synthetic_accuracy(const SyntheticOracle& oracle, const QuantConfig& config);

struct DatasetSpec {
  int classes = 10;
  int dim = 64;
  double radius = 4.0;
  double noise = 1.0;
  int train_samples = 6000;
  int eval_samples = 2000;
  int hidden = 64;
  int epochs = 20;
  int batch = 64;
  double learning_rate = 1e-3;
  int calibration_samples = 512;

  Json to_json() const;
  static DatasetSpec from_json(const Json& doc);
};

struct ClusterDataset {
  nn::Matrix inputs;         // samples x dim
  std::vector<int> labels;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> eval_indices;
};

// Gaussian clusters with class means on a sphere; train and eval samples are
// consecutive blocks of one seeded stream.
ClusterDataset make_cluster_dataset(std::uint64_t seed, const DatasetSpec& spec);

struct TensorRange {
  double min = 0.0;
  double max = 0.0;
};

struct TrainedEnv {
  std::uint64_t seed = 0;
  DatasetSpec spec;
  nn::DenseNet reference;
  nn::Matrix eval_inputs;
  std::vector<int> eval_labels;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> eval_indices;
  std::vector<TensorRange> calibration;  // per-layer activation range
  double baseline_accuracy = 0.0;

  std::size_t layer_count() const { return reference.layers.size(); }
};

// Trains an L-layer Tanh classifier on the cluster dataset and records
// activation calibration ranges. Throws kEnvironmentBuild on divergence.
TrainedEnv build_trained_env(std::uint64_t seed, std::size_t layer_count,
                             const DatasetSpec& spec = {});

// Rebuilds an environment around an already trained reference network.
TrainedEnv attach_trained_env(std::uint64_t seed, const DatasetSpec& spec, nn::DenseNet reference);

double evaluate(const TrainedEnv& env, const QuantConfig& config);
double float_accuracy(const TrainedEnv& env);

struct EnvDescriptor {
  std::string kind;  // "synthetic" | "trained"
  std::uint64_t seed = 0;
  std::size_t layer_count = 0;
  Json dataset_spec;  // null for synthetic environments
  double baseline_accuracy = 0.0;
  LayerResourceSpec resources;

  Json to_json() const;
  static EnvDescriptor from_json(const Json& doc);

  // Human-readable list of differing fields; empty when equal.
  std::vector<std::string> diff(const EnvDescriptor& other) const;
};

// Ground-truth oracle: immutable after construction, safe to share between
// threads and cheap to copy.
class Environment {
 public:
  static Environment synthetic(std::uint64_t seed, std::size_t layer_count);
  static Environment trained(std::uint64_t seed, std::size_t layer_count,
                             const DatasetSpec& spec = {});
  static Environment from_trained(TrainedEnv env);

  const EnvDescriptor& descriptor() const;
  std::size_t layer_count() const { return descriptor().layer_count; }
  const LayerResourceSpec& resources() const { return descriptor().resources; }
  double baseline_accuracy() const { return descriptor().baseline_accuracy; }

  double evaluate(const QuantConfig& config) const;

  const SyntheticOracle* synthetic_oracle() const;
  const TrainedEnv* trained_env() const;

  // Directory layout: descriptor.json, plus reference.json and
  // calibration.json for trained environments.
  void save(const std::filesystem::path& dir) const;
  static Environment load(const std::filesystem::path& dir);
  // Reconstructs from seed and spec alone (trained kinds retrain the
  // reference); kDescriptor when the result does not reproduce `d`.
  static Environment rebuild(const EnvDescriptor& d);

 private:
  struct Impl;
  explicit Environment(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

LayerResourceSpec synthetic_resources(std::uint64_t seed, std::size_t layer_count);
LayerResourceSpec network_resources(const nn::DenseNet& net);

}  // namespace aq

#endif  // AQ_QUANTENV_HPP_
