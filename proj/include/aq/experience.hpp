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

#ifndef AQ_EXPERIENCE_HPP_
#define AQ_EXPERIENCE_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aq/quantenv.hpp"
#include "aq/types.hpp"

namespace aq {

struct DesignPoint {
  QuantConfig config;
  double accuracy = 0.0;

  friend bool operator==(const DesignPoint&, const DesignPoint&) = default;
};

// Min-max bounds used to turn raw accuracies into condition labels.
struct LabelMeta {
  double acc_min = 0.0;
  double acc_max = 1.0;

  friend bool operator==(const LabelMeta&, const LabelMeta&) = default;
};

struct NormalizedLabel {
  double label = 0.0;
  bool clamped = false;
};

NormalizedLabel normalize(double accuracy, const LabelMeta& meta);
double denormalize(double label, const LabelMeta& meta);

// g = (bits - 1) / 31 and its inverse bits = 1 + round(31 g), rounding half
// away from zero.
std::vector<double> encode_config(const QuantConfig& config);
QuantConfig decode_config(std::span<const double> encoded);

enum class SamplingScheme {
  kUniform,  // every layer uniform on [1, 32]
  kCapped,   // per-config cap u ~ U{1..32}, then every layer uniform on [1, u]
};

std::string to_string(SamplingScheme scheme);
SamplingScheme sampling_from_string(const std::string& name);

struct Partition {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  friend bool operator==(const Partition&, const Partition&) = default;
};

// Seeded shuffle of [0, n); the first round(0.8 n) indices train.
Partition split_indices(std::size_t n, std::uint64_t split_seed);

struct ExperienceMeta {
  EnvDescriptor environment;
  std::uint64_t sampling_seed = 0;
  std::uint64_t split_seed = 0;
  SamplingScheme sampling = SamplingScheme::kUniform;
  LabelMeta labels;
  Partition partition;
};

struct ExperienceSet {
  std::vector<DesignPoint> points;
  ExperienceMeta meta;

  std::vector<DesignPoint> train_points() const;
  std::vector<DesignPoint> test_points() const;

  // Throws kConsistency when any invariant of the set does not hold.
  void validate() const;
};

bool operator==(const ExperienceSet& a, const ExperienceSet& b);

struct CollectOptions {
  SamplingScheme sampling = SamplingScheme::kUniform;
  std::optional<std::uint64_t> split_seed;  // defaults to a stream derived from the sampling seed
  int threads = 0;                          // evaluation workers; <= 0 uses all
};

// Draws n distinct configs, evaluates them, splits 80/20 and records label
// bounds over the training partition.
ExperienceSet collect(const Environment& env, std::size_t n, std::uint64_t seed,
                      const CollectOptions& options = {});

// Number of configs in `seen` that also occur in the test partition.
std::size_t audit_test_isolation(const ExperienceSet& set, std::span<const QuantConfig> seen);

std::filesystem::path meta_path_for(const std::filesystem::path& jsonl_path);

void save(const ExperienceSet& set, const std::filesystem::path& jsonl_path);
ExperienceSet load_experiences(const std::filesystem::path& jsonl_path);

}  // namespace aq

#endif  // AQ_EXPERIENCE_HPP_
