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

#ifndef AQ_HWTUNE_HPP_
#define AQ_HWTUNE_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aq/aqgan.hpp"
#include "aq/experience.hpp"
#include "aq/quantenv.hpp"
#include "aq/types.hpp"

namespace aq::hw {

struct ResourceReport {
  std::uint64_t param_bytes = 0;
  std::uint64_t act_bytes_sum = 0;
  std::uint64_t act_bytes_peak = 0;

  friend bool operator==(const ResourceReport&, const ResourceReport&) = default;
};

// Bytes with a per-layer ceiling: a layer of n elements at b bits takes
// ceil(n * b / 8) bytes.
ResourceReport resources(const LayerResourceSpec& spec, const QuantConfig& config);

enum class ResourceKey { kParamBytes, kActBytesSum, kActBytesPeak };

std::uint64_t field(const ResourceReport& report, ResourceKey key);
ResourceKey resource_key_from_string(const std::string& name);
std::string to_string(ResourceKey key);

struct Budget {
  std::optional<std::uint64_t> param_bytes;
  std::optional<std::uint64_t> act_bytes_sum;
  std::optional<std::uint64_t> act_bytes_peak;

  // Throws kInput when a set cap is zero.
  void validate() const;
  bool admits(const ResourceReport& report) const;
};

struct RankedProposal {
  Proposal proposal;
  ResourceReport report;
  std::size_t input_index = 0;
};

// Ascending by `key`; ties go to the higher predicted label, then input order.
std::vector<RankedProposal> rank(std::span<const Proposal> proposals, const LayerResourceSpec& spec,
                                 ResourceKey key = ResourceKey::kParamBytes);

// Highest predicted label among proposals inside every cap; ties go to the
// smaller param_bytes, then input order. nullopt when nothing fits.
std::optional<RankedProposal> select(std::span<const Proposal> proposals, const LayerResourceSpec& spec,
                                     const Budget& budget);

std::size_t feasible_count(std::span<const Proposal> proposals, const LayerResourceSpec& spec,
                           const Budget& budget);

struct BaselineResult {
  DesignPoint point;
  ResourceReport report;
};

// One-step-Q: every layer at the same bit-width.
BaselineResult uniform_baseline(const Environment& env, int bits);

struct CompareOptions {
  std::vector<double> conditions;  // empty: 21 evenly spaced targets over [acc_min, acc_max]
  std::size_t count = 50;
  std::uint64_t seed = 0;
};

struct CompareRow {
  std::string method;  // "one-step-q" | "aqgan"
  std::string bits_or_target;
  std::optional<double> accuracy;  // empty when no proposal fit the budget
  std::optional<ResourceReport> report;
};

// For each uniform width b: the One-step-Q row, then the best ground-truth
// accuracy among generated proposals whose param_bytes do not exceed it.
std::vector<CompareRow> compare_report(const TrainedModel& model, const Environment& env,
                                       std::span<const int> uniform_bits, const CompareOptions& options = {});

std::string compare_csv(std::span<const CompareRow> rows);
std::string proposals_csv(std::span<const RankedProposal> ranked, const LabelMeta& labels);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> counts;
};

Histogram histogram(std::span<const double> values, std::size_t bins);
std::string histogram_csv(const Histogram& h, const std::string& metric);
std::string histogram_svg(const Histogram& h, const std::string& title);

}  // namespace aq::hw

#endif  // AQ_HWTUNE_HPP_
