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

#ifndef AQ_TYPES_HPP_
#define AQ_TYPES_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace aq {

// Per-layer bit-widths for a network with L quantizable layers.
struct QuantConfig {
  static constexpr int kMinBits = 1;
  static constexpr int kMaxBits = 32;

  std::vector<int> bits;

  std::size_t size() const { return bits.size(); }

  // Throws kConsistency on a length mismatch and kInput on out-of-range bits.
  void validate(std::size_t layer_count) const;

  static QuantConfig uniform(std::size_t layer_count, int bits);

  std::string to_string() const;

  friend bool operator==(const QuantConfig&, const QuantConfig&) = default;
};

struct QuantConfigHash {
  std::size_t operator()(const QuantConfig& config) const noexcept;
};

// Element counts feeding the hardware cost model.
struct LayerResourceSpec {
  std::vector<std::uint64_t> weights;      // parameters per layer
  std::vector<std::uint64_t> activations;  // output elements per sample

  std::size_t size() const { return weights.size(); }
  void validate() const;

  friend bool operator==(const LayerResourceSpec&, const LayerResourceSpec&) = default;
};

// A generated design alternative: a configuration and the instructors'
// predicted (normalized) accuracy label for it.
struct Proposal {
  QuantConfig config;
  double predicted_label = 0.0;
};

}  // namespace aq

#endif  // AQ_TYPES_HPP_
