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

// Brute-force recomputations of the hardware cost model and the selection
// rule, written independently of src/hwtune.cpp.

#ifndef AQ_TESTS_HW_ORACLES_HPP_
#define AQ_TESTS_HW_ORACLES_HPP_

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "aq/hwtune.hpp"

namespace aq::testing {

inline std::uint64_t ceil_bytes(std::uint64_t n, int bits) { return (n * static_cast<std::uint64_t>(bits) + 7) / 8; }

// Independent per-layer recomputation.
inline hw::ResourceReport brute_resources(const LayerResourceSpec& spec, const QuantConfig& c) {
  hw::ResourceReport r;
  for (std::size_t l = 0; l < c.bits.size(); ++l) {
    r.param_bytes += ceil_bytes(spec.weights[l], c.bits[l]);
    const auto a = ceil_bytes(spec.activations[l], c.bits[l]);
    r.act_bytes_sum += a;
    r.act_bytes_peak = std::max(r.act_bytes_peak, a);
  }
  return r;
}

// Exhaustive scan written as the selection rule reads.
inline std::optional<std::size_t> brute_select(const std::vector<Proposal>& ps, const LayerResourceSpec& spec,
                                               const hw::Budget& b) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto r = brute_resources(spec, ps[i].config);
    if (b.param_bytes && r.param_bytes > *b.param_bytes) continue;
    if (b.act_bytes_sum && r.act_bytes_sum > *b.act_bytes_sum) continue;
    if (b.act_bytes_peak && r.act_bytes_peak > *b.act_bytes_peak) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& cur = ps[*best];
    const auto cur_bytes = brute_resources(spec, cur.config).param_bytes;
    if (ps[i].predicted_label > cur.predicted_label ||
        (ps[i].predicted_label == cur.predicted_label && r.param_bytes < cur_bytes))
      best = i;
  }
  return best;
}

}  // namespace aq::testing

#endif  // AQ_TESTS_HW_ORACLES_HPP_
