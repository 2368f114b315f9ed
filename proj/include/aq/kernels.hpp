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

#ifndef AQ_KERNELS_HPP_
#define AQ_KERNELS_HPP_

#include <span>
#include <vector>

#include "aq/quantenv.hpp"

// Data-parallel kernels. Every OpenMP kernel has a serial twin in
// aq::kernels::serial that the tests hold it to, element for element.
namespace aq::kernels {

void fake_quantize(std::span<double> values, const QuantParams& params);

// Evaluates configs in env; results are in input order regardless of
// scheduling. threads <= 0 uses the OpenMP default.
std::vector<double> evaluate_many(const Environment& env, std::span<const QuantConfig> configs,
                                  int threads = 0);

namespace serial {

void fake_quantize(std::span<double> values, const QuantParams& params);
std::vector<double> evaluate_many(const Environment& env, std::span<const QuantConfig> configs);

}  // namespace serial

}  // namespace aq::kernels

#endif  // AQ_KERNELS_HPP_
