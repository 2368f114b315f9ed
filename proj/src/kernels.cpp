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

#include "aq/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>

#include <omp.h>

namespace aq::kernels {

namespace {

// Below this size the parallel region costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 14;

inline double fake_quantize_one(double v, double min, double scale, double half) {
  double code = std::round((v - min) * scale) - half;
  code = std::clamp(code, -half, half - 1.0);
  return (code + half) / scale + min;
}

}  // namespace

void fake_quantize(std::span<double> values, const QuantParams& p) {
  const double half = std::ldexp(1.0, p.bit - 1);
  const double min = p.min_tensor;
  const double scale = p.scale;
  double* data = values.data();
  const auto n = static_cast<std::int64_t>(values.size());
#pragma omp parallel for simd schedule(static) if (values.size() >= kParallelThreshold)
  for (std::int64_t i = 0; i < n; ++i) data[i] = fake_quantize_one(data[i], min, scale, half);
}

std::vector<double> evaluate_many(const Environment& env, std::span<const QuantConfig> configs,
                                  int threads) {
  std::vector<double> out(configs.size());
  const auto n = static_cast<std::int64_t>(configs.size());
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 4) num_threads(nthreads)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = env.evaluate(configs[static_cast<std::size_t>(i)]);
    } catch (...) {
#pragma omp critical(aq_evaluate_many_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

namespace serial {

void fake_quantize(std::span<double> values, const QuantParams& p) {
  for (auto& v : values) v = quantize_dequantize(v, p);
}

std::vector<double> evaluate_many(const Environment& env, std::span<const QuantConfig> configs) {
  std::vector<double> out;
  out.reserve(configs.size());
  for (const auto& c : configs) out.push_back(env.evaluate(c));
  return out;
}

}  // namespace serial

}  // namespace aq::kernels
