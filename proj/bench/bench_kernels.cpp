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

#include <benchmark/benchmark.h>

#include <vector>

#include "aq/kernels.hpp"
#include "aq/quantenv.hpp"
#include "aq/random.hpp"

namespace {

std::vector<double> random_tensor(std::size_t n) {
  aq::SplitMix64 rng(42);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-3.0, 3.0);
  return v;
}

std::vector<aq::QuantConfig> random_configs(std::size_t n, std::size_t layers) {
  aq::SplitMix64 rng(7);
  std::vector<aq::QuantConfig> out(n);
  for (auto& c : out) {
    c.bits.resize(layers);
    for (auto& b : c.bits) b = static_cast<int>(rng.uniform_int(1, 32));
  }
  return out;
}

const aq::QuantParams kParams = aq::QuantParams::make(6, -3.0, 3.0);

void BM_FakeQuantizeSerial(benchmark::State& state) {
  auto v = random_tensor(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    aq::kernels::serial::fake_quantize(v, kParams);
    benchmark::DoNotOptimize(v.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_FakeQuantizeParallel(benchmark::State& state) {
  auto v = random_tensor(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    aq::kernels::fake_quantize(v, kParams);
    benchmark::DoNotOptimize(v.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

const aq::Environment& trained_env() {
  static const aq::Environment env = aq::Environment::trained(3, 6);
  return env;
}

void BM_EvaluateSerial(benchmark::State& state) {
  const auto configs = random_configs(static_cast<std::size_t>(state.range(0)), trained_env().layer_count());
  for (auto _ : state) benchmark::DoNotOptimize(aq::kernels::serial::evaluate_many(trained_env(), configs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EvaluateParallel(benchmark::State& state) {
  const auto configs = random_configs(static_cast<std::size_t>(state.range(0)), trained_env().layer_count());
  for (auto _ : state) benchmark::DoNotOptimize(aq::kernels::evaluate_many(trained_env(), configs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_FakeQuantizeSerial)->Arg(1 << 12)->Arg(1 << 20);
BENCHMARK(BM_FakeQuantizeParallel)->Arg(1 << 12)->Arg(1 << 20);
BENCHMARK(BM_EvaluateSerial)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateParallel)->Arg(16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
