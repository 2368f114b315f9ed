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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "aq/error.hpp"
#include "aq/experience.hpp"

namespace aq {
namespace {

namespace fs = std::filesystem;

ErrorKind kind_of(const std::function<void()>& fn, std::string* message = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kIo;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("aq_exp_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Normalize, Endpoints) {
  const LabelMeta m{0.2, 0.8};
  EXPECT_EQ(normalize(0.2, m).label, 0.0);
  EXPECT_EQ(normalize(0.8, m).label, 1.0);
  EXPECT_FALSE(normalize(0.8, m).clamped);
}

TEST(Normalize, HandAffine) {
  EXPECT_NEAR(normalize(0.5, {0.2, 0.8}).label, 0.5, 1e-15);
}

TEST(Normalize, ClampsWithFlag) {
  const LabelMeta m{0.2, 0.8};
  const auto hi = normalize(0.95, m);
  EXPECT_EQ(hi.label, 1.0);
  EXPECT_TRUE(hi.clamped);
  const auto lo = normalize(0.1, m);
  EXPECT_EQ(lo.label, 0.0);
  EXPECT_TRUE(lo.clamped);
}

TEST(Normalize, InverseAndMonotone) {
  const LabelMeta m{0.183, 0.95};
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double a = m.acc_min + (m.acc_max - m.acc_min) * i / 100.0;
    const double y = normalize(a, m).label;
    EXPECT_GT(y, prev);
    prev = y;
    EXPECT_NEAR(denormalize(y, m), a, 1e-15);
  }
}

TEST(Encoding, EndpointsAndHalfway) {
  EXPECT_EQ(encode_config(QuantConfig{{1}})[0], 0.0);
  EXPECT_EQ(encode_config(QuantConfig{{32}})[0], 1.0);
  const std::vector<double> half{0.5};
  EXPECT_EQ(decode_config(half).bits[0], 17);
}

TEST(Encoding, RoundTripAllWidths) {
  for (int b = 1; b <= 32; ++b) EXPECT_EQ(decode_config(encode_config(QuantConfig{{b}})).bits[0], b);
}

TEST(Encoding, OutOfRangeComponent) {
  for (double g : {-0.01, 1.01, std::nan("")}) {
    const std::vector<double> v{0.3, g};
    EXPECT_EQ(kind_of([&] { decode_config(v); }), ErrorKind::kEncoding);
  }
}

TEST(Split, SizesAndDisjointness) {
  const auto p = split_indices(100, 5);
  EXPECT_EQ(p.train.size(), 80u);
  EXPECT_EQ(p.test.size(), 20u);
  std::set<std::size_t> all(p.train.begin(), p.train.end());
  for (auto i : p.test) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 100u);
  EXPECT_EQ(split_indices(100, 5), p);
  EXPECT_NE(split_indices(100, 6), p);
  EXPECT_EQ(split_indices(13, 1).train.size(), 10u);  // round(10.4)
}

TEST(Collect, TooFewSamples) {
  EXPECT_EQ(kind_of([] { collect(Environment::synthetic(1, 4), 9, 1); }), ErrorKind::kTooFewSamples);
}

TEST(Collect, HundredPointsSplitEightyTwenty) {
  const auto set = collect(Environment::synthetic(1, 6), 100, 3);
  EXPECT_EQ(set.points.size(), 100u);
  EXPECT_EQ(set.train_points().size(), 80u);
  EXPECT_EQ(set.test_points().size(), 20u);
  EXPECT_NO_THROW(set.validate());
}

TEST(Collect, DeterministicAcrossThreadCounts) {
  const auto env = Environment::synthetic(2, 8);
  CollectOptions one;
  one.threads = 1;
  CollectOptions many;
  many.threads = 6;
  EXPECT_EQ(collect(env, 500, 9, one), collect(env, 500, 9, many));
}

TEST(Collect, SyntheticRangeBounds) {
  const auto set = collect(Environment::synthetic(7, 10), 5000, 11);
  EXPECT_GE(set.meta.labels.acc_min, 0.05);
  EXPECT_LE(set.meta.labels.acc_max, 0.95);
  EXPECT_LT(set.meta.labels.acc_min, set.meta.labels.acc_max);
  double lo = 1.0;
  double hi = 0.0;
  for (const auto& p : set.train_points()) {
    lo = std::min(lo, p.accuracy);
    hi = std::max(hi, p.accuracy);
  }
  EXPECT_EQ(lo, set.meta.labels.acc_min);
  EXPECT_EQ(hi, set.meta.labels.acc_max);
}

TEST(Collect, CappedSamplingReachesLowAccuracy) {
  const auto env = Environment::synthetic(7, 10);
  CollectOptions capped;
  capped.sampling = SamplingScheme::kCapped;
  const auto u = collect(env, 2000, 11);
  const auto c = collect(env, 2000, 11, capped);
  EXPECT_LT(c.meta.labels.acc_min, 0.3);
  EXPECT_LT(c.meta.labels.acc_min, u.meta.labels.acc_min);
  EXPECT_EQ(c.meta.sampling, SamplingScheme::kCapped);
}

TEST(Collect, ConfigsAreDistinct) {
  CollectOptions capped;
  capped.sampling = SamplingScheme::kCapped;
  const auto set = collect(Environment::synthetic(7, 3), 3000, 2, capped);
  std::set<std::vector<int>> seen;
  for (const auto& p : set.points) EXPECT_TRUE(seen.insert(p.config.bits).second);
}

TEST(Collect, MoreSamplesThanDistinctConfigs) {
  // A single layer has only 32 configs.
  EXPECT_EQ(kind_of([] { collect(Environment::synthetic(1, 1), 40, 1); }), ErrorKind::kTooFewSamples);
}

TEST(Collect, DegenerateEnvironment) {
  // Zero weights make the classifier's output independent of every bit-width.
  DatasetSpec spec;
  spec.train_samples = 600;
  spec.eval_samples = 200;
  SplitMix64 rng(3);
  nn::MlpSpec mlp{spec.dim, {spec.hidden}, spec.classes, {nn::Activation::kTanh, 0.0}};
  nn::DenseNet flat = nn::make_mlp(mlp, rng);
  for (auto& l : flat.layers) l.weight.setZero();
  const auto env = Environment::from_trained(attach_trained_env(3, spec, flat));
  EXPECT_EQ(kind_of([&] { collect(env, 50, 1); }), ErrorKind::kDegenerateEnvironment);
}

TEST(Audit, CountsTestOverlap) {
  const auto set = collect(Environment::synthetic(3, 5), 50, 4);
  std::vector<QuantConfig> train_configs;
  for (const auto& p : set.train_points()) train_configs.push_back(p.config);
  EXPECT_EQ(audit_test_isolation(set, train_configs), 0u);
  std::vector<QuantConfig> leaked{set.test_points()[0].config, set.test_points()[3].config};
  EXPECT_EQ(audit_test_isolation(set, leaked), 2u);
}

TEST(Persistence, RoundTripThousandPoints) {
  const auto dir = scratch("rt");
  const auto set = collect(Environment::synthetic(5, 7), 1000, 8);
  save(set, dir / "experiences.jsonl");
  EXPECT_TRUE(fs::exists(dir / "experiences.meta.json"));
  const auto back = load_experiences(dir / "experiences.jsonl");
  EXPECT_EQ(back, set);
  for (std::size_t i = 0; i < set.points.size(); ++i) EXPECT_EQ(back.points[i].accuracy, set.points[i].accuracy);
  fs::remove_all(dir);
}

void rewrite_line(const fs::path& path, std::size_t index, const std::string& replacement) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  in.close();
  lines[index] = replacement;
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : lines) out << l << "\n";
}

TEST(Persistence, CorruptLineIsNamed) {
  const auto dir = scratch("corrupt");
  save(collect(Environment::synthetic(5, 4), 30, 8), dir / "e.jsonl");
  rewrite_line(dir / "e.jsonl", 6, "{\"config\":[1,2,");
  std::string msg;
  EXPECT_EQ(kind_of([&] { load_experiences(dir / "e.jsonl"); }, &msg), ErrorKind::kParse);
  EXPECT_NE(msg.find("line 7"), std::string::npos) << msg;
  fs::remove_all(dir);
}

TEST(Persistence, WrongLayerCountIsConsistencyError) {
  const auto dir = scratch("len");
  save(collect(Environment::synthetic(5, 4), 30, 8), dir / "e.jsonl");
  rewrite_line(dir / "e.jsonl", 2, "{\"config\":[1,2,3],\"accuracy\":0.5}");
  EXPECT_EQ(kind_of([&] { load_experiences(dir / "e.jsonl"); }), ErrorKind::kConsistency);
  fs::remove_all(dir);
}

TEST(Persistence, MissingSidecar) {
  const auto dir = scratch("nometa");
  save(collect(Environment::synthetic(5, 4), 30, 8), dir / "e.jsonl");
  fs::remove(dir / "e.meta.json");
  EXPECT_THROW(load_experiences(dir / "e.jsonl"), Error);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace aq
