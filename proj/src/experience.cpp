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

#include "aq/experience.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "aq/error.hpp"
#include "aq/kernels.hpp"
#include "aq/random.hpp"

namespace aq {

NormalizedLabel normalize(double accuracy, const LabelMeta& meta) {
  const double raw = (accuracy - meta.acc_min) / (meta.acc_max - meta.acc_min);
  NormalizedLabel out;
  out.label = std::clamp(raw, 0.0, 1.0);
  out.clamped = !(raw >= 0.0 && raw <= 1.0);
  return out;
}

double denormalize(double label, const LabelMeta& meta) {
  return meta.acc_min + label * (meta.acc_max - meta.acc_min);
}

std::vector<double> encode_config(const QuantConfig& config) {
  config.validate(config.size());
  std::vector<double> g;
  g.reserve(config.size());
  for (int b : config.bits) g.push_back(static_cast<double>(b - 1) / 31.0);
  return g;
}

QuantConfig decode_config(std::span<const double> encoded) {
  QuantConfig c;
  c.bits.reserve(encoded.size());
  for (std::size_t l = 0; l < encoded.size(); ++l) {
    const double g = encoded[l];
    if (!(g >= 0.0 && g <= 1.0))
      fail(ErrorKind::kEncoding, "encoded component " + std::to_string(l) + " outside [0, 1]");
    c.bits.push_back(1 + static_cast<int>(std::round(31.0 * g)));
  }
  return c;
}

std::string to_string(SamplingScheme scheme) {
  return scheme == SamplingScheme::kCapped ? "capped" : "uniform";
}

SamplingScheme sampling_from_string(const std::string& name) {
  if (name == "uniform") return SamplingScheme::kUniform;
  if (name == "capped") return SamplingScheme::kCapped;
  fail(ErrorKind::kInput, "unknown sampling scheme '" + name + "' (uniform|capped)");
}

Partition split_indices(std::size_t n, std::uint64_t split_seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(split_seed);
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
  Partition p;
  p.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  p.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return p;
}

std::vector<DesignPoint> ExperienceSet::train_points() const {
  std::vector<DesignPoint> out;
  out.reserve(meta.partition.train.size());
  for (auto i : meta.partition.train) out.push_back(points.at(i));
  return out;
}

std::vector<DesignPoint> ExperienceSet::test_points() const {
  std::vector<DesignPoint> out;
  out.reserve(meta.partition.test.size());
  for (auto i : meta.partition.test) out.push_back(points.at(i));
  return out;
}

namespace {

LabelMeta bounds_over(const std::vector<DesignPoint>& points, std::span<const std::size_t> indices) {
  LabelMeta m{1.0, 0.0};
  for (auto i : indices) {
    m.acc_min = std::min(m.acc_min, points[i].accuracy);
    m.acc_max = std::max(m.acc_max, points[i].accuracy);
  }
  return m;
}

}  // namespace

void ExperienceSet::validate() const {
  const std::size_t n = points.size();
  const std::size_t layers = meta.environment.layer_count;
  for (std::size_t i = 0; i < n; ++i) {
    points[i].config.validate(layers);
    if (!(points[i].accuracy >= 0.0 && points[i].accuracy <= 1.0))
      fail(ErrorKind::kConsistency, "point " + std::to_string(i) + ": accuracy outside [0, 1]");
  }
  const auto& p = meta.partition;
  if (p.train.size() + p.test.size() != n)
    fail(ErrorKind::kConsistency, "partition does not cover the points");
  if (p.train.size() != static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n))))
    fail(ErrorKind::kConsistency, "train partition is not 80% of the points");
  std::vector<char> seen(n, 0);
  for (const auto* part : {&p.train, &p.test})
    for (auto i : *part) {
      if (i >= n || seen[i]) fail(ErrorKind::kConsistency, "partition indices overlap or are out of range");
      seen[i] = 1;
    }
  if (!(meta.labels.acc_max - meta.labels.acc_min >= 1e-6))
    fail(ErrorKind::kConsistency, "label bounds are degenerate");
  if (!(bounds_over(points, p.train) == meta.labels))
    fail(ErrorKind::kConsistency, "label bounds do not match the training partition");
}

bool operator==(const ExperienceSet& a, const ExperienceSet& b) {
  return a.points == b.points && a.meta.environment.to_json() == b.meta.environment.to_json() &&
         a.meta.sampling_seed == b.meta.sampling_seed && a.meta.split_seed == b.meta.split_seed &&
         a.meta.sampling == b.meta.sampling && a.meta.labels == b.meta.labels &&
         a.meta.partition == b.meta.partition;
}

ExperienceSet collect(const Environment& env, std::size_t n, std::uint64_t seed,
                      const CollectOptions& options) {
  if (n < 10) fail(ErrorKind::kTooFewSamples, "collect needs at least 10 samples, got " + std::to_string(n));
  const std::size_t layers = env.layer_count();

  // Configs are drawn serially so the set depends only on the seed; repeated
  // configs are redrawn so that train and test never share a config.
  SplitMix64 rng(seed);
  std::vector<QuantConfig> configs;
  configs.reserve(n);
  std::unordered_set<QuantConfig, QuantConfigHash> unique;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 1000 * n;
  while (configs.size() < n) {
    if (++attempts > max_attempts)
      fail(ErrorKind::kTooFewSamples, "could not draw " + std::to_string(n) + " distinct configs");
    QuantConfig c;
    c.bits.resize(layers);
    const int cap = options.sampling == SamplingScheme::kCapped
                        ? static_cast<int>(rng.uniform_int(1, QuantConfig::kMaxBits))
                        : QuantConfig::kMaxBits;
    for (auto& b : c.bits) b = static_cast<int>(rng.uniform_int(1, cap));
    if (unique.insert(c).second) configs.push_back(std::move(c));
  }

  const auto accuracies = kernels::evaluate_many(env, configs, options.threads);

  ExperienceSet set;
  set.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) set.points.push_back({std::move(configs[i]), accuracies[i]});
  auto& meta = set.meta;
  meta.environment = env.descriptor();
  meta.sampling_seed = seed;
  meta.split_seed = options.split_seed.value_or(derive_seed(seed, 0x5b1));
  meta.sampling = options.sampling;
  meta.partition = split_indices(n, meta.split_seed);
  meta.labels = bounds_over(set.points, meta.partition.train);
  if (meta.labels.acc_max - meta.labels.acc_min < 1e-6)
    fail(ErrorKind::kDegenerateEnvironment, "training accuracies span less than 1e-6");
  spdlog::info("collected {} points, train accuracy range [{:.4f}, {:.4f}]", n, meta.labels.acc_min,
               meta.labels.acc_max);
  return set;
}

std::size_t audit_test_isolation(const ExperienceSet& set, std::span<const QuantConfig> seen) {
  std::unordered_set<QuantConfig, QuantConfigHash> test;
  for (auto i : set.meta.partition.test) test.insert(set.points.at(i).config);
  std::size_t overlap = 0;
  for (const auto& c : seen) overlap += test.count(c);
  return overlap;
}

std::filesystem::path meta_path_for(const std::filesystem::path& jsonl_path) {
  auto p = jsonl_path;
  if (p.extension() == ".jsonl") p.replace_extension();
  p += ".meta.json";
  return p;
}

void save(const ExperienceSet& set, const std::filesystem::path& jsonl_path) {
  set.validate();
  std::string lines;
  for (const auto& pt : set.points) {
    lines += "{\"config\":[";
    for (std::size_t l = 0; l < pt.config.bits.size(); ++l) {
      if (l) lines += ',';
      lines += std::to_string(pt.config.bits[l]);
    }
    lines += "],\"accuracy\":" + format_double(pt.accuracy) + "}\n";
  }
  write_text_file(jsonl_path, lines);

  const auto& m = set.meta;
  const Json meta{{"format", "aq.experiences"},
                  {"version", 1},
                  {"environment", m.environment.to_json()},
                  {"count", set.points.size()},
                  {"sampling", to_string(m.sampling)},
                  {"sampling_seed", m.sampling_seed},
                  {"split_seed", m.split_seed},
                  {"acc_min", m.labels.acc_min},
                  {"acc_max", m.labels.acc_max},
                  {"train_indices", m.partition.train},
                  {"test_indices", m.partition.test}};
  write_text_file(meta_path_for(jsonl_path), dump_json(meta, 2) + "\n");
}

ExperienceSet load_experiences(const std::filesystem::path& jsonl_path) {
  ExperienceSet set;
  const Json meta = read_json_file(meta_path_for(jsonl_path));
  try {
    auto& m = set.meta;
    m.environment = EnvDescriptor::from_json(meta.at("environment"));
    m.sampling = sampling_from_string(meta.at("sampling").get<std::string>());
    m.sampling_seed = meta.at("sampling_seed").get<std::uint64_t>();
    m.split_seed = meta.at("split_seed").get<std::uint64_t>();
    m.labels.acc_min = meta.at("acc_min").get<double>();
    m.labels.acc_max = meta.at("acc_max").get<double>();
    m.partition.train = meta.at("train_indices").get<std::vector<std::size_t>>();
    m.partition.test = meta.at("test_indices").get<std::vector<std::size_t>>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::kParse, meta_path_for(jsonl_path).string() + ": " + e.what());
  }

  std::istringstream in(read_text_file(jsonl_path));
  std::string line;
  std::size_t line_no = 0;
  const std::size_t layers = set.meta.environment.layer_count;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = jsonl_path.string() + ":" + std::to_string(line_no);
    DesignPoint pt;
    try {
      const Json rec = Json::parse(line);
      pt.config.bits = rec.at("config").get<std::vector<int>>();
      pt.accuracy = rec.at("accuracy").get<double>();
    } catch (const Json::exception& e) {
      fail(ErrorKind::kParse, "line " + std::to_string(line_no) + " (" + where + "): " + e.what());
    }
    if (pt.config.size() != layers)
      fail(ErrorKind::kConsistency, "line " + std::to_string(line_no) + " (" + where + "): config has " +
                                        std::to_string(pt.config.size()) + " layers, expected " +
                                        std::to_string(layers));
    set.points.push_back(std::move(pt));
  }
  if (meta.value("count", set.points.size()) != set.points.size())
    fail(ErrorKind::kConsistency, "record count differs from meta count");
  set.validate();
  return set;
}

}  // namespace aq
