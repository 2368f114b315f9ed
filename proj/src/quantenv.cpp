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

#include "aq/quantenv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "aq/error.hpp"
#include "aq/kernels.hpp"
#include "aq/random.hpp"

namespace aq {

// ---------------------------------------------------------------------------
// Shared types

void QuantConfig::validate(std::size_t layer_count) const {
  if (bits.size() != layer_count)
    fail(ErrorKind::kConsistency, "config has " + std::to_string(bits.size()) +
                                      " layers, expected " + std::to_string(layer_count));
  for (std::size_t l = 0; l < bits.size(); ++l)
    if (bits[l] < kMinBits || bits[l] > kMaxBits)
      fail(ErrorKind::kInput, "layer " + std::to_string(l) + ": bit-width " +
                                  std::to_string(bits[l]) + " outside [1, 32]");
}

QuantConfig QuantConfig::uniform(std::size_t layer_count, int b) {
  QuantConfig c{std::vector<int>(layer_count, b)};
  c.validate(layer_count);
  return c;
}

std::string QuantConfig::to_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(bits[i]);
  }
  return s + "]";
}

std::size_t QuantConfigHash::operator()(const QuantConfig& config) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int b : config.bits) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(h);
}

void LayerResourceSpec::validate() const {
  if (weights.size() != activations.size())
    fail(ErrorKind::kConsistency, "resource spec: weight and activation lists differ in length");
  for (std::size_t l = 0; l < weights.size(); ++l)
    if (weights[l] < 1 || activations[l] < 1)
      fail(ErrorKind::kInput, "resource spec: layer " + std::to_string(l) + " has a zero count");
}

// ---------------------------------------------------------------------------
// Fake quantization

QuantParams QuantParams::make(int bit, double min_tensor, double max_tensor) {
  if (bit < QuantConfig::kMinBits || bit > QuantConfig::kMaxBits)
    fail(ErrorKind::kInput, "bit-width " + std::to_string(bit) + " outside [1, 32]");
  if (!(max_tensor > min_tensor))
    fail(ErrorKind::kDegenerateRange, "tensor range is degenerate (max <= min)");
  QuantParams p;
  p.bit = bit;
  p.min_tensor = min_tensor;
  p.max_tensor = max_tensor;
  p.scale = std::ldexp(1.0, bit) / (max_tensor - min_tensor);
  return p;
}

std::int64_t quantize_to_int(double value, const QuantParams& p) {
  const double half = std::ldexp(1.0, p.bit - 1);
  double code = std::round((value - p.min_tensor) * p.scale) - half;
  code = std::clamp(code, -half, half - 1.0);
  return static_cast<std::int64_t>(code);
}

double quantize_dequantize(double value, const QuantParams& p) {
  const double half = std::ldexp(1.0, p.bit - 1);
  return (static_cast<double>(quantize_to_int(value, p)) + half) / p.scale + p.min_tensor;
}

std::vector<double> quantize_dequantize(std::span<const double> values, const QuantParams& params) {
  std::vector<double> out(values.begin(), values.end());
  kernels::fake_quantize(out, params);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic oracle

SyntheticOracle SyntheticOracle::make(std::uint64_t seed, std::size_t layer_count) {
  if (layer_count < 1) fail(ErrorKind::kInput, "synthetic oracle needs at least one layer");
  SyntheticOracle o;
  o.seed = seed;
  SplitMix64 rng(seed);
  o.saturation.resize(layer_count);
  o.weight.resize(layer_count);
  for (std::size_t l = 0; l < layer_count; ++l) {
    o.saturation[l] = static_cast<int>(rng.uniform_int(4, 10));
    o.weight[l] = rng.uniform(0.5, 1.5);
  }
  const double total = std::accumulate(o.weight.begin(), o.weight.end(), 0.0);
  for (auto& w : o.weight) w /= total;
  return o;
}

double synthetic_accuracy(const SyntheticOracle& o, const QuantConfig& config) {
  config.validate(o.layer_count());
  double sum = 0.0;
  for (std::size_t l = 0; l < o.layer_count(); ++l) {
    const int c = o.saturation[l];
    sum += o.weight[l] * static_cast<double>(std::min(config.bits[l], c)) / c;
  }
  return std::clamp(o.acc_floor + (o.acc_ceiling - o.acc_floor) * sum, 0.0, 1.0);
}

LayerResourceSpec synthetic_resources(std::uint64_t seed, std::size_t layer_count) {
  SplitMix64 rng(derive_seed(seed, 0x5e5));
  LayerResourceSpec spec;
  for (std::size_t l = 0; l < layer_count; ++l) {
    spec.weights.push_back(1024u * static_cast<std::uint64_t>(rng.uniform_int(1, 16)));
    spec.activations.push_back(256u * static_cast<std::uint64_t>(rng.uniform_int(1, 8)));
  }
  return spec;
}

LayerResourceSpec network_resources(const nn::DenseNet& net) {
  LayerResourceSpec spec;
  for (const auto& l : net.layers) {
    spec.weights.push_back(static_cast<std::uint64_t>(l.weight.size()));
    spec.activations.push_back(static_cast<std::uint64_t>(l.out()));
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Trained environment

Json DatasetSpec::to_json() const {
  return Json{{"classes", classes},
              {"dim", dim},
              {"radius", radius},
              {"noise", noise},
              {"train_samples", train_samples},
              {"eval_samples", eval_samples},
              {"hidden", hidden},
              {"epochs", epochs},
              {"batch", batch},
              {"learning_rate", learning_rate},
              {"calibration_samples", calibration_samples}};
}

DatasetSpec DatasetSpec::from_json(const Json& doc) {
  DatasetSpec s;
  if (doc.is_null()) return s;
  if (!doc.is_object()) fail(ErrorKind::kParse, "dataset_spec must be an object");
  try {
    s.classes = doc.value("classes", s.classes);
    s.dim = doc.value("dim", s.dim);
    s.radius = doc.value("radius", s.radius);
    s.noise = doc.value("noise", s.noise);
    s.train_samples = doc.value("train_samples", s.train_samples);
    s.eval_samples = doc.value("eval_samples", s.eval_samples);
    s.hidden = doc.value("hidden", s.hidden);
    s.epochs = doc.value("epochs", s.epochs);
    s.batch = doc.value("batch", s.batch);
    s.learning_rate = doc.value("learning_rate", s.learning_rate);
    s.calibration_samples = doc.value("calibration_samples", s.calibration_samples);
  } catch (const Json::exception& e) {
    fail(ErrorKind::kParse, std::string("dataset_spec: ") + e.what());
  }
  if (s.classes < 2 || s.dim < 1 || s.train_samples < 1 || s.eval_samples < 1 || s.hidden < 1 ||
      s.batch < 1 || s.calibration_samples < 1 || s.calibration_samples > s.train_samples)
    fail(ErrorKind::kInput, "dataset_spec has out-of-range fields");
  return s;
}

ClusterDataset make_cluster_dataset(std::uint64_t seed, const DatasetSpec& spec) {
  SplitMix64 rng(derive_seed(seed, 0xda7a));
  nn::Matrix means(spec.classes, spec.dim);
  for (int c = 0; c < spec.classes; ++c) {
    for (int d = 0; d < spec.dim; ++d) means(c, d) = rng.normal();
    means.row(c) *= spec.radius / means.row(c).norm();
  }
  const int total = spec.train_samples + spec.eval_samples;
  ClusterDataset ds;
  ds.inputs.resize(total, spec.dim);
  ds.labels.resize(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    const int label = static_cast<int>(rng.uniform_int(0, spec.classes - 1));
    ds.labels[static_cast<std::size_t>(i)] = label;
    for (int d = 0; d < spec.dim; ++d) ds.inputs(i, d) = means(label, d) + spec.noise * rng.normal();
  }
  for (int i = 0; i < total; ++i)
    (i < spec.train_samples ? ds.train_indices : ds.eval_indices).push_back(static_cast<std::size_t>(i));
  return ds;
}

namespace {

double classification_accuracy(const nn::Matrix& logits, std::span<const int> labels) {
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    if (static_cast<int>(best) == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

nn::Matrix gather_rows(const nn::Matrix& m, std::span<const std::size_t> rows) {
  nn::Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

void finish_env(TrainedEnv& env, const ClusterDataset& ds) {
  env.eval_inputs = gather_rows(ds.inputs, ds.eval_indices);
  env.eval_labels.clear();
  for (auto i : ds.eval_indices) env.eval_labels.push_back(ds.labels[i]);
  env.train_indices = ds.train_indices;
  env.eval_indices = ds.eval_indices;

  // Calibration ranges over the first training samples.
  const std::span<const std::size_t> calib(ds.train_indices.data(),
                                           static_cast<std::size_t>(env.spec.calibration_samples));
  const auto fwd = nn::forward(env.reference, gather_rows(ds.inputs, calib), nn::Mode::kEval);
  env.calibration.clear();
  for (const auto& t : fwd.trace.layers) {
    TensorRange r{t.activated.minCoeff(), t.activated.maxCoeff()};
    if (!(r.max - r.min > 1e-12)) r.max = r.min + 1e-6;
    env.calibration.push_back(r);
  }
  env.baseline_accuracy = float_accuracy(env);
}

}  // namespace

TrainedEnv build_trained_env(std::uint64_t seed, std::size_t layer_count, const DatasetSpec& spec) {
  if (layer_count < 2) fail(ErrorKind::kInput, "trained environment needs at least 2 layers");
  const ClusterDataset ds = make_cluster_dataset(seed, spec);

  SplitMix64 init_rng(derive_seed(seed, 0x1417));
  nn::MlpSpec mlp;
  mlp.input = spec.dim;
  mlp.hidden.assign(layer_count - 1, spec.hidden);
  mlp.output = spec.classes;
  mlp.hidden_activation = {nn::Activation::kTanh, 0.0};
  mlp.output_activation = {nn::Activation::kIdentity, 0.0};
  nn::DenseNet net = nn::make_mlp(mlp, init_rng);
  nn::AdamState adam(net, {spec.learning_rate, 0.9, 0.999, 1e-8});

  SplitMix64 shuffle_rng(derive_seed(seed, 0x5u));
  std::vector<std::size_t> order = ds.train_indices;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(spec.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(spec.batch));
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const nn::Matrix x = gather_rows(ds.inputs, rows);
      const auto fwd = nn::forward(net, x, nn::Mode::kTrain);
      // Softmax cross-entropy.
      nn::Matrix grad = fwd.output;
      const double n = static_cast<double>(rows.size());
      for (Eigen::Index i = 0; i < grad.rows(); ++i) {
        const double mx = grad.row(i).maxCoeff();
        grad.row(i) = (grad.row(i).array() - mx).exp().matrix();
        const double z = grad.row(i).sum();
        grad.row(i) /= z;
        const int label = ds.labels[rows[static_cast<std::size_t>(i)]];
        epoch_loss -= std::log(std::max(grad(i, label), 1e-300));
        grad(i, label) -= 1.0;
      }
      grad /= n;
      nn::adam_step(net, nn::backward(net, fwd.trace, grad), adam);
    }
    epoch_loss /= static_cast<double>(order.size());
    spdlog::debug("env train epoch {} loss {:.6f}", epoch, epoch_loss);
    if (!std::isfinite(epoch_loss) || !nn::all_finite(net))
      fail(ErrorKind::kEnvironmentBuild, "reference training diverged at epoch " + std::to_string(epoch));
  }

  TrainedEnv env;
  env.seed = seed;
  env.spec = spec;
  env.reference = std::move(net);
  finish_env(env, ds);
  if (!(env.baseline_accuracy > 0.0))
    fail(ErrorKind::kEnvironmentBuild, "reference network has zero accuracy");
  return env;
}

TrainedEnv attach_trained_env(std::uint64_t seed, const DatasetSpec& spec, nn::DenseNet reference) {
  if (reference.input_size() != spec.dim || reference.output_size() != spec.classes)
    fail(ErrorKind::kConsistency, "reference network does not match dataset_spec");
  TrainedEnv env;
  env.seed = seed;
  env.spec = spec;
  env.reference = std::move(reference);
  finish_env(env, make_cluster_dataset(seed, spec));
  return env;
}

double float_accuracy(const TrainedEnv& env) {
  return classification_accuracy(nn::predict(env.reference, env.eval_inputs), env.eval_labels);
}

double evaluate(const TrainedEnv& env, const QuantConfig& config) {
  config.validate(env.layer_count());
  nn::Matrix x = env.eval_inputs;
  for (std::size_t l = 0; l < env.reference.layers.size(); ++l) {
    const auto& layer = env.reference.layers[l];
    const int bits = config.bits[l];
    nn::Matrix w = layer.weight;
    const double lo = w.minCoeff();
    const double hi = w.maxCoeff();
    if (hi > lo) kernels::fake_quantize({w.data(), static_cast<std::size_t>(w.size())}, QuantParams::make(bits, lo, hi));
    nn::DenseLayer q = layer;
    q.weight = std::move(w);
    nn::DenseNet single;
    single.layers.push_back(std::move(q));
    x = nn::predict(single, x);
    const auto& r = env.calibration[l];
    kernels::fake_quantize({x.data(), static_cast<std::size_t>(x.size())}, QuantParams::make(bits, r.min, r.max));
  }
  return classification_accuracy(x, env.eval_labels);
}

// ---------------------------------------------------------------------------
// Descriptor and environment facade

Json EnvDescriptor::to_json() const {
  Json w = Json::array();
  Json a = Json::array();
  for (auto v : resources.weights) w.push_back(v);
  for (auto v : resources.activations) a.push_back(v);
  return Json{{"kind", kind},
              {"seed", seed},
              {"layer_count", layer_count},
              {"dataset_spec", dataset_spec},
              {"baseline_accuracy", baseline_accuracy},
              {"resource_spec", {{"weights", w}, {"activations", a}}}};
}

EnvDescriptor EnvDescriptor::from_json(const Json& doc) {
  EnvDescriptor d;
  try {
    d.kind = doc.at("kind").get<std::string>();
    d.seed = doc.at("seed").get<std::uint64_t>();
    d.layer_count = doc.at("layer_count").get<std::size_t>();
    d.dataset_spec = doc.value("dataset_spec", Json());
    d.baseline_accuracy = doc.at("baseline_accuracy").get<double>();
    const auto& rs = doc.at("resource_spec");
    d.resources.weights = rs.at("weights").get<std::vector<std::uint64_t>>();
    d.resources.activations = rs.at("activations").get<std::vector<std::uint64_t>>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::kParse, std::string("environment descriptor: ") + e.what());
  }
  if (d.kind != "synthetic" && d.kind != "trained")
    fail(ErrorKind::kParse, "environment descriptor: unknown kind '" + d.kind + "'");
  if (d.resources.size() != d.layer_count)
    fail(ErrorKind::kConsistency, "environment descriptor: resource_spec length differs from layer_count");
  d.resources.validate();
  return d;
}

std::vector<std::string> EnvDescriptor::diff(const EnvDescriptor& other) const {
  std::vector<std::string> out;
  auto note = [&](const std::string& field, const std::string& a, const std::string& b) {
    out.push_back(field + ": " + a + " != " + b);
  };
  if (kind != other.kind) note("kind", kind, other.kind);
  if (seed != other.seed) note("seed", std::to_string(seed), std::to_string(other.seed));
  if (layer_count != other.layer_count)
    note("layer_count", std::to_string(layer_count), std::to_string(other.layer_count));
  if (dataset_spec != other.dataset_spec) note("dataset_spec", dataset_spec.dump(), other.dataset_spec.dump());
  if (baseline_accuracy != other.baseline_accuracy)
    note("baseline_accuracy", format_double(baseline_accuracy), format_double(other.baseline_accuracy));
  if (!(resources == other.resources)) {
    const auto& a = resources;
    const auto& b = other.resources;
    if (a.weights.size() != b.weights.size() || a.activations.size() != b.activations.size()) {
      note("resource_spec layers", std::to_string(a.weights.size()), std::to_string(b.weights.size()));
    } else {
      for (std::size_t l = 0; l < a.weights.size(); ++l) {
        if (a.weights[l] != b.weights[l])
          note("resource_spec.weights[" + std::to_string(l) + "]", std::to_string(a.weights[l]),
               std::to_string(b.weights[l]));
        if (a.activations[l] != b.activations[l])
          note("resource_spec.activations[" + std::to_string(l) + "]", std::to_string(a.activations[l]),
               std::to_string(b.activations[l]));
      }
    }
  }
  return out;
}

struct Environment::Impl {
  EnvDescriptor descriptor;
  std::optional<SyntheticOracle> oracle;
  std::optional<TrainedEnv> trained;
};

Environment Environment::synthetic(std::uint64_t seed, std::size_t layer_count) {
  auto impl = std::make_shared<Impl>();
  impl->oracle = SyntheticOracle::make(seed, layer_count);
  auto& d = impl->descriptor;
  d.kind = "synthetic";
  d.seed = seed;
  d.layer_count = layer_count;
  d.baseline_accuracy = synthetic_accuracy(*impl->oracle, QuantConfig::uniform(layer_count, 32));
  d.resources = synthetic_resources(seed, layer_count);
  return Environment(std::move(impl));
}

Environment Environment::trained(std::uint64_t seed, std::size_t layer_count, const DatasetSpec& spec) {
  return from_trained(build_trained_env(seed, layer_count, spec));
}

Environment Environment::from_trained(TrainedEnv env) {
  auto impl = std::make_shared<Impl>();
  auto& d = impl->descriptor;
  d.kind = "trained";
  d.seed = env.seed;
  d.layer_count = env.layer_count();
  d.dataset_spec = env.spec.to_json();
  d.baseline_accuracy = env.baseline_accuracy;
  d.resources = network_resources(env.reference);
  impl->trained = std::move(env);
  return Environment(std::move(impl));
}

const EnvDescriptor& Environment::descriptor() const { return impl_->descriptor; }

double Environment::evaluate(const QuantConfig& config) const {
  if (impl_->oracle) return synthetic_accuracy(*impl_->oracle, config);
  return aq::evaluate(*impl_->trained, config);
}

const SyntheticOracle* Environment::synthetic_oracle() const {
  return impl_->oracle ? &*impl_->oracle : nullptr;
}

const TrainedEnv* Environment::trained_env() const {
  return impl_->trained ? &*impl_->trained : nullptr;
}

void Environment::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "descriptor.json", dump_json(descriptor().to_json(), 2) + "\n");
  if (const auto* t = trained_env()) {
    write_text_file(dir / "reference.json", nn::serialize(t->reference));
    Json calib = Json::array();
    for (const auto& r : t->calibration) calib.push_back(Json::array({r.min, r.max}));
    write_text_file(dir / "calibration.json", dump_json(Json{{"activation_ranges", calib}}, 2) + "\n");
  }
}

Environment Environment::load(const std::filesystem::path& dir) {
  const EnvDescriptor d = EnvDescriptor::from_json(read_json_file(dir / "descriptor.json"));
  Environment env = [&] {
    if (d.kind == "synthetic") return synthetic(d.seed, d.layer_count);
    TrainedEnv t = attach_trained_env(d.seed, DatasetSpec::from_json(d.dataset_spec),
                                      nn::deserialize(read_text_file(dir / "reference.json")));
    const Json calib = read_json_file(dir / "calibration.json");
    const auto ranges = calib.at("activation_ranges");
    if (ranges.size() != t.calibration.size())
      fail(ErrorKind::kConsistency, "calibration.json layer count mismatch");
    for (std::size_t l = 0; l < ranges.size(); ++l) {
      const TensorRange r{ranges[l].at(0).get<double>(), ranges[l].at(1).get<double>()};
      if (r.min != t.calibration[l].min || r.max != t.calibration[l].max)
        fail(ErrorKind::kConsistency, "calibration range of layer " + std::to_string(l) +
                                          " does not match the reference network");
    }
    return from_trained(std::move(t));
  }();
  const auto delta = d.diff(env.descriptor());
  if (!delta.empty()) {
    std::string msg = "environment in " + dir.string() + " does not reproduce its descriptor:";
    for (const auto& s : delta) msg += "\n  " + s;
    fail(ErrorKind::kDescriptor, msg);
  }
  return env;
}

Environment Environment::rebuild(const EnvDescriptor& d) {
  Environment env = d.kind == "synthetic"
                        ? synthetic(d.seed, d.layer_count)
                        : trained(d.seed, d.layer_count, DatasetSpec::from_json(d.dataset_spec));
  const auto delta = d.diff(env.descriptor());
  if (!delta.empty()) {
    std::string msg = "rebuilt environment does not reproduce its descriptor:";
    for (const auto& s : delta) msg += "\n  " + s;
    fail(ErrorKind::kDescriptor, msg);
  }
  return env;
}

}  // namespace aq
