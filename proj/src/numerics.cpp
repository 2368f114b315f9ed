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

#include "aq/numerics.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "aq/error.hpp"

namespace aq::nn {

namespace {

Matrix activate(const ActivationSpec& act, const Matrix& pre) {
  switch (act.kind) {
    case Activation::kIdentity:
      return pre;
    case Activation::kLeakyRelu: {
      const double slope = act.slope;
      return pre.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
    }
    case Activation::kTanh:
      return pre.array().tanh().matrix();
    case Activation::kSigmoid:
      return pre.unaryExpr([](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
  }
  return pre;
}

// d activated / d pre, elementwise.
Matrix activation_slope(const ActivationSpec& act, const Matrix& pre,
                        const Matrix& activated) {
  switch (act.kind) {
    case Activation::kIdentity:
      return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::kLeakyRelu: {
      const double slope = act.slope;
      return pre.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    }
    case Activation::kTanh:
      return (1.0 - activated.array().square()).matrix();
    case Activation::kSigmoid:
      return (activated.array() * (1.0 - activated.array())).matrix();
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

std::string activation_tag(Activation kind) {
  switch (kind) {
    case Activation::kIdentity: return "identity";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_tag(const std::string& tag, std::size_t layer) {
  if (tag == "identity") return Activation::kIdentity;
  if (tag == "leaky_relu") return Activation::kLeakyRelu;
  if (tag == "tanh") return Activation::kTanh;
  if (tag == "sigmoid") return Activation::kSigmoid;
  fail(ErrorKind::kParse, "layer " + std::to_string(layer) + ": unknown activation '" + tag + "'");
}

void check_trace(const DenseNet& net, const ForwardTrace& trace) {
  if (trace.layers.size() != net.layers.size())
    fail(ErrorKind::kShape, "trace has " + std::to_string(trace.layers.size()) +
                                " layers, network has " + std::to_string(net.layers.size()));
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& t = trace.layers[k];
    if (t.input.cols() != net.layers[k].in() || t.linear.cols() != net.layers[k].out())
      fail(ErrorKind::kShape, "trace does not match network at layer " + std::to_string(k));
  }
}

}  // namespace

Eigen::Index DenseNet::input_size() const {
  return layers.empty() ? 0 : layers.front().in();
}

Eigen::Index DenseNet::output_size() const {
  return layers.empty() ? 0 : layers.back().out();
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    if (l.batch_norm) n += static_cast<std::size_t>(2 * l.out());
  }
  return n;
}

void DenseNet::validate() const {
  if (layers.empty()) fail(ErrorKind::kShape, "network has no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    const std::string at = "layer " + std::to_string(k);
    if (l.weight.rows() == 0 || l.weight.cols() == 0) fail(ErrorKind::kShape, at + ": empty weight");
    if (l.bias.size() != l.out()) fail(ErrorKind::kShape, at + ": bias size mismatch");
    if (k > 0 && l.in() != layers[k - 1].out())
      fail(ErrorKind::kShape, at + ": input size " + std::to_string(l.in()) +
                                  " does not match previous output " +
                                  std::to_string(layers[k - 1].out()));
    if (!(l.dropout >= 0.0 && l.dropout < 1.0)) fail(ErrorKind::kInput, at + ": dropout must be in [0, 1)");
    if (l.batch_norm) {
      const auto& bn = *l.batch_norm;
      if (bn.gamma.size() != l.out() || bn.beta.size() != l.out() ||
          bn.running_mean.size() != l.out() || bn.running_var.size() != l.out())
        fail(ErrorKind::kShape, at + ": batch-norm size mismatch");
    }
  }
}

ForwardResult forward(const DenseNet& net, const Matrix& input, Mode mode, std::uint64_t seed) {
  net.validate();
  if (input.cols() != net.input_size())
    fail(ErrorKind::kShape, "input width " + std::to_string(input.cols()) +
                                " does not match network input " + std::to_string(net.input_size()));
  if (!input.allFinite()) fail(ErrorKind::kInput, "non-finite network input");

  SplitMix64 rng(seed);
  ForwardResult result;
  result.trace.mode = mode;
  result.trace.layers.resize(net.layers.size());
  Matrix x = input;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& layer = net.layers[k];
    auto& t = result.trace.layers[k];
    t.linear.noalias() = x * layer.weight.transpose();
    t.linear.rowwise() += layer.bias.transpose();
    t.input = std::move(x);

    if (layer.batch_norm) {
      const auto& bn = *layer.batch_norm;
      Vector mean;
      Vector var;
      if (mode == Mode::kTrain) {
        mean = t.linear.colwise().mean().transpose();
        var = (t.linear.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
        t.batch_mean = mean;
        t.batch_var = var;
      } else {
        mean = bn.running_mean;
        var = bn.running_var;
      }
      t.inv_std = (var.array() + bn.epsilon).rsqrt().matrix();
      t.normalized = ((t.linear.rowwise() - mean.transpose()).array().rowwise() *
                      t.inv_std.transpose().array()).matrix();
      t.pre_activation = ((t.normalized.array().rowwise() * bn.gamma.transpose().array()).rowwise() +
                          bn.beta.transpose().array()).matrix();
    } else {
      t.pre_activation = t.linear;
    }
    t.activated = activate(layer.activation, t.pre_activation);

    if (mode == Mode::kTrain && layer.dropout > 0.0) {
      const double keep = 1.0 - layer.dropout;
      const double scale = 1.0 / keep;
      t.dropout_mask.resize(t.activated.rows(), t.activated.cols());
      for (Eigen::Index j = 0; j < t.dropout_mask.cols(); ++j)
        for (Eigen::Index i = 0; i < t.dropout_mask.rows(); ++i)
          t.dropout_mask(i, j) = rng.uniform() < keep ? scale : 0.0;
      x = t.activated.cwiseProduct(t.dropout_mask);
    } else {
      x = t.activated;
    }
  }
  result.output = std::move(x);
  return result;
}

Matrix predict(const DenseNet& net, const Matrix& input) {
  if (input.cols() != net.input_size())
    fail(ErrorKind::kShape, "input width " + std::to_string(input.cols()) +
                                " does not match network input " + std::to_string(net.input_size()));
  Matrix x = input;
  for (const auto& layer : net.layers) {
    Matrix z = x * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (layer.batch_norm) {
      const auto& bn = *layer.batch_norm;
      const Vector scale = (bn.running_var.array() + bn.epsilon).rsqrt().matrix().cwiseProduct(bn.gamma);
      const Vector shift = bn.beta - bn.running_mean.cwiseProduct(scale);
      z = ((z.array().rowwise() * scale.transpose().array()).rowwise() + shift.transpose().array()).matrix();
    }
    x = activate(layer.activation, z);
  }
  return x;
}

void update_batch_norm_stats(DenseNet& net, const ForwardTrace& trace) {
  if (trace.mode != Mode::kTrain) return;
  check_trace(net, trace);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    auto& layer = net.layers[k];
    if (!layer.batch_norm) continue;
    auto& bn = *layer.batch_norm;
    const auto& t = trace.layers[k];
    const double n = static_cast<double>(t.input.rows());
    const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
    bn.running_mean = (1.0 - bn.momentum) * bn.running_mean + bn.momentum * t.batch_mean;
    bn.running_var = (1.0 - bn.momentum) * bn.running_var + bn.momentum * unbias * t.batch_var;
  }
}

void recalibrate_batch_norm(DenseNet& net, const Matrix& inputs) {
  if (inputs.cols() != net.input_size()) fail(ErrorKind::kShape, "recalibration input width mismatch");
  if (inputs.rows() < 2) return;
  Matrix x = inputs;
  for (auto& layer : net.layers) {
    Matrix z = x * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (layer.batch_norm) {
      auto& bn = *layer.batch_norm;
      const double n = static_cast<double>(z.rows());
      bn.running_mean = z.colwise().mean().transpose();
      bn.running_var = (z.rowwise() - bn.running_mean.transpose()).array().square().colwise().sum().transpose() / (n - 1.0);
      const Vector scale = (bn.running_var.array() + bn.epsilon).rsqrt().matrix().cwiseProduct(bn.gamma);
      const Vector shift = bn.beta - bn.running_mean.cwiseProduct(scale);
      z = ((z.array().rowwise() * scale.transpose().array()).rowwise() + shift.transpose().array()).matrix();
    }
    x = activate(layer.activation, z);
  }
}

ParamGradients zero_gradients(const DenseNet& net) {
  ParamGradients g(net.layers.size());
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& l = net.layers[k];
    g[k].weight = Matrix::Zero(l.out(), l.in());
    g[k].bias = Vector::Zero(l.out());
    if (l.batch_norm) {
      g[k].gamma = Vector::Zero(l.out());
      g[k].beta = Vector::Zero(l.out());
    }
  }
  return g;
}

void accumulate(ParamGradients& into, const ParamGradients& from, double scale) {
  if (into.size() != from.size()) fail(ErrorKind::kShape, "gradient layer count mismatch");
  for (std::size_t k = 0; k < into.size(); ++k) {
    into[k].weight += scale * from[k].weight;
    into[k].bias += scale * from[k].bias;
    if (into[k].gamma.size() != 0) {
      into[k].gamma += scale * from[k].gamma;
      into[k].beta += scale * from[k].beta;
    }
  }
}

BackpropResult backprop(const DenseNet& net, const ForwardTrace& trace,
                        const Matrix& output_gradient, bool want_params) {
  check_trace(net, trace);
  const Eigen::Index batch = trace.layers.front().input.rows();
  if (output_gradient.rows() != batch || output_gradient.cols() != net.output_size())
    fail(ErrorKind::kShape, "output gradient shape does not match forward output");

  BackpropResult result;
  if (want_params) result.params.resize(net.layers.size());
  Matrix grad = output_gradient;
  for (std::size_t idx = net.layers.size(); idx-- > 0;) {
    const auto& layer = net.layers[idx];
    const auto& t = trace.layers[idx];
    if (t.dropout_mask.size() != 0) grad = grad.cwiseProduct(t.dropout_mask);
    Matrix d_pre = grad.cwiseProduct(activation_slope(layer.activation, t.pre_activation, t.activated));

    Matrix d_linear;
    if (layer.batch_norm) {
      const auto& bn = *layer.batch_norm;
      if (want_params) {
        result.params[idx].gamma = d_pre.cwiseProduct(t.normalized).colwise().sum().transpose();
        result.params[idx].beta = d_pre.colwise().sum().transpose();
      }
      const Matrix d_norm = (d_pre.array().rowwise() * bn.gamma.transpose().array()).matrix();
      if (trace.mode == Mode::kTrain) {
        const double n = static_cast<double>(batch);
        const RowVector sum_d = d_norm.colwise().sum();
        const RowVector sum_dx = d_norm.cwiseProduct(t.normalized).colwise().sum();
        Matrix centered = n * d_norm;
        centered.rowwise() -= sum_d;
        centered -= (t.normalized.array().rowwise() * sum_dx.array()).matrix();
        d_linear = (centered.array().rowwise() * (t.inv_std.transpose().array() / n)).matrix();
      } else {
        d_linear = (d_norm.array().rowwise() * t.inv_std.transpose().array()).matrix();
      }
    } else {
      d_linear = std::move(d_pre);
    }

    if (want_params) {
      result.params[idx].weight.noalias() = d_linear.transpose() * t.input;
      result.params[idx].bias = d_linear.colwise().sum().transpose();
    }
    grad.noalias() = d_linear * layer.weight;
  }
  result.input = std::move(grad);
  return result;
}

ParamGradients backward(const DenseNet& net, const ForwardTrace& trace,
                        const Matrix& output_gradient) {
  return backprop(net, trace, output_gradient, true).params;
}

Matrix input_gradient(const DenseNet& net, const ForwardTrace& trace,
                      const Matrix& output_gradient) {
  return backprop(net, trace, output_gradient, false).input;
}

PenaltyResult penalty_param_gradient(const DenseNet& critic, const Matrix& x_hat,
                                     double lambda_gp) {
  critic.validate();
  for (std::size_t k = 0; k < critic.layers.size(); ++k) {
    const auto& l = critic.layers[k];
    if (!l.activation.piecewise_linear() || l.batch_norm || l.dropout > 0.0)
      fail(ErrorKind::kUnsupportedStructure,
           "gradient penalty needs Identity/LeakyRelu layers without batch norm or dropout (layer " +
               std::to_string(k) + ")");
  }
  if (critic.output_size() != 1) fail(ErrorKind::kUnsupportedStructure, "critic output must be scalar");

  const auto fwd = forward(critic, x_hat, Mode::kEval);
  const auto& layers = critic.layers;
  const std::size_t depth = layers.size();
  const Eigen::Index batch = x_hat.rows();

  // First reverse pass: delta[k] = d D / d linear_k, per sample.
  std::vector<Matrix> slope(depth);
  std::vector<Matrix> delta(depth);
  for (std::size_t k = 0; k < depth; ++k)
    slope[k] = activation_slope(layers[k].activation, fwd.trace.layers[k].pre_activation,
                                fwd.trace.layers[k].activated);
  delta[depth - 1] = slope[depth - 1];
  for (std::size_t k = depth - 1; k-- > 0;)
    delta[k] = slope[k].cwiseProduct(delta[k + 1] * layers[k + 1].weight);
  const Matrix grad_x = delta[0] * layers[0].weight;

  const Vector norms = grad_x.rowwise().norm();
  PenaltyResult result;
  result.value = lambda_gp * (norms.array() - 1.0).square().mean();

  // d penalty / d grad_x.
  Matrix adj = Matrix::Zero(batch, grad_x.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    if (norms(i) > 0.0)
      adj.row(i) = (2.0 * lambda_gp / static_cast<double>(batch)) * (norms(i) - 1.0) / norms(i) *
                   grad_x.row(i);
  }

  // Second reverse pass over the linear map delta -> grad_x. Slopes are
  // constant in the parameters, so only weights receive gradient.
  result.params = zero_gradients(critic);
  result.params[0].weight.noalias() = delta[0].transpose() * adj;
  Matrix adj_delta = adj * layers[0].weight.transpose();
  for (std::size_t k = 0; k + 1 < depth; ++k) {
    const Matrix r = adj_delta.cwiseProduct(slope[k]);
    result.params[k + 1].weight.noalias() = delta[k + 1].transpose() * r;
    adj_delta = r * layers[k + 1].weight.transpose();
  }
  return result;
}

AdamState::AdamState(const DenseNet& net, AdamConfig cfg)
    : config(cfg), first_moment(zero_gradients(net)), second_moment(zero_gradients(net)) {}

void adam_step(DenseNet& net, const ParamGradients& grads, AdamState& state) {
  if (grads.size() != net.layers.size() || state.first_moment.size() != net.layers.size())
    fail(ErrorKind::kShape, "adam: layer count mismatch");
  state.step += 1;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);

  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    if (g.rows() != param.rows() || g.cols() != param.cols() || m.size() != param.size())
      fail(ErrorKind::kShape, "adam: parameter/gradient shape mismatch");
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    param.array() -= c.learning_rate * (m.array() / correct1) /
                     ((v.array() / correct2).sqrt() + c.epsilon);
  };

  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    auto& layer = net.layers[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    update(layer.weight, grads[k].weight, m.weight, v.weight);
    update(layer.bias, grads[k].bias, m.bias, v.bias);
    if (layer.batch_norm) {
      update(layer.batch_norm->gamma, grads[k].gamma, m.gamma, v.gamma);
      update(layer.batch_norm->beta, grads[k].beta, m.beta, v.beta);
    }
  }
}

DenseNet make_mlp(const MlpSpec& spec, SplitMix64& rng) {
  DenseNet net;
  std::vector<Eigen::Index> sizes{spec.input};
  sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
  sizes.push_back(spec.output);
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const bool last = k + 2 == sizes.size();
    DenseLayer layer;
    layer.activation = last ? spec.output_activation : spec.hidden_activation;
    const auto fan_in = static_cast<double>(sizes[k]);
    const auto fan_out = static_cast<double>(sizes[k + 1]);
    double limit;
    if (layer.activation.kind == Activation::kLeakyRelu) {
      const double a = layer.activation.slope;
      limit = std::sqrt(6.0 / ((1.0 + a * a) * fan_in));
    } else {
      limit = std::sqrt(6.0 / (fan_in + fan_out));
    }
    layer.weight.resize(sizes[k + 1], sizes[k]);
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        layer.weight(i, j) = rng.uniform(-limit, limit);
    layer.bias = Vector::Zero(sizes[k + 1]);
    if (!last) {
      if (spec.hidden_batch_norm) {
        BatchNorm bn;
        bn.gamma = Vector::Ones(sizes[k + 1]);
        bn.beta = Vector::Zero(sizes[k + 1]);
        bn.running_mean = Vector::Zero(sizes[k + 1]);
        bn.running_var = Vector::Ones(sizes[k + 1]);
        layer.batch_norm = bn;
      }
      layer.dropout = spec.hidden_dropout;
    }
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

bool all_finite(const DenseNet& net) {
  for (const auto& l : net.layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    if (l.batch_norm) {
      const auto& bn = *l.batch_norm;
      if (!bn.gamma.allFinite() || !bn.beta.allFinite() || !bn.running_mean.allFinite() ||
          !bn.running_var.allFinite())
        return false;
    }
  }
  return true;
}

namespace {

struct Fnv1a {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  void add(const double* data, Eigen::Index n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n) * sizeof(double); ++i) {
      hash ^= bytes[i];
      hash *= 0x100000001b3ULL;
    }
  }
};

Json array_of(const double* data, Eigen::Index n) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < n; ++i) a.push_back(data[i]);
  return a;
}

Vector vector_from(const Json& doc, const char* key, Eigen::Index n, std::size_t layer) {
  const std::string at = "layer " + std::to_string(layer) + ": ";
  if (!doc.contains(key) || !doc[key].is_array())
    fail(ErrorKind::kParse, at + "missing array '" + key + "'");
  const auto& a = doc[key];
  if (static_cast<Eigen::Index>(a.size()) != n)
    fail(ErrorKind::kParse, at + "'" + key + "' has " + std::to_string(a.size()) +
                                " values, expected " + std::to_string(n));
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = a[static_cast<std::size_t>(i)];
    if (!e.is_number()) fail(ErrorKind::kParse, at + "'" + key + "' holds a non-number");
    v(i) = e.get<double>();
  }
  return v;
}

}  // namespace

std::uint64_t checksum(const DenseNet& net) {
  Fnv1a f;
  for (const auto& l : net.layers) {
    f.add(l.weight.data(), l.weight.size());
    f.add(l.bias.data(), l.bias.size());
    if (l.batch_norm) {
      const auto& bn = *l.batch_norm;
      f.add(bn.gamma.data(), bn.gamma.size());
      f.add(bn.beta.data(), bn.beta.size());
      f.add(bn.running_mean.data(), bn.running_mean.size());
      f.add(bn.running_var.data(), bn.running_var.size());
    }
  }
  return f.hash;
}

Json to_json(const DenseNet& net) {
  Json layers = Json::array();
  for (const auto& l : net.layers) {
    Json doc;
    doc["in"] = l.in();
    doc["out"] = l.out();
    doc["activation"] = activation_tag(l.activation.kind);
    if (l.activation.kind == Activation::kLeakyRelu) doc["slope"] = l.activation.slope;
    doc["dropout"] = l.dropout;
    // Row-major weight layout.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = l.weight;
    doc["weight"] = array_of(w.data(), w.size());
    doc["bias"] = array_of(l.bias.data(), l.bias.size());
    if (l.batch_norm) {
      const auto& bn = *l.batch_norm;
      doc["batch_norm"] = {{"gamma", array_of(bn.gamma.data(), bn.gamma.size())},
                           {"beta", array_of(bn.beta.data(), bn.beta.size())},
                           {"running_mean", array_of(bn.running_mean.data(), bn.running_mean.size())},
                           {"running_var", array_of(bn.running_var.data(), bn.running_var.size())},
                           {"epsilon", bn.epsilon},
                           {"momentum", bn.momentum}};
    }
    layers.push_back(std::move(doc));
  }
  return Json{{"format", "aq.densenet"}, {"version", 1}, {"layers", std::move(layers)}};
}

DenseNet from_json(const Json& doc) {
  if (!doc.is_object() || !doc.contains("layers") || !doc["layers"].is_array())
    fail(ErrorKind::kParse, "network document has no 'layers' array");
  DenseNet net;
  std::size_t k = 0;
  for (const auto& ld : doc["layers"]) {
    const std::string at = "layer " + std::to_string(k) + ": ";
    try {
      if (!ld.is_object()) fail(ErrorKind::kParse, at + "not an object");
      const auto in = ld.at("in").get<Eigen::Index>();
      const auto out = ld.at("out").get<Eigen::Index>();
      if (in <= 0 || out <= 0) fail(ErrorKind::kParse, at + "non-positive shape");
      DenseLayer layer;
      layer.activation.kind = activation_from_tag(ld.at("activation").get<std::string>(), k);
      if (ld.contains("slope")) layer.activation.slope = ld["slope"].get<double>();
      layer.dropout = ld.value("dropout", 0.0);
      const Vector flat = vector_from(ld, "weight", in * out, k);
      layer.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          flat.data(), out, in);
      layer.bias = vector_from(ld, "bias", out, k);
      if (ld.contains("batch_norm")) {
        const auto& bd = ld["batch_norm"];
        BatchNorm bn;
        bn.gamma = vector_from(bd, "gamma", out, k);
        bn.beta = vector_from(bd, "beta", out, k);
        bn.running_mean = vector_from(bd, "running_mean", out, k);
        bn.running_var = vector_from(bd, "running_var", out, k);
        bn.epsilon = bd.at("epsilon").get<double>();
        bn.momentum = bd.at("momentum").get<double>();
        layer.batch_norm = bn;
      }
      net.layers.push_back(std::move(layer));
    } catch (const Json::exception& e) {
      fail(ErrorKind::kParse, at + e.what());
    }
    ++k;
  }
  try {
    net.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kParse, std::string("invalid network document: ") + e.what());
  }
  return net;
}

std::string serialize(const DenseNet& net) { return dump_json(to_json(net), 1) + "\n"; }

DenseNet deserialize(const std::string& text) {
  return from_json(parse_json(text, "network document"));
}

}  // namespace aq::nn
