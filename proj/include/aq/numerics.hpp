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

#ifndef AQ_NUMERICS_HPP_
#define AQ_NUMERICS_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "aq/json_io.hpp"
#include "aq/random.hpp"

namespace aq::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class Activation { kIdentity, kLeakyRelu, kTanh, kSigmoid };

struct ActivationSpec {
  Activation kind = Activation::kIdentity;
  double slope = 0.2;  // LeakyRelu only

  bool piecewise_linear() const {
    return kind == Activation::kIdentity || kind == Activation::kLeakyRelu;
  }
};

struct BatchNorm {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  ActivationSpec activation;
  std::optional<BatchNorm> batch_norm;
  double dropout = 0.0;

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
};

// Stack of fully connected layers. Each layer computes
//   dense -> [batch norm] -> activation -> [dropout].
struct DenseNet {
  std::vector<DenseLayer> layers;

  Eigen::Index input_size() const;
  Eigen::Index output_size() const;
  std::size_t parameter_count() const;

  // Throws kShape when adjacent layers do not chain or parameters are
  // inconsistent, kInput when dropout is outside [0, 1).
  void validate() const;
};

enum class Mode { kTrain, kEval };

struct LayerTrace {
  Matrix input;
  Matrix linear;          // x W^T + b
  Matrix normalized;      // batch-norm x-hat; empty without batch norm
  Vector inv_std;         // batch-norm 1/sqrt(var + eps) actually used
  Vector batch_mean;      // train-mode batch statistics
  Vector batch_var;
  Matrix pre_activation;  // after batch norm
  Matrix activated;       // after activation, before dropout
  Matrix dropout_mask;    // scaled inverted-dropout mask; empty in eval
};

struct ForwardTrace {
  Mode mode = Mode::kEval;
  std::vector<LayerTrace> layers;
};

struct ForwardResult {
  Matrix output;
  ForwardTrace trace;
};

// Pure: the network is not modified. Train-mode batch statistics are
// recorded in the trace; fold them into the running estimates with
// update_batch_norm_stats.
ForwardResult forward(const DenseNet& net, const Matrix& input, Mode mode,
                      std::uint64_t seed = 0);

// Output only, eval mode.
Matrix predict(const DenseNet& net, const Matrix& input);

void update_batch_norm_stats(DenseNet& net, const ForwardTrace& trace);

// Replaces every running mean/variance with the population statistics of
// `inputs` as seen by an eval-mode (dropout-free) pass. Removes the variance
// shift that inverted dropout leaves in the moving averages.
void recalibrate_batch_norm(DenseNet& net, const Matrix& inputs);

struct LayerGradients {
  Matrix weight;
  Vector bias;
  Vector gamma;  // empty without batch norm
  Vector beta;
};

using ParamGradients = std::vector<LayerGradients>;

ParamGradients zero_gradients(const DenseNet& net);
void accumulate(ParamGradients& into, const ParamGradients& from, double scale = 1.0);

struct BackpropResult {
  ParamGradients params;  // empty when parameter gradients were not requested
  Matrix input;
};

// Reverse accumulation of `output_gradient` (d objective / d output) through
// the traced forward pass.
BackpropResult backprop(const DenseNet& net, const ForwardTrace& trace,
                        const Matrix& output_gradient, bool want_params = true);

ParamGradients backward(const DenseNet& net, const ForwardTrace& trace,
                        const Matrix& output_gradient);

Matrix input_gradient(const DenseNet& net, const ForwardTrace& trace,
                      const Matrix& output_gradient);

struct PenaltyResult {
  double value = 0.0;
  ParamGradients params;
};

// Gradient penalty lambda * mean_i (||d D(x_i)/dx||_2 - 1)^2 for a scalar
// critic, and its gradient with respect to the critic parameters. Only
// Identity/LeakyRelu layers without batch norm or dropout are accepted: their
// activation derivatives are locally constant, so the second reverse pass
// reduces to products of first derivatives.
PenaltyResult penalty_param_gradient(const DenseNet& critic, const Matrix& x_hat,
                                     double lambda_gp);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  ParamGradients first_moment;
  ParamGradients second_moment;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(const DenseNet& net, AdamConfig cfg);
};

void adam_step(DenseNet& net, const ParamGradients& grads, AdamState& state);

struct MlpSpec {
  Eigen::Index input = 1;
  std::vector<Eigen::Index> hidden;
  Eigen::Index output = 1;
  ActivationSpec hidden_activation{Activation::kLeakyRelu, 0.2};
  ActivationSpec output_activation{Activation::kIdentity, 0.0};
  bool hidden_batch_norm = false;
  double hidden_dropout = 0.0;
};

// He-uniform for LeakyRelu layers, Xavier-uniform otherwise; zero biases.
DenseNet make_mlp(const MlpSpec& spec, SplitMix64& rng);

bool all_finite(const DenseNet& net);

// FNV-1a over every parameter and running statistic.
std::uint64_t checksum(const DenseNet& net);

Json to_json(const DenseNet& net);
DenseNet from_json(const Json& doc);

std::string serialize(const DenseNet& net);
DenseNet deserialize(const std::string& text);

}  // namespace aq::nn

#endif  // AQ_NUMERICS_HPP_
