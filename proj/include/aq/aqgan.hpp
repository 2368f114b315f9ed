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

#ifndef AQ_AQGAN_HPP_
#define AQ_AQGAN_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aq/experience.hpp"
#include "aq/numerics.hpp"
#include "aq/quantenv.hpp"
#include "aq/types.hpp"

namespace aq {

struct QuantizerOptions {
  std::vector<Eigen::Index> widths{64, 128, 256, 512};
  int depth = 3;  // hidden layers per member
  int max_epochs = 200;
  int patience = 10;
  int batch = 256;
  double dropout = 0.5;
  bool dropout_last_hidden_only = true;  // otherwise every hidden layer
  // Off by default: hidden-layer batch norm roughly doubled ensemble test error
  // on both environment kinds.
  bool batch_norm = false;
  double validation_fraction = 0.1;
  bool recalibrate_batch_norm = true;  // population BN statistics before each validation
  nn::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  std::uint64_t seed = 0;

  Json to_json() const;
  static QuantizerOptions from_json(const Json& doc);
};

struct MemberReport {
  Eigen::Index width = 0;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_validation_mse = 0.0;
};

// Accuracy regressors ("instructors"): encoded config -> normalized label.
struct QuantizerEnsemble {
  std::vector<nn::DenseNet> members;
  std::vector<MemberReport> reports;

  std::size_t size() const { return members.size(); }

  // batch x members, eval mode.
  nn::Matrix member_predictions(const nn::Matrix& encoded) const;
  // Arithmetic mean over members.
  nn::Vector predict(const nn::Matrix& encoded) const;
  std::uint64_t checksum() const;
};

nn::Matrix encode_batch(std::span<const DesignPoint> points);
nn::Vector label_batch(std::span<const DesignPoint> points, const LabelMeta& meta);

// Members are trained independently on MSE with early stopping on a
// validation slice of `train`. Throws kTraining naming the member on NaN.
QuantizerEnsemble train_quantizers(std::span<const DesignPoint> train, const LabelMeta& meta,
                                   const QuantizerOptions& options);

struct QuantizerLoss {
  double value = 0.0;           // sum over members of batch-mean squared error
  nn::Matrix output_gradient;   // d value / d generator outputs
  nn::Matrix predictions;       // batch x members
};

QuantizerLoss quantizer_loss(const QuantizerEnsemble& ensemble, const nn::Matrix& generator_outputs,
                             const nn::Vector& fake_labels);

struct GanHyperParams {
  int batch = 256;
  int latent = 10;
  int condition = 1;
  int n_critic = 5;
  double lambda_gp = 10.0;
  double lambda_q = 3.0;
  int iterations = 2000;
  std::vector<Eigen::Index> generator_hidden{256, 256};
  std::vector<Eigen::Index> critic_hidden{256, 256};
  // Train-mode dropout noise in G has no eval-mode counterpart at generation
  // time; nonzero values measurably widen the accuracy spread.
  double generator_dropout = 0.0;
  double leaky_slope = 0.2;
  // Critic sees [config, label]; false gives the plain L-input critic.
  bool conditioned_critic = true;
  // Real batches drawn so their labels are uniform on [0, 1], like the fake
  // labels; otherwise plain shuffled passes over the training set.
  bool balance_real_labels = true;
  nn::AdamConfig generator_adam{1e-4, 0.5, 0.9, 1e-8};
  nn::AdamConfig critic_adam{1e-4, 0.5, 0.9, 1e-8};
  std::uint64_t seed = 0;

  void validate(std::size_t train_size) const;
  Json to_json() const;
  static GanHyperParams from_json(const Json& doc);
};

struct TrainingLog {
  std::vector<double> critic_loss;         // mean over the critic steps of one iteration
  std::vector<double> gradient_penalty;
  std::vector<double> generator_loss;      // adversarial part, -mean D(fake)
  std::vector<double> quantizer_loss;      // L_Q

  std::string to_csv() const;
  // Inverse of to_csv; `source` names the input in error messages.
  static TrainingLog from_csv(std::string_view text, const std::string& source);
};

struct TrainedModel {
  nn::DenseNet generator;
  nn::DenseNet critic;
  QuantizerEnsemble ensemble;
  LabelMeta labels;
  EnvDescriptor environment;
  GanHyperParams hyper;
  QuantizerOptions quantizer_options;
  TrainingLog log;

  std::size_t layer_count() const { return environment.layer_count; }

  // Directory layout: generator.json, critic.json, quantizer_<k>.json,
  // meta.json, training_log.csv.
  void save(const std::filesystem::path& dir) const;
  static TrainedModel load(const std::filesystem::path& dir);
};

// Second training step: alternating critic and generator updates against a
// frozen ensemble. Exposed step-wise for tests; train_gan drives it.
class GanTrainer {
 public:
  GanTrainer(std::span<const DesignPoint> train, const LabelMeta& labels, const EnvDescriptor& env,
             QuantizerEnsemble ensemble, const GanHyperParams& hp);

  struct CriticStats {
    double loss = 0.0;
    double penalty = 0.0;
  };
  struct GeneratorStats {
    double adversarial = 0.0;
    double quantizer = 0.0;
  };

  CriticStats critic_step();
  GeneratorStats generator_step();
  // n_critic critic steps then one generator step; throws kTraining on NaN.
  void iterate();

  nn::DenseNet& generator() { return model_.generator; }
  nn::DenseNet& critic() { return model_.critic; }
  int iteration() const { return iteration_; }

  // Verifies the frozen-ensemble checksum and releases the model.
  TrainedModel finish() &&;

 private:
  nn::Matrix generator_input(const nn::Vector& labels, SplitMix64& rng) const;
  nn::Matrix critic_input(const nn::Matrix& configs, const nn::Vector& labels) const;
  nn::Matrix real_batch(nn::Vector& labels);

  TrainedModel model_;
  nn::Matrix real_;
  nn::Vector real_labels_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::vector<std::vector<std::size_t>> label_bins_;
  SplitMix64 rng_;
  nn::AdamState generator_adam_;
  nn::AdamState critic_adam_;
  std::uint64_t ensemble_checksum_;
  int iteration_ = 0;
};

TrainedModel train_gan(std::span<const DesignPoint> train, const LabelMeta& labels, const EnvDescriptor& env,
                       QuantizerEnsemble ensemble, const GanHyperParams& hp);

struct GenerateResult {
  std::vector<Proposal> proposals;
  double label = 0.0;    // condition actually fed to the generator
  bool clamped = false;  // target was outside [acc_min, acc_max]
};

// Deterministic given seed; eval-mode generator, ensemble-mean predictions.
GenerateResult generate(const TrainedModel& model, double target_accuracy, std::size_t count,
                        std::uint64_t seed);

// Mean absolute error between ground-truth accuracies and the target.
double l_model(std::span<const double> accuracies, double target);

struct ConditionReport {
  double target = 0.0;
  bool clamped = false;
  std::vector<QuantConfig> configs;
  std::vector<double> accuracies;
  double l1 = 0.0;
};

struct ModelEvaluation {
  std::vector<ConditionReport> conditions;
  double overall = 0.0;  // mean absolute error over every generated sample
};

// Throws kDescriptor when env is not the environment the model was trained on.
ModelEvaluation evaluate_model(const TrainedModel& model, const Environment& env,
                               std::span<const double> conditions, std::size_t count, std::uint64_t seed);

void require_same_environment(const EnvDescriptor& expected, const EnvDescriptor& actual);

}  // namespace aq

#endif  // AQ_AQGAN_HPP_
