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

#include "aq/aqgan.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "aq/error.hpp"
#include "aq/kernels.hpp"
#include "aq/random.hpp"

namespace aq {

namespace {

constexpr std::size_t kLabelBins = 20;

std::size_t label_bin(double label) {
  const double scaled = std::clamp(label, 0.0, 1.0) * static_cast<double>(kLabelBins);
  return std::min(kLabelBins - 1, static_cast<std::size_t>(scaled));
}

nn::Matrix gather(const nn::Matrix& m, std::span<const std::size_t> rows) {
  nn::Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

nn::Vector gather(const nn::Vector& v, std::span<const std::size_t> rows) {
  nn::Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(rows[i]));
  return out;
}

template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
}

Json adam_json(const nn::AdamConfig& a) {
  return Json{{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

nn::AdamConfig adam_from(const Json& d, nn::AdamConfig a) {
  if (d.is_null()) return a;
  a.learning_rate = d.value("learning_rate", a.learning_rate);
  a.beta1 = d.value("beta1", a.beta1);
  a.beta2 = d.value("beta2", a.beta2);
  a.epsilon = d.value("epsilon", a.epsilon);
  return a;
}

double mse(const nn::Matrix& pred, const nn::Vector& target) {
  return (pred.col(0) - target).squaredNorm() / static_cast<double>(target.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Quantizer ensemble

Json QuantizerOptions::to_json() const {
  return Json{{"widths", widths},
              {"depth", depth},
              {"max_epochs", max_epochs},
              {"patience", patience},
              {"batch", batch},
              {"dropout", dropout},
              {"dropout_last_hidden_only", dropout_last_hidden_only},
              {"batch_norm", batch_norm},
              {"validation_fraction", validation_fraction},
              {"recalibrate_batch_norm", recalibrate_batch_norm},
              {"adam", adam_json(adam)},
              {"seed", seed}};
}

QuantizerOptions QuantizerOptions::from_json(const Json& d) {
  QuantizerOptions o;
  try {
    o.widths = d.value("widths", o.widths);
    o.depth = d.value("depth", o.depth);
    o.max_epochs = d.value("max_epochs", o.max_epochs);
    o.patience = d.value("patience", o.patience);
    o.batch = d.value("batch", o.batch);
    o.dropout = d.value("dropout", o.dropout);
    o.dropout_last_hidden_only = d.value("dropout_last_hidden_only", o.dropout_last_hidden_only);
    o.batch_norm = d.value("batch_norm", o.batch_norm);
    o.validation_fraction = d.value("validation_fraction", o.validation_fraction);
    o.recalibrate_batch_norm = d.value("recalibrate_batch_norm", o.recalibrate_batch_norm);
    o.adam = adam_from(d.value("adam", Json()), o.adam);
    o.seed = d.value("seed", o.seed);
  } catch (const Json::exception& e) {
    fail(ErrorKind::kParse, std::string("quantizer options: ") + e.what());
  }
  return o;
}

nn::Matrix QuantizerEnsemble::member_predictions(const nn::Matrix& encoded) const {
  nn::Matrix out(encoded.rows(), static_cast<Eigen::Index>(members.size()));
  for (std::size_t k = 0; k < members.size(); ++k)
    out.col(static_cast<Eigen::Index>(k)) = nn::predict(members[k], encoded).col(0);
  return out;
}

nn::Vector QuantizerEnsemble::predict(const nn::Matrix& encoded) const {
  return member_predictions(encoded).rowwise().mean();
}

std::uint64_t QuantizerEnsemble::checksum() const {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (const auto& m : members) h = (h ^ nn::checksum(m)) * 0x100000001b3ULL;
  return h;
}

nn::Matrix encode_batch(std::span<const DesignPoint> points) {
  if (points.empty()) return {};
  const auto layers = static_cast<Eigen::Index>(points.front().config.size());
  nn::Matrix x(static_cast<Eigen::Index>(points.size()), layers);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto g = encode_config(points[i].config);
    if (static_cast<Eigen::Index>(g.size()) != layers)
      fail(ErrorKind::kShape, "design points have inconsistent layer counts");
    for (Eigen::Index l = 0; l < layers; ++l) x(static_cast<Eigen::Index>(i), l) = g[static_cast<std::size_t>(l)];
  }
  return x;
}

nn::Vector label_batch(std::span<const DesignPoint> points, const LabelMeta& meta) {
  nn::Vector y(static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i)
    y(static_cast<Eigen::Index>(i)) = normalize(points[i].accuracy, meta).label;
  return y;
}

QuantizerEnsemble train_quantizers(std::span<const DesignPoint> train, const LabelMeta& meta,
                                   const QuantizerOptions& options) {
  if (train.empty()) fail(ErrorKind::kInput, "quantizer training set is empty");
  if (options.widths.empty()) fail(ErrorKind::kInput, "quantizer ensemble needs at least one member");
  const nn::Matrix x_all = encode_batch(train);
  const nn::Vector y_all = label_batch(train, meta);
  const std::size_t n = train.size();

  QuantizerEnsemble ensemble;
  for (std::size_t k = 0; k < options.widths.size(); ++k) {
    const std::uint64_t member_seed = derive_seed(options.seed, 0x9000 + k);
    SplitMix64 rng(member_seed);

    // Validation slice: a seeded permutation, last fraction held out.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(order, rng);
    std::size_t n_val = static_cast<std::size_t>(std::llround(options.validation_fraction * static_cast<double>(n)));
    n_val = std::clamp<std::size_t>(n_val, n > 1 ? 1 : 0, n > 1 ? n - 1 : 0);
    std::vector<std::size_t> fit(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
    const std::vector<std::size_t> val(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
    const nn::Matrix x_fit = gather(x_all, fit);
    const nn::Matrix x_val = val.empty() ? gather(x_all, fit) : gather(x_all, val);
    const nn::Vector y_val = val.empty() ? gather(y_all, fit) : gather(y_all, val);

    nn::MlpSpec spec;
    spec.input = x_all.cols();
    spec.hidden.assign(static_cast<std::size_t>(options.depth), options.widths[k]);
    spec.output = 1;
    spec.hidden_activation = {nn::Activation::kLeakyRelu, 0.2};
    spec.output_activation = {nn::Activation::kSigmoid, 0.0};
    spec.hidden_batch_norm = options.batch_norm;
    spec.hidden_dropout = options.dropout;
    nn::DenseNet net = nn::make_mlp(spec, rng);
    if (options.dropout_last_hidden_only)
      for (std::size_t i = 0; i + 2 < net.layers.size(); ++i) net.layers[i].dropout = 0.0;
    nn::AdamState adam(net, options.adam);

    nn::DenseNet best = net;
    MemberReport report;
    report.width = options.widths[k];
    report.best_validation_mse = std::numeric_limits<double>::infinity();
    int since_best = 0;
    const auto batch = static_cast<std::size_t>(options.batch);
    for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
      shuffle(fit, rng);
      for (std::size_t start = 0; start < fit.size(); start += batch) {
        std::size_t end = std::min(fit.size(), start + batch);
        // Batch norm needs at least two rows; fold a lone tail into the previous batch.
        if (end - start < 2 && start > 0) continue;
        const std::span<const std::size_t> rows(fit.data() + start, end - start);
        const nn::Matrix x = gather(x_all, rows);
        const nn::Vector y = gather(y_all, rows);
        const auto fwd = nn::forward(net, x, nn::Mode::kTrain, rng.next());
        const nn::Matrix grad = 2.0 * (fwd.output.col(0) - y) / static_cast<double>(rows.size());
        nn::update_batch_norm_stats(net, fwd.trace);
        nn::adam_step(net, nn::backward(net, fwd.trace, grad), adam);
      }
      if (options.recalibrate_batch_norm) nn::recalibrate_batch_norm(net, x_fit);
      const double val_mse = mse(nn::predict(net, x_val), y_val);
      report.epochs_run = epoch + 1;
      if (!std::isfinite(val_mse) || !nn::all_finite(net))
        fail(ErrorKind::kTraining, "quantizer member " + std::to_string(k) + " (width " +
                                       std::to_string(options.widths[k]) + ") diverged at epoch " +
                                       std::to_string(epoch));
      if (val_mse < report.best_validation_mse) {
        report.best_validation_mse = val_mse;
        report.best_epoch = epoch;
        best = net;
        since_best = 0;
      } else if (++since_best >= options.patience) {
        break;
      }
    }
    spdlog::info("quantizer {} (width {}): {} epochs, best val mse {:.3e} at epoch {}", k, report.width,
                 report.epochs_run, report.best_validation_mse, report.best_epoch);
    ensemble.members.push_back(std::move(best));
    ensemble.reports.push_back(report);
  }
  return ensemble;
}

QuantizerLoss quantizer_loss(const QuantizerEnsemble& ensemble, const nn::Matrix& outputs,
                             const nn::Vector& labels) {
  if (outputs.rows() != labels.size()) fail(ErrorKind::kShape, "quantizer loss: batch size mismatch");
  QuantizerLoss result;
  result.output_gradient = nn::Matrix::Zero(outputs.rows(), outputs.cols());
  result.predictions.resize(outputs.rows(), static_cast<Eigen::Index>(ensemble.size()));
  const double batch = static_cast<double>(outputs.rows());
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    const auto& member = ensemble.members[k];
    if (member.input_size() != outputs.cols())
      fail(ErrorKind::kShape, "quantizer loss: generator output width does not match member input");
    const auto fwd = nn::forward(member, outputs, nn::Mode::kEval);
    const nn::Vector diff = fwd.output.col(0) - labels;
    result.predictions.col(static_cast<Eigen::Index>(k)) = fwd.output.col(0);
    result.value += diff.squaredNorm() / batch;
    const nn::Matrix d_out = 2.0 * diff / batch;
    result.output_gradient += nn::input_gradient(member, fwd.trace, d_out);
  }
  return result;
}

// ---------------------------------------------------------------------------
// GAN training

void GanHyperParams::validate(std::size_t train_size) const {
  if (batch < 1 || latent < 1 || condition != 1 || n_critic < 1 || iterations < 0 || lambda_gp < 0.0 ||
      lambda_q < 0.0)
    fail(ErrorKind::kInput, "GAN hyperparameters out of range");
  if (static_cast<std::size_t>(batch) > train_size)
    fail(ErrorKind::kInput, "batch size " + std::to_string(batch) + " exceeds training-set size " +
                                std::to_string(train_size));
  if (!(generator_dropout >= 0.0 && generator_dropout < 1.0))
    fail(ErrorKind::kInput, "generator dropout must be in [0, 1)");
}

Json GanHyperParams::to_json() const {
  return Json{{"batch", batch},
              {"latent", latent},
              {"condition", condition},
              {"n_critic", n_critic},
              {"lambda_gp", lambda_gp},
              {"lambda_q", lambda_q},
              {"iterations", iterations},
              {"generator_hidden", generator_hidden},
              {"critic_hidden", critic_hidden},
              {"generator_dropout", generator_dropout},
              {"leaky_slope", leaky_slope},
              {"conditioned_critic", conditioned_critic},
              {"balance_real_labels", balance_real_labels},
              {"generator_adam", adam_json(generator_adam)},
              {"critic_adam", adam_json(critic_adam)},
              {"seed", seed}};
}

GanHyperParams GanHyperParams::from_json(const Json& d) {
  GanHyperParams h;
  try {
    h.batch = d.value("batch", h.batch);
    h.latent = d.value("latent", h.latent);
    h.condition = d.value("condition", h.condition);
    h.n_critic = d.value("n_critic", h.n_critic);
    h.lambda_gp = d.value("lambda_gp", h.lambda_gp);
    h.lambda_q = d.value("lambda_q", h.lambda_q);
    h.iterations = d.value("iterations", h.iterations);
    h.generator_hidden = d.value("generator_hidden", h.generator_hidden);
    h.critic_hidden = d.value("critic_hidden", h.critic_hidden);
    h.generator_dropout = d.value("generator_dropout", h.generator_dropout);
    h.leaky_slope = d.value("leaky_slope", h.leaky_slope);
    h.conditioned_critic = d.value("conditioned_critic", h.conditioned_critic);
    h.balance_real_labels = d.value("balance_real_labels", h.balance_real_labels);
    h.generator_adam = adam_from(d.value("generator_adam", Json()), h.generator_adam);
    h.critic_adam = adam_from(d.value("critic_adam", Json()), h.critic_adam);
    h.seed = d.value("seed", h.seed);
  } catch (const Json::exception& e) {
    fail(ErrorKind::kParse, std::string("GAN hyperparameters: ") + e.what());
  }
  return h;
}

std::string TrainingLog::to_csv() const {
  std::string out = "iteration,critic_loss,gradient_penalty,generator_loss,quantizer_loss\n";
  for (std::size_t i = 0; i < critic_loss.size(); ++i) {
    out += std::to_string(i) + "," + format_double(critic_loss[i]) + "," + format_double(gradient_penalty[i]) +
           "," + format_double(generator_loss[i]) + "," + format_double(quantizer_loss[i]) + "\n";
  }
  return out;
}

TrainingLog TrainingLog::from_csv(std::string_view text, const std::string& source) {
  TrainingLog log;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto end = text.find('\n');
    const std::string_view line = text.substr(0, end);
    text = end == std::string_view::npos ? std::string_view{} : text.substr(end + 1);
    if (line_no++ == 0 || line.empty()) continue;
    double v[5];
    const char* p = line.data();
    const char* last = line.data() + line.size();
    for (int k = 0; k < 5; ++k) {
      const auto r = std::from_chars(p, last, v[k]);
      if (r.ec != std::errc{} || (k < 4 ? (r.ptr == last || *r.ptr != ',') : r.ptr != last))
        fail(ErrorKind::kParse, source + ":" + std::to_string(line_no) + ": malformed training log row");
      p = r.ptr + 1;
    }
    if (v[0] != static_cast<double>(log.critic_loss.size()))
      fail(ErrorKind::kParse, source + ":" + std::to_string(line_no) + ": iterations out of order");
    log.critic_loss.push_back(v[1]);
    log.gradient_penalty.push_back(v[2]);
    log.generator_loss.push_back(v[3]);
    log.quantizer_loss.push_back(v[4]);
  }
  return log;
}

GanTrainer::GanTrainer(std::span<const DesignPoint> train, const LabelMeta& labels, const EnvDescriptor& env,
                       QuantizerEnsemble ensemble, const GanHyperParams& hp)
    : rng_(derive_seed(hp.seed, 0x6a4)) {
  hp.validate(train.size());
  if (ensemble.size() == 0) fail(ErrorKind::kInput, "GAN training needs a trained quantizer ensemble");
  model_.ensemble = std::move(ensemble);
  model_.labels = labels;
  model_.environment = env;
  model_.hyper = hp;
  real_ = encode_batch(train);
  real_labels_ = label_batch(train, labels);
  const Eigen::Index layers = real_.cols();
  if (static_cast<std::size_t>(layers) != env.layer_count)
    fail(ErrorKind::kConsistency, "training configs do not match the environment layer count");
  for (const auto& m : model_.ensemble.members)
    if (m.input_size() != layers) fail(ErrorKind::kShape, "quantizer member input does not match layer count");

  SplitMix64 init(derive_seed(hp.seed, 0x1417));
  nn::MlpSpec g;
  g.input = hp.latent + hp.condition;
  g.hidden = hp.generator_hidden;
  g.output = layers;
  g.hidden_activation = {nn::Activation::kLeakyRelu, hp.leaky_slope};
  g.output_activation = {nn::Activation::kSigmoid, 0.0};
  g.hidden_dropout = hp.generator_dropout;
  model_.generator = nn::make_mlp(g, init);

  nn::MlpSpec c;
  c.input = layers + (hp.conditioned_critic ? hp.condition : 0);
  c.hidden = hp.critic_hidden;
  c.output = 1;
  c.hidden_activation = {nn::Activation::kLeakyRelu, hp.leaky_slope};
  c.output_activation = {nn::Activation::kIdentity, 0.0};
  model_.critic = nn::make_mlp(c, init);

  generator_adam_ = nn::AdamState(model_.generator, hp.generator_adam);
  critic_adam_ = nn::AdamState(model_.critic, hp.critic_adam);
  ensemble_checksum_ = model_.ensemble.checksum();
  order_.resize(static_cast<std::size_t>(real_.rows()));
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  shuffle(order_, rng_);
  if (hp.balance_real_labels) {
    label_bins_.resize(kLabelBins);
    for (std::size_t i = 0; i < order_.size(); ++i) label_bins_[label_bin(real_labels_(i))].push_back(i);
  }
}

nn::Matrix GanTrainer::generator_input(const nn::Vector& labels, SplitMix64& rng) const {
  const int latent = model_.hyper.latent;
  nn::Matrix in(labels.size(), latent + 1);
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    for (int d = 0; d < latent; ++d) in(i, d) = rng.normal();
    in(i, latent) = labels(i);
  }
  return in;
}

nn::Matrix GanTrainer::critic_input(const nn::Matrix& configs, const nn::Vector& labels) const {
  if (!model_.hyper.conditioned_critic) return configs;
  nn::Matrix in(configs.rows(), configs.cols() + 1);
  in << configs, labels;
  return in;
}

nn::Matrix GanTrainer::real_batch(nn::Vector& labels) {
  const auto batch = static_cast<std::size_t>(model_.hyper.batch);
  if (!label_bins_.empty()) {
    std::vector<std::size_t> rows(batch);
    for (auto& row : rows) {
      const std::size_t target = label_bin(rng_.uniform());
      // Nearest non-empty bin; ties go to the lower one.
      std::size_t bin = target;
      for (std::size_t d = 0; d < kLabelBins; ++d) {
        if (target >= d && !label_bins_[target - d].empty()) {
          bin = target - d;
          break;
        }
        if (target + d < kLabelBins && !label_bins_[target + d].empty()) {
          bin = target + d;
          break;
        }
      }
      const auto& members = label_bins_[bin];
      row = members[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(members.size()) - 1))];
    }
    labels = gather(real_labels_, rows);
    return gather(real_, rows);
  }
  if (cursor_ + batch > order_.size()) {
    shuffle(order_, rng_);
    cursor_ = 0;
  }
  const std::span<const std::size_t> rows(order_.data() + cursor_, batch);
  cursor_ += batch;
  labels = gather(real_labels_, rows);
  return gather(real_, rows);
}

GanTrainer::CriticStats GanTrainer::critic_step() {
  const auto& hp = model_.hyper;
  const Eigen::Index batch = hp.batch;
  const double inv = 1.0 / static_cast<double>(batch);

  nn::Vector real_labels;
  const nn::Matrix real = real_batch(real_labels);
  nn::Vector fake_labels(batch);
  for (Eigen::Index i = 0; i < batch; ++i) fake_labels(i) = rng_.uniform();
  const nn::Matrix fake =
      nn::forward(model_.generator, generator_input(fake_labels, rng_), nn::Mode::kTrain, rng_.next()).output;

  nn::Matrix mixed(batch, real.cols());
  nn::Vector mixed_labels(batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double eps = rng_.uniform();
    mixed.row(i) = eps * real.row(i) + (1.0 - eps) * fake.row(i);
    mixed_labels(i) = eps * real_labels(i) + (1.0 - eps) * fake_labels(i);
  }

  const auto& critic = model_.critic;
  const auto fwd_real = nn::forward(critic, critic_input(real, real_labels), nn::Mode::kEval);
  const auto fwd_fake = nn::forward(critic, critic_input(fake, fake_labels), nn::Mode::kEval);
  auto penalty = nn::penalty_param_gradient(critic, critic_input(mixed, mixed_labels), hp.lambda_gp);

  CriticStats stats;
  stats.penalty = penalty.value;
  stats.loss = fwd_fake.output.mean() - fwd_real.output.mean() + penalty.value;

  nn::ParamGradients grads = std::move(penalty.params);
  nn::accumulate(grads, nn::backward(critic, fwd_fake.trace, nn::Matrix::Constant(batch, 1, inv)));
  nn::accumulate(grads, nn::backward(critic, fwd_real.trace, nn::Matrix::Constant(batch, 1, -inv)));
  nn::adam_step(model_.critic, grads, critic_adam_);
  return stats;
}

GanTrainer::GeneratorStats GanTrainer::generator_step() {
  const auto& hp = model_.hyper;
  const Eigen::Index batch = hp.batch;
  const Eigen::Index layers = real_.cols();
  const double inv = 1.0 / static_cast<double>(batch);

  // One fake batch feeds both the adversarial and the instructor loss.
  nn::Vector labels(batch);
  for (Eigen::Index i = 0; i < batch; ++i) labels(i) = rng_.uniform();
  const auto g_fwd =
      nn::forward(model_.generator, generator_input(labels, rng_), nn::Mode::kTrain, rng_.next());
  const nn::Matrix& fake = g_fwd.output;

  const auto d_fwd = nn::forward(model_.critic, critic_input(fake, labels), nn::Mode::kEval);
  const nn::Matrix d_adv =
      nn::input_gradient(model_.critic, d_fwd.trace, nn::Matrix::Constant(batch, 1, -inv)).leftCols(layers);

  GeneratorStats stats;
  stats.adversarial = -d_fwd.output.mean();
  nn::Matrix d_fake = d_adv;
  const auto lq = quantizer_loss(model_.ensemble, fake, labels);
  stats.quantizer = lq.value;
  if (hp.lambda_q > 0.0) d_fake += hp.lambda_q * lq.output_gradient;
  nn::adam_step(model_.generator, nn::backward(model_.generator, g_fwd.trace, d_fake), generator_adam_);
  return stats;
}

void GanTrainer::iterate() {
  const auto& hp = model_.hyper;
  CriticStats mean_critic;
  for (int c = 0; c < hp.n_critic; ++c) {
    const auto s = critic_step();
    mean_critic.loss += s.loss / hp.n_critic;
    mean_critic.penalty += s.penalty / hp.n_critic;
  }
  const auto g = generator_step();
  if (!std::isfinite(mean_critic.loss) || !std::isfinite(g.adversarial) || !std::isfinite(g.quantizer) ||
      !nn::all_finite(model_.generator) || !nn::all_finite(model_.critic))
    fail(ErrorKind::kTraining, "non-finite loss at generator iteration " + std::to_string(iteration_));
  auto& log = model_.log;
  log.critic_loss.push_back(mean_critic.loss);
  log.gradient_penalty.push_back(mean_critic.penalty);
  log.generator_loss.push_back(g.adversarial);
  log.quantizer_loss.push_back(g.quantizer);
  if (iteration_ % 100 == 0)
    spdlog::info("gan iter {}: critic {:.4f} gp {:.4f} adv {:.4f} L_Q {:.5f}", iteration_, mean_critic.loss,
                 mean_critic.penalty, g.adversarial, g.quantizer);
  ++iteration_;
}

TrainedModel GanTrainer::finish() && {
  if (model_.ensemble.checksum() != ensemble_checksum_)
    fail(ErrorKind::kInvariant, "quantizer ensemble changed during GAN training");
  return std::move(model_);
}

TrainedModel train_gan(std::span<const DesignPoint> train, const LabelMeta& labels, const EnvDescriptor& env,
                       QuantizerEnsemble ensemble, const GanHyperParams& hp) {
  GanTrainer trainer(train, labels, env, std::move(ensemble), hp);
  for (int i = 0; i < hp.iterations; ++i) trainer.iterate();
  return std::move(trainer).finish();
}

// ---------------------------------------------------------------------------
// Generation and evaluation

GenerateResult generate(const TrainedModel& model, double target_accuracy, std::size_t count,
                        std::uint64_t seed) {
  if (count < 1) fail(ErrorKind::kInput, "count must be at least 1");
  if (!std::isfinite(target_accuracy)) fail(ErrorKind::kInput, "target accuracy must be finite");
  const auto norm = normalize(target_accuracy, model.labels);
  GenerateResult result;
  result.label = norm.label;
  result.clamped = norm.clamped;

  const int latent = model.hyper.latent;
  SplitMix64 rng(seed);
  nn::Matrix in(static_cast<Eigen::Index>(count), latent + 1);
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    for (int d = 0; d < latent; ++d) in(i, d) = rng.normal();
    in(i, latent) = norm.label;
  }
  const nn::Matrix out = nn::predict(model.generator, in);
  const nn::Vector predicted = model.ensemble.predict(out);
  result.proposals.reserve(count);
  std::vector<double> row(static_cast<std::size_t>(out.cols()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index l = 0; l < out.cols(); ++l) row[static_cast<std::size_t>(l)] = out(i, l);
    result.proposals.push_back({decode_config(row), predicted(i)});
  }
  return result;
}

double l_model(std::span<const double> accuracies, double target) {
  if (accuracies.empty()) return 0.0;
  double sum = 0.0;
  for (double y : accuracies) sum += std::abs(y - target);
  return sum / static_cast<double>(accuracies.size());
}

void require_same_environment(const EnvDescriptor& expected, const EnvDescriptor& actual) {
  const auto delta = expected.diff(actual);
  if (delta.empty()) return;
  std::string msg = "environment does not match the model's environment:";
  for (const auto& d : delta) msg += "\n  " + d;
  fail(ErrorKind::kDescriptor, msg);
}

ModelEvaluation evaluate_model(const TrainedModel& model, const Environment& env,
                               std::span<const double> conditions, std::size_t count, std::uint64_t seed) {
  require_same_environment(model.environment, env.descriptor());
  ModelEvaluation eval;
  double total = 0.0;
  std::size_t samples = 0;
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    ConditionReport rep;
    rep.target = conditions[c];
    auto gen = generate(model, rep.target, count, derive_seed(seed, c));
    rep.clamped = gen.clamped;
    for (auto& p : gen.proposals) rep.configs.push_back(std::move(p.config));
    rep.accuracies = kernels::evaluate_many(env, rep.configs);
    rep.l1 = l_model(rep.accuracies, rep.target);
    total += rep.l1 * static_cast<double>(rep.accuracies.size());
    samples += rep.accuracies.size();
    eval.conditions.push_back(std::move(rep));
  }
  eval.overall = samples ? total / static_cast<double>(samples) : 0.0;
  return eval;
}

// ---------------------------------------------------------------------------
// Persistence

void TrainedModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "generator.json", nn::serialize(generator));
  write_text_file(dir / "critic.json", nn::serialize(critic));
  Json reports = Json::array();
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    write_text_file(dir / ("quantizer_" + std::to_string(k) + ".json"), nn::serialize(ensemble.members[k]));
    const auto& r = ensemble.reports.at(k);
    reports.push_back(Json{{"width", r.width},
                           {"epochs_run", r.epochs_run},
                           {"best_epoch", r.best_epoch},
                           {"best_validation_mse", r.best_validation_mse}});
  }
  write_text_file(dir / "training_log.csv", log.to_csv());
  const Json meta{{"format", "aq.model"},
                  {"version", 1},
                  {"acc_min", labels.acc_min},
                  {"acc_max", labels.acc_max},
                  {"environment", environment.to_json()},
                  {"gan_hyperparameters", hyper.to_json()},
                  {"quantizer_options", quantizer_options.to_json()},
                  {"quantizer_count", ensemble.size()},
                  {"quantizer_reports", reports},
                  {"training_log", "training_log.csv"}};
  write_text_file(dir / "meta.json", dump_json(meta, 2) + "\n");
}

TrainedModel TrainedModel::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::kIo, "model directory " + dir.string() + " not found");
  const Json meta = read_json_file(dir / "meta.json");
  TrainedModel m;
  std::size_t count = 0;
  try {
    m.labels.acc_min = meta.at("acc_min").get<double>();
    m.labels.acc_max = meta.at("acc_max").get<double>();
    m.environment = EnvDescriptor::from_json(meta.at("environment"));
    m.hyper = GanHyperParams::from_json(meta.at("gan_hyperparameters"));
    m.quantizer_options = QuantizerOptions::from_json(meta.at("quantizer_options"));
    count = meta.at("quantizer_count").get<std::size_t>();
    for (const auto& r : meta.at("quantizer_reports"))
      m.ensemble.reports.push_back({r.at("width").get<Eigen::Index>(), r.at("epochs_run").get<int>(),
                                    r.at("best_epoch").get<int>(), r.at("best_validation_mse").get<double>()});
  } catch (const Json::exception& e) {
    fail(ErrorKind::kParse, (dir / "meta.json").string() + ": " + e.what());
  }
  if (!(m.labels.acc_max > m.labels.acc_min)) fail(ErrorKind::kConsistency, "model label bounds are degenerate");
  m.generator = nn::deserialize(read_text_file(dir / "generator.json"));
  m.critic = nn::deserialize(read_text_file(dir / "critic.json"));
  for (std::size_t k = 0; k < count; ++k)
    m.ensemble.members.push_back(
        nn::deserialize(read_text_file(dir / ("quantizer_" + std::to_string(k) + ".json"))));
  const auto log_path = dir / "training_log.csv";
  m.log = TrainingLog::from_csv(read_text_file(log_path), log_path.string());
  const auto layers = static_cast<Eigen::Index>(m.environment.layer_count);
  if (m.generator.output_size() != layers || m.generator.input_size() != m.hyper.latent + m.hyper.condition)
    fail(ErrorKind::kConsistency, "generator shape does not match model metadata");
  for (const auto& q : m.ensemble.members)
    if (q.input_size() != layers) fail(ErrorKind::kConsistency, "quantizer shape does not match model metadata");
  return m;
}

}  // namespace aq
