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

#include "aq/cli.hpp"

#include <algorithm>
#include <chrono>
#include <csignal>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <unordered_set>

#include "aq/aqgan.hpp"
#include "aq/error.hpp"
#include "aq/experience.hpp"
#include "aq/hwtune.hpp"
#include "aq/log.hpp"
#include "aq/quantenv.hpp"
#include "aq/service.hpp"

#include "CLI11.hpp"

namespace aq::cli {
namespace fs = std::filesystem;

namespace {

std::string quoted(const std::string& s) {
  std::string q = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') q += '\\';
    q += c;
  }
  return q + "\"";
}

std::string echo_value(const std::string& v) { return quoted(v); }
std::string echo_value(bool v) { return v ? "true" : "false"; }
std::string echo_value(double v) { return format_double(v); }
template <class T>
  requires std::is_integral_v<T>
std::string echo_value(T v) {
  return std::to_string(v);
}
template <class T>
std::string echo_value(const std::vector<T>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + echo_value(v[i]);
  return s + "]";
}

// One subcommand plus the list of values that make up its resolved-config
// echo. Every option that influences output content is registered here.
struct Command {
  CLI::App* app = nullptr;
  std::string name;     // "env build"
  std::string section;  // "env.build"
  std::vector<std::pair<std::string, std::function<std::optional<std::string>()>>> echo;

  template <class T>
  CLI::Option* option(const std::string& flag, T& var, const std::string& help) {
    CLI::Option* opt = app->add_option(flag, var, help);
    echo.emplace_back(opt->get_lnames().front(), [&var] { return std::optional(echo_value(var)); });
    return opt;
  }
  // Echoed only when given on the command line or in a config file.
  template <class T>
  CLI::Option* optional(const std::string& flag, T& var, const std::string& help) {
    CLI::Option* opt = app->add_option(flag, var, help);
    echo.emplace_back(opt->get_lnames().front(), [&var, opt]() -> std::optional<std::string> {
      if (opt->count() == 0) return std::nullopt;
      return echo_value(var);
    });
    return opt;
  }
  CLI::Option* flag(const std::string& flag, bool& var, const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, var, help);
    echo.emplace_back(opt->get_lnames().front(), [&var] { return std::optional(echo_value(var)); });
    return opt;
  }
  // Not echoed, so reruns into a fresh directory produce identical files.
  CLI::Option* output(std::string& var, bool required) {
    CLI::Option* opt = app->add_option("--out", var, "Output directory");
    if (required) opt->required();
    return opt;
  }

  std::string resolved_config() const {
    std::string text = "# resolved configuration for `aq " + name + "`\n[" + section + "]\n";
    for (const auto& [key, value] : echo)
      if (auto v = value()) text += key + " = " + *v + "\n";
    return text;
  }
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::string stage;
};

void emit(Context& ctx, const Command& cmd, const std::string& out_dir, const Json& summary) {
  const std::string text = dump_json(summary, 2) + "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_file(fs::path(out_dir) / "resolved_config.ini", cmd.resolved_config());
    write_text_file(fs::path(out_dir) / "summary.json", text);
  }
  ctx.out << text;
  ctx.out.flush();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Json resources_json(const hw::ResourceReport& r) {
  return Json{{"param_bytes", r.param_bytes}, {"act_bytes_sum", r.act_bytes_sum}, {"act_bytes_peak", r.act_bytes_peak}};
}

Json proposal_json(const TrainedModel& model, const Proposal& p) {
  Json j = resources_json(hw::resources(model.environment.resources, p.config));
  j["config"] = p.config.bits;
  j["predicted_label"] = p.predicted_label;
  j["predicted_accuracy"] = denormalize(p.predicted_label, model.labels);
  return j;
}

// --- env build ------------------------------------------------------------

struct EnvBuildArgs {
  std::string kind = "synthetic";
  std::size_t layers = 10;
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  std::string out;
};

void add_env_build(Command& c, EnvBuildArgs& a) {
  c.option("--kind", a.kind, "synthetic | trained")->check(CLI::IsMember({"synthetic", "trained"}));
  c.option("--layers", a.layers, "Number of quantizable layers")->check(CLI::Range(1, 64));
  c.option("--seed", a.seed, "Environment seed");
  auto& d = a.dataset;
  c.option("--classes", d.classes, "Trained kind: cluster classes")->check(CLI::Range(2, 1000));
  c.option("--dim", d.dim, "Trained kind: input dimension")->check(CLI::PositiveNumber);
  c.option("--radius", d.radius, "Trained kind: class-mean radius")->check(CLI::PositiveNumber);
  c.option("--noise", d.noise, "Trained kind: per-sample noise")->check(CLI::NonNegativeNumber);
  c.option("--train-samples", d.train_samples, "Trained kind: training samples")->check(CLI::PositiveNumber);
  c.option("--eval-samples", d.eval_samples, "Trained kind: held-out samples")->check(CLI::PositiveNumber);
  c.option("--hidden", d.hidden, "Trained kind: hidden width")->check(CLI::PositiveNumber);
  c.option("--epochs", d.epochs, "Trained kind: reference training epochs")->check(CLI::PositiveNumber);
  c.option("--batch", d.batch, "Trained kind: reference batch size")->check(CLI::PositiveNumber);
  c.option("--learning-rate", d.learning_rate, "Trained kind: reference learning rate")->check(CLI::PositiveNumber);
  c.option("--calibration-samples", d.calibration_samples, "Trained kind: activation calibration batch")
      ->check(CLI::PositiveNumber);
  c.output(a.out, true);
}

int run_env_build(Context& ctx, const Command& cmd, const EnvBuildArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  ctx.stage = "env build";
  const Environment env = a.kind == "trained" ? Environment::trained(a.seed, a.layers, a.dataset)
                                              : Environment::synthetic(a.seed, a.layers);
  env.save(a.out);
  spdlog::info("environment built in {:.2f} s", seconds_since(t0));
  emit(ctx, cmd, a.out, Json{{"command", "env build"}, {"environment", env.descriptor().to_json()}});
  return kExitOk;
}

// --- collect --------------------------------------------------------------

struct CollectArgs {
  std::string env;
  std::size_t count = 5000;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  bool split_given = false;
  bool split_resolved = false;
  std::string sampling = "uniform";
  int workers = 0;
  std::string out;
};

void add_collect(Command& c, CollectArgs& a) {
  c.option("--env", a.env, "Environment directory")->required()->check(CLI::ExistingDirectory);
  c.option("--count", a.count, "Distinct design points to collect")->check(CLI::PositiveNumber);
  c.option("--seed", a.seed, "Sampling seed");
  c.app->add_option("--split-seed", a.split_seed, "Train/test split seed (default: derived from --seed)");
  // Derived seeds are pinned in the echo once known.
  c.echo.emplace_back("split-seed", [&a]() -> std::optional<std::string> {
    if (!a.split_resolved) return std::nullopt;
    return std::to_string(a.split_seed);
  });
  c.option("--sampling", a.sampling, "uniform | capped")->check(CLI::IsMember({"uniform", "capped"}));
  // Worker count does not change results, so it is not echoed.
  c.app->add_option("--workers", a.workers, "Evaluation workers (0: available parallelism)")
      ->check(CLI::NonNegativeNumber);
  c.output(a.out, true);
}

int run_collect(Context& ctx, const Command& cmd, CollectArgs& a) {
  ctx.stage = "collect: load environment";
  const Environment env = Environment::load(a.env);
  ctx.stage = "collect";
  const auto t0 = std::chrono::steady_clock::now();
  CollectOptions opts;
  opts.sampling = sampling_from_string(a.sampling);
  opts.threads = a.workers;
  if (a.split_given) opts.split_seed = a.split_seed;
  const ExperienceSet set = collect(env, a.count, a.seed, opts);
  spdlog::info("collected {} points in {:.2f} s", set.points.size(), seconds_since(t0));
  a.split_seed = set.meta.split_seed;
  a.split_resolved = true;
  fs::create_directories(a.out);
  const fs::path path = fs::path(a.out) / "experiences.jsonl";
  save(set, path);
  emit(ctx, cmd, a.out,
       Json{{"command", "collect"},
            {"experiences", path.filename().string()},
            {"count", set.points.size()},
            {"train", set.meta.partition.train.size()},
            {"test", set.meta.partition.test.size()},
            {"acc_min", set.meta.labels.acc_min},
            {"acc_max", set.meta.labels.acc_max},
            {"sampling", to_string(set.meta.sampling)},
            {"seed", set.meta.sampling_seed},
            {"split_seed", set.meta.split_seed},
            {"environment", set.meta.environment.to_json()}});
  return kExitOk;
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
  std::string experiences;
  std::uint64_t seed = 0;
  std::uint64_t quantizer_seed = 0;
  QuantizerOptions q;
  GanHyperParams g;
  std::string quantizer_dropout = "last";
  std::string out;
};

void add_train(Command& c, TrainArgs& a) {
  c.option("--experiences", a.experiences, "experiences.jsonl, or the collect output directory")->required();
  c.option("--seed", a.seed, "Generator/critic seed");
  c.option("--quantizer-seed", a.quantizer_seed, "Quantizer ensemble seed");
  c.option("--widths", a.q.widths, "Quantizer member widths")->delimiter(',');
  c.option("--depth", a.q.depth, "Hidden layers per quantizer")->check(CLI::PositiveNumber);
  c.option("--quantizer-epochs", a.q.max_epochs, "Maximum quantizer epochs")->check(CLI::PositiveNumber);
  c.option("--patience", a.q.patience, "Early-stopping patience (epochs)")->check(CLI::PositiveNumber);
  c.option("--quantizer-batch", a.q.batch, "Quantizer batch size")->check(CLI::PositiveNumber);
  c.option("--quantizer-dropout", a.q.dropout, "Quantizer dropout rate")->check(CLI::Range(0.0, 0.95));
  c.option("--quantizer-dropout-layers", a.quantizer_dropout, "last | all hidden layers")
      ->check(CLI::IsMember({"last", "all"}));
  c.flag("--quantizer-batch-norm,!--no-quantizer-batch-norm", a.q.batch_norm,
         "Batch norm on quantizer hidden layers");
  c.option("--quantizer-lr", a.q.adam.learning_rate, "Quantizer Adam learning rate")->check(CLI::PositiveNumber);
  c.option("--iterations", a.g.iterations, "Generator iterations")->check(CLI::NonNegativeNumber);
  c.option("--batch", a.g.batch, "GAN batch size")->check(CLI::PositiveNumber);
  c.option("--latent", a.g.latent, "Latent dimension")->check(CLI::PositiveNumber);
  c.option("--n-critic", a.g.n_critic, "Critic steps per generator step")->check(CLI::PositiveNumber);
  c.option("--lambda-gp", a.g.lambda_gp, "Gradient-penalty weight")->check(CLI::NonNegativeNumber);
  c.option("--lambda-q", a.g.lambda_q, "Quantizer-loss weight")->check(CLI::NonNegativeNumber);
  c.option("--generator-hidden", a.g.generator_hidden, "Generator hidden widths")->delimiter(',');
  c.option("--critic-hidden", a.g.critic_hidden, "Critic hidden widths")->delimiter(',');
  c.option("--generator-dropout", a.g.generator_dropout, "Generator dropout rate")->check(CLI::Range(0.0, 0.95));
  c.flag("--conditioned-critic,!--no-conditioned-critic", a.g.conditioned_critic,
         "Feed the condition label to the critic");
  c.flag("--balance-real-labels,!--no-balance-real-labels", a.g.balance_real_labels,
         "Draw real batches with uniformly distributed labels");
  c.option("--generator-lr", a.g.generator_adam.learning_rate, "Generator Adam learning rate")
      ->check(CLI::PositiveNumber);
  c.option("--critic-lr", a.g.critic_adam.learning_rate, "Critic Adam learning rate")->check(CLI::PositiveNumber);
  c.output(a.out, true);
}

fs::path experiences_path(const std::string& arg) {
  const fs::path p(arg);
  return fs::is_directory(p) ? p / "experiences.jsonl" : p;
}

int run_train(Context& ctx, const Command& cmd, TrainArgs& a) {
  ctx.stage = "train: load experiences";
  const ExperienceSet set = load_experiences(experiences_path(a.experiences));
  const auto train = set.train_points();
  const auto test = set.test_points();

  a.q.seed = a.quantizer_seed;
  a.q.dropout_last_hidden_only = a.quantizer_dropout == "last";
  a.g.seed = a.seed;
  ctx.stage = "train: validate hyperparameters";
  a.g.validate(train.size());

  ctx.stage = "train: quantizers";
  auto t0 = std::chrono::steady_clock::now();
  QuantizerEnsemble ensemble = train_quantizers(train, set.meta.labels, a.q);
  spdlog::info("quantizers trained in {:.2f} s", seconds_since(t0));

  Json members = Json::array();
  for (const auto& r : ensemble.reports)
    members.push_back(Json{{"width", r.width},
                           {"epochs_run", r.epochs_run},
                           {"best_epoch", r.best_epoch},
                           {"best_validation_mse", r.best_validation_mse}});
  double test_l1 = 0.0;
  if (!test.empty()) {
    const nn::Vector pred = ensemble.predict(encode_batch(test));
    const nn::Vector truth = label_batch(test, set.meta.labels);
    test_l1 = (pred - truth).cwiseAbs().mean();
  }

  ctx.stage = "train: gan";
  t0 = std::chrono::steady_clock::now();
  const TrainedModel model = train_gan(train, set.meta.labels, set.meta.environment, std::move(ensemble), a.g);
  spdlog::info("generator trained in {:.2f} s", seconds_since(t0));

  ctx.stage = "train: save";
  model.save(a.out);
  const auto& log = model.log;
  Json last = nullptr;
  if (!log.critic_loss.empty())
    last = Json{{"critic_loss", log.critic_loss.back()},
                {"gradient_penalty", log.gradient_penalty.back()},
                {"generator_loss", log.generator_loss.back()},
                {"quantizer_loss", log.quantizer_loss.back()}};
  emit(ctx, cmd, a.out,
       Json{{"command", "train"},
            {"train_points", train.size()},
            {"test_points", test.size()},
            {"quantizers", members},
            {"quantizer_test_l1", test_l1},
            {"ensemble_checksum", model.ensemble.checksum()},
            {"iterations", a.g.iterations},
            {"final_losses", last},
            {"labels", Json{{"acc_min", model.labels.acc_min}, {"acc_max", model.labels.acc_max}}},
            {"environment", model.environment.to_json()}});
  return kExitOk;
}

// --- shared model/environment loading ------------------------------------

TrainedModel load_model(Context& ctx, const std::string& dir) {
  ctx.stage = "load model";
  return TrainedModel::load(dir);
}

// An explicit --env directory is checked against the model; otherwise the
// environment is rebuilt from the model's descriptor.
Environment resolve_environment(Context& ctx, const TrainedModel* model, const std::string& env_dir) {
  if (!env_dir.empty()) {
    ctx.stage = "load environment";
    Environment env = Environment::load(env_dir);
    if (model) {
      ctx.stage = "check environment";
      require_same_environment(model->environment, env.descriptor());
    }
    return env;
  }
  if (!model) fail(ErrorKind::kInput, "an environment is required: pass --env or --model");
  ctx.stage = "rebuild environment";
  return Environment::rebuild(model->environment);
}

// --- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string model;
  double target = 0.0;
  std::size_t count = 50;
  std::uint64_t seed = 0;
  std::string rank_by = "param_bytes";
  std::string out;
};

void add_generate(Command& c, GenerateArgs& a) {
  c.option("--model", a.model, "Model directory")->required()->check(CLI::ExistingDirectory);
  c.option("--target-acc", a.target, "Target accuracy")->required();
  c.option("--count", a.count, "Proposals to generate")->check(CLI::Range(std::size_t{1}, api::kMaxCount));
  c.option("--seed", a.seed, "Generation seed");
  c.option("--rank-by", a.rank_by, "Ranking key for proposals.csv")
      ->check(CLI::IsMember({"param_bytes", "act_bytes_sum", "act_bytes_peak"}));
  c.output(a.out, false);
}

int run_generate(Context& ctx, const Command& cmd, const GenerateArgs& a) {
  const TrainedModel model = load_model(ctx, a.model);
  ctx.stage = "generate";
  const auto g = generate(model, a.target, a.count, a.seed);
  Json proposals = Json::array();
  for (const auto& p : g.proposals) proposals.push_back(proposal_json(model, p));
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    const auto ranked = hw::rank(g.proposals, model.environment.resources, hw::resource_key_from_string(a.rank_by));
    write_text_file(fs::path(a.out) / "proposals.csv", hw::proposals_csv(ranked, model.labels));
  }
  emit(ctx, cmd, a.out,
       Json{{"command", "generate"},
            {"target_accuracy", a.target},
            {"label", g.label},
            {"clamped", g.clamped},
            {"seed", a.seed},
            {"proposals", proposals}});
  return kExitOk;
}

// --- tune -----------------------------------------------------------------

struct TuneArgs {
  std::string model;
  double target = 0.0;
  std::size_t count = 50;
  std::uint64_t seed = 0;
  std::uint64_t param_budget = 0;
  std::uint64_t act_sum_budget = 0;
  std::uint64_t act_peak_budget = 0;
  std::string rank_by = "param_bytes";
  std::size_t top = 5;
  std::string out;
};

void add_tune(Command& c, TuneArgs& a) {
  c.option("--model", a.model, "Model directory")->required()->check(CLI::ExistingDirectory);
  c.option("--target-acc", a.target, "Target accuracy")->required();
  c.option("--count", a.count, "Proposals to generate")->check(CLI::Range(std::size_t{1}, api::kMaxCount));
  c.option("--seed", a.seed, "Generation seed");
  c.optional("--param-budget", a.param_budget, "Cap on parameter bytes")->check(CLI::PositiveNumber);
  c.optional("--act-sum-budget", a.act_sum_budget, "Cap on summed activation bytes")->check(CLI::PositiveNumber);
  c.optional("--act-peak-budget", a.act_peak_budget, "Cap on peak activation bytes")->check(CLI::PositiveNumber);
  c.option("--rank-by", a.rank_by, "Key for the ranked listing")
      ->check(CLI::IsMember({"param_bytes", "act_bytes_sum", "act_bytes_peak"}));
  c.option("--top", a.top, "Ranked proposals to include in the report");
  c.output(a.out, false);
}

Json selection_document(const TrainedModel& model, const Proposal& p, const TuneArgs& a) {
  Json doc = proposal_json(model, p);
  doc["format"] = "aq.selection";
  doc["version"] = 1;
  doc["layer_count"] = model.layer_count();
  doc["seed"] = a.seed;
  doc["count"] = a.count;
  doc["target_accuracy"] = a.target;
  return doc;
}

int run_tune(Context& ctx, const Command& cmd, const TuneArgs& a) {
  const TrainedModel model = load_model(ctx, a.model);
  ctx.stage = "tune";
  hw::Budget budget;
  if (a.param_budget) budget.param_bytes = a.param_budget;
  if (a.act_sum_budget) budget.act_bytes_sum = a.act_sum_budget;
  if (a.act_peak_budget) budget.act_bytes_peak = a.act_peak_budget;
  budget.validate();

  const auto g = generate(model, a.target, a.count, a.seed);
  const auto& spec = model.environment.resources;
  const auto chosen = hw::select(g.proposals, spec, budget);
  const auto ranked = hw::rank(g.proposals, spec, hw::resource_key_from_string(a.rank_by));
  Json top = Json::array();
  for (std::size_t i = 0; i < std::min(a.top, ranked.size()); ++i) {
    Json row = proposal_json(model, ranked[i].proposal);
    row["index"] = ranked[i].input_index;
    row["fits"] = budget.admits(ranked[i].report);
    top.push_back(row);
  }
  Json budget_json = Json::object();
  if (budget.param_bytes) budget_json["param_bytes"] = *budget.param_bytes;
  if (budget.act_bytes_sum) budget_json["act_bytes_sum"] = *budget.act_bytes_sum;
  if (budget.act_bytes_peak) budget_json["act_bytes_peak"] = *budget.act_bytes_peak;

  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text_file(fs::path(a.out) / "proposals.csv", hw::proposals_csv(ranked, model.labels));
    if (chosen)
      write_text_file(fs::path(a.out) / "selection.json",
                      dump_json(selection_document(model, chosen->proposal, a), 2) + "\n");
  }
  if (!chosen) spdlog::warn("no proposal fits the budget; relax the target or the caps");
  emit(ctx, cmd, a.out,
       Json{{"command", "tune"},
            {"target_accuracy", a.target},
            {"label", g.label},
            {"clamped", g.clamped},
            {"seed", a.seed},
            {"count", a.count},
            {"budget", budget_json},
            {"feasible_count", hw::feasible_count(g.proposals, spec, budget)},
            {"selected", chosen ? proposal_json(model, chosen->proposal) : Json(nullptr)},
            {"selected_index", chosen ? Json(chosen->input_index) : Json(nullptr)},
            {"ranked_by", a.rank_by},
            {"top", top}});
  return kExitOk;
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string env;
  std::string configs;
  bool validate_only = false;
  std::vector<double> conditions;
  std::size_t count = 50;
  std::uint64_t seed = 0;
  std::string out;
};

void add_eval(Command& c, EvalArgs& a) {
  c.optional("--model", a.model, "Model directory")->check(CLI::ExistingDirectory);
  c.optional("--env", a.env, "Environment directory (default: rebuilt from the model)")
      ->check(CLI::ExistingDirectory);
  c.optional("--configs", a.configs, "JSON document of configs to evaluate instead of generating")
      ->check(CLI::ExistingFile);
  c.flag("--validate-only", a.validate_only, "With --configs: check the document, do not evaluate");
  c.optional("--conditions", a.conditions, "Target accuracies (default: 0.3..1.0 x baseline)")->delimiter(',');
  c.option("--count", a.count, "Generations per condition")->check(CLI::Range(std::size_t{1}, api::kMaxCount));
  c.option("--seed", a.seed, "Generation seed");
  c.output(a.out, false);
}

int run_eval_configs(Context& ctx, const Command& cmd, const EvalArgs& a) {
  std::optional<TrainedModel> model;
  if (!a.model.empty()) model = load_model(ctx, a.model);
  std::optional<std::size_t> layers;
  if (model) layers = model->layer_count();
  std::optional<Environment> env;
  if (!a.validate_only) {
    env = resolve_environment(ctx, model ? &*model : nullptr, a.env);
    layers = env->layer_count();
  }
  ctx.stage = "eval: read configs";
  const auto configs = read_config_document(a.configs, layers);
  Json rows = Json::array();
  ctx.stage = "eval";
  for (const auto& c : configs) {
    Json row{{"config", c.bits}};
    if (env) {
      row["accuracy"] = env->evaluate(c);
      const auto r = hw::resources(env->resources(), c);
      row.update(resources_json(r));
    }
    rows.push_back(row);
  }
  emit(ctx, cmd, a.out,
       Json{{"command", "eval"}, {"valid", true}, {"evaluated", env.has_value()}, {"configs", rows}});
  return kExitOk;
}

int run_eval(Context& ctx, const Command& cmd, const EvalArgs& a) {
  if (!a.configs.empty()) return run_eval_configs(ctx, cmd, a);
  if (a.model.empty()) fail(ErrorKind::kInput, "eval needs --model (or --configs)");
  const TrainedModel model = load_model(ctx, a.model);
  const Environment env = resolve_environment(ctx, &model, a.env);
  std::vector<double> conditions = a.conditions;
  if (conditions.empty())
    for (int i = 0; i < 8; ++i) conditions.push_back((0.3 + 0.1 * i) * model.environment.baseline_accuracy);
  ctx.stage = "eval";
  const auto t0 = std::chrono::steady_clock::now();
  const ModelEvaluation ev = evaluate_model(model, env, conditions, a.count, a.seed);
  spdlog::info("evaluated {} conditions in {:.2f} s", conditions.size(), seconds_since(t0));
  Json rows = Json::array();
  std::string csv = "target,clamped,l1,mean_accuracy,distinct_configs\n";
  for (const auto& c : ev.conditions) {
    double mean = 0.0;
    for (double acc : c.accuracies) mean += acc;
    mean /= static_cast<double>(c.accuracies.size());
    std::unordered_set<QuantConfig, QuantConfigHash> distinct(c.configs.begin(), c.configs.end());
    rows.push_back(Json{{"target", c.target},
                        {"clamped", c.clamped},
                        {"l1", c.l1},
                        {"mean_accuracy", mean},
                        {"distinct_configs", distinct.size()}});
    csv += format_double(c.target) + "," + (c.clamped ? "true" : "false") + "," + format_double(c.l1) + "," +
           format_double(mean) + "," + std::to_string(distinct.size()) + "\n";
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text_file(fs::path(a.out) / "eval.csv", csv);
  }
  emit(ctx, cmd, a.out,
       Json{{"command", "eval"}, {"count", a.count}, {"seed", a.seed}, {"conditions", rows}, {"overall_l1", ev.overall}});
  return kExitOk;
}

// --- baseline -------------------------------------------------------------

struct BaselineArgs {
  std::string model;
  std::string env;
  std::vector<int> bits{8, 6, 4, 3, 2};
  std::string out;
};

void add_baseline(Command& c, BaselineArgs& a) {
  c.optional("--model", a.model, "Model directory (its environment is rebuilt)")->check(CLI::ExistingDirectory);
  c.optional("--env", a.env, "Environment directory")->check(CLI::ExistingDirectory);
  c.option("--bits", a.bits, "Uniform bit-widths")->delimiter(',')->check(CLI::Range(1, 32));
  c.output(a.out, false);
}

int run_baseline(Context& ctx, const Command& cmd, const BaselineArgs& a) {
  std::optional<TrainedModel> model;
  if (!a.model.empty()) model = load_model(ctx, a.model);
  const Environment env = resolve_environment(ctx, model ? &*model : nullptr, a.env);
  ctx.stage = "baseline";
  Json rows = Json::array();
  std::string csv = "bits,accuracy,param_bytes,act_bytes_sum,act_bytes_peak\n";
  for (int b : a.bits) {
    const auto r = hw::uniform_baseline(env, b);
    Json row = resources_json(r.report);
    row["bits"] = b;
    row["accuracy"] = r.point.accuracy;
    rows.push_back(row);
    csv += std::to_string(b) + "," + format_double(r.point.accuracy) + "," + std::to_string(r.report.param_bytes) +
           "," + std::to_string(r.report.act_bytes_sum) + "," + std::to_string(r.report.act_bytes_peak) + "\n";
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text_file(fs::path(a.out) / "baseline.csv", csv);
  }
  emit(ctx, cmd, a.out, Json{{"command", "baseline"}, {"environment", env.descriptor().to_json()}, {"rows", rows}});
  return kExitOk;
}

// --- report ---------------------------------------------------------------

struct HistArgs {
  std::string model;
  double target = 0.0;
  std::size_t count = 50;
  std::uint64_t seed = 0;
  std::size_t bins = 10;
  bool svg = false;
  std::string out;
};

void add_hist(Command& c, HistArgs& a) {
  c.option("--model", a.model, "Model directory")->required()->check(CLI::ExistingDirectory);
  c.option("--target-acc", a.target, "Target accuracy")->required();
  c.option("--count", a.count, "Proposals to generate")->check(CLI::Range(std::size_t{1}, api::kMaxCount));
  c.option("--seed", a.seed, "Generation seed");
  c.option("--bins", a.bins, "Histogram bins")->check(CLI::Range(std::size_t{1}, std::size_t{1000}));
  c.flag("--svg", a.svg, "Also render SVG charts");
  c.output(a.out, true);
}

int run_hist(Context& ctx, const Command& cmd, const HistArgs& a) {
  const TrainedModel model = load_model(ctx, a.model);
  ctx.stage = "report hist";
  const auto g = generate(model, a.target, a.count, a.seed);
  std::vector<double> params;
  std::vector<double> acts;
  for (const auto& p : g.proposals) {
    const auto r = hw::resources(model.environment.resources, p.config);
    params.push_back(static_cast<double>(r.param_bytes));
    acts.push_back(static_cast<double>(r.act_bytes_sum));
  }
  fs::create_directories(a.out);
  Json files = Json::array();
  for (const auto& [metric, values] : {std::pair{std::string("param_bytes"), &params},
                                       std::pair{std::string("act_bytes_sum"), &acts}}) {
    const auto h = hw::histogram(*values, a.bins);
    const std::string stem = "hist_" + metric;
    write_text_file(fs::path(a.out) / (stem + ".csv"), hw::histogram_csv(h, metric));
    files.push_back(stem + ".csv");
    if (a.svg) {
      write_text_file(fs::path(a.out) / (stem + ".svg"), hw::histogram_svg(h, metric));
      files.push_back(stem + ".svg");
    }
  }
  emit(ctx, cmd, a.out,
       Json{{"command", "report hist"},
            {"target_accuracy", a.target},
            {"clamped", g.clamped},
            {"count", a.count},
            {"seed", a.seed},
            {"files", files}});
  return kExitOk;
}

struct CompareArgs {
  std::string model;
  std::string env;
  std::vector<int> bits{8, 6, 4, 3, 2};
  std::vector<double> conditions;
  std::size_t count = 50;
  std::uint64_t seed = 0;
  std::string out;
};

void add_compare(Command& c, CompareArgs& a) {
  c.option("--model", a.model, "Model directory")->required()->check(CLI::ExistingDirectory);
  c.optional("--env", a.env, "Environment directory (default: rebuilt from the model)")
      ->check(CLI::ExistingDirectory);
  c.option("--bits", a.bits, "Uniform bit-widths to compare against")->delimiter(',')->check(CLI::Range(1, 32));
  c.optional("--conditions", a.conditions, "Generation targets (default: 21 over the label range)")
      ->delimiter(',');
  c.option("--count", a.count, "Generations per target")->check(CLI::Range(std::size_t{1}, api::kMaxCount));
  c.option("--seed", a.seed, "Generation seed");
  c.output(a.out, true);
}

int run_compare(Context& ctx, const Command& cmd, const CompareArgs& a) {
  const TrainedModel model = load_model(ctx, a.model);
  const Environment env = resolve_environment(ctx, &model, a.env);
  ctx.stage = "report compare";
  hw::CompareOptions opts;
  opts.conditions = a.conditions;
  opts.count = a.count;
  opts.seed = a.seed;
  const auto rows = hw::compare_report(model, env, a.bits, opts);
  fs::create_directories(a.out);
  write_text_file(fs::path(a.out) / "compare.csv", hw::compare_csv(rows));
  Json list = Json::array();
  for (const auto& r : rows) {
    Json row{{"method", r.method}, {"bits_or_target", r.bits_or_target}};
    row["accuracy"] = r.accuracy ? Json(*r.accuracy) : Json(nullptr);
    if (r.report) row.update(resources_json(*r.report));
    list.push_back(row);
  }
  emit(ctx, cmd, a.out, Json{{"command", "report compare"}, {"rows", list}});
  return kExitOk;
}

// --- serve ----------------------------------------------------------------

struct ServeArgs {
  std::string model;
  std::string env;
  bool attach_env = false;
  api::ServerOptions server;
  bool no_cors = false;
};

void add_serve(Command& c, ServeArgs& a) {
  c.optional("--model", a.model, "Model directory (without it model endpoints answer 503)")
      ->check(CLI::ExistingDirectory);
  c.optional("--env", a.env, "Environment directory enabling /api/v1/evaluate")->check(CLI::ExistingDirectory);
  c.flag("--attach-env", a.attach_env, "Rebuild the model's environment to enable /api/v1/evaluate");
  c.option("--host", a.server.host, "Bind address");
  c.option("--port", a.server.port, "Port (0: any free port)")->check(CLI::Range(0, 65535));
  c.flag("--no-cors", a.no_cors, "Omit cross-origin headers");
  c.option("--threads", a.server.threads, "Request workers (0: available parallelism)");
}

api::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int run_serve(Context& ctx, const Command& cmd, ServeArgs& a) {
  std::optional<TrainedModel> model;
  if (!a.model.empty()) model = load_model(ctx, a.model);
  std::optional<Environment> env;
  if (!a.env.empty() || a.attach_env) env = resolve_environment(ctx, model ? &*model : nullptr, a.env);
  ctx.stage = "serve";
  auto handlers = std::make_shared<const api::Handlers>(std::move(model), std::move(env));
  a.server.cors = !a.no_cors;
  api::Server server(handlers, a.server);
  const int port = server.bind();
  emit(ctx, cmd, "",
       Json{{"command", "serve"},
            {"host", a.server.host},
            {"port", port},
            {"model_loaded", handlers->has_model()},
            {"evaluation_available", handlers->has_environment()}});
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen();
  g_server = nullptr;
  return kExitOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kTraining:
    case ErrorKind::kEnvironmentBuild:
      return kExitTraining;
    default:
      return kExitData;
  }
}

}  // namespace

std::vector<QuantConfig> parse_config_document(const Json& doc, std::optional<std::size_t> layer_count) {
  const Json* list = nullptr;
  Json single;
  if (doc.is_array()) {
    list = &doc;
  } else if (doc.is_object() && doc.contains("configs")) {
    list = &doc["configs"];
  } else if (doc.is_object() && doc.contains("config")) {
    if (doc.contains("layer_count")) {
      if (!doc["layer_count"].is_number_unsigned())
        fail(ErrorKind::kInput, "layer_count must be a non-negative integer");
      const auto declared = doc["layer_count"].get<std::size_t>();
      if (layer_count && declared != *layer_count)
        fail(ErrorKind::kInput, "document declares " + std::to_string(declared) + " layers, expected " +
                                    std::to_string(*layer_count));
      layer_count = declared;
    }
    single = Json::array({doc["config"]});
    list = &single;
  } else {
    fail(ErrorKind::kInput, "expected an array of configs, {\"configs\": [...]} or {\"config\": [...]}");
  }
  if (!list->is_array()) fail(ErrorKind::kInput, "configs must be an array of bit-width arrays");

  std::vector<QuantConfig> out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const std::string at = "configs[" + std::to_string(i) + "]";
    const Json& c = (*list)[i];
    if (!c.is_array() || c.empty()) fail(ErrorKind::kInput, at + " must be a non-empty array of integers");
    if (layer_count && c.size() != *layer_count)
      fail(ErrorKind::kInput,
           at + " has " + std::to_string(c.size()) + " layers, expected " + std::to_string(*layer_count));
    QuantConfig q{std::vector<int>(c.size())};
    for (std::size_t l = 0; l < c.size(); ++l) {
      const Json& b = c[l];
      if (!b.is_number_integer() || b.get<std::int64_t>() < QuantConfig::kMinBits ||
          b.get<std::int64_t>() > QuantConfig::kMaxBits)
        fail(ErrorKind::kInput, at + " layer " + std::to_string(l) + ": bit-width must be an integer in [1, 32]");
      q.bits[l] = b.get<int>();
    }
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<QuantConfig> read_config_document(const fs::path& path, std::optional<std::size_t> layer_count) {
  return parse_config_document(read_json_file(path), layer_count);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  init_logging();
  CLI::App app{"Accuracy-conditioned mixed-precision quantization: environments, training, generation, tuning.",
               "aq"};
  app.set_config("--config", "", "INI file; [collect], [train], [env.build], ... sections; flags win");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", "aq 1.0.0");

  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](CLI::App* parent, const std::string& name, const std::string& section, const std::string& help) {
    auto c = std::make_unique<Command>();
    c->app = parent->add_subcommand(name, help);
    c->name = section;
    std::replace(c->name.begin(), c->name.end(), '.', ' ');
    c->section = section;
    commands.push_back(std::move(c));
    return commands.back().get();
  };

  CLI::App* env_group = app.add_subcommand("env", "Environment management");
  env_group->require_subcommand(1);
  CLI::App* report_group = app.add_subcommand("report", "Plot data and comparison tables");
  report_group->require_subcommand(1);

  EnvBuildArgs env_build;
  CollectArgs collect_args;
  TrainArgs train;
  GenerateArgs gen;
  EvalArgs eval;
  TuneArgs tune;
  BaselineArgs baseline;
  HistArgs hist;
  CompareArgs compare;
  ServeArgs serve;

  Command* c_env = make(env_group, "build", "env.build", "Build and save a ground-truth environment");
  add_env_build(*c_env, env_build);
  Command* c_collect = make(&app, "collect", "collect", "Sample, evaluate and split design points");
  add_collect(*c_collect, collect_args);
  Command* c_train = make(&app, "train", "train", "Train the quantizer ensemble, then the generator");
  add_train(*c_train, train);
  Command* c_gen = make(&app, "generate", "generate", "Generate configs for a target accuracy");
  add_generate(*c_gen, gen);
  Command* c_eval = make(&app, "eval", "eval", "Measure generation fidelity, or evaluate a config document");
  add_eval(*c_eval, eval);
  Command* c_tune = make(&app, "tune", "tune", "Generate, rank and select under a hardware budget");
  add_tune(*c_tune, tune);
  Command* c_base = make(&app, "baseline", "baseline", "Uniform bit-width baselines");
  add_baseline(*c_base, baseline);
  Command* c_hist = make(report_group, "hist", "report.hist", "Resource histograms over generated proposals");
  add_hist(*c_hist, hist);
  Command* c_cmp = make(report_group, "compare", "report.compare", "Generated vs uniform configs per budget");
  add_compare(*c_cmp, compare);
  Command* c_serve = make(&app, "serve", "serve", "Serve the JSON API for a model");
  add_serve(*c_serve, serve);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Context ctx{out, err, "startup"};
  try {
    if (c_env->app->parsed()) return run_env_build(ctx, *c_env, env_build);
    if (c_collect->app->parsed()) {
      collect_args.split_given = c_collect->app->get_option("--split-seed")->count() > 0;
      return run_collect(ctx, *c_collect, collect_args);
    }
    if (c_train->app->parsed()) return run_train(ctx, *c_train, train);
    if (c_gen->app->parsed()) return run_generate(ctx, *c_gen, gen);
    if (c_eval->app->parsed()) return run_eval(ctx, *c_eval, eval);
    if (c_tune->app->parsed()) return run_tune(ctx, *c_tune, tune);
    if (c_base->app->parsed()) return run_baseline(ctx, *c_base, baseline);
    if (c_hist->app->parsed()) return run_hist(ctx, *c_hist, hist);
    if (c_cmp->app->parsed()) return run_compare(ctx, *c_cmp, compare);
    if (c_serve->app->parsed()) return run_serve(ctx, *c_serve, serve);
  } catch (const Error& e) {
    err << "aq " << ctx.stage << ": " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "aq " << ctx.stage << ": io: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "aq " << ctx.stage << ": " << e.what() << "\n";
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace aq::cli
