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

// Acceptance run: one PASS/FAIL line per criterion with the measured value
// and its tolerance. Exit status is 0 only when every selected criterion
// passes. `--only 1,9` runs a subset.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "aq/aqgan.hpp"
#include "aq/cli.hpp"
#include "aq/experience.hpp"
#include "aq/hwtune.hpp"
#include "aq/log.hpp"
#include "aq/numerics.hpp"
#include "aq/quantenv.hpp"
#include "hw_oracles.hpp"
#include "oracles.hpp"

namespace aq {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// --- shared pipeline ------------------------------------------------------

constexpr std::size_t kExperiences = 5000;
constexpr std::uint64_t kSamplingSeed = 11;
constexpr std::uint64_t kQuantizerSeed = 3;
constexpr std::uint64_t kGanSeed = 5;
constexpr std::uint64_t kEvalSeed = 17;

GanHyperParams acceptance_gan(std::uint64_t seed) {
  GanHyperParams hp;  // library defaults: 2000 iterations, batch 256, D=10, lambda_q 3
  hp.seed = seed;
  return hp;
}

QuantizerOptions acceptance_quantizers(std::uint64_t seed) {
  QuantizerOptions q;  // library defaults: widths 64/128/256/512
  q.seed = seed;
  return q;
}

std::vector<double> fidelity_conditions() { return {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

struct Pipeline {
  std::optional<Environment> env;
  ExperienceSet set;
  double collect_seconds = 0.0;
  double quantizer_seconds = 0.0;
  double quantizer_test_l1 = 0.0;
  double gan_seconds = 0.0;
  double eval_seconds = 0.0;
  std::optional<TrainedModel> model;
  ModelEvaluation evaluation;
  double total_seconds() const { return collect_seconds + quantizer_seconds + gan_seconds + eval_seconds; }
};

Pipeline run_pipeline(Environment env, std::size_t experiences, const QuantizerOptions& qo,
                      const GanHyperParams& hp, bool evaluate) {
  Pipeline p;
  p.env = std::move(env);
  auto t0 = Clock::now();
  CollectOptions co;
  co.sampling = SamplingScheme::kCapped;
  p.set = collect(*p.env, experiences, kSamplingSeed, co);
  p.collect_seconds = since(t0);

  const auto train = p.set.train_points();
  const auto test = p.set.test_points();
  t0 = Clock::now();
  QuantizerEnsemble ensemble = train_quantizers(train, p.set.meta.labels, qo);
  p.quantizer_seconds = since(t0);
  const nn::Vector pred = ensemble.predict(encode_batch(test));
  p.quantizer_test_l1 = (pred - label_batch(test, p.set.meta.labels)).cwiseAbs().mean();

  t0 = Clock::now();
  p.model = train_gan(train, p.set.meta.labels, p.env->descriptor(), std::move(ensemble), hp);
  p.gan_seconds = since(t0);
  if (evaluate) {
    t0 = Clock::now();
    const auto conditions = fidelity_conditions();
    p.evaluation = evaluate_model(*p.model, *p.env, conditions, 50, kEvalSeed);
    p.eval_seconds = since(t0);
  }
  return p;
}

const Pipeline& synthetic_pipeline() {
  static const Pipeline p = run_pipeline(Environment::synthetic(7, 10), kExperiences,
                                         acceptance_quantizers(kQuantizerSeed), acceptance_gan(kGanSeed), true);
  return p;
}

const Pipeline& trained_pipeline() {
  static const Pipeline p = [] {
    const auto t0 = Clock::now();
    Environment env = Environment::trained(17, 8);
    const double build = since(t0);
    Pipeline r = run_pipeline(std::move(env), kExperiences, acceptance_quantizers(kQuantizerSeed),
                              acceptance_gan(kGanSeed), true);
    r.collect_seconds += build;
    return r;
  }();
  return p;
}

std::string per_condition(const ModelEvaluation& ev) {
  std::string s;
  for (const auto& c : ev.conditions) s += fmt(" %.2f:%.3f%s", c.target, c.l1, c.clamped ? "(clamped)" : "");
  return s;
}

// --- criteria -------------------------------------------------------------

double penalty_oracle(const nn::DenseNet& critic, const nn::Matrix& x, double lambda) {
  const auto fwd = nn::forward(critic, x, nn::Mode::kEval);
  const nn::Matrix g = nn::input_gradient(critic, fwd.trace, nn::Matrix::Ones(x.rows(), 1));
  return lambda * (g.rowwise().norm().array() - 1.0).square().mean();
}

Outcome gradient_correctness() {
  using namespace testing;
  const auto t0 = Clock::now();
  SplitMix64 rng(9001);
  double worst = 0.0;
  int nets = 0;
  while (nets < 25) {
    const nn::DenseNet net = random_net(rng, {});
    const Eigen::Index batch = rng.uniform_int(2, 8);
    const nn::Matrix x = random_matrix(batch, net.input_size(), rng);
    const nn::Mode mode = rng.uniform() < 0.5 ? nn::Mode::kTrain : nn::Mode::kEval;
    const std::uint64_t seed = rng.next();
    const auto fwd = nn::forward(net, x, mode, seed);
    if (!away_from_kinks(net, fwd.trace, 1e-4)) continue;
    const nn::Matrix w = random_matrix(batch, net.output_size(), rng);
    const auto grads = nn::backprop(net, fwd.trace, w);
    auto objective = [&](const nn::DenseNet& n, const nn::Matrix& in) {
      return nn::forward(n, in, mode, seed).output.cwiseProduct(w).sum();
    };
    worst = std::max(worst, max_param_error(net, grads.params, [&](const nn::DenseNet& n) { return objective(n, x); }));
    worst = std::max(worst, max_input_error(x, grads.input, [&](const nn::Matrix& in) { return objective(net, in); }));
    ++nets;
  }
  RandomNetOptions critic_opts;
  critic_opts.allow_smooth = false;
  critic_opts.allow_batch_norm = false;
  critic_opts.allow_dropout = false;
  critic_opts.scalar_output = true;
  double worst_penalty = 0.0;
  int critics = 0;
  while (critics < 25) {
    const nn::DenseNet critic = random_net(rng, critic_opts);
    const nn::Matrix x = random_matrix(rng.uniform_int(1, 8), critic.input_size(), rng);
    if (!away_from_kinks(critic, nn::forward(critic, x, nn::Mode::kEval).trace, 1e-4)) continue;
    const auto r = nn::penalty_param_gradient(critic, x, 10.0);
    worst_penalty = std::max(worst_penalty, max_param_error(critic, r.params, [&](const nn::DenseNet& n) {
                               return penalty_oracle(n, x, 10.0);
                             }));
    ++critics;
  }
  const double t = since(t0);
  return {worst <= 1e-4 && worst_penalty <= 1e-3 && t < 30.0,
          fmt("%d nets max rel err %.2e (tol 1e-4); %d critics penalty grad %.2e (tol 1e-3); %.1f s (limit 30 s)", nets,
              worst, critics, worst_penalty, t)};
}

Outcome quantizer_formula() {
  const auto t0 = Clock::now();
  SplitMix64 rng(31337);
  double worst_ratio = 0.0;  // round-trip error / (max - min) * 2^bit
  bool idempotent = true;
  double worst32 = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const double lo = rng.uniform(-10.0, 5.0);
    const double hi = lo + rng.uniform(1e-3, 20.0);
    std::vector<double> v(256);
    for (auto& x : v) x = rng.uniform(lo, hi);
    v[0] = lo;
    v[1] = hi;
    for (int bit = 1; bit <= 16; ++bit) {
      const auto p = QuantParams::make(bit, lo, hi);
      const auto q = quantize_dequantize(v, p);
      const auto qq = quantize_dequantize(q, p);
      for (std::size_t i = 0; i < v.size(); ++i) {
        // 1e-12 absolute slack absorbs the final rounding of (v_int + 2^(bit-1)) / S + min.
        const double err = std::max(0.0, std::abs(q[i] - v[i]) - 1e-12);
        worst_ratio = std::max(worst_ratio, err / ((hi - lo) / std::ldexp(1.0, bit)));
        idempotent = idempotent && qq[i] == q[i];
      }
    }
    const auto q32 = quantize_dequantize(v, QuantParams::make(32, lo, hi));
    for (std::size_t i = 0; i < v.size(); ++i) worst32 = std::max(worst32, std::abs(q32[i] - v[i]) / (hi - lo));
  }
  const double t = since(t0);
  return {worst_ratio <= 1.0 && idempotent && worst32 <= 1e-6 && t < 10.0,
          fmt("bits 1-16: max error %.4f steps (tol 1); idempotent %s; 32-bit max %.2e of range (tol 1e-6); %.1f s "
              "(limit 10 s)",
              worst_ratio, idempotent ? "yes" : "NO", worst32, t)};
}

Outcome quantizer_regression() {
  const auto& p = synthetic_pipeline();
  return {p.quantizer_test_l1 <= 0.035 && p.quantizer_seconds < 300.0,
          fmt("synthetic L=10, %zu experiences, N=%zu: ensemble test L1 %.4f (tol 0.035); %.0f s (limit 300 s)",
              p.set.points.size(), p.model->ensemble.size(), p.quantizer_test_l1, p.quantizer_seconds)};
}

Outcome conditional_fidelity() {
  const auto& p = synthetic_pipeline();
  const double t = p.total_seconds();
  return {p.evaluation.overall <= 0.05 && t < 900.0,
          fmt("overall L1 %.4f (tol 0.05); per target%s; %.0f s (limit 900 s)", p.evaluation.overall,
              per_condition(p.evaluation).c_str(), t)};
}

Outcome trained_fidelity() {
  const auto& p = trained_pipeline();
  const double t = p.total_seconds();
  return {p.evaluation.overall <= 0.07 && t < 1800.0,
          fmt("trained L=8 seed 17, baseline %.4f: overall L1 %.4f (tol 0.07); per target%s; %.0f s (limit 1800 s)",
              p.env->baseline_accuracy(), p.evaluation.overall, per_condition(p.evaluation).c_str(), t)};
}

Outcome diversity() {
  std::size_t min_distinct = SIZE_MAX;
  std::uint64_t min_spread = UINT64_MAX;
  std::size_t conditions = 0;
  for (const Pipeline* p : {&synthetic_pipeline(), &trained_pipeline()}) {
    const auto& spec = p->env->resources();
    for (const auto& c : p->evaluation.conditions) {
      std::unordered_set<QuantConfig, QuantConfigHash> distinct(c.configs.begin(), c.configs.end());
      std::uint64_t lo = UINT64_MAX;
      std::uint64_t hi = 0;
      for (const auto& q : c.configs) {
        const auto bytes = hw::resources(spec, q).param_bytes;
        lo = std::min(lo, bytes);
        hi = std::max(hi, bytes);
      }
      min_distinct = std::min(min_distinct, distinct.size());
      min_spread = std::min(min_spread, hi - lo);
      ++conditions;
    }
  }
  return {min_distinct >= 10 && min_spread > 0,
          fmt("%zu conditions x 50 generations: min distinct configs %zu (need >= 10); min param_bytes spread %llu "
              "(need > 0)",
              conditions, min_distinct, static_cast<unsigned long long>(min_spread))};
}

Outcome low_budget_dominance() {
  // Smaller than the fidelity pipeline: this check compares against a fixed
  // uniform baseline, not a tolerance, and runs three times.
  QuantizerOptions qo = acceptance_quantizers(kQuantizerSeed);
  qo.widths = {64, 128};
  GanHyperParams hp = acceptance_gan(kGanSeed);
  hp.iterations = 1000;
  bool all = true;
  std::string detail;
  for (std::uint64_t seed : {101, 202, 303}) {
    Environment env = Environment::synthetic(seed, 10);
    const auto& sat = env.synthetic_oracle()->saturation;
    const bool heterogeneous = std::ranges::any_of(sat, [&](int c) { return c != sat.front(); });
    const Pipeline p = run_pipeline(env, 2000, qo, hp, false);
    const std::vector<int> bits{4};
    const auto rows = hw::compare_report(*p.model, *p.env, bits);
    const auto& uniform = rows.at(0);
    const auto& generated = rows.at(1);
    const bool ok = heterogeneous && generated.accuracy && *generated.accuracy >= *uniform.accuracy;
    all = all && ok;
    detail += fmt("%sseed %llu: aqgan %.4f vs uniform-4 %.4f at %llu B%s", detail.empty() ? "" : "; ",
                  static_cast<unsigned long long>(seed), generated.accuracy ? *generated.accuracy : -1.0,
                  *uniform.accuracy, static_cast<unsigned long long>(uniform.report->param_bytes),
                  heterogeneous ? "" : " (homogeneous c_l)");
  }
  return {all, detail + " (need aqgan >= uniform for 3 of 3)"};
}

Outcome generation_latency() {
  const auto& model = *synthetic_pipeline().model;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto t0 = Clock::now();
    const auto g = generate(model, 0.3 + 0.06 * static_cast<double>(s), 50, s);
    worst = std::max(worst, since(t0));
    if (g.proposals.size() != 50) return {false, "generate returned the wrong count"};
  }
  return {worst < 1.0, fmt("generate(count=50) worst of 10: %.2f ms (limit 1000 ms)", worst * 1e3)};
}

Outcome oracle_equivalence() {
  using testing::brute_resources;
  using testing::brute_select;
  SplitMix64 rng(4242);
  std::size_t checks = 0;
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 4; ++trial) {
    const LayerResourceSpec spec{{static_cast<std::uint64_t>(rng.uniform_int(1, 5000)),
                                  static_cast<std::uint64_t>(rng.uniform_int(1, 5000))},
                                 {static_cast<std::uint64_t>(rng.uniform_int(1, 900)),
                                  static_cast<std::uint64_t>(rng.uniform_int(1, 900))}};
    std::vector<Proposal> pool;
    for (int a = 1; a <= 32; ++a)
      for (int b = 1; b <= 32; ++b) {
        const QuantConfig c{{a, b}};
        mismatches += hw::resources(spec, c) == brute_resources(spec, c) ? 0 : 1;
        ++checks;
        pool.push_back({c, std::round(rng.uniform() * 40) / 40});
      }
    for (int k = 0; k < 25; ++k) {
      hw::Budget budget;
      budget.param_bytes = rng.uniform_int(1, 30000);
      if (rng.uniform() < 0.5) budget.act_bytes_peak = rng.uniform_int(1, 3600);
      const auto got = hw::select(pool, spec, budget);
      const auto want = brute_select(pool, spec, budget);
      mismatches += got.has_value() != want.has_value() || (got && got->input_index != *want) ? 1 : 0;
      ++checks;
    }
  }
  for (int i = 0; i < 1000; ++i) {
    LayerResourceSpec spec;
    for (int l = 0; l < 10; ++l) {
      spec.weights.push_back(rng.uniform_int(1, 1 << 16));
      spec.activations.push_back(rng.uniform_int(1, 1 << 12));
    }
    std::vector<Proposal> pool;
    const auto n = rng.uniform_int(1, 40);
    for (std::int64_t k = 0; k < n; ++k) {
      QuantConfig c{std::vector<int>(10)};
      for (auto& b : c.bits) b = static_cast<int>(rng.uniform_int(1, 32));
      mismatches += hw::resources(spec, c) == brute_resources(spec, c) ? 0 : 1;
      ++checks;
      pool.push_back({c, std::round(rng.uniform() * 10) / 10});
    }
    hw::Budget budget;
    budget.param_bytes = rng.uniform_int(10000, 2000000);
    if (rng.uniform() < 0.3) budget.act_bytes_sum = rng.uniform_int(1000, 60000);
    const auto got = hw::select(pool, spec, budget);
    const auto want = brute_select(pool, spec, budget);
    mismatches += got.has_value() != want.has_value() || (got && got->input_index != *want) ? 1 : 0;
    ++checks;
  }
  return {mismatches == 0,
          fmt("%zu resource/select comparisons (all 32^2 L=2 configs, 1000 L=10 instances): %zu mismatches", checks,
              mismatches)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
  return files;
}

bool forward_exact(const nn::DenseNet& a, const nn::DenseNet& b, SplitMix64& rng) {
  const nn::Matrix x = testing::random_matrix(64, a.input_size(), rng);
  return nn::predict(a, x) == nn::predict(b, x);
}

Outcome determinism_and_persistence() {
  const fs::path root = fs::temp_directory_path() / ("aq_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string r = root.string();
  const std::vector<std::vector<std::string>> steps{
      {"aq", "env", "build", "--layers", "10", "--seed", "7", "--out", r + "/env"},
      {"aq", "collect", "--env", r + "/env", "--count", "1500", "--sampling", "capped", "--seed", "11", "--out",
       r + "/exp"},
      {"aq", "train", "--experiences", r + "/exp", "--out", r + "/model", "--widths", "32,64", "--iterations", "150",
       "--batch", "128", "--seed", "5", "--quantizer-seed", "3"},
      {"aq", "report", "hist", "--model", r + "/model", "--target-acc", "0.6", "--svg", "--out", r + "/hist"}};
  std::vector<std::map<std::string, std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(root);
    std::map<std::string, std::string> all;
    for (const auto& args : steps) {
      std::ostringstream out;
      std::ostringstream err;
      if (const int code = cli::run_cli(args, out, err); code != 0)
        return {false, fmt("pipeline step '%s' exited %d: %s", args[1].c_str(), code, err.str().c_str())};
    }
    for (const char* dir : {"env", "exp", "model", "hist"})
      for (auto& [name, text] : snapshot(root / dir)) all[std::string(dir) + "/" + name] = std::move(text);
    runs.push_back(std::move(all));
  }
  std::size_t differing = 0;
  for (const auto& [name, text] : runs[0]) differing += runs[1].count(name) && runs[1].at(name) == text ? 0 : 1;
  const bool identical = differing == 0 && runs[0].size() == runs[1].size();

  // Round trips on the full-scale model and both environments.
  SplitMix64 rng(5150);
  const auto& p = synthetic_pipeline();
  p.model->save(root / "rt_model");
  const TrainedModel back = TrainedModel::load(root / "rt_model");
  bool exact = forward_exact(p.model->generator, back.generator, rng) &&
               forward_exact(p.model->critic, back.critic, rng) && back.labels == p.model->labels &&
               snapshot(root / "rt_model") == [&] {
                 back.save(root / "rt_model2");
                 return snapshot(root / "rt_model2");
               }();
  for (std::size_t k = 0; k < p.model->ensemble.size(); ++k)
    exact = exact && forward_exact(p.model->ensemble.members[k], back.ensemble.members[k], rng);
  save(p.set, root / "rt_exp" / "experiences.jsonl");
  exact = exact && load_experiences(root / "rt_exp" / "experiences.jsonl") == p.set;
  const auto& tp = trained_pipeline();
  tp.env->save(root / "rt_env");
  const Environment env_back = Environment::load(root / "rt_env");
  for (int i = 0; i < 20 && exact; ++i) {
    QuantConfig c{std::vector<int>(tp.env->layer_count())};
    for (auto& b : c.bits) b = static_cast<int>(rng.uniform_int(1, 32));
    exact = tp.env->evaluate(c) == env_back.evaluate(c);
  }
  fs::remove_all(root);
  return {identical && exact,
          fmt("two CLI pipeline runs: %zu files, %zu differing; save/load forward outputs bit-exact: %s",
              runs[0].size(), differing, exact ? "yes" : "NO")};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace aq

int main(int argc, char** argv) {
  using namespace aq;
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  init_logging();

  const std::vector<Criterion> criteria{
      {1, "gradient correctness", gradient_correctness},
      {2, "quantizer formula", quantizer_formula},
      {3, "quantizer ensemble regression", quantizer_regression},
      {4, "conditional fidelity (synthetic)", conditional_fidelity},
      {5, "conditional fidelity (trained)", trained_fidelity},
      {6, "diversity", diversity},
      {7, "flexible vs uniform at low budget", low_budget_dominance},
      {8, "generation latency", generation_latency},
      {9, "oracle equivalence", oracle_equivalence},
      {10, "determinism and persistence", determinism_and_persistence},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::ranges::find(only, c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s criterion %2d  %-34s %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
