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

#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <map>
#include <sstream>

#include "aq/error.hpp"
#include "aq/hwtune.hpp"
#include "aq/json_io.hpp"
#include "aq/quantenv.hpp"
#include "schema_check.hpp"

namespace aq::cli {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
  Json json() const { return parse_json(out, "stdout"); }
};

CliRun aq(std::vector<std::string> args) {
  args.insert(args.begin(), "aq");
  std::ostringstream out;
  std::ostringstream err;
  CliRun r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Every file under `dir`, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
  return files;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / ("aq_cli_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string path(const std::string& name) const { return (root_ / name).string(); }

  // Small synthetic pipeline: L=6, 400 capped points, a tiny GAN.
  void pipeline(const std::string& prefix = "") {
    ASSERT_EQ(aq({"env", "build", "--layers", "6", "--seed", "3", "--out", path(prefix + "env")}).code, 0);
    ASSERT_EQ(aq({"collect", "--env", path(prefix + "env"), "--count", "400", "--sampling", "capped", "--seed", "5",
                  "--out", path(prefix + "exp")})
                  .code,
              0);
    const CliRun t = aq({"train", "--experiences", path(prefix + "exp"), "--out", path(prefix + "model"),
                      "--iterations", "30", "--batch", "32", "--widths", "16,32", "--quantizer-epochs", "5",
                      "--generator-hidden", "32,32", "--critic-hidden", "32,32"});
    ASSERT_EQ(t.code, 0) << t.err;
  }

  fs::path root_;
};

TEST_F(CliTest, UnknownFlagPrintsUsageAndExitsOne) {
  const CliRun r = aq({"tune", "--model", root_.string(), "--target-acc", "0.8", "--no-such-flag"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--no-such-flag"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST_F(CliTest, MissingSubcommandExitsOne) {
  EXPECT_EQ(aq({}).code, kExitUsage);
  EXPECT_EQ(aq({"env"}).code, kExitUsage);
  EXPECT_EQ(aq({"report"}).code, kExitUsage);
}

TEST_F(CliTest, HelpExitsZeroAndListsSubcommands) {
  const CliRun r = aq({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  for (const char* sub : {"env", "collect", "train", "generate", "eval", "tune", "baseline", "report", "serve"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  EXPECT_NE(r.out.find("--config"), std::string::npos);
}

TEST_F(CliTest, OutOfRangeFlagValueIsUsageError) {
  EXPECT_EQ(aq({"env", "build", "--layers", "0", "--out", path("e")}).code, kExitUsage);
  EXPECT_EQ(aq({"collect", "--env", path("missing"), "--out", path("x")}).code, kExitUsage);
}

TEST_F(CliTest, PipelineWritesArtifactsWithProvenance) {
  pipeline();
  for (const char* dir : {"env", "exp", "model"}) {
    EXPECT_TRUE(fs::exists(root_ / dir / "resolved_config.ini")) << dir;
    EXPECT_TRUE(fs::exists(root_ / dir / "summary.json")) << dir;
  }
  EXPECT_TRUE(fs::exists(root_ / "exp" / "experiences.jsonl"));
  EXPECT_TRUE(fs::exists(root_ / "model" / "generator.json"));

  // Seeds are explicit in the echo, including the derived split seed.
  const std::string echo = read_text_file(root_ / "exp" / "resolved_config.ini");
  EXPECT_NE(echo.find("[collect]"), std::string::npos);
  EXPECT_NE(echo.find("seed = 5"), std::string::npos);
  EXPECT_NE(echo.find("split-seed = "), std::string::npos);
  const std::string train_echo = read_text_file(root_ / "model" / "resolved_config.ini");
  EXPECT_NE(train_echo.find("quantizer-seed = 0"), std::string::npos);
  EXPECT_NE(train_echo.find("widths = [16,32]"), std::string::npos);

  const Json summary = read_json_file(root_ / "model" / "summary.json");
  EXPECT_EQ(summary["train_points"], 320);
  EXPECT_EQ(summary["quantizers"].size(), 2u);
}

TEST_F(CliTest, TuneExamplePrintsSelectionAndReport) {
  pipeline();
  const CliRun r = aq({"tune", "--model", path("model"), "--target-acc", "0.85", "--param-budget", "120000", "--count",
                    "50"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Json j = r.json();
  ASSERT_FALSE(j["selected"].is_null());
  EXPECT_GT(j["feasible_count"].get<int>(), 0);
  EXPECT_LE(j["selected"]["param_bytes"].get<std::uint64_t>(), 120000u);
  EXPECT_EQ(j["selected"]["config"].size(), 6u);
  EXPECT_EQ(j["count"], 50);
  EXPECT_EQ(j["budget"]["param_bytes"], 120000);

  // Cross-check the printed selection against the library on the same batch.
  const TrainedModel model = TrainedModel::load(path("model"));
  const auto g = generate(model, 0.85, 50, 0);
  hw::Budget b;
  b.param_bytes = 120000;
  const auto chosen = hw::select(g.proposals, model.environment.resources, b);
  ASSERT_TRUE(chosen.has_value());
  EXPECT_EQ(j["selected"]["config"].get<std::vector<int>>(), chosen->proposal.config.bits);
  EXPECT_EQ(j["selected_index"].get<std::size_t>(), chosen->input_index);
}

TEST_F(CliTest, InfeasibleBudgetSelectsNothing) {
  pipeline();
  const CliRun r = aq({"tune", "--model", path("model"), "--target-acc", "0.5", "--param-budget", "1"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(r.json()["selected"].is_null());
  EXPECT_EQ(r.json()["feasible_count"], 0);
}

TEST_F(CliTest, ExportedSelectionValidatesAndEvaluates) {
  pipeline();
  ASSERT_EQ(aq({"tune", "--model", path("model"), "--target-acc", "0.8", "--param-budget", "200000", "--out",
                path("tune")})
                .code,
            0);
  const fs::path doc = root_ / "tune" / "selection.json";
  ASSERT_TRUE(fs::exists(doc));
  const Json sel = read_json_file(doc);
  EXPECT_EQ(sel["format"], "aq.selection");
  EXPECT_EQ(sel["layer_count"], 6);
  EXPECT_TRUE(sel.contains("seed"));
  ::aq::testing::SchemaChecker schemas(AQ_SCHEMA_DIR);
  EXPECT_EQ(schemas.check(sel, "selection.schema.json"), std::vector<std::string>{});

  const CliRun v = aq({"eval", "--configs", doc.string(), "--model", path("model"), "--validate-only"});
  EXPECT_EQ(v.code, kExitOk) << v.err;
  EXPECT_FALSE(v.json()["evaluated"].get<bool>());

  const CliRun e = aq({"eval", "--configs", doc.string(), "--env", path("env")});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  const Environment env = Environment::load(path("env"));
  const QuantConfig c{sel["config"].get<std::vector<int>>()};
  EXPECT_EQ(e.json()["configs"][0]["accuracy"].get<double>(), env.evaluate(c));
}

TEST_F(CliTest, InvalidConfigDocumentIsDataError) {
  pipeline();
  write_text_file(root_ / "bad.json", R"({"configs": [[4,4,4,4,4,4],[4,4,4,0,4,4]]})");
  const CliRun r = aq({"eval", "--configs", path("bad.json"), "--env", path("env")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("configs[1] layer 3"), std::string::npos) << r.err;

  write_text_file(root_ / "short.json", R"([[4,4,4]])");
  const CliRun s = aq({"eval", "--configs", path("short.json"), "--env", path("env")});
  EXPECT_EQ(s.code, kExitData);
  EXPECT_NE(s.err.find("expected 6"), std::string::npos) << s.err;
}

TEST_F(CliTest, EvalAgainstMismatchedEnvironmentPrintsDiff) {
  pipeline();
  ASSERT_EQ(aq({"env", "build", "--layers", "6", "--seed", "4", "--out", path("other")}).code, 0);
  const CliRun r = aq({"eval", "--model", path("model"), "--env", path("other"), "--count", "5"});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("seed: 3 != 4"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("aq check environment"), std::string::npos) << r.err;
}

TEST_F(CliTest, EvalDefaultsToEightConditions) {
  pipeline();
  const CliRun r = aq({"eval", "--model", path("model"), "--count", "5", "--out", path("eval")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Json j = r.json();
  ASSERT_EQ(j["conditions"].size(), 8u);
  const double base = Environment::load(path("env")).baseline_accuracy();
  EXPECT_NEAR(j["conditions"][0]["target"].get<double>(), 0.3 * base, 1e-12);
  EXPECT_NEAR(j["conditions"][7]["target"].get<double>(), base, 1e-12);
  EXPECT_TRUE(fs::exists(root_ / "eval" / "eval.csv"));
}

TEST_F(CliTest, TrainingFailureExitsThree) {
  pipeline();
  const CliRun r = aq({"train", "--experiences", path("exp"), "--out", path("bad"), "--widths", "16", "--iterations",
                    "2", "--batch", "32", "--quantizer-epochs", "3", "--quantizer-lr", "1e308"});
  EXPECT_EQ(r.code, kExitTraining);
  EXPECT_NE(r.err.find("aq train: quantizers"), std::string::npos) << r.err;
}

TEST_F(CliTest, TooFewDistinctConfigsIsDataError) {
  ASSERT_EQ(aq({"env", "build", "--layers", "1", "--out", path("e1")}).code, 0);
  const CliRun r = aq({"collect", "--env", path("e1"), "--count", "100", "--out", path("x")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("aq collect"), std::string::npos);
}

TEST_F(CliTest, ConfigFileSectionsApplyAndFlagsWin) {
  write_text_file(root_ / "run.ini",
                  "[env.build]\nlayers = 5\nseed = 9\n[collect]\ncount = 300\nsampling = \"capped\"\n"
                  "[train]\niterations = 7\n");
  const CliRun e = aq({"--config", path("run.ini"), "env", "build", "--seed", "2", "--out", path("env")});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  EXPECT_EQ(e.json()["environment"]["layer_count"], 5);
  EXPECT_EQ(e.json()["environment"]["seed"], 2);

  // The [train] section must not run training as a side effect.
  const CliRun c = aq({"--config", path("run.ini"), "collect", "--env", path("env"), "--out", path("exp")});
  ASSERT_EQ(c.code, kExitOk) << c.err;
  EXPECT_EQ(c.json()["count"], 300);
  EXPECT_EQ(c.json()["sampling"], "capped");
  EXPECT_FALSE(fs::exists(root_ / "model"));
}

TEST_F(CliTest, ResolvedConfigReproducesTheRun) {
  pipeline();
  const CliRun r = aq({"--config", path("model/resolved_config.ini"), "train", "--out", path("model2")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(snapshot(root_ / "model"), snapshot(root_ / "model2"));
}

TEST_F(CliTest, FullPipelineIsByteIdenticalAcrossRuns) {
  pipeline("a_");
  pipeline("b_");
  for (const char* dir : {"env", "exp", "model"}) {
    auto a = snapshot(root_ / ("a_" + std::string(dir)));
    auto b = snapshot(root_ / ("b_" + std::string(dir)));
    // Input paths differ between the two runs by construction.
    a.erase("resolved_config.ini");
    b.erase("resolved_config.ini");
    EXPECT_EQ(a, b) << dir;
  }
}

TEST_F(CliTest, HistogramCountsSumToBatch) {
  pipeline();
  const CliRun r = aq({"report", "hist", "--model", path("model"), "--target-acc", "0.7", "--count", "40", "--bins",
                    "5", "--svg", "--out", path("hist")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* metric : {"param_bytes", "act_bytes_sum"}) {
    const std::string csv = read_text_file(root_ / "hist" / ("hist_" + std::string(metric) + ".csv"));
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);  // header
    std::size_t total = 0;
    while (std::getline(lines, line)) total += std::stoul(line.substr(line.rfind(',') + 1));
    EXPECT_EQ(total, 40u) << metric;
    EXPECT_TRUE(fs::exists(root_ / "hist" / ("hist_" + std::string(metric) + ".svg")));
  }
}

TEST_F(CliTest, CompareAndBaselineWriteCsv) {
  pipeline();
  ASSERT_EQ(aq({"report", "compare", "--model", path("model"), "--bits", "8,4", "--count", "10", "--out",
                path("cmp")})
                .code,
            0);
  const std::string csv = read_text_file(root_ / "cmp" / "compare.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,bits_or_target,accuracy,param_bytes,act_bytes_sum,act_bytes_peak");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);

  const CliRun b = aq({"baseline", "--env", path("env"), "--bits", "8,4,2"});
  ASSERT_EQ(b.code, kExitOk) << b.err;
  const Json rows = b.json()["rows"];
  ASSERT_EQ(rows.size(), 3u);
  const Environment env = Environment::load(path("env"));
  EXPECT_EQ(rows[1]["accuracy"].get<double>(), env.evaluate(QuantConfig::uniform(6, 4)));
}

TEST_F(CliTest, GenerateIsDeterministicPerSeed) {
  pipeline();
  const auto args = std::vector<std::string>{"generate", "--model", path("model"), "--target-acc", "0.6", "--count",
                                             "20", "--seed", "7"};
  const CliRun a = aq(args);
  const CliRun b = aq(args);
  ASSERT_EQ(a.code, kExitOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.json()["proposals"].size(), 20u);
  EXPECT_EQ(aq({"generate", "--model", path("model"), "--target-acc", "0.6", "--count", "0"}).code, kExitUsage);
}

TEST(ConfigDocument, AcceptsTheThreeShapes) {
  const auto a = parse_config_document(parse_json("[[1,2],[3,4]]", "t"), 2);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[1].bits, (std::vector<int>{3, 4}));
  EXPECT_EQ(parse_config_document(parse_json(R"({"configs": [[32, 1]]})", "t"), std::nullopt).size(), 1u);
  const auto s = parse_config_document(parse_json(R"({"config": [5, 6, 7], "layer_count": 3})", "t"), 3);
  EXPECT_EQ(s[0].bits, (std::vector<int>{5, 6, 7}));
  EXPECT_TRUE(parse_config_document(parse_json("[]", "t"), 4).empty());
}

TEST(ConfigDocument, RejectsMalformedInput) {
  auto kind = [](const std::string& text, std::optional<std::size_t> layers) {
    try {
      parse_config_document(parse_json(text, "t"), layers);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kInvariant;
  };
  EXPECT_EQ(kind("[[1, 33]]", std::nullopt), ErrorKind::kInput);
  EXPECT_EQ(kind("[[1, 2.5]]", std::nullopt), ErrorKind::kInput);
  EXPECT_EQ(kind("[[1, 2]]", 3), ErrorKind::kInput);
  EXPECT_EQ(kind(R"({"config": [1, 2], "layer_count": 3})", std::nullopt), ErrorKind::kInput);
  EXPECT_EQ(kind(R"({"other": 1})", std::nullopt), ErrorKind::kInput);
  EXPECT_EQ(kind(R"([[]])", std::nullopt), ErrorKind::kInput);
}

}  // namespace
}  // namespace aq::cli
