#include <gtest/gtest.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "pilot/cli/commands.hpp"
#include "pilot/cli/config.hpp"
#include "pilot/corpus.hpp"
#include "pilot/error.hpp"
#include "pilot/synthetic.hpp"
#include "test_support.hpp"

namespace pilot::cli {
namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

TEST(Config, EmptyDocumentGivesDefaults) {
  EXPECT_EQ(parse_config_text(""), RunConfig{});
  EXPECT_EQ(parse_config_text("{}"), RunConfig{});
}

TEST(Config, NestedKeysAndOverrides) {
  const auto cfg = parse_config_text("embedding:\n  dim: 64\nprogressive:\n  max_epochs: 2\nseeds: [4, 5]\n",
                                     {"mode=naive", "embedding.dim=32"});
  EXPECT_EQ(cfg.embedder.dim, 32u);
  EXPECT_EQ(cfg.experiment.progressive.max_epochs, 2u);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(cfg.experiment.mode, eval::PipelineMode::kNaive);
}

TEST(Config, RoundTrip) {
  RunConfig cfg;
  cfg.dataset = "data/c.jsonl";
  cfg.experiment.train.learning_rate = 0.003;
  cfg.experiment.mrl.tau = 0.07;
  cfg.experiment.scar.label_frequency_c = 0.1;
  cfg.experiment.validation = eval::ValidationMode::kTruth;
  cfg.sweep.ratios = {0.2, 0.9};
  cfg.seeds = {9};
  EXPECT_EQ(parse_config_text(serialize_config(cfg)), cfg);
}

void expect_config_error(const std::string& text, const std::string& fragment) {
  try {
    parse_config_text(text);
    FAIL() << "accepted: " << text;
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfiguration);
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Config, InvalidValuesNameTheKey) {
  expect_config_error("progressive:\n  t_max: 0.2\n  t_min: 0.5\n", "progressive");
  expect_config_error("colour: blue\n", "unknown config key 'colour'");
  expect_config_error("train:\n  max_epochs: -3\n", "train.max_epochs");
  expect_config_error("mode: fancy\n", "mode");
  expect_config_error("seeds: []\n", "seeds");
  expect_config_error("embedding:\n  source: file\n", "embedding.path");
}

TEST(Config, MalformedOverride) {
  EXPECT_THROW(parse_config_text("", {"novalue"}), Error);
}

class Pipeline : public ::testing::Test {
 protected:
  void SetUp() override {
    synthetic::CodeCorpusSpec spec;
    spec.n_samples = 600;
    spec.seed = 7;
    corpus::write_corpus(dir_ / "corpus.jsonl", synthetic::code_corpus(spec));
    cfg_ = parse_config_text(
        "embedding: {dim: 256, ngram: 1}\n"
        "encoder: {hidden: 32, proj_dim: 16}\n"
        "progressive: {max_epochs: 3}\n"
        "train: {learning_rate: 0.005, max_epochs: 15}\n"
        "seeds: [1]\n");
    ctx_.workdir = dir_.path();
  }

  int run(const std::string& command) { return dispatch(command, cfg_, ctx_); }

  testing::TempDir dir_;
  RunConfig cfg_;
  Context ctx_;
};

TEST_F(Pipeline, StagesInOrder) {
  for (const char* c : {"prep", "simulate-pu", "select", "train", "evaluate", "report"}) {
    ASSERT_EQ(run(c), kExitOk) << c;
  }
  const auto paths = run_paths(cfg_, ctx_);
  EXPECT_EQ(parse_config(paths.config()), cfg_);
  const auto metrics = nlohmann::json::parse(slurp(paths.metrics()));
  EXPECT_EQ(metrics["seeds"].size(), 1u);
  EXPECT_GT(metrics["mean"]["f1"].get<double>(), 0.5);
  EXPECT_EQ(slurp(paths.mislabels(1)).rfind("id,truth,pseudo,confidence,epoch\n", 0), 0u);

  // Re-running the same stages reproduces the same bytes.
  const auto first = slurp(paths.metrics());
  const auto ledger = slurp(paths.ledger(1));
  for (const char* c : {"simulate-pu", "select", "train", "evaluate"}) ASSERT_EQ(run(c), kExitOk);
  EXPECT_EQ(slurp(paths.metrics()), first);
  EXPECT_EQ(slurp(paths.ledger(1)), ledger);
}

TEST_F(Pipeline, MissingInputIsStageFailure) {
  EXPECT_EQ(run("select"), kExitStage);
  EXPECT_TRUE(std::filesystem::exists(run_paths(cfg_, ctx_).config()));
  cfg_.dataset = "absent.jsonl";
  EXPECT_EQ(run("prep"), kExitStage);
}

TEST_F(Pipeline, UnknownCommandIsUsageError) { EXPECT_EQ(run("deploy"), kExitUsage); }

TEST_F(Pipeline, SweepTrendsUpward) {
  ASSERT_EQ(run("prep"), kExitOk);
  ASSERT_EQ(run("sweep"), kExitOk);
  const auto doc = nlohmann::json::parse(slurp(run_paths(cfg_, ctx_).sweep_json()));
  const auto& rows = doc["rows"];
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_GE(rows[i]["f1"].get<double>(), rows[i - 1]["f1"].get<double>() - 0.02) << "row " << i;
  }
  EXPECT_GT(rows[4]["f1"].get<double>(), rows[0]["f1"].get<double>());
  std::istringstream csv(slurp(run_paths(cfg_, ctx_).sweep_csv()));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 6u);
}

}  // namespace
}  // namespace pilot::cli
