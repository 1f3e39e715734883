#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "doctest.h"
#include "eclip/config.hpp"
#include "eclip/model.hpp"
#include "eclip/preprocess.hpp"
#include "json.hpp"

using namespace eclip;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "eclip");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("eclip_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A small dataset and matching train settings that run in well under a second.
const std::vector<std::string> kSmallSynth{
    "--set", "synth.n_classes=4", "--set", "synth.n_catalogs_per_class=4", "--set", "synth.n_duplicates_per_catalog=2",
    "--set", "synth.text_dim=16", "--set", "synth.image_size=8"};
const std::vector<std::string> kSmallTrain{
    "--set", "data.image_grid=4", "--set", "model.text_hidden=[8]", "--set", "model.image_hidden=[8]",
    "--set", "model.embed_dim=8", "--set", "schedule.initial_batch=4", "--set", "schedule.max_batch=8",
    "--set", "schedule.total_steps=12", "--set", "train.micro_batch=2", "--set", "train.eval_interval=3",
    "--set", "train.probe_batch=8", "--set", "data.holdout_fraction=0.25"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("config text round trip") {
  RunConfig cfg;
  apply_config_text(cfg, R"(
# comment
[run]
seed = 42
deterministic = true
[train]
learning_rate = 0.001
labels = "hard"
[model]
text_hidden = [32, 16]
[eval]
tasks = ["matching", "clustering"]
)");
  CHECK(cfg.seed == 42);
  CHECK(cfg.deterministic);
  CHECK(cfg.train.optimizer.learning_rate == 0.001);
  CHECK(cfg.train.labels == LabelMode::hard);
  CHECK(cfg.text_hidden == std::vector<Eigen::Index>{32, 16});
  CHECK(cfg.eval.tasks == std::vector<std::string>{"matching", "clustering"});

  RunConfig back;
  apply_config_text(back, to_config_text(cfg));
  CHECK(to_config_text(back) == to_config_text(cfg));
  CHECK(back.train.optimizer.learning_rate == cfg.train.optimizer.learning_rate);
}

TEST_CASE("config errors name the field") {
  RunConfig cfg;
  try {
    apply_config_text(cfg, "[train]\nlearnin_rate = 1\n");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("learnin_rate") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_config_text(cfg, "[nosuch]\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(cfg, "[train]\nlearning_rate = fast\n"), ConfigError);
  CHECK_THROWS_AS(apply_assignment(cfg, "train.labels=fuzzy"), ConfigError);
  RunConfig bad;
  bad.train.micro_batch = 0;
  try {
    bad.validate();
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "train.micro_batch");
  }
}

TEST_CASE("environment overrides seed and output only") {
  ::setenv("ECLIP_SEED", "77", 1);
  ::setenv("ECLIP_OUT", "/tmp/eclip_env_out", 1);
  RunConfig cfg;
  apply_environment(cfg);
  CHECK(cfg.seed == 77);
  CHECK(cfg.out == "/tmp/eclip_env_out");
  ::setenv("ECLIP_SEED", "x7", 1);
  CHECK_THROWS_AS(apply_environment(cfg), ConfigError);
  ::unsetenv("ECLIP_SEED");
  ::unsetenv("ECLIP_OUT");
}

TEST_CASE("cli exit codes for bad input") {
  const auto dir = scratch("errors");
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"verify", "--out", dir.string(), "--set", "train.nope=1"}).code == 2);
  {
    std::ofstream f(dir / "bad.toml");
    f << "[train]\nlearning_rate = -1\n";
  }
  const auto r = cli({"verify", "--config", (dir / "bad.toml").string(), "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("train.learning_rate") != std::string::npos);
  const auto missing = cli({"preprocess", "--data", (dir / "nothing").string(), "--out", (dir / "o").string()});
  CHECK(missing.code == 1);
  fs::remove_all(dir);
}

TEST_CASE("verify passes on a clean checkout") {
  const auto dir = scratch("verify");
  const auto r = cli({"verify", "--out", dir.string(), "--seed", "3"});
  INFO(r.out);
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "verify.json"));
  CHECK(fs::exists(dir / "config.resolved.toml"));
  CHECK(r.out.find("FAIL") == std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("preprocess reports one duplicate title") {
  const auto dir = scratch("prep");
  fs::create_directories(dir / "images");
  std::vector<ProductRecord> m(3);
  const std::vector<std::string> titles{"steel water bottle", "Steel-Water bottle!", "glass tea cup"};
  for (int i = 0; i < 3; ++i) {
    auto& r = m[static_cast<std::size_t>(i)];
    r.product_id = std::to_string(i + 1);
    r.title = titles[static_cast<std::size_t>(i)];
    r.registration_time = "2022-01-0" + std::to_string(i + 1);
    r.image_path = "images/" + r.product_id + ".ppm";
    r.catalog_id = "c" + r.product_id;
    write_ppm(dir / r.image_path, ImageBuffer(20, 20, static_cast<std::uint8_t>(60 * i)));
  }
  write_manifest(dir / "manifest.jsonl", m);
  const auto r = cli({"preprocess", "--data", dir.string(), "--out", (dir / "clean").string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "clean" / "dedup_report.json"));
  CHECK(report["by_reason"]["dup-title"] == 1);
  CHECK(report["kept"] == 2);
  const auto kept = read_manifest(dir / "clean" / "manifest.jsonl");
  REQUIRE(kept.size() == 2);
  CHECK(fs::path(kept[0].image_path).is_absolute());
  fs::remove_all(dir);
}

TEST_CASE("train with zero learning rate keeps the initialization") {
  const auto dir = scratch("lr0");
  REQUIRE(cli(concat({"synth-gen", "--out", (dir / "data").string(), "--seed", "5"}, kSmallSynth)).code == 0);
  const auto r = cli(concat({"train", "--data", (dir / "data").string(), "--out", (dir / "run").string(), "--seed",
                             "11", "--set", "train.learning_rate=0"},
                            kSmallTrain));
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto trained = load_checkpoint(dir / "run" / "checkpoint.json");
  const auto init = init_model(trained.text_spec, trained.image_spec, 11, 0.07);
  CHECK(trained.log_tau == init.log_tau);
  REQUIRE(trained.text.size() == init.text.size());
  for (std::size_t i = 0; i < init.text.size(); ++i) CHECK(trained.text[i].value == init.text[i].value);
  for (std::size_t i = 0; i < init.image.size(); ++i) CHECK(trained.image[i].value == init.image[i].value);
  fs::remove_all(dir);
}

TEST_CASE("deterministic runs write byte-identical metrics") {
  const auto dir = scratch("det");
  REQUIRE(cli(concat({"synth-gen", "--out", (dir / "data").string(), "--seed", "2"}, kSmallSynth)).code == 0);
  for (const char* run : {"a", "b"}) {
    const auto r = cli(concat({"train", "--deterministic", "--data", (dir / "data").string(), "--out",
                               (dir / run).string(), "--seed", "4", "--set", "train.learning_rate=0.01"},
                              kSmallTrain));
    INFO(r.err);
    REQUIRE(r.code == 0);
  }
  const auto a = slurp(dir / "a" / "metrics.jsonl");
  CHECK(!a.empty());
  CHECK(a == slurp(dir / "b" / "metrics.jsonl"));
  CHECK(slurp(dir / "a" / "checkpoint.json") == slurp(dir / "b" / "checkpoint.json"));

  // The resolved snapshot reproduces the run on its own.
  const auto again = cli({"train", "--config", (dir / "a" / "config.resolved.toml").string(), "--out",
                          (dir / "c").string()});
  INFO(again.err);
  REQUIRE(again.code == 0);
  CHECK(a == slurp(dir / "c" / "metrics.jsonl"));

  const auto ev = cli(concat({"eval", "--data", (dir / "data").string(), "--out", (dir / "a").string(), "--set",
                              "eval.tasks=[\"zero_shot_category\",\"matching\",\"clustering\"]"},
                             kSmallTrain));
  INFO(ev.err);
  REQUIRE(ev.code == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "a" / "eval_report.json"));
  CHECK(report.contains("zero_shot_category"));
  CHECK(report["zero_shot_category"]["multimodal"]["accuracy"].is_number());
  CHECK(report["clustering"]["image"]["nmi"].is_number());
  fs::remove_all(dir);
}
