#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "config.hpp"
#include "dldmd/errors.hpp"
#include "dldmd/random.hpp"
#include "dldmd/training.hpp"

namespace fs = std::filesystem;
using namespace dldmd;
using namespace dldmd::cli;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dldmd_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int code;
  std::string output;
};

Run run(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli.log";
  const std::string cmd = std::string(DLDMD_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  return {WEXITSTATUS(status), std::string(std::istreambuf_iterator<char>(in), {})};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Small but complete pendulum run.
const char* kTiny =
    "--set n_train=8 --set n_val=2 --set n_test=3 --set t_final=1 --set t_predict=2 "
    "--set hidden_width=8 --set batch_size=4";

}  // namespace

TEST_CASE("config text parsing") {
  const auto a = parse_config_text("# comment\nsystem = duffing\n\n lr=0.5 # trailing\n", "x");
  REQUIRE(a.size() == 2);
  CHECK(a[0].first == "system");
  CHECK(a[0].second == "duffing");
  CHECK(a[1].second == "0.5");
  CHECK_THROWS_AS(parse_config_text("novalue\n", "x"), ConfigError);
  CHECK_THROWS_AS(parse_assignment("=3"), ConfigError);
}

TEST_CASE("resolve applies presets then overrides") {
  const auto c = resolve("train", {{"system", "duffing"}, {"lr", "0.25"}, {"seed", "7"}});
  CHECK(c.system == dynamics::System::duffing);
  CHECK(c.hyper.lr == 0.25);
  CHECK(c.hyper.latent_dim == 3);
  CHECK(c.hyper.seed == 7);
  CHECK(c.data == fs::path("out") / "data");
  CHECK(c.counts.total() == 750);

  const auto p = resolve("train", {{"preset", "paper-scale"}});
  CHECK(p.counts.total() == 15000);
  CHECK(p.hyper.batch_size == 512);

  CHECK_THROWS_AS(resolve("train", {{"learning_rate", "1"}}), ConfigError);
  CHECK_THROWS_AS(resolve("train", {{"lr", "fast"}}), ConfigError);
  CHECK_THROWS_AS(resolve("train", {{"lr", "-1"}}), ConfigError);
  CHECK_THROWS_AS(resolve("train", {{"system", "rossler"}}), ConfigError);
  CHECK_THROWS_AS(resolve("train", {{"baseline", "sindy"}}), ConfigError);
}

TEST_CASE("effective config echo re-drives an identical config") {
  const auto c = resolve("evaluate", {{"system", "lorenz63"}, {"lr", "0.1"}, {"alpha4", "3e-7"},
                                      {"out", "somewhere"}, {"baseline", "dmd"}});
  const auto again = resolve("evaluate", parse_config_text(c.echo(), "echo"));
  CHECK(again.echo() == c.echo());
  CHECK(again.hyper.alpha4 == 3e-7);
}

TEST_CASE("generate is deterministic and writes a manifest") {
  const auto dir = scratch("gen");
  const std::string common = std::string(kTiny) + " --seed 3";
  REQUIRE(run("generate --out " + (dir / "a").string() + " " + common, dir).code == 0);
  REQUIRE(run("generate --out " + (dir / "b").string() + " " + common, dir).code == 0);
  for (const char* f : {"train.bin", "val.bin", "test.bin"})
    CHECK(slurp(dir / "a" / "data" / f) == slurp(dir / "b" / "data" / f));
  const auto m = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(m["seed"] == 3);
  CHECK(m["counts"]["train"] == 8);
  CHECK(fs::exists(dir / "a" / "config_generate.txt"));
}

TEST_CASE("desk preset generates 750 trajectories") {
  const auto dir = scratch("desk");
  REQUIRE(run("generate --out " + dir.string() + " --set t_final=1 --set t_predict=2", dir).code == 0);
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(m["counts"]["train"].get<int>() + m["counts"]["val"].get<int>() +
            m["counts"]["test"].get<int>() ==
        750);
}

TEST_CASE("train, evaluate, predict and spectra end to end") {
  const auto dir = scratch("e2e");
  const std::string base = "--out " + dir.string() + " " + kTiny;
  REQUIRE(run("generate " + base, dir).code == 0);
  const auto t = run("train " + base + " --epochs 3", dir);
  REQUIRE(t.code == 0);
  const auto metrics = slurp(dir / "metrics.csv");
  CHECK(metrics.rfind("epoch,train_total,train_recon,train_dmd,train_pred,reg,val_total,wall_seconds\n", 0) == 0);
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 4);
  CHECK(fs::exists(dir / "checkpoint_best.bin"));

  REQUIRE(run("evaluate " + base + " --baseline dmd", dir).code == 0);
  const auto summary = slurp(dir / "summary.csv");
  CHECK(summary.rfind("model,mean_mse,log10_mse,mean_mse_extended,mean_residual,N_o,param_count\ndldmd,", 0) == 0);
  CHECK(summary.find("\ndmd,") != std::string::npos);
  for (const char* f : {"evaluation.csv", "eigenvalues.csv", "spectra.csv", "prediction.csv"})
    CHECK(fs::exists(dir / f));

  CHECK(run("predict " + base + " --set traj=2", dir).code == 0);
  CHECK(run("spectra " + base + " --set traj=1", dir).code == 0);
  CHECK(run("spectra " + base + " --set traj=9", dir).code == 2);
}

TEST_CASE("zero epochs writes the initialisation") {
  const auto dir = scratch("zero");
  const std::string base = "--out " + dir.string() + " " + kTiny + " --seed 4";
  REQUIRE(run("generate " + base, dir).code == 0);
  REQUIRE(run("train " + base + " --epochs 0", dir).code == 0);
  const auto c = training::read_checkpoint(dir / "checkpoint.bin");
  CHECK(c.epoch == 0);
  CHECK(c.params.flatten() == ad::NetworkParams::glorot(2, 2, 8, 3, derive_seed(4, 0)).flatten());
}

TEST_CASE("exit codes") {
  const auto dir = scratch("codes");
  const auto missing = run("train --out " + (dir / "nowhere").string(), dir);
  CHECK(missing.code == 4);
  CHECK(missing.output.find((dir / "nowhere" / "data").string()) != std::string::npos);
  CHECK(run("train --out " + dir.string() + " --set bogus=1", dir).code == 2);
  CHECK(run("evaluate --out " + dir.string(), dir).code == 4);
  CHECK(run("frobnicate", dir).code == 2);
  CHECK(run("--help", dir).code == 0);
}

TEST_CASE("diverging training exits with the numeric code") {
  const auto dir = scratch("diverge");
  const std::string base = "--out " + dir.string() + " " + kTiny;
  REQUIRE(run("generate " + base, dir).code == 0);
  const auto r = run("train " + base + " --set lr=1e6 --epochs 20", dir);
  CHECK(r.code == 3);
  CHECK(training::read_checkpoint(dir / "checkpoint.bin").failed);
}

TEST_CASE("system mismatch between config and dataset is a config error") {
  const auto dir = scratch("mismatch");
  const std::string base = "--out " + dir.string() + " " + kTiny;
  REQUIRE(run("generate " + base, dir).code == 0);
  CHECK(run("train " + base + " --system duffing", dir).code == 2);
}
