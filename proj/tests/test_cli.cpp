// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "camc/cli.hpp"

using namespace camc;
using namespace camc::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  args.insert(args.begin(), "camc");
  Result r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Runs under a private CAMC_RUN_DIR so tests do not see each other's runs.
fs::path fresh_run_root(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "camc_tests" / "cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  ::setenv("CAMC_RUN_DIR", dir.c_str(), 1);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> tiny_training() {
  return {"-q",
          "train",
          "--set",
          R"(dataset.classes=["BPSK","QPSK"])",
          "--set",
          "dataset.snr_grid_db=[0,10]",
          "--set",
          "dataset.frames_per_class_per_snr=10",
          "--set",
          "dataset.frame_length=32",
          "--N",
          "8",
          "--epochs",
          "2",
          "--patience",
          "1",
          "--batch",
          "8"};
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("summary reports the encoder parameter count") {
    const auto r = run({"summary", "--model", "sscnet", "--L", "512", "--N", "64"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("params=20000") != std::string::npos);
    CHECK(r.out.find("flops=17829888") != std::string::npos);
  }

  TEST_CASE("summary csv has one row per layer") {
    const auto r = run({"summary", "--model", "mcnet", "--N", "64", "--csv"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("mcnet/bilstm1") != std::string::npos);
  }

  TEST_CASE("usage errors exit with status 2") {
    fresh_run_root("usage");
    CHECK(run({"gen-data", "--frames", "0"}).code == kExitUsage);
    CHECK(run({"gen-data", "--frames", "-3"}).code == kExitUsage);
    CHECK(run({"no-such-command"}).code == kExitUsage);
    CHECK(run({"train", "--N", "8", "--r", "16"}).code == kExitUsage);
    CHECK(run({"train", "--r", "3"}).code == kExitUsage);
    CHECK(run({"summary", "--model", "resnet"}).code == kExitUsage);
    CHECK(run({}).code == kExitUsage);
  }

  TEST_CASE("unknown config keys are rejected") {
    const auto root = fresh_run_root("config");
    const auto cfg = root / "bad.json";
    std::ofstream(cfg) << R"({"train": {"learning_rate": 0.1}})";
    const auto r = run({"train", "--config", cfg.string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("learning_rate") != std::string::npos);
    CHECK(run({"train", "--set", "train.lr=\"fast\""}).code == kExitUsage);
    CHECK(run({"train", "--set", "nope.x=1"}).code == kExitUsage);
  }

  TEST_CASE("config merging") {
    auto base = default_config();
    CHECK_THROWS_AS(merge_config(base, nlohmann::json{{"model", {{"kind", 3}}}}), UsageError);
    merge_config(base, nlohmann::json{{"train", {{"lr", 0.01}}}});
    CHECK(base["train"]["lr"] == 0.01);
    merge_config(base, nlohmann::json{{"eval", {{"transmission_snr_db", "inf"}}}});
    CHECK(base["eval"]["transmission_snr_db"] == "inf");
    const auto h = config_hash(base);
    CHECK(h.size() == 8);
    CHECK(h == config_hash(base));
    base["train"]["seed"] = 2;
    CHECK(h != config_hash(base));
  }

  TEST_CASE("gen-data writes a dataset that inspect can read") {
    const auto root = fresh_run_root("gen");
    const auto r = run({"-q", "gen-data", "--frames", "2", "--L", "16", "--classes", "BPSK,GFSK"});
    REQUIRE(r.code == kExitOk);
    const fs::path path = r.out.substr(0, r.out.find('\n'));
    REQUIRE(fs::exists(path));
    const auto in = run({"inspect", path.string()});
    REQUIRE(in.code == kExitOk);
    const auto stats = nlohmann::json::parse(in.out);
    CHECK(stats["frame_count"] == 80);
    CHECK(stats["frame_length"] == 16);
  }

  TEST_CASE("train then eval produces an accuracy table") {
    const auto root = fresh_run_root("train_eval");
    const auto tr = run(tiny_training());
    INFO(tr.err);
    REQUIRE(tr.code == kExitOk);
    const fs::path dir = tr.out.substr(0, tr.out.find('\n'));
    CHECK(dir.parent_path() == root);
    for (const char* f : {"checkpoint.camcpt", "history.csv", "train_summary.json", "config.json"})
      CHECK(fs::exists(dir / f));

    const auto ev = run({"-q", "eval", "--run", dir.string(), "--tx-snr", "inf"});
    INFO(ev.err);
    REQUIRE(ev.code == kExitOk);
    const auto csv = slurp(dir / "accuracy.csv");
    CHECK(csv.rfind("model,r,sensing_snr_db,transmission_snr_db,count,correct,accuracy\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') >= 2);
    CHECK(csv.find(",inf,") != std::string::npos);
    CHECK(fs::exists(dir / "eval.run.json"));

    const auto cf = run({"-q", "confusion", "--run", dir.string(), "--snr", "10"});
    CHECK(cf.code == kExitOk);
    CHECK(cf.out.rfind("true\\predicted,BPSK,QPSK\n", 0) == 0);

    CHECK(run({"-q", "confusion", "--run", dir.string(), "--snr", "7"}).code == kExitRuntime);
  }

  TEST_CASE("training is reproducible from the same config") {
    fresh_run_root("repro_a");
    const auto a = run(tiny_training());
    fresh_run_root("repro_b");
    const auto b = run(tiny_training());
    REQUIRE(a.code == kExitOk);
    REQUIRE(b.code == kExitOk);
    const fs::path da = a.out.substr(0, a.out.find('\n'));
    const fs::path db = b.out.substr(0, b.out.find('\n'));
    CHECK(da.filename() == db.filename());
    CHECK(slurp(da / "history.csv") == slurp(db / "history.csv"));
    CHECK(slurp(da / "checkpoint.camcpt") == slurp(db / "checkpoint.camcpt"));
  }

  TEST_CASE("missing run directory is a usage error") {
    CHECK(run({"eval", "--run", "/nonexistent/run"}).code == kExitUsage);
  }
}
