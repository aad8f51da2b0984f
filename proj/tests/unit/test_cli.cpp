// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#include <fcntl.h>
#include <sys/file.h>

#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "echo_server.hpp"
#include "fakes.hpp"
#include "selftrain/cli.hpp"

using namespace selftrain;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

/// Scoped environment variable.
struct EnvVar {
  std::string name;
  EnvVar(std::string n, const std::string& value) : name(std::move(n)) { ::setenv(name.c_str(), value.c_str(), 1); }
  ~EnvVar() { ::unsetenv(name.c_str()); }
};

struct Task {
  fs::path dir;
  fs::path config;

  explicit Task(const std::string& name, int labeled = 15, int unlabeled = 5) {
    dir = fakes::temp_dir("cli-" + name);
    auto r = cli_run({"sim-task", "--out", dir.string(), "--labeled", std::to_string(labeled), "--unlabeled",
                      std::to_string(unlabeled), "--dev", "30", "--seed", "4"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    config = dir / "config.json";
  }
  ~Task() { fs::remove_all(dir); }

  Json read_config() const { return Json::parse(fakes::read_file(config)); }
  fs::path write_config(const std::string& name, const Json& j) const {
    fakes::write_file(dir / name, j.dump(2));
    return dir / name;
  }
};

std::size_t line_count(const fs::path& p) {
  auto text = fakes::read_file(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(cli_run({}).code == cli::kExitUsage);
  CHECK(cli_run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(cli_run({"simulate", "--profile", "huge"}).code == cli::kExitUsage);
  CHECK(cli_run({"ttest", "--a", "0.1,0.2", "--b", "0.1"}).code == cli::kExitUsage);
  CHECK(cli_run({"generate", "--config", "/nonexistent/config.json"}).code == cli::kExitUsage);
}

TEST_CASE("generate with a missing unlabeled file exits with 2") {
  Task task("missing");
  fs::remove(task.dir / "unlabeled.jsonl");
  auto r = cli_run({"generate", "--config", task.config.string()});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("unlabeled") != std::string::npos);
}

TEST_CASE("tau outside [0,1] exits with 2") {
  Task task("tau");
  auto j = task.read_config();
  j["tau"] = 1.5;
  auto cfg = task.write_config("bad.json", j);
  CHECK(cli_run({"generate", "--config", task.config.string()}).code == 0);
  CHECK(cli_run({"selftrain", "--config", cfg.string()}).code == cli::kExitUsage);
  j = task.read_config();
  j["no_such_key"] = 1;
  CHECK(cli_run({"selftrain", "--config", task.write_config("unknown.json", j).string()}).code ==
        cli::kExitUsage);
}

TEST_CASE("generation writes m x |C| records reproducibly") {
  Task task("gen");
  auto r = cli_run({"generate", "--config", task.config.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto synthetic = task.dir / "synthetic.jsonl";
  CHECK(line_count(synthetic) == 15);
  const auto first = fakes::read_file(synthetic);
  const auto manifest = Json::parse(fakes::read_file(task.dir / "synthetic.jsonl.manifest.json"));
  CHECK(manifest["outcome"] == "completed");
  CHECK(manifest["output"]["sha256"] == sha256_hex(first));

  REQUIRE(cli_run({"generate", "--config", task.config.string()}).code == 0);
  CHECK(fakes::read_file(synthetic) == first);

  REQUIRE(cli_run({"generate", "--config", task.config.string(), "--seed", "99"}).code == 0);
  CHECK(fakes::read_file(synthetic) != first);
}

TEST_CASE("seed precedence is flag, then environment, then config") {
  CHECK(cli::resolve_seed(std::nullopt, 5) == 5);
  {
    EnvVar env("SELFTRAIN_SEED", "17");
    CHECK(cli::resolve_seed(std::nullopt, 5) == 17);
    CHECK(cli::resolve_seed(3, 5) == 3);
  }
  EnvVar bad("SELFTRAIN_SEED", "abc");
  CHECK_THROWS_AS(cli::resolve_seed(std::nullopt, 5), ValidationError);
}

TEST_CASE("timestamps honor SOURCE_DATE_EPOCH") {
  EnvVar env("SOURCE_DATE_EPOCH", "1767225600");
  CHECK(cli::timestamp_now() == "2026-01-01T00:00:00Z");
}

TEST_CASE("selftrain run directory lifecycle") {
  Task task("run");
  REQUIRE(cli_run({"generate", "--config", task.config.string()}).code == 0);
  auto j = task.read_config();
  j["max_iterations"] = 2;
  auto cfg = task.write_config("short.json", j);
  const auto run_dir = task.dir / "run";

  SUBCASE("completed runs write a report and refuse a second start") {
    auto r = cli_run({"selftrain", "--config", cfg.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(run_dir / "report.json"));
    CHECK(fs::exists(run_dir / "metrics.csv"));
    CHECK(fs::exists(run_dir / "state" / "iter_0.jsonl"));
    auto manifest = Json::parse(fakes::read_file(run_dir / "manifest.json"));
    CHECK(manifest["outcome"] == "completed");
    CHECK(cli_run({"selftrain", "--config", cfg.string()}).code == cli::kExitUsage);
  }

  SUBCASE("a held lock makes a second process fail") {
    fs::create_directories(run_dir);
    int fd = ::open((run_dir / ".lock").c_str(), O_CREAT | O_RDWR, 0644);
    REQUIRE(fd >= 0);
    REQUIRE(::flock(fd, LOCK_EX | LOCK_NB) == 0);
    auto r = cli_run({"selftrain", "--config", cfg.string()});
    CHECK(r.code == cli::kExitFailure);
    ::flock(fd, LOCK_UN);
    ::close(fd);
  }

  SUBCASE("resume rejects changed inputs") {
    auto r = cli_run({"selftrain", "--config", cfg.string(), "--stop-after", "1"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto manifest = Json::parse(fakes::read_file(run_dir / "manifest.json"));
    CHECK(manifest["outcome"] == "halted");
    auto dev = fakes::read_file(task.dir / "dev.jsonl");
    fakes::write_file(task.dir / "dev.jsonl", dev.substr(0, dev.find('\n') + 1));
    CHECK(cli_run({"selftrain", "--config", cfg.string(), "--resume"}).code == cli::kExitUsage);
    fakes::write_file(task.dir / "dev.jsonl", dev);
    CHECK(cli_run({"selftrain", "--config", cfg.string(), "--resume", "--seed", "123"}).code ==
          cli::kExitUsage);
    auto resumed = cli_run({"selftrain", "--config", cfg.string(), "--resume"});
    CHECK_MESSAGE(resumed.code == 0, resumed.err);
  }

  SUBCASE("resume without a run exits with 2") {
    CHECK(cli_run({"selftrain", "--config", cfg.string(), "--resume"}).code == cli::kExitUsage);
  }
}

TEST_CASE("evaluate and ttest") {
  auto dir = fakes::temp_dir("cli-eval");
  fakes::write_file(dir / "gold.jsonl",
                    "{\"id\":\"a\",\"premise\":\"p\",\"hypothesis\":\"h\",\"label\":\"entailment\"}\n"
                    "{\"id\":\"b\",\"premise\":\"p\",\"hypothesis\":\"h\",\"label\":\"not_entailment\"}\n");
  fakes::write_file(dir / "pred.jsonl", "{\"id\":\"a\",\"label\":\"entailment\"}\n{\"id\":\"b\",\"label\":\"neutral\"}\n");
  auto r = cli_run({"evaluate", "--gold", (dir / "gold.jsonl").string(), "--pred", (dir / "pred.jsonl").string(),
                    "--schema", "nli2", "--pred-schema", "nli3", "--out", (dir / "eval.json").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  auto report = Json::parse(fakes::read_file(dir / "eval.json"));
  CHECK(report["macro_f1"].get<double>() == doctest::Approx(1.0));

  auto t = cli_run({"ttest", "--a", "0.5,0.6,0.7", "--b", "0.4,0.4,0.6"});
  CHECK(t.code == 0);
  auto tj = Json::parse(t.out);
  CHECK(tj["t"].get<double>() == doctest::Approx(4.0));
  CHECK(tj["df"] == 2);
  fs::remove_all(dir);
}

TEST_CASE("remote endpoints drive generate and selftrain against the echo server") {
  fakes::EchoServer server;
  Task task("remote", 12, 8);
  auto j = task.read_config();
  j["backend"] = "remote";
  j["endpoints"] = {{"generator", server.url()}, {"classifier", server.url()}};
  j["endpoint_options"] = {{"timeout_ms", 5000}, {"retries", 1}, {"backoff_ms", 1}};
  j["max_iterations"] = 2;
  j["tau"] = 0.7;
  auto cfg = task.write_config("remote.json", j);
  auto g = cli_run({"generate", "--config", cfg.string()});
  REQUIRE_MESSAGE(g.code == 0, g.err);
  CHECK(line_count(task.dir / "synthetic.jsonl") == 24);
  auto s = cli_run({"selftrain", "--config", cfg.string()});
  REQUIRE_MESSAGE(s.code == 0, s.err);
  auto report = Json::parse(fakes::read_file(task.dir / "run" / "report.json"));
  CHECK(report["iterations"] == 2);

  auto flag = j;
  flag["endpoints"] = Json::object();
  auto cfg2 = task.write_config("flag.json", flag);
  auto f = cli_run({"generate", "--config", cfg2.string(), "--endpoint", "generator=" + server.url()});
  CHECK_MESSAGE(f.code == 0, f.err);
  CHECK(cli_run({"generate", "--config", cfg2.string()}).code != 0);
  CHECK(cli_run({"generate", "--config", cfg2.string(), "--endpoint", "oracle=" + server.url()}).code ==
        cli::kExitUsage);
}
