// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "pseudobound/cli.hpp"
#include "support.hpp"

using namespace pseudobound;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "pseudobound");
  args.insert(args.begin() + 1, {"--log-level", "warn"});
  std::vector<char *> argv;
  for (auto &a : args)
    argv.push_back(a.data());
  std::ostringstream captured;
  auto *old = std::cout.rdbuf(captured.rdbuf());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);
  return {code, captured.str()};
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string trimmed(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r'))
    s.pop_back();
  return s;
}

// Small toy benchmark plus a 3-iteration toy config rooted in `dir`.
void make_toy_run(const pbtest::TempDir &dir, double p) {
  std::ofstream(dir / "spec.json") << R"({"train_videos": 2, "train_length": 40,
      "validation_videos": 1, "validation_length": 20, "test_videos": 2,
      "segment_length": 16, "anomalous_segments": 1})";
  REQUIRE(run({"toybench", "--out", (dir / "toy").string(), "--spec",
               (dir / "spec.json").string()})
              .code == kExitOk);
  std::ofstream(dir / "run.json")
      << R"({"seed": 3, "output_dir": ")" << (dir / "run").string() << R"(",
      "dataset": {"root": ")" << (dir / "toy").string() << R"("},
      "model": {"preset": "toy"}, "train": {"iterations": 3, "batch_size": 2},
      "pseudo": [{"kind": "skip", "p": )" << p << "}]}";
}

} // namespace

TEST_CASE("train, score and eval run end to end on the toy benchmark") {
  pbtest::TempDir dir("cli");
  make_toy_run(dir, 0.5);
  const CliResult tr = run({"train", "--config", (dir / "run.json").string()});
  REQUIRE(tr.code == kExitOk);
  const fs::path ckpt = trimmed(tr.out);
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(dir / "run" / "config.json"));
  std::istringstream log(slurp(dir / "run" / "loss.csv"));
  std::string line;
  std::size_t rows = 0;
  std::getline(log, line);
  CHECK(line == "iter,loss,pseudo_frac");
  while (std::getline(log, line))
    ++rows;
  CHECK(rows == 3);

  const fs::path scores = dir / "scores";
  CHECK(run({"eval", "--scores", scores.string(), "--gt", (dir / "toy/testing/labels").string()})
            .code == kExitEval);
  REQUIRE(run({"score", "--ckpt", ckpt.string(), "--out", scores.string()}).code == kExitOk);
  CHECK(fs::exists(scores / "meta.json"));
  CHECK(fs::exists(scores / "Test001.csv"));
  const CliResult ev =
      run({"eval", "--scores", scores.string(), "--gt", (dir / "toy/testing/labels").string()});
  REQUIRE(ev.code == kExitOk);
  CHECK(ev.out.rfind("AUC ", 0) == 0);
  CHECK(fs::exists(scores / "report.json"));

  // Padded scores align to every frame.
  REQUIRE(run({"score", "--ckpt", ckpt.string(), "--out", (dir / "padded").string(),
               "--edge-pad", "--mode", "mse"})
              .code == kExitOk);
  CHECK(run({"eval", "--scores", (dir / "padded").string(), "--gt",
             (dir / "toy/testing/labels").string(), "--edge-pad"})
            .code == kExitOk);
}

TEST_CASE("a fixed seed reproduces every artifact") {
  pbtest::TempDir dir("cli_seed");
  make_toy_run(dir, 0.5);
  const auto a = run({"train", "--config", (dir / "run.json").string(), "--out",
                      (dir / "a").string()});
  const auto b = run({"train", "--config", (dir / "run.json").string(), "--out",
                      (dir / "b").string()});
  REQUIRE(a.code == kExitOk);
  REQUIRE(b.code == kExitOk);
  CHECK(slurp(dir / "a" / "loss.csv") == slurp(dir / "b" / "loss.csv"));
  const auto pa = fs::path(trimmed(a.out)), pb = fs::path(trimmed(b.out));
  CHECK(pa.filename() == pb.filename());
  CHECK(slurp(pa) != "");
  REQUIRE(run({"score", "--ckpt", pa.string(), "--out", (dir / "sa").string()}).code == kExitOk);
  REQUIRE(run({"score", "--ckpt", pb.string(), "--out", (dir / "sb").string()}).code == kExitOk);
  CHECK(slurp(dir / "sa" / "Test001.csv") == slurp(dir / "sb" / "Test001.csv"));

  const auto c = run({"train", "--config", (dir / "run.json").string(), "--out",
                      (dir / "c").string(), "--seed", "4"});
  REQUIRE(c.code == kExitOk);
  CHECK(slurp(dir / "a" / "loss.csv") != slurp(dir / "c" / "loss.csv"));
}

TEST_CASE("preview writes a png for every kind") {
  pbtest::TempDir dir("cli_preview");
  for (const std::string kind : {"skip", "repeat", "patch", "fusion", "noise"}) {
    const fs::path out = dir / (kind + ".png");
    CHECK(run({"preview", "--kind", kind, "--out", out.string()}).code == kExitOk);
    CHECK(slurp(out).substr(1, 3) == "PNG");
  }
}

TEST_CASE("errors map to exit codes") {
  pbtest::TempDir dir("cli_err");
  CHECK(run({"train"}).code == kExitConfig);
  CHECK(run({"frobnicate"}).code == kExitConfig);
  std::ofstream(dir / "bad.json") << R"({"train": {"lrr": 1}})";
  CHECK(run({"train", "--config", (dir / "bad.json").string()}).code == kExitConfig);
  std::ofstream(dir / "nodata.json")
      << R"({"dataset": {"root": ")" << (dir / "missing").string()
      << R"("}, "model": {"preset": "toy"}, "train": {"iterations": 1}})";
  CHECK(run({"train", "--config", (dir / "nodata.json").string()}).code == kExitData);
  CHECK(run({"score", "--ckpt", (dir / "none.bin").string(), "--out", (dir / "s").string()})
            .code != kExitOk);
}
