// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any gating criterion fails.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <set>

#include <unistd.h>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "criteria.hpp"

using namespace acceptance;

namespace {

struct Criterion {
  int id;
  const char *name;
  double limit_seconds;
  bool gating;
  std::function<Outcome(const Options &)> run;
};

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"pseudobound acceptance suite"};
  std::set<int> only;
  Options options;
  std::string work;
  app.add_option("--only", only, "Run only these criteria (1-8)");
  app.add_option("--work", work, "Scratch directory (default: a fresh temp dir)");
  std::string ped2, ped2_gt;
  app.add_option("--ped2", ped2, "Ped2 root in the canonical layout (or PSEUDOBOUND_PED2)");
  app.add_option("--ped2-gt", ped2_gt, "Ped2 labels (.m, .npy dir or .txt dir)");
  CLI11_PARSE(app, argc, argv);

  if (ped2.empty())
    if (const char *env = std::getenv("PSEUDOBOUND_PED2"))
      ped2 = env;
  if (ped2_gt.empty())
    if (const char *env = std::getenv("PSEUDOBOUND_PED2_GT"))
      ped2_gt = env;
  if (!ped2.empty())
    options.ped2_root = ped2;
  if (!ped2_gt.empty())
    options.ped2_gt = ped2_gt;
  options.work_dir = work.empty() ? std::filesystem::temp_directory_path() /
                                        ("pseudobound_acceptance_" + std::to_string(::getpid()))
                                  : std::filesystem::path(work);
  std::filesystem::create_directories(options.work_dir);
  spdlog::set_level(spdlog::level::warn);

  const std::vector<Criterion> criteria{
      {1, "synthesizer property suite", 120, true, synthesizer_properties},
      {2, "loss correctness", 60, true, loss_correctness},
      {3, "scoring exactness", 60, true, scoring_exactness},
      {4, "AUC oracle equivalence", 120, true, auc_oracle},
      {5, "baseline equivalence", 300, true, baseline_equivalence},
      {6, "directional toy experiment", 1800, true, toy_experiment},
      {7, "combination protocol", 60, true, combination_protocol},
      {8, "Ped2 smoke (non-gating)", 0, false, ped2_smoke},
  };

  int failures = 0;
  for (const auto &c : criteria) {
    if (!only.empty() && !only.count(c.id))
      continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run(options);
    } catch (const std::exception &e) {
      out = Outcome::fail(std::string("threw: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out.status == Outcome::Status::pass && c.limit_seconds > 0 && secs > c.limit_seconds)
      out = Outcome::fail(out.detail + "; over the " + std::to_string(int(c.limit_seconds)) +
                          " s budget");
    const char *tag = out.status == Outcome::Status::pass   ? "PASS"
                      : out.status == Outcome::Status::skip ? "SKIP"
                                                            : "FAIL";
    std::printf("criterion %d: %s  %s (%s; %.1f s)\n", c.id, tag, c.name, out.detail.c_str(),
                secs);
    std::fflush(stdout);
    if (out.status == Outcome::Status::fail && c.gating)
      ++failures;
  }
  if (work.empty())
    std::filesystem::remove_all(options.work_dir);
  return failures == 0 ? 0 : 1;
}
