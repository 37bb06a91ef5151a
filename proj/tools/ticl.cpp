// Command-line driver: pretrain, evaluate, sweep, report, selftest.

#include <atomic>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "ticl/core/errors.hpp"
#include "ticl/experiment/checks.hpp"
#include "ticl/experiment/experiment.hpp"

using namespace ticl;
using namespace ticl::experiment;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::size_t jobs = 1;
  bool force = false;
  bool reference = false;
  bool quiet = false;
};

std::mutex g_print;

void say(const std::string& line) {
  std::lock_guard lock(g_print);
  std::cerr << line << '\n';
}

ExperimentConfig load(const Options& o) {
  auto c = load_experiment(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.seeds = {*o.seed};
    c.train.seed = *o.seed;
    c.protocol.seed = *o.seed;
  }
  return c;
}

std::filesystem::path output_of(const Options& o, const ExperimentConfig& c) {
  return resolve_output(c, o.output ? std::optional<std::filesystem::path>(*o.output) : std::nullopt);
}

Runner make_runner(const Options& o) {
  const auto c = load(o);
  Hooks hooks;
  if (!o.quiet) hooks.log = say;
  return Runner(c, output_of(o, c), hooks);
}

// Runs fn(i) for i < n on up to `jobs` threads; returns the failure count.
std::size_t parallel(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0}, failures{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        ++failures;
        say(std::string("error: ") + e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(jobs, n); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return failures;
}

int cmd_pretrain(const Options& o) {
  const auto runner = make_runner(o);
  const auto runs = runner.base_runs();
  const auto failed = parallel(runs.size(), o.jobs, [&](std::size_t i) {
    const auto art = runner.pretrain(runs[i]);
    std::cout << art.dir.string() << '\n';
  });
  return failed == 0 ? 0 : 1;
}

int cmd_evaluate(const Options& o) {
  const auto runner = make_runner(o);
  const auto runs = runner.base_runs();
  const auto failed = parallel(runs.size(), o.jobs, [&](std::size_t i) {
    runner.evaluate(runs[i], runner.config().sweep.kind == SweepKind::kTaskBudget ? SweepKind::kTaskBudget
                                                                                   : SweepKind::kNone);
  });
  if (!runner.config().baselines.empty()) runner.evaluate_baselines();
  std::cout << results_path(runner.output()).string() << '\n';
  return failed == 0 ? 0 : 1;
}

int cmd_sweep(const Options& o) {
  const auto runner = make_runner(o);
  const auto points = runner.sweep(o.jobs);
  if (!runner.config().baselines.empty()) runner.evaluate_baselines();
  std::size_t failed = 0;
  for (const auto& p : points) {
    std::printf("%-32s seed %-4llu %-7s auc %s\n", p.label.c_str(), static_cast<unsigned long long>(p.spec.train.seed),
                p.ok ? "ok" : "FAILED", p.mean_auc ? std::to_string(*p.mean_auc).c_str() : "NA");
    failed += p.ok ? 0 : 1;
  }
  if (failed) std::fprintf(stderr, "%zu of %zu grid points failed\n", failed, points.size());
  return failed == 0 ? 0 : 1;
}

int cmd_report(const Options& o) {
  std::filesystem::path output;
  data::Manifest manifest;
  if (!o.config.empty()) {
    const auto c = load(o);
    output = output_of(o, c);
    manifest = data::Manifest::load(c.manifest);
  } else {
    ExperimentConfig defaults;
    output = output_of(o, defaults);
    manifest = data::Manifest::load(data::default_data_dir() / "manifest.json");
  }
  std::vector<std::filesystem::path> files;
  if (o.reference) {
    files = reference_report(output, o.seed.value_or(0));
  } else {
    files = report(output, manifest, o.force);
  }
  for (const auto& f : files) std::cout << f.string() << '\n';
  return 0;
}

int cmd_selftest(const std::string& scratch) {
  bool ok = true;
  const auto dir = scratch.empty() ? std::filesystem::temp_directory_path() / "ticl-selftest" : std::filesystem::path(scratch);
  for (const auto& r : run_selftest(dir)) {
    std::printf("%s %-16s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    std::fflush(stdout);
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular in-context learning: pre-training, transfer evaluation and meta-analysis"};
  app.require_subcommand(1);
  Options o;
  std::string scratch;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* opt = sub->add_option("-c,--config", o.config, "Experiment JSON file");
    if (need_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the global and pre-training seed");
    sub->add_option("-o,--output", o.output, "Output root (else $TICL_OUTPUT_ROOT, else the config's)");
    sub->add_option("-j,--jobs", o.jobs, "Parallel runs")->check(CLI::PositiveNumber);
    sub->add_flag("-q,--quiet", o.quiet, "No progress log");
  };

  auto* pretrain = app.add_subcommand("pretrain", "Pre-train every (table, seed) run of the config");
  add_common(pretrain, true);
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate finished runs (and baselines) on the eval tables");
  add_common(evaluate, true);
  auto* sweep = app.add_subcommand("sweep", "Pre-train and evaluate every grid point of the sweep block");
  add_common(sweep, true);
  auto* rep = app.add_subcommand("report", "Analysis files from results.csv");
  add_common(rep, false);
  rep->add_flag("--force", o.force, "Analyse rows from different config hashes together");
  rep->add_flag("--reference", o.reference, "Analyse the bundled published results instead");
  auto* selftest = app.add_subcommand("selftest", "Run the oracle and invariant suites");
  selftest->add_option("--scratch", scratch, "Directory for temporary files");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*pretrain) return cmd_pretrain(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*sweep) return cmd_sweep(o);
    if (*rep) return cmd_report(o);
    if (*selftest) return cmd_selftest(scratch);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
