// cmtda: run streaming scenarios over concurrent paths and compare schemes.
//
//   cmtda run <scenario> [--scheme S]... [--seeds N] [--out DIR] [--trace] [--workers N]
//   cmtda compare <DIR>
//   cmtda validate <scenario>
//
// Exit codes: 0 success, 1 a run failed, 2 configuration error.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmtda/batch.hpp"
#include "cmtda/scenario.hpp"
#include "cmtda/schedulers.hpp"

namespace {

std::size_t default_workers() {
  if (const char* env = std::getenv("CMTDA_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    std::cerr << "ignoring invalid CMTDA_WORKERS='" << env << "'\n";
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distortion-aware concurrent multipath video streaming simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::vector<std::string> schemes;
  std::size_t seeds = 1;
  std::string out_dir = "results";
  bool trace = false;
  bool no_csv = false;
  std::size_t workers = default_workers();
  double window_ms = 1000.0;

  auto* run_cmd = app.add_subcommand("run", "Run a scenario for each scheme and seed");
  run_cmd->add_option("scenario", scenario_path, "Scenario file (YAML)")->required();
  run_cmd->add_option("--scheme", schemes, "cmt-da, cmt-qa, cmt-pf or cmt (repeatable; default all)");
  run_cmd->add_option("--seeds", seeds, "Number of seeds, starting at the scenario seed")->check(CLI::PositiveNumber);
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_flag("--trace", trace, "Also write per-run event traces");
  run_cmd->add_flag("--no-csv", no_csv, "Skip per-run CSV files");
  run_cmd->add_option("--workers", workers, "Concurrent runs (default $CMTDA_WORKERS or 1)")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--window-ms", window_ms, "Goodput moving-average window")->check(CLI::PositiveNumber);

  std::string compare_dir_path;
  auto* cmp_cmd = app.add_subcommand("compare", "Rebuild the comparison table from summaries");
  cmp_cmd->add_option("dir", compare_dir_path, "Directory written by 'run'")->required();

  std::string validate_path;
  auto* val_cmd = app.add_subcommand("validate", "Check a scenario file");
  val_cmd->add_option("scenario", validate_path, "Scenario file (YAML)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*val_cmd) {
    try {
      const auto sc = cmtda::load_scenario_file(validate_path);
      for (const auto& w : sc.validate()) std::cout << "warning: " << w << "\n";
      std::cout << sc.name << ": ok (" << sc.paths.size() << " paths, " << sc.duration_ms << " ms)\n";
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }

  if (*cmp_cmd) {
    try {
      const int rc = cmtda::compare_dir(compare_dir_path, std::cout);
      if (rc == 2) std::cerr << "error: no *_summary.txt files in " << compare_dir_path << "\n";
      return rc;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }

  cmtda::RunConfig cfg;
  try {
    cfg.scenario = cmtda::load_scenario_file(scenario_path);
    for (const auto& w : cfg.scenario.validate()) std::cerr << "warning: " << w << "\n";
    if (schemes.empty()) {
      cfg.schemes = cmtda::all_schemes();
    } else {
      for (const auto& s : schemes) cfg.schemes.push_back(cmtda::parse_scheme(s));
    }
    cfg.seeds = seeds;
    cfg.out_dir = out_dir;
    cfg.emit_trace = trace;
    cfg.emit_csv = !no_csv;
    cfg.workers = workers;
    cfg.moving_average_ms = window_ms;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  try {
    return cmtda::run_batch(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
