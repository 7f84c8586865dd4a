#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <unistd.h>

#include "cmtda/batch.hpp"

using namespace cmtda;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("cmtda_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

RunConfig small_config(const fs::path& out) {
  RunConfig cfg;
  cfg.scenario = load_scenario_file(std::string(CMTDA_SCENARIO_DIR) + "/table2.yaml");
  cfg.scenario.duration_ms = 5000;
  cfg.schemes = {SchemeKind::CmtDa};
  cfg.out_dir = out.string();
  return cfg;
}

}  // namespace

TEST_CASE("one scheme and one seed write one csv and one summary") {
  TempDir dir("batch1");
  std::ostringstream log;
  REQUIRE(run_batch(small_config(dir.path), log) == 0);
  CHECK(fs::exists(dir.path / "cmt-da_seed1.csv"));
  CHECK(fs::exists(dir.path / "cmt-da_summary.txt"));
  CHECK(fs::exists(dir.path / "comparison.csv"));
  CHECK(fs::exists(dir.path / "cmt-da_ipd_cdf.dat"));
  CHECK(fs::exists(dir.path / "cmt-da_goodput.dat"));
  CHECK(fs::exists(dir.path / "cmt-da_loss.dat"));
  CHECK_FALSE(fs::exists(dir.path / "cmt-da_seed1_trace.csv"));
  CHECK(log.str().find("cmt-da_seed1") != std::string::npos);
}

TEST_CASE("reruns are byte-identical, whatever the worker count") {
  TempDir a("batch_a"), b("batch_b");
  auto cfg = small_config(a.path);
  cfg.schemes = all_schemes();
  cfg.seeds = 2;
  cfg.emit_trace = true;
  std::ostringstream log;
  REQUIRE(run_batch(cfg, log) == 0);
  cfg.out_dir = b.path.string();
  cfg.workers = 3;
  REQUIRE(run_batch(cfg, log) == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a.path)) {
    ++files;
    CHECK(slurp(e.path()) == slurp(b.path / e.path().filename()));
  }
  CHECK(files == 4 * 2 * 2 + 4 * 4 + 1);
}

TEST_CASE("compare rebuilds the table with one row per scheme") {
  TempDir dir("batch_cmp");
  auto cfg = small_config(dir.path);
  cfg.schemes = all_schemes();
  std::ostringstream log;
  REQUIRE(run_batch(cfg, log) == 0);
  const auto original = slurp(dir.path / "comparison.csv");
  std::ostringstream out;
  CHECK(compare_dir(dir.path.string(), out) == 0);
  CHECK(out.str() == original);
  std::istringstream lines(out.str());
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 5);

  TempDir empty("batch_empty");
  fs::create_directories(empty.path);
  CHECK(compare_dir(empty.path.string(), out) == 2);
}

TEST_CASE("summary round trip") {
  SchemeSummary s;
  s.scheme = "cmt";
  s.runs = 3;
  s.psnr_db = {31.25, 0.5, 3};
  s.goodput_kbps = {1234.5, 10.0, 3};
  std::stringstream ss;
  write_summary(ss, s);
  const auto r = read_summary(ss);
  CHECK(r.scheme == "cmt");
  CHECK(r.runs == 3);
  CHECK(r.psnr_db.mean == 31.25);
  CHECK(r.goodput_kbps.half_width == 10.0);
  std::istringstream bad("scheme=x\n");
  CHECK_THROWS(read_summary(bad));
}

TEST_CASE("plot data") {
  TempDir dir("plot");
  fs::create_directories(dir.path);
  emit_plotdata(dir.path.string(), "none", {}, 1000);
  CHECK(slurp(dir.path / "none_ipd_cdf.dat") == "# inter_packet_delay_ms cdf\n");
  CHECK(slurp(dir.path / "none_goodput.dat") == "# time_ms goodput_kbps\n");
  CHECK(slurp(dir.path / "none_loss.dat") == "# time_ms effective_loss\n");

  MetricsReport r;
  for (int i = 0; i < 10; ++i) r.goodput_series.emplace_back(i * 100.0, 500.0);
  std::vector<MetricsReport> runs{r, r};
  for (const auto& [t, v] : mean_goodput_series(runs, 300)) CHECK(v == 500.0);
}

TEST_CASE("number formatting round-trips") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(run_file_stem("cmt", 4) == "cmt_seed4");
}

TEST_CASE("config validation") {
  RunConfig cfg = small_config("x");
  cfg.schemes.clear();
  CHECK_THROWS(cfg.validate());
  cfg = small_config("x");
  cfg.seeds = 0;
  CHECK_THROWS(cfg.validate());
}
