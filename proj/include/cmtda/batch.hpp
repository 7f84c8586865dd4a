#pragma once

// Batch execution over schemes and seeds, and the files it writes.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cmtda/metrics.hpp"
#include "cmtda/scenario.hpp"
#include "cmtda/schedulers.hpp"
#include "cmtda/simulator.hpp"

namespace cmtda {

struct RunConfig {
  Scenario scenario;
  std::vector<SchemeKind> schemes;
  std::size_t seeds = 1;  ///< seeds scenario.seed, scenario.seed + 1, ...
  std::string out_dir = "results";
  bool emit_trace = false;
  bool emit_csv = true;
  bool emit_summary = true;
  std::size_t workers = 1;
  double moving_average_ms = 1000.0;
  SimOptions sim;

  void validate() const;
};

struct SchemeSummary {
  std::string scheme;
  std::size_t runs = 0;
  MeanCi psnr_db;
  MeanCi goodput_kbps;
  MeanCi effective_loss;
  MeanCi mean_ipd_ms;
  MeanCi max_oo_offset;
  MeanCi retransmissions;
  MeanCi timeouts;
};

/// Aggregates per-run means across runs (seeds).
SchemeSummary summarize(const std::string& scheme, std::span<const MetricsReport> runs);

/// Shortest decimal form that round-trips.
std::string format_number(double v);

std::string run_file_stem(const std::string& scheme, std::uint64_t seed);

/// Per-GoP time series of one run.
void write_run_csv(std::ostream& os, const MetricsReport& r);
void write_summary(std::ostream& os, const SchemeSummary& s);
SchemeSummary read_summary(std::istream& is);
void write_comparison(std::ostream& os, std::span<const SchemeSummary> rows);

/// Two-column series with a header line.
void write_series(std::ostream& os, const std::string& x_name, const std::string& y_name, const Series& s);

/// Inter-packet delay CDF over all runs' samples pooled.
Series pooled_ipd_cdf(std::span<const MetricsReport> runs, double grid_ms = 1.0);
/// Per-bin goodput averaged over runs, then smoothed with a trailing window.
Series mean_goodput_series(std::span<const MetricsReport> runs, double window_ms);
/// Per-GoP effective loss averaged over runs.
Series mean_loss_series(std::span<const MetricsReport> runs);

/// Writes <prefix>_ipd_cdf.dat, <prefix>_goodput.dat and <prefix>_loss.dat.
void emit_plotdata(const std::string& dir, const std::string& prefix, std::span<const MetricsReport> runs,
                   double window_ms);

/// Runs the scheme x seed matrix and writes all outputs. Returns 0 when every
/// run succeeded, 1 otherwise; outputs of successful runs are kept.
int run_batch(const RunConfig& cfg, std::ostream& log);

/// Rebuilds comparison.csv from the summaries in a directory and prints it.
/// Returns 0 on success, 2 when no summaries are found.
int compare_dir(const std::string& dir, std::ostream& out);

}  // namespace cmtda
