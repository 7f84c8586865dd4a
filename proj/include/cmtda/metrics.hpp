#pragma once

// Evaluation metrics computed from transport event traces.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "cmtda/distortion.hpp"
#include "cmtda/trace.hpp"

namespace cmtda {

using Series = std::vector<std::pair<double, double>>;

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;  ///< 1.96 * s / sqrt(n); 0 for n < 2
  std::size_t n = 0;
};

MeanCi mean_ci(std::span<const double> values);

/// Payload delivered within the deadline, in Kbps over the run duration.
double goodput_kbps(const Trace& trace, double deadline_ms, double duration_ms);

/// 1 - in-deadline delivered payload / emitted payload. 0 for an empty trace.
double effective_loss(const Trace& trace, double deadline_ms);

struct DelayDistribution {
  std::vector<double> samples;
  Series cdf;  ///< (x, fraction of samples <= x) on the grid
};

/// Gaps between consecutive deliveries. With a finite deadline only chunks
/// delivered within it count; overdue chunks are discarded by the player.
DelayDistribution inter_packet_delays(const Trace& trace, double grid_ms = 1.0,
                                      double deadline_ms = std::numeric_limits<double>::infinity());

/// Empirical CDF on 0, grid, 2*grid, ... up to the first grid point at or
/// above the largest sample.
Series empirical_cdf(std::span<const double> samples, double grid_ms);

struct OffsetHistogram {
  std::vector<std::int64_t> offsets;
  std::map<std::int64_t, std::size_t> histogram;
  std::int64_t max = 0;  ///< largest offset; 0 when there are none
};

/// TSN offset between consecutively received chunks. Repeated TSNs are skipped.
OffsetHistogram out_of_order_offsets(const Trace& trace);

/// Per-GoP breakdown of where the payload went. Bucket 0 collects chunks that
/// were abandoned before any path carried them.
struct GopLoss {
  std::uint32_t gop_id = 0;
  double emitted_at = 0.0;
  double encoding_rate_kbps = 0.0;
  std::vector<int> path_ids;
  std::vector<double> rates_kbps;  ///< assigned payload rate
  std::vector<double> losses;      ///< effective loss of the assigned payload
  double effective_loss = 0.0;
};

std::vector<GopLoss> gop_losses(const Trace& trace, double deadline_ms, double interval_ms);

struct PsnrSeries {
  std::vector<double> psnr_db;
  MeanCi summary;
};

PsnrSeries psnr_series(std::span<const GopLoss> gops, const DistortionParams& params,
                       double cap_db = kDefaultPsnrCapDb);

/// Per-path effective loss over the whole run, keyed by path id (0 excluded).
std::map<int, double> per_path_effective_loss(std::span<const GopLoss> gops);

struct RetransmissionCounts {
  std::size_t total = 0;      ///< retransmitted copies
  std::size_t effective = 0;  ///< retransmitted chunks delivered within the deadline
};

RetransmissionCounts retransmission_counts(const Trace& trace, double deadline_ms);

/// In-deadline goodput binned into bin_ms slots by delivery time.
Series goodput_series(const Trace& trace, double deadline_ms, double duration_ms,
                      double bin_ms = 100.0);

/// Trailing moving average over window_ms (the window includes its end point).
Series moving_average(const Series& series, double window_ms);

}  // namespace cmtda
