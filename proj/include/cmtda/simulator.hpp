#pragma once

// Discrete-event simulation of one streaming session over concurrent paths.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cmtda/metrics.hpp"
#include "cmtda/scenario.hpp"
#include "cmtda/schedulers.hpp"
#include "cmtda/trace.hpp"

namespace cmtda {

struct SimOptions {
  /// Audit transport invariants after every event.
  bool check_invariants = false;
  /// Extra simulated time after the last GoP for in-flight data to settle.
  double drain_ms = 5000.0;
  /// ECN marks packets entering a queue above this fraction of the path's BDP.
  double ecn_bdp_fraction = 0.5;
};

struct InvariantReport {
  std::size_t events_checked = 0;
  std::size_t violation_count = 0;
  std::vector<std::string> violations;  ///< first few, for diagnostics
  bool ok() const { return violation_count == 0; }
};

struct MetricsReport {
  std::string scenario;
  std::string scheme;
  std::uint64_t seed = 0;
  double duration_ms = 0.0;
  double deadline_ms = 0.0;

  std::vector<double> gop_times_ms;
  std::vector<double> psnr_db;  ///< per GoP
  MeanCi psnr;
  std::vector<double> gop_effective_loss;
  double goodput_kbps = 0.0;
  double offered_kbps = 0.0;
  double effective_loss = 0.0;
  std::map<int, double> path_effective_loss;
  std::vector<double> inter_packet_delays_ms;
  Series ipd_cdf;
  double mean_ipd_ms = 0.0;
  std::vector<std::int64_t> oo_offsets;
  std::int64_t max_oo_offset = 0;
  RetransmissionCounts retransmissions;
  std::vector<int> path_ids;
  std::vector<std::vector<double>> rate_shares;  ///< per GoP, per path in scenario order
  Series goodput_series;                         ///< in-deadline goodput per 100 ms

  std::size_t timeouts = 0;
  std::size_t abandoned_chunks = 0;
  std::size_t network_drops = 0;
  std::size_t receiver_blocked_drops = 0;
  std::int64_t sent_payload_bytes = 0;
  std::int64_t sent_copy_bytes = 0;
  std::int64_t delivered_bytes = 0;

  InvariantReport invariants;
  Trace trace;
};

/// Effective bottleneck capacity after cross-traffic: capacity times one
/// minus a fraction redrawn uniformly per resample period. The draw for a
/// period depends only on (seed, path id, period index).
double apply_background_traffic(double capacity_kbps, const BackgroundSpec& spec, std::uint64_t seed,
                                int path_id, double t_ms);

/// Validates the scenario and runs it to completion. Deterministic in
/// (scenario, scheme, scenario.seed).
MetricsReport run(const Scenario& scenario, const SchedulerScheme& scheme, const SimOptions& opts = {});

}  // namespace cmtda
