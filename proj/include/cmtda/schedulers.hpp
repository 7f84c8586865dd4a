#pragma once

// Data distribution policies of the proposed scheme and the three references.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmtda/allocator.hpp"
#include "cmtda/channel.hpp"
#include "cmtda/transport.hpp"

namespace cmtda {

enum class SchemeKind : std::uint8_t { CmtDa, CmtQa, CmtPf, Cmt };

/// "cmt-da", "cmt-qa", "cmt-pf", "cmt".
const char* to_string(SchemeKind k);
SchemeKind parse_scheme(const std::string& s);
std::vector<SchemeKind> all_schemes();

struct SchedulerScheme {
  SchemeKind kind = SchemeKind::CmtDa;
  AllocatorConfig allocator;
  /// Floor on the residual-bandwidth estimate as a fraction of mu.
  double nu_floor_fraction = 0.05;
  /// RTT*cwnd growth factor the QA sketch reads as congestion.
  double qa_congestion_factor = 1.5;
};

SchedulerScheme make_scheme(SchemeKind kind);

/// Transport knobs implied by a scheme.
TransportConfig transport_config(const SchedulerScheme& scheme, double mtu_bytes);

/// Sender-side snapshot of one path handed to the schedulers.
struct SchedulerPathView {
  int id = 1;
  PathState state = PathState::Active;
  double cwnd_bytes = 0.0;
  double srtt_ms = 0.0;
  double loss_rate = 0.0;
  double prev_rate_kbps = 0.0;  ///< rate assigned in the previous interval
  std::int64_t backlog_bytes = 0;      ///< queued at the sender for this path
  std::int64_t outstanding_bytes = 0;  ///< in flight
};

/// mu estimate: one window per smoothed RTT.
double estimated_bandwidth(const SchedulerPathView& v);

/// Expected delivery delay of a chunk of the given size on a path: half the
/// smoothed RTT plus the time to drain the sender backlog and the chunk.
double chunk_delivery_delay(const SchedulerPathView& v, std::int64_t bytes);

/// Distortion-driven allocation over the active paths; inactive or failed
/// paths get rate 0. Returns nullopt when no path is active.
std::optional<Allocation> schedule_cmt_da(std::span<const SchedulerPathView> views,
                                          const AllocationRequest& req,
                                          const DistortionParams& params,
                                          const SchedulerScheme& scheme);

/// Rates proportional to cwnd / delivery time over the active paths.
std::vector<double> schedule_cmt_qa(std::span<const SchedulerPathView> views, double target_rate_kbps);

/// Next path in round-robin order, starting at `start`, that is active and
/// has window room for `bytes`.
std::optional<std::size_t> round_robin_pick(std::span<const SchedulerPathView> views,
                                            std::size_t start, std::int64_t bytes);

/// RTX-LOSSRATE: lowest estimated loss among active paths (ties: RTT, id).
std::optional<std::size_t> lowest_loss_path(std::span<const SchedulerPathView> views);

/// Active path with the smallest chunk delivery delay (ties: lowest index).
std::optional<std::size_t> fastest_path(std::span<const SchedulerPathView> views, std::int64_t bytes);

}  // namespace cmtda
