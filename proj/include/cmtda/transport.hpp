#pragma once

// SCTP-like multipath sender/receiver state machines.
//
// The sender keeps one congestion controller per path and filters aggregate
// SACKs into per-path feedback using the TSN -> path record of every
// transmission. Chunks are MTU-sized and each occupies one packet.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cmtda/channel.hpp"

namespace cmtda {

inline constexpr double kDefaultMtuBytes = 1500.0;

enum class CcMode : std::uint8_t { SlowStart, CongestionAvoidance };

struct PathCongestionController {
  double cwnd = 4380.0;
  double ssthresh = 65536.0;
  double rto_ms = 1000.0;
  std::optional<double> timer_deadline;
  std::uint32_t dup_sack_count = 0;
  CcMode mode = CcMode::SlowStart;
  bool ecn_seen = false;
  double partial_bytes_acked = 0.0;
};

/// Timeout response: halve into ssthresh (floor 3 MTU), collapse cwnd to one
/// MTU, re-enter slow start and double the RTO (capped at 60 s).
PathCongestionController on_timeout(PathCongestionController cc,
                                    double mtu = kDefaultMtuBytes);

/// Response to the third duplicate SACK. Applies only when ECN marked the
/// path; an unmarked loss is treated as a wireless error and leaves the
/// window alone.
PathCongestionController on_dup_sacks(PathCongestionController cc,
                                      double mtu = kDefaultMtuBytes);

/// How a path reacts to a fast-detected loss.
enum class LossResponse : std::uint8_t {
  EcnGuarded,       ///< reduce only on 3 dup SACKs with ECN seen
  Standard,         ///< reduce once per RTT on every detected loss
  ConsecutiveLoss,  ///< reduce on back-to-back losses classified as congestion
};

struct TransportConfig {
  double mtu = kDefaultMtuBytes;
  double initial_cwnd = 4380.0;
  double initial_ssthresh = 65536.0;
  double initial_rto_ms = 1000.0;
  double max_cwnd = 1 << 20;
  std::uint32_t missing_report_threshold = 4;
  std::uint32_t dup_sack_threshold = 3;
  LossResponse loss_response = LossResponse::Standard;
  bool scale_growth_by_acceptance = false;
  /// Mark a path potentially failed after a single timeout.
  bool pf_on_timeout = false;
  /// Consecutive timeouts before a path turns inactive when pf_on_timeout is off.
  std::uint32_t max_path_retransmissions = 5;
  double restart_cwnd_mtus = 1.0;
  /// RTT*cwnd growth over its running minimum that classifies a loss as congestion.
  double congestion_product_factor = 1.5;
  std::size_t loss_window = PathEstimator::kDefaultWindow;
};

struct Chunk {
  std::uint32_t tsn = 0;  ///< 0 until first transmission
  std::int64_t bytes = 0;
  std::uint32_t gop_id = 0;
  double emitted_at = 0.0;
  double send_deadline = 0.0;  ///< absolute arrival deadline
  int path = -1;               ///< path index of the latest copy
  int original_path = -1;      ///< path index of the first copy
  double sent_at = 0.0;
  double first_sent_at = 0.0;
  std::uint32_t retransmit_count = 0;
};

struct GapBlock {
  std::uint32_t start;
  std::uint32_t end;  ///< inclusive
  bool operator==(const GapBlock&) const = default;
};

struct SackEvent {
  std::uint32_t cumulative_tsn = 0;
  std::vector<GapBlock> gap_blocks;
  /// Recent TSN ranges passed over on a forward-TSN without being received.
  std::vector<GapBlock> skipped_blocks;
  bool ecn_echo = false;
  std::uint32_t trigger_tsn = 0;  ///< TSN whose arrival produced this SACK
  int uplink_path = -1;
  double timestamp = 0.0;
};

enum class LossCause : std::uint8_t { MissingReports, Timeout };

struct LossNotification {
  Chunk chunk;
  LossCause cause;
};

struct SackOutcome {
  std::vector<LossNotification> losses;
  std::vector<Chunk> acked;
  bool ignored = false;  ///< malformed or referencing unsent TSNs
};

/// Heartbeat probe issued on a failed path.
struct HeartbeatProbe {
  std::uint64_t id;
  std::size_t path;
  double sent_at;
  double next_probe_at;
};

/// Multipath sender. Path indices are 0-based.
class Sender {
 public:
  Sender(std::size_t n_paths, TransportConfig cfg);

  std::size_t path_count() const { return paths_.size(); }
  const TransportConfig& config() const { return cfg_; }

  /// Seeds a path's RTT estimate (association setup / path verification).
  void seed_rtt(std::size_t path, double rtt_ms);

  bool has_room(std::size_t path, std::int64_t bytes) const;

  /// Transmits a chunk on a path. Assigns a TSN to new chunks and treats a
  /// chunk with a TSN as a retransmission. Returns false without side effects
  /// when the window has no room.
  bool on_send(Chunk& chunk, std::size_t path, double now);

  SackOutcome process_sack(const SackEvent& sack, double now);

  /// Fires the path timer if it is due. Every outstanding chunk on the path
  /// becomes a loss notification.
  std::vector<LossNotification> on_timer(std::size_t path, double now);

  /// Drops a lost chunk for good; the forward ack point may advance past it.
  void abandon(std::uint32_t tsn);
  /// Timed reliability: abandons every unacked chunk whose send deadline has
  /// passed. In-flight copies are never retransmitted and no longer hold back
  /// forward_tsn, but still occupy cwnd and feed loss detection and RTT
  /// sampling until acked or declared lost. Returns the abandoned chunks.
  std::vector<Chunk> expire(double now);

  /// Every TSN at or below this point is acked or abandoned.
  std::uint32_t forward_tsn() const;
  std::uint32_t next_tsn() const { return next_tsn_; }

  /// Next probe for a non-active path if one is due.
  std::optional<HeartbeatProbe> heartbeat_check(std::size_t path, double now);
  /// Restores the path when the ack matches its latest probe.
  bool on_heartbeat_ack(std::size_t path, std::uint64_t probe_id, double now);
  double next_heartbeat_at(std::size_t path) const { return paths_[path].hb_next_at; }

  const PathCongestionController& cc(std::size_t path) const { return paths_[path].cc; }
  PathCongestionController& cc(std::size_t path) { return paths_[path].cc; }
  const PathEstimator& estimator(std::size_t path) const { return paths_[path].est; }
  const PathStats& stats(std::size_t path) const { return paths_[path].est.stats(); }
  PathState state(std::size_t path) const { return paths_[path].state; }
  std::int64_t outstanding_bytes(std::size_t path) const { return paths_[path].outstanding_bytes; }
  std::size_t outstanding_count(std::size_t path) const { return paths_[path].outstanding.size(); }
  bool timer_armed(std::size_t path) const { return paths_[path].cc.timer_deadline.has_value(); }
  double min_rtt(std::size_t path) const { return paths_[path].min_rtt; }

  /// True for a chunk declared lost that still awaits retransmission or abandonment.
  bool awaiting_retransmission(std::uint32_t tsn) const;
  /// Lost chunks not yet retransmitted or abandoned.
  std::size_t pending_losses() const;
  /// Bytes of TSNs that are sent but neither acked nor abandoned.
  std::int64_t unresolved_bytes() const;
  std::int64_t acked_bytes() const { return acked_bytes_; }
  std::int64_t abandoned_bytes() const { return abandoned_bytes_; }
  std::int64_t sent_unique_bytes() const { return sent_unique_bytes_; }
  std::size_t unknown_feedback() const { return unknown_feedback_; }
  std::size_t congestion_reductions() const { return reductions_; }

  /// Internal accounting check: per-path outstanding sums, timer discipline.
  /// Returns an empty string when consistent.
  std::string audit() const;

 private:
  struct Record {
    Chunk chunk;
    bool outstanding = false;
    bool lost = false;
    bool expired = false;  ///< abandoned while in flight; kept for feedback only
    std::uint32_t missing = 0;
  };

  struct PathData {
    PathCongestionController cc;
    PathEstimator est;
    PathState state = PathState::Active;
    std::set<std::uint32_t> outstanding;
    std::int64_t outstanding_bytes = 0;
    std::uint32_t consecutive_timeouts = 0;
    double last_reduction_at = -1e18;
    double last_loss_at = -1e18;
    double last_ecn_at = -1e18;
    double min_rtt = 0.0;
    double min_product = 0.0;
    double hb_base_rto = 1000.0;
    std::uint32_t hb_unacked = 0;
    double hb_next_at = 0.0;
    std::uint64_t hb_probe = 0;
    double hb_sent_at = 0.0;
  };

  void mark_lost(Record& rec, LossCause cause, std::vector<LossNotification>& out);
  void remove_outstanding(Record& rec);
  void sync_timer(std::size_t path, double now, bool restart);
  void on_fast_loss(std::size_t path, double now);
  void reduce(std::size_t path, double now, double floor_mtus);
  void grow(std::size_t path, std::int64_t acked, std::int64_t flight_before);

  TransportConfig cfg_;
  std::vector<PathData> paths_;
  std::map<std::uint32_t, Record> records_;  ///< sent, not yet acked/abandoned, plus expired in-flight copies
  std::uint32_t next_tsn_ = 1;
  std::int64_t acked_bytes_ = 0;
  std::int64_t abandoned_bytes_ = 0;
  std::int64_t sent_unique_bytes_ = 0;
  std::size_t unknown_feedback_ = 0;
  std::size_t reductions_ = 0;
  std::uint64_t next_probe_id_ = 1;
};

// ---------------------------------------------------------------------------
// Retransmission policy

struct RetransmitPathView {
  double expected_delay_ms;  ///< estimated delivery delay for a chunk on this path
  PathState state;
};

struct RetransmitOrder {
  Chunk chunk;
  std::size_t path;
};

struct RetransmitPlan {
  std::vector<RetransmitOrder> orders;
  std::vector<Chunk> abandoned;
};

/// Deadline- and loss-controlled retransmission. Retransmits only while the
/// recorded effective loss exceeds the requirement, and only on the active
/// path with the lowest expected delay when that delay still beats the
/// chunk's deadline. Everything else is abandoned.
RetransmitPlan retransmission_decision(std::span<const Chunk> lost,
                                       std::span<const RetransmitPathView> paths,
                                       double loss_requirement, double recorded_loss, double now);

struct AckPathView {
  int id;
  double loss_rate;
  double rtt_ms;
  bool active = true;
};

/// Most reliable uplink: lowest loss, then lowest RTT, then lowest id.
/// Throws when no path is active.
int select_ack_path(std::span<const AckPathView> paths);

/// Sliding-window effective loss seen by the sender.
class EffectiveLossMonitor {
 public:
  explicit EffectiveLossMonitor(std::size_t window = 500) : window_(window) {}
  void record(bool lost);
  double value() const { return outcomes_.empty() ? 0.0 : static_cast<double>(lost_) / outcomes_.size(); }

 private:
  std::size_t window_;
  std::deque<bool> outcomes_;
  std::size_t lost_ = 0;
};

// ---------------------------------------------------------------------------
// Receiver

struct DataPacket {
  std::uint32_t tsn = 0;
  std::int64_t bytes = 0;
  std::uint32_t gop_id = 0;
  int path = -1;           ///< path index the copy travelled on
  int original_path = -1;  ///< path index of the first copy
  bool ecn_ce = false;
  std::uint32_t forward_tsn = 0;  ///< sender's abandon point, piggybacked
  double emitted_at = 0.0;
};

struct DeliveryRecord {
  std::uint32_t tsn;
  std::int64_t bytes;
  std::uint32_t gop_id;
  int original_path;
  double arrival_ms;
  double delivery_ms;
  double emitted_at;
};

struct ReceiverState {
  explicit ReceiverState(std::int64_t capacity_bytes = 64 * 1024) : buffer_capacity(capacity_bytes) {}

  struct Buffered {
    std::int64_t bytes;
    std::uint32_t gop_id;
    int original_path;
    double arrival_ms;
    double emitted_at;
  };

  std::uint32_t cumulative_tsn = 0;
  std::map<std::uint32_t, Buffered> reorder_buffer;
  std::int64_t buffer_capacity;
  std::int64_t buffered_bytes = 0;
  std::optional<std::uint32_t> last_received_tsn;
  std::vector<DeliveryRecord> delivered_log;
  std::size_t blocked_drops = 0;
  std::size_t duplicates = 0;
  std::int64_t skipped_tsns = 0;
  std::deque<GapBlock> recent_skips;  ///< newest last, echoed in every SACK
  static constexpr std::size_t kMaxRecentSkips = 16;
};

struct ReceiveResult {
  std::vector<DeliveryRecord> delivered;
  SackEvent sack;
  std::optional<std::int64_t> oo_offset;
  bool duplicate = false;
  bool dropped = false;
};

ReceiveResult receiver_on_packet(ReceiverState& rs, const DataPacket& pkt, double now);

/// Gap blocks describing the reorder buffer above the cumulative TSN.
std::vector<GapBlock> gap_blocks(const ReceiverState& rs);

}  // namespace cmtda
