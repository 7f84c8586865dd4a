#pragma once

// Gilbert-Elliott burst loss model and per-path status estimation.
//
// Time is in milliseconds and rates in Kbps throughout the library, which
// makes Kbps * ms = bits.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "cmtda/rng.hpp"

namespace cmtda {

enum class ChannelState : std::uint8_t { Good = 0, Bad = 1 };

/// Continuous-time two-state chain. Rates are per millisecond.
struct GilbertParams {
  double xi_g = 1.0;  ///< Bad -> Good transition rate
  double xi_b = 1.0;  ///< Good -> Bad transition rate

  void validate() const;
  bool operator==(const GilbertParams&) const = default;
};

struct StationaryProbs {
  double good;
  double bad;
};

/// [from][to], index 0 = Good, 1 = Bad.
using TransitionMatrix = std::array<std::array<double, 2>, 2>;

/// Inverts (loss rate, mean burst length) into chain rates.
/// Throws std::invalid_argument for loss_rate outside (0, 1) or a
/// non-positive burst length.
GilbertParams gilbert_from_stats(double loss_rate, double mean_burst_ms);

StationaryProbs stationary_probs(const GilbertParams& g);

/// Transient transition probabilities after omega_ms.
TransitionMatrix transition_matrix(const GilbertParams& g, double omega_ms);

/// Chain states at n instants spaced omega_ms apart; the first state is drawn
/// from the stationary distribution.
std::vector<ChannelState> sample_loss_sequence(const GilbertParams& g, double omega_ms,
                                               std::size_t n, std::uint64_t seed);

/// Live chain realization queried at nondecreasing instants. Each query
/// advances the state with the exact transient matrix for the elapsed time.
class GilbertChannel {
 public:
  GilbertChannel(const GilbertParams& g, std::uint64_t seed);

  ChannelState state_at(double now_ms);

 private:
  GilbertParams params_;
  Rng rng_;
  std::optional<double> last_ms_;
  ChannelState state_ = ChannelState::Good;
};

struct CapacityStep {
  double start_ms;
  double kbps;
  bool operator==(const CapacityStep&) const = default;
};

struct TimeInterval {
  double start_ms;
  double end_ms;  ///< exclusive
  bool operator==(const TimeInterval&) const = default;
};

/// Static ground truth for one end-to-end path.
struct PathSpec {
  int id = 1;
  std::string name;
  std::vector<CapacityStep> capacity_trace;  ///< piecewise constant, sorted by start
  double base_rtt_ms = 100.0;
  double loss_rate = 0.0;       ///< stationary Bad probability; 0 = lossless, 1 = dead
  double mean_burst_ms = 10.0;  ///< loss burst parameter: reciprocal of the Good -> Bad rate
  std::vector<TimeInterval> availability;  ///< empty means always available
  std::size_t queue_limit_packets = 100;
  /// Bottleneck buffer depth as drain time at the current capacity.
  double queue_limit_ms = 250.0;

  /// Chain parameters, or nullopt for the degenerate lossless/dead cases.
  std::optional<GilbertParams> gilbert() const;
  double capacity_at(double t_ms) const;
  /// First trace step strictly after t_ms, or +inf.
  double next_capacity_change(double t_ms) const;
  bool available_at(double t_ms) const;
  /// Start of the next availability window at or after t_ms, or +inf.
  double next_available(double t_ms) const;

  void validate() const;
  bool operator==(const PathSpec&) const = default;
};

enum class PathState : std::uint8_t { Active, PotentiallyFailed, Inactive };

const char* to_string(PathState s);

/// Live per-path estimates held by the sender.
struct PathStats {
  double mu_kbps = 0.0;
  double rtt_ms = 0.0;     ///< smoothed; 0 until the first sample
  double loss_rate = 0.0;  ///< windowed estimate of the Bad probability
  double cwnd_bytes = 0.0;
  double rto_ms = 1000.0;
  PathState state = PathState::Active;
};

/// Feedback for one path, filtered out of an aggregate SACK.
struct AckEvent {
  std::vector<std::uint32_t> acked_tsns;
  std::vector<std::uint32_t> lost_tsns;
  std::optional<double> rtt_sample_ms;
  double cwnd_bytes = 0.0;
};

/// Conventional smoothed RTT / RTO estimator (gain 1/8, variance gain 1/4).
class RttEstimator {
 public:
  static constexpr double kMinRtoMs = 200.0;
  static constexpr double kMaxRtoMs = 60000.0;

  explicit RttEstimator(double initial_rto_ms = 1000.0) : rto_(initial_rto_ms) {}

  void add_sample(double rtt_ms);
  bool has_sample() const { return has_sample_; }
  double srtt() const { return srtt_; }
  double rttvar() const { return rttvar_; }
  double rto() const { return rto_; }
  /// Timeout backoff; the estimator does not reset it until the next sample.
  void backoff() { rto_ = std::min(2.0 * rto_, kMaxRtoMs); }

 private:
  bool has_sample_ = false;
  double srtt_ = 0.0;
  double rttvar_ = 0.0;
  double rto_;
};

/// Windowed loss-rate / RTT / bandwidth estimation for one path.
class PathEstimator {
 public:
  static constexpr std::size_t kDefaultWindow = 200;

  explicit PathEstimator(std::size_t window = kDefaultWindow, double initial_rto_ms = 1000.0);

  /// Records a packet dispatched on this path.
  void on_dispatch(std::uint32_t tsn);
  /// Folds one feedback event in and returns the refreshed stats.
  const PathStats& apply(const AckEvent& ev);

  const PathStats& stats() const { return stats_; }
  PathStats& stats() { return stats_; }
  RttEstimator& rtt() { return rtt_; }
  const RttEstimator& rtt() const { return rtt_; }
  /// Feedback entries naming TSNs not in the window.
  std::size_t unknown_feedback() const { return unknown_; }
  /// Recomputes mu = cwnd / rtt.
  void refresh_bandwidth(double cwnd_bytes);

 private:
  enum class Outcome : std::uint8_t { Pending, Acked, Lost };
  struct Entry {
    std::uint32_t tsn;
    Outcome outcome;
  };

  Entry* find(std::uint32_t tsn);
  void recompute_loss();

  std::size_t window_;
  std::deque<Entry> entries_;
  std::size_t acked_ = 0;
  std::size_t lost_ = 0;
  std::size_t unknown_ = 0;
  RttEstimator rtt_;
  PathStats stats_;
};

/// Value-style wrapper: returns the estimator after folding in the feedback.
PathEstimator update_path_stats(PathEstimator est, const AckEvent& ev);

/// mu in Kbps for a window of cwnd bytes per rtt milliseconds.
inline double bandwidth_kbps(double cwnd_bytes, double rtt_ms) {
  return rtt_ms > 0.0 ? cwnd_bytes * 8.0 / rtt_ms : 0.0;
}

}  // namespace cmtda
