#pragma once

// Distortion-minimizing flow rate allocation across concurrent paths.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cmtda/distortion.hpp"

namespace cmtda {

/// Sender-side view of one path as the allocator sees it.
struct PathStatus {
  int id = 1;
  double mu_kbps = 0.0;
  double rtt_ms = 0.0;
  double loss_rate = 0.0;
  double nu_obs_kbps = 0.0;
  /// When known, the transmission loss is evaluated through the Gilbert chain.
  std::optional<double> mean_burst_ms;
};

struct AllocatorConfig {
  std::optional<double> delta_r_kbps;  ///< defaults to target / 100
  double tlv = 1.2;
  std::size_t max_iterations = 2000;
  double epsilon = 1e-9;  ///< minimum predicted-distortion improvement per move
  std::size_t breakpoints = 32;
  bool refine = true;  ///< second pass at delta / 10
  /// Longest single inter-path transfer, in steps of the current pass.
  std::size_t max_transfer_steps = 100;
  /// Weight on the delay spread between used paths (MSE per ms).
  double jitter_penalty = 0.0;

  void validate() const;
};

struct AllocationRequest {
  double target_rate_kbps = 0.0;
  double deadline_ms = 250.0;
  double loss_requirement = 0.01;
  double interval_ms = 250.0;
  double omega_ms = 5.0;
  double mtu_bytes = 1500.0;
};

struct Allocation {
  std::vector<double> rates_kbps;
  std::vector<std::int64_t> chunk_bytes;  ///< bytes per path for one interval
  double objective = 0.0;                 ///< predicted end-to-end distortion (MSE)
  std::size_t iterations = 0;
  double jitter_spread_ms = 0.0;
  bool capacity_shortfall = false;
  bool infeasible = false;  ///< duration constraint could not be met
  bool loss_requirement_met = false;
  std::vector<double> expected_delay_ms;
  std::vector<double> effective_loss;
  /// Predicted distortion after the initial split and after every accepted move.
  std::vector<double> objective_trace;
};

/// Chordwise piecewise-linear interpolation with its convex-region partition.
struct PwlApprox {
  std::vector<double> breakpoints;  ///< a_0 < ... < a_m
  std::vector<double> slopes;       ///< m entries, one per interval
  std::vector<double> intercepts;
  /// Interior breakpoint indices k with slope[k-1] > slope[k].
  std::vector<std::size_t> turning_points;

  double lo() const { return breakpoints.front(); }
  double hi() const { return breakpoints.back(); }
  /// Chord value.
  double eval(double x) const;
  /// Max-of-lines over the convex region containing x.
  double eval_max_of_lines(double x) const;
  std::size_t interval_of(double x) const;
};

PwlApprox build_pwl(const std::function<double(double)>& objective, double lo, double hi,
                    std::size_t m);

/// Slope of the approximation over [r, r + delta_r].
double transition_utility(const PwlApprox& pwl, double r, double delta_r);

/// Split proportional to available bandwidth, clipped at each path's capacity.
std::vector<double> initial_allocation(double target_rate_kbps, std::span<const double> mus);

/// Raised when no path has loss-free headroom left.
class SaturatedSystem : public std::runtime_error {
 public:
  SaturatedSystem() : std::runtime_error("no residual loss-free capacity") {}
};

/// Headroom of each path relative to the mean loss-free headroom.
std::vector<double> load_imbalance(std::span<const double> rates, std::span<const double> mus,
                                   std::span<const double> loss_rates);

/// Per-path predicted quantities under a candidate rate.
class PathModel {
 public:
  PathModel(const PathStatus& status, const AllocationRequest& req);

  double effective_loss(double rate_kbps) const;
  double expected_delay(double rate_kbps) const;
  /// Delay plus spreading time of the chunk's packets.
  double duration(double rate_kbps) const;
  bool meets_deadline(double rate_kbps) const;
  /// Largest rate still meeting the duration constraint (0 if none).
  double max_feasible_rate() const;
  double mu() const { return status_.mu_kbps; }

 private:
  PathStatus status_;
  AllocationRequest req_;
  std::optional<GilbertParams> gilbert_;
};

/// Predicted end-to-end distortion of a rate split.
double predicted_distortion(std::span<const PathStatus> paths, std::span<const double> rates,
                            const AllocationRequest& req, const DistortionParams& params,
                            double jitter_penalty = 0.0);

Allocation allocate(std::span<const PathStatus> paths, const AllocationRequest& req,
                    const DistortionParams& params, const AllocatorConfig& cfg = {});

/// Largest-remainder split of total_bytes proportional to rates.
std::vector<std::int64_t> chunk_sizes(std::span<const double> rates, std::int64_t total_bytes);

}  // namespace cmtda
