#pragma once

// Analytical loss, delay and distortion model used by the rate allocator.

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cmtda/channel.hpp"

namespace cmtda {

/// Returned by expected_delay when the assigned rate saturates the path.
inline constexpr double kSaturatedDelay = std::numeric_limits<double>::infinity();

/// Rate-distortion constants of one encoded sequence.
struct DistortionParams {
  double d0 = 0.0;     ///< floor distortion (MSE)
  double alpha = 1.0;  ///< MSE * Kbps
  double r0 = 0.0;     ///< Kbps
  double beta = 1.0;   ///< MSE per unit loss fraction

  void validate() const;
  bool operator==(const DistortionParams&) const = default;
};

/// Named sequence presets. The values are offline fits and may be overridden
/// per scenario.
struct SequencePreset {
  std::string name;
  DistortionParams params;
};
const std::vector<SequencePreset>& sequence_presets();
/// Throws std::invalid_argument for an unknown name.
DistortionParams preset_params(const std::string& name);

struct PathLossInputs {
  GilbertParams gilbert;
  double omega_ms = 5.0;
  double chunk_bytes = 0.0;
  double mtu_bytes = 1500.0;
  double rate_kbps = 0.0;    ///< assigned R_p
  double mu_kbps = 0.0;      ///< available bandwidth
  double nu_obs_kbps = 0.0;  ///< latest observed residual bandwidth
  double rtt_ms = 0.0;
  double deadline_ms = 250.0;
};

std::size_t packets_per_chunk(double chunk_bytes, double mtu_bytes);

/// Expected fraction of n_packets consecutive packets lost, from the
/// stationary-start marginal of the chain propagated packet by packet.
double transmission_loss_rate(const GilbertParams& g, double omega_ms, std::size_t n_packets);

/// Same quantity by literal enumeration of all 2^n loss configurations.
/// Throws for n_packets > 16 or n_packets == 0.
double brute_force_transmission_loss_rate(const GilbertParams& g, double omega_ms,
                                          std::size_t n_packets);

/// Mean one-way delay model: (rate/mu) * utilization_unit + rho / (mu - rate),
/// with rho = nu_obs * rtt / 2. utilization_unit converts the dimensionless
/// utilization into milliseconds. Returns kSaturatedDelay when rate >= mu.
double expected_delay(double rate_kbps, double mu_kbps, double nu_obs_kbps, double rtt_ms,
                      double utilization_unit_ms);

/// Exponential-tail probability that a packet misses the deadline.
double overdue_probability(const PathLossInputs& in);

/// Combined transmission + overdue loss.
double effective_loss_rate(double pi_star, double p_overdue);

/// End-to-end distortion for a rate split with per-path effective losses.
double total_distortion(const DistortionParams& params, double encoding_rate_kbps,
                        std::span<const double> rates_kbps, std::span<const double> losses);

inline constexpr double kDefaultPsnrCapDb = 60.0;
double psnr_from_mse(double mse, double cap_db = kDefaultPsnrCapDb);

}  // namespace cmtda
