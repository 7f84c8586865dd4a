#include "cmtda/distortion.hpp"

#include <cmath>
#include <stdexcept>

namespace cmtda {

void DistortionParams::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("distortion alpha must be positive");
  if (!(beta > 0.0)) throw std::invalid_argument("distortion beta must be positive");
  if (!(d0 >= 0.0)) throw std::invalid_argument("distortion d0 must be non-negative");
  if (!std::isfinite(r0)) throw std::invalid_argument("distortion r0 must be finite");
}

const std::vector<SequencePreset>& sequence_presets() {
  // Fitted offline against QCIF trial encodings at 30 fps, 8-frame GoPs.
  static const std::vector<SequencePreset> presets = {
      {"foreman", {3.0, 6000.0, 50.0, 1500.0}},
      {"bus", {4.5, 11000.0, 80.0, 1900.0}},
      {"stefan", {5.0, 14000.0, 90.0, 2200.0}},
      {"soccer", {3.8, 8500.0, 60.0, 1700.0}},
  };
  return presets;
}

DistortionParams preset_params(const std::string& name) {
  for (const auto& p : sequence_presets()) {
    if (p.name == name) return p.params;
  }
  throw std::invalid_argument("unknown sequence preset '" + name + "'");
}

std::size_t packets_per_chunk(double chunk_bytes, double mtu_bytes) {
  if (!(mtu_bytes > 0.0)) throw std::invalid_argument("mtu must be positive");
  if (chunk_bytes <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(chunk_bytes / mtu_bytes));
}

double transmission_loss_rate(const GilbertParams& g, double omega_ms, std::size_t n_packets) {
  if (n_packets == 0) throw std::invalid_argument("chunk must contain at least one packet");
  const auto probs = stationary_probs(g);
  const auto m = transition_matrix(g, omega_ms);
  // Expected number lost = sum of per-packet Bad marginals.
  double good = probs.good;
  double bad = probs.bad;
  double expected_lost = bad;
  for (std::size_t i = 1; i < n_packets; ++i) {
    const double next_good = good * m[0][0] + bad * m[1][0];
    const double next_bad = good * m[0][1] + bad * m[1][1];
    good = next_good;
    bad = next_bad;
    expected_lost += bad;
  }
  return expected_lost / static_cast<double>(n_packets);
}

double brute_force_transmission_loss_rate(const GilbertParams& g, double omega_ms,
                                          std::size_t n_packets) {
  if (n_packets == 0) throw std::invalid_argument("chunk must contain at least one packet");
  if (n_packets > 16) throw std::invalid_argument("enumeration limited to 16 packets");
  const auto probs = stationary_probs(g);
  const auto m = transition_matrix(g, omega_ms);
  const double start[2] = {probs.good, probs.bad};
  const std::uint32_t configs = 1u << n_packets;
  double acc = 0.0;
  for (std::uint32_t c = 0; c < configs; ++c) {
    // bit i set => packet i saw the Bad state
    std::size_t prev = c & 1u;
    double p = start[prev];
    std::size_t lost = prev;
    for (std::size_t i = 1; i < n_packets; ++i) {
      const std::size_t cur = (c >> i) & 1u;
      p *= m[prev][cur];
      lost += cur;
      prev = cur;
    }
    acc += static_cast<double>(lost) * p;
  }
  return acc / static_cast<double>(n_packets);
}

double expected_delay(double rate_kbps, double mu_kbps, double nu_obs_kbps, double rtt_ms,
                      double utilization_unit_ms) {
  if (rate_kbps < 0.0) throw std::invalid_argument("rate must be non-negative");
  if (!(mu_kbps > 0.0) || rate_kbps >= mu_kbps) return kSaturatedDelay;
  const double rho = nu_obs_kbps * rtt_ms / 2.0;
  return rate_kbps / mu_kbps * utilization_unit_ms + rho / (mu_kbps - rate_kbps);
}

double overdue_probability(const PathLossInputs& in) {
  if (!(in.deadline_ms >= 0.0)) throw std::invalid_argument("deadline must be non-negative");
  if (in.deadline_ms == 0.0) return 1.0;
  if (std::isinf(in.deadline_ms)) return 0.0;
  const double nu = in.mu_kbps - in.rate_kbps;
  if (!(nu > 0.0)) return 1.0;
  const double num = 2.0 * in.deadline_ms * nu * in.mu_kbps;
  const double den = in.nu_obs_kbps * in.rtt_ms * in.mu_kbps + 2.0 * nu * in.rate_kbps;
  if (!(den > 0.0)) return 0.0;  // zero mean delay
  return std::exp(-num / den);
}

double effective_loss_rate(double pi_star, double p_overdue) {
  if (!(pi_star >= 0.0 && pi_star <= 1.0) || !(p_overdue >= 0.0 && p_overdue <= 1.0)) {
    throw std::invalid_argument("loss probabilities must lie in [0, 1]");
  }
  return pi_star + (1.0 - pi_star) * p_overdue;
}

double total_distortion(const DistortionParams& params, double encoding_rate_kbps,
                        std::span<const double> rates_kbps, std::span<const double> losses) {
  if (!(encoding_rate_kbps > params.r0)) {
    throw std::invalid_argument("encoding rate must exceed the model's rate offset");
  }
  if (rates_kbps.size() != losses.size()) {
    throw std::invalid_argument("rate and loss vectors differ in length");
  }
  double sum_rate = 0.0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < rates_kbps.size(); ++i) {
    sum_rate += rates_kbps[i];
    weighted += rates_kbps[i] * losses[i];
  }
  if (!(sum_rate > 0.0)) throw std::invalid_argument("total assigned rate must be positive");
  return params.d0 + params.alpha / (encoding_rate_kbps - params.r0) +
         params.beta * weighted / sum_rate;
}

double psnr_from_mse(double mse, double cap_db) {
  if (!(mse > 0.0)) return cap_db;
  return std::min(cap_db, 10.0 * std::log10(255.0 * 255.0 / mse));
}

}  // namespace cmtda
