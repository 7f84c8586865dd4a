#include "cmtda/schedulers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cmtda {

const char* to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::CmtDa: return "cmt-da";
    case SchemeKind::CmtQa: return "cmt-qa";
    case SchemeKind::CmtPf: return "cmt-pf";
    case SchemeKind::Cmt: return "cmt";
  }
  return "?";
}

SchemeKind parse_scheme(const std::string& s) {
  for (auto k : all_schemes()) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown scheme '" + s + "' (expected cmt-da, cmt-qa, cmt-pf or cmt)");
}

std::vector<SchemeKind> all_schemes() {
  return {SchemeKind::CmtDa, SchemeKind::CmtQa, SchemeKind::CmtPf, SchemeKind::Cmt};
}

SchedulerScheme make_scheme(SchemeKind kind) {
  SchedulerScheme s;
  s.kind = kind;
  return s;
}

TransportConfig transport_config(const SchedulerScheme& scheme, double mtu_bytes) {
  TransportConfig c;
  c.mtu = mtu_bytes;
  c.initial_cwnd = std::min(4.0 * mtu_bytes, std::max(2.0 * mtu_bytes, 4380.0));
  c.congestion_product_factor = scheme.qa_congestion_factor;
  switch (scheme.kind) {
    case SchemeKind::CmtDa:
      c.loss_response = LossResponse::EcnGuarded;
      c.scale_growth_by_acceptance = true;
      c.pf_on_timeout = true;
      c.restart_cwnd_mtus = 2.0;
      break;
    case SchemeKind::CmtQa:
      c.loss_response = LossResponse::ConsecutiveLoss;
      c.pf_on_timeout = true;
      c.restart_cwnd_mtus = 2.0;
      break;
    case SchemeKind::CmtPf:
      c.loss_response = LossResponse::Standard;
      c.pf_on_timeout = true;
      c.restart_cwnd_mtus = 2.0;
      break;
    case SchemeKind::Cmt:
      c.loss_response = LossResponse::Standard;
      c.pf_on_timeout = false;
      c.restart_cwnd_mtus = 1.0;
      break;
  }
  return c;
}

double estimated_bandwidth(const SchedulerPathView& v) { return bandwidth_kbps(v.cwnd_bytes, v.srtt_ms); }

double chunk_delivery_delay(const SchedulerPathView& v, std::int64_t bytes) {
  const double mu = estimated_bandwidth(v);
  if (!(mu > 0.0)) return std::numeric_limits<double>::infinity();
  return v.srtt_ms / 2.0 + static_cast<double>(v.backlog_bytes + bytes) * 8.0 / mu;
}

std::optional<Allocation> schedule_cmt_da(std::span<const SchedulerPathView> views,
                                          const AllocationRequest& req,
                                          const DistortionParams& params,
                                          const SchedulerScheme& scheme) {
  std::vector<PathStatus> active;
  std::vector<std::size_t> index;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    const double mu = estimated_bandwidth(v);
    if (v.state != PathState::Active || !(mu > 0.0)) continue;
    PathStatus s;
    s.id = v.id;
    s.mu_kbps = mu;
    s.rtt_ms = v.srtt_ms;
    s.loss_rate = std::clamp(v.loss_rate, 0.0, 1.0);
    s.nu_obs_kbps = std::max(mu - v.prev_rate_kbps, scheme.nu_floor_fraction * mu);
    active.push_back(s);
    index.push_back(i);
  }
  if (active.empty()) return std::nullopt;
  Allocation a = allocate(active, req, params, scheme.allocator);
  Allocation full = a;
  full.rates_kbps.assign(views.size(), 0.0);
  full.chunk_bytes.assign(views.size(), 0);
  full.expected_delay_ms.assign(views.size(), std::numeric_limits<double>::infinity());
  full.effective_loss.assign(views.size(), 1.0);
  for (std::size_t k = 0; k < index.size(); ++k) {
    full.rates_kbps[index[k]] = a.rates_kbps[k];
    full.chunk_bytes[index[k]] = a.chunk_bytes[k];
    full.expected_delay_ms[index[k]] = a.expected_delay_ms[k];
    full.effective_loss[index[k]] = a.effective_loss[k];
  }
  return full;
}

std::vector<double> schedule_cmt_qa(std::span<const SchedulerPathView> views, double target_rate_kbps) {
  std::vector<double> w(views.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].state != PathState::Active) continue;
    // Quality ratio: delivery time per byte of sending buffer. Weight is its inverse.
    const double delay =
        views[i].srtt_ms / 2.0 +
        static_cast<double>(views[i].backlog_bytes + views[i].outstanding_bytes) * 8.0 /
            std::max(estimated_bandwidth(views[i]), 1e-9);
    if (!(delay > 0.0) || !std::isfinite(delay)) continue;
    w[i] = views[i].cwnd_bytes / delay;
    total += w[i];
  }
  std::vector<double> rates(views.size(), 0.0);
  if (!(total > 0.0)) return rates;
  for (std::size_t i = 0; i < views.size(); ++i) rates[i] = target_rate_kbps * w[i] / total;
  return rates;
}

std::optional<std::size_t> round_robin_pick(std::span<const SchedulerPathView> views,
                                            std::size_t start, std::int64_t bytes) {
  const std::size_t n = views.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = (start + k) % n;
    const auto& v = views[i];
    if (v.state == PathState::Active &&
        static_cast<double>(v.outstanding_bytes + bytes) <= v.cwnd_bytes) {
      return i;
    }
  }
  return std::nullopt;
}

std::optional<std::size_t> lowest_loss_path(std::span<const SchedulerPathView> views) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    if (v.state != PathState::Active) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = views[*best];
    if (v.loss_rate < b.loss_rate ||
        (v.loss_rate == b.loss_rate && (v.srtt_ms < b.srtt_ms || (v.srtt_ms == b.srtt_ms && v.id < b.id)))) {
      best = i;
    }
  }
  return best;
}

std::optional<std::size_t> fastest_path(std::span<const SchedulerPathView> views, std::int64_t bytes) {
  std::optional<std::size_t> best;
  double best_delay = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].state != PathState::Active) continue;
    const double d = chunk_delivery_delay(views[i], bytes);
    if (!best || d < best_delay) {
      best = i;
      best_delay = d;
    }
  }
  return best;
}

}  // namespace cmtda
