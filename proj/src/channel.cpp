#include "cmtda/channel.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cmtda {

void GilbertParams::validate() const {
  if (!(xi_g > 0.0) || !(xi_b > 0.0) || !std::isfinite(xi_g) || !std::isfinite(xi_b)) {
    throw std::invalid_argument("Gilbert transition rates must be positive and finite");
  }
}

GilbertParams gilbert_from_stats(double loss_rate, double mean_burst_ms) {
  if (!(loss_rate > 0.0 && loss_rate < 1.0)) {
    throw std::invalid_argument("loss rate must lie strictly inside (0, 1) for a Gilbert chain");
  }
  if (!(mean_burst_ms > 0.0)) {
    throw std::invalid_argument("mean burst length must be positive");
  }
  GilbertParams g;
  g.xi_b = 1.0 / mean_burst_ms;
  g.xi_g = g.xi_b * (1.0 - loss_rate) / loss_rate;
  return g;
}

StationaryProbs stationary_probs(const GilbertParams& g) {
  g.validate();
  const double bad = g.xi_b / (g.xi_b + g.xi_g);
  return {1.0 - bad, bad};
}

TransitionMatrix transition_matrix(const GilbertParams& g, double omega_ms) {
  if (!(omega_ms >= 0.0)) {
    throw std::invalid_argument("transition interval must be non-negative");
  }
  const auto [pg, pb] = stationary_probs(g);
  const double kappa = std::exp(-(g.xi_b + g.xi_g) * omega_ms);
  TransitionMatrix m;
  m[0][0] = pg + pb * kappa;
  m[0][1] = pb - pb * kappa;
  m[1][0] = pg - pg * kappa;
  m[1][1] = pb + pg * kappa;
  return m;
}

std::vector<ChannelState> sample_loss_sequence(const GilbertParams& g, double omega_ms,
                                               std::size_t n, std::uint64_t seed) {
  if (n == 0) {
    throw std::invalid_argument("sequence length must be at least 1");
  }
  const auto probs = stationary_probs(g);
  const auto m = transition_matrix(g, omega_ms);
  Rng rng(seed);
  std::vector<ChannelState> out;
  out.reserve(n);
  auto state = rng.uniform() < probs.bad ? ChannelState::Bad : ChannelState::Good;
  out.push_back(state);
  for (std::size_t i = 1; i < n; ++i) {
    const double p_bad = m[static_cast<std::size_t>(state)][1];
    state = rng.uniform() < p_bad ? ChannelState::Bad : ChannelState::Good;
    out.push_back(state);
  }
  return out;
}

GilbertChannel::GilbertChannel(const GilbertParams& g, std::uint64_t seed)
    : params_(g), rng_(seed) {
  params_.validate();
}

ChannelState GilbertChannel::state_at(double now_ms) {
  if (!last_ms_) {
    state_ = rng_.uniform() < stationary_probs(params_).bad ? ChannelState::Bad
                                                            : ChannelState::Good;
  } else {
    const double dt = std::max(0.0, now_ms - *last_ms_);
    const auto m = transition_matrix(params_, dt);
    const double p_bad = m[static_cast<std::size_t>(state_)][1];
    state_ = rng_.uniform() < p_bad ? ChannelState::Bad : ChannelState::Good;
  }
  last_ms_ = std::max(now_ms, last_ms_.value_or(now_ms));
  return state_;
}

std::optional<GilbertParams> PathSpec::gilbert() const {
  if (loss_rate <= 0.0 || loss_rate >= 1.0) return std::nullopt;
  return gilbert_from_stats(loss_rate, mean_burst_ms);
}

double PathSpec::capacity_at(double t_ms) const {
  double c = 0.0;
  for (const auto& step : capacity_trace) {
    if (step.start_ms > t_ms) break;
    c = step.kbps;
  }
  return c;
}

double PathSpec::next_capacity_change(double t_ms) const {
  for (const auto& step : capacity_trace) {
    if (step.start_ms > t_ms) return step.start_ms;
  }
  return std::numeric_limits<double>::infinity();
}

bool PathSpec::available_at(double t_ms) const {
  if (availability.empty()) return true;
  for (const auto& w : availability) {
    if (t_ms >= w.start_ms && t_ms < w.end_ms) return true;
  }
  return false;
}

double PathSpec::next_available(double t_ms) const {
  if (available_at(t_ms)) return t_ms;
  for (const auto& w : availability) {
    if (w.start_ms >= t_ms) return w.start_ms;
  }
  return std::numeric_limits<double>::infinity();
}

void PathSpec::validate() const {
  const std::string who = "path " + std::to_string(id);
  if (id < 1) throw std::invalid_argument(who + ": id must be >= 1");
  if (capacity_trace.empty()) throw std::invalid_argument(who + ": capacity trace is empty");
  for (std::size_t i = 0; i < capacity_trace.size(); ++i) {
    if (!(capacity_trace[i].kbps >= 0.0) || !std::isfinite(capacity_trace[i].kbps)) {
      throw std::invalid_argument(who + ": capacity must be non-negative");
    }
    if (i > 0 && !(capacity_trace[i].start_ms > capacity_trace[i - 1].start_ms)) {
      throw std::invalid_argument(who + ": capacity trace must be strictly increasing in time");
    }
  }
  if (!(base_rtt_ms > 0.0)) throw std::invalid_argument(who + ": rtt must be positive");
  if (!(loss_rate >= 0.0 && loss_rate <= 1.0)) {
    throw std::invalid_argument(who + ": loss rate must lie in [0, 1]");
  }
  if (!(mean_burst_ms > 0.0)) throw std::invalid_argument(who + ": burst length must be positive");
  for (std::size_t i = 0; i < availability.size(); ++i) {
    if (!(availability[i].end_ms > availability[i].start_ms)) {
      throw std::invalid_argument(who + ": availability interval must have end > start");
    }
    if (i > 0 && availability[i].start_ms < availability[i - 1].end_ms) {
      throw std::invalid_argument(who + ": availability intervals must be sorted and disjoint");
    }
  }
  if (queue_limit_packets == 0) throw std::invalid_argument(who + ": queue limit must be >= 1");
  if (!(queue_limit_ms > 0.0)) throw std::invalid_argument(who + ": queue depth must be positive");
}

const char* to_string(PathState s) {
  switch (s) {
    case PathState::Active: return "active";
    case PathState::PotentiallyFailed: return "potentially-failed";
    case PathState::Inactive: return "inactive";
  }
  return "?";
}

void RttEstimator::add_sample(double rtt_ms) {
  if (!(rtt_ms >= 0.0)) return;
  if (!has_sample_) {
    srtt_ = rtt_ms;
    rttvar_ = rtt_ms / 2.0;
    has_sample_ = true;
  } else {
    rttvar_ = 0.75 * rttvar_ + 0.25 * std::abs(srtt_ - rtt_ms);
    srtt_ = 0.875 * srtt_ + 0.125 * rtt_ms;
  }
  rto_ = std::clamp(srtt_ + 4.0 * rttvar_, kMinRtoMs, kMaxRtoMs);
}

PathEstimator::PathEstimator(std::size_t window, double initial_rto_ms)
    : window_(window), rtt_(initial_rto_ms) {
  if (window_ == 0) throw std::invalid_argument("loss window must be non-empty");
  stats_.rto_ms = rtt_.rto();
}

void PathEstimator::on_dispatch(std::uint32_t tsn) {
  entries_.push_back({tsn, Outcome::Pending});
  while (entries_.size() > window_) {
    const auto& front = entries_.front();
    if (front.outcome == Outcome::Acked) --acked_;
    if (front.outcome == Outcome::Lost) --lost_;
    entries_.pop_front();
  }
  recompute_loss();
}

PathEstimator::Entry* PathEstimator::find(std::uint32_t tsn) {
  // Dispatch order is TSN order on a single path, except for retransmitted
  // TSNs which re-enter the window; scan from the back so the newest copy wins.
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->tsn == tsn) return &*it;
  }
  return nullptr;
}

const PathStats& PathEstimator::apply(const AckEvent& ev) {
  for (auto tsn : ev.acked_tsns) {
    Entry* e = find(tsn);
    if (!e) {
      ++unknown_;
      continue;
    }
    if (e->outcome == Outcome::Lost) {
      --lost_;  // spurious loss verdict
    }
    if (e->outcome != Outcome::Acked) {
      e->outcome = Outcome::Acked;
      ++acked_;
    }
  }
  for (auto tsn : ev.lost_tsns) {
    Entry* e = find(tsn);
    if (!e) {
      ++unknown_;
      continue;
    }
    if (e->outcome == Outcome::Pending) {
      e->outcome = Outcome::Lost;
      ++lost_;
    }
  }
  recompute_loss();
  if (ev.rtt_sample_ms) rtt_.add_sample(*ev.rtt_sample_ms);
  stats_.rtt_ms = rtt_.has_sample() ? rtt_.srtt() : 0.0;
  stats_.rto_ms = rtt_.rto();
  refresh_bandwidth(ev.cwnd_bytes);
  return stats_;
}

void PathEstimator::refresh_bandwidth(double cwnd_bytes) {
  stats_.cwnd_bytes = cwnd_bytes;
  stats_.mu_kbps = bandwidth_kbps(cwnd_bytes, stats_.rtt_ms);
}

void PathEstimator::recompute_loss() {
  const std::size_t resolved = acked_ + lost_;
  stats_.loss_rate = resolved == 0 ? 0.0 : static_cast<double>(lost_) / resolved;
}

PathEstimator update_path_stats(PathEstimator est, const AckEvent& ev) {
  est.apply(ev);
  return est;
}

}  // namespace cmtda
