#include "cmtda/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace cmtda {

PathCongestionController on_timeout(PathCongestionController cc, double mtu) {
  cc.ssthresh = std::max(cc.cwnd / 2.0, 3.0 * mtu);
  cc.cwnd = mtu;
  cc.mode = CcMode::SlowStart;
  cc.partial_bytes_acked = 0.0;
  cc.dup_sack_count = 0;
  cc.rto_ms = std::min(2.0 * cc.rto_ms, RttEstimator::kMaxRtoMs);
  return cc;
}

PathCongestionController on_dup_sacks(PathCongestionController cc, double mtu) {
  if (!cc.ecn_seen) return cc;
  cc.ssthresh = std::max(cc.cwnd / 2.0, 3.0 * mtu);
  cc.cwnd = cc.ssthresh;
  cc.mode = CcMode::CongestionAvoidance;
  cc.partial_bytes_acked = 0.0;
  cc.dup_sack_count = 0;
  cc.ecn_seen = false;
  return cc;
}

Sender::Sender(std::size_t n_paths, TransportConfig cfg) : cfg_(cfg) {
  if (n_paths == 0) throw std::invalid_argument("sender needs at least one path");
  if (!(cfg_.mtu > 0.0)) throw std::invalid_argument("mtu must be positive");
  if (cfg_.initial_cwnd < cfg_.mtu) throw std::invalid_argument("initial cwnd below one MTU");
  paths_.reserve(n_paths);
  for (std::size_t i = 0; i < n_paths; ++i) {
    PathData pd{.cc = {}, .est = PathEstimator(cfg_.loss_window, cfg_.initial_rto_ms), .outstanding = {}};
    pd.cc.cwnd = cfg_.initial_cwnd;
    pd.cc.ssthresh = cfg_.initial_ssthresh;
    pd.cc.rto_ms = cfg_.initial_rto_ms;
    pd.hb_base_rto = cfg_.initial_rto_ms;
    pd.est.refresh_bandwidth(pd.cc.cwnd);
    paths_.push_back(std::move(pd));
  }
}

void Sender::seed_rtt(std::size_t path, double rtt_ms) {
  auto& pd = paths_.at(path);
  pd.est.apply(AckEvent{{}, {}, rtt_ms, pd.cc.cwnd});
  pd.cc.rto_ms = pd.est.rtt().rto();
  pd.min_rtt = pd.min_rtt > 0.0 ? std::min(pd.min_rtt, rtt_ms) : rtt_ms;
}

bool Sender::has_room(std::size_t path, std::int64_t bytes) const {
  const auto& pd = paths_.at(path);
  return static_cast<double>(pd.outstanding_bytes + bytes) <= pd.cc.cwnd;
}

bool Sender::on_send(Chunk& chunk, std::size_t path, double now) {
  if (chunk.bytes <= 0) throw std::invalid_argument("chunk must carry payload");
  if (!has_room(path, chunk.bytes)) return false;
  auto& pd = paths_[path];
  const bool retransmission = chunk.tsn != 0;
  Record* rec = nullptr;
  if (retransmission) {
    auto it = records_.find(chunk.tsn);
    if (it == records_.end()) throw std::logic_error("retransmission of a resolved TSN");
    if (it->second.outstanding) throw std::logic_error("retransmission of an outstanding TSN");
    rec = &it->second;
    ++chunk.retransmit_count;
  } else {
    chunk.tsn = next_tsn_++;
    chunk.original_path = static_cast<int>(path);
    chunk.first_sent_at = now;
    sent_unique_bytes_ += chunk.bytes;
    rec = &records_[chunk.tsn];
  }
  chunk.path = static_cast<int>(path);
  chunk.sent_at = now;
  rec->chunk = chunk;
  rec->outstanding = true;
  rec->lost = false;
  rec->missing = 0;
  pd.outstanding.insert(chunk.tsn);
  pd.outstanding_bytes += chunk.bytes;
  pd.est.on_dispatch(chunk.tsn);
  if (!pd.cc.timer_deadline || retransmission) pd.cc.timer_deadline = now + pd.cc.rto_ms;
  return true;
}

void Sender::remove_outstanding(Record& rec) {
  if (!rec.outstanding) return;
  auto& pd = paths_[static_cast<std::size_t>(rec.chunk.path)];
  pd.outstanding.erase(rec.chunk.tsn);
  pd.outstanding_bytes -= rec.chunk.bytes;
  rec.outstanding = false;
}

void Sender::mark_lost(Record& rec, LossCause cause, std::vector<LossNotification>& out) {
  remove_outstanding(rec);
  if (rec.expired) {
    records_.erase(rec.chunk.tsn);
    return;
  }
  rec.lost = true;
  out.push_back({rec.chunk, cause});
}

void Sender::sync_timer(std::size_t path, double now, bool restart) {
  auto& pd = paths_[path];
  if (pd.outstanding.empty()) {
    pd.cc.timer_deadline.reset();
  } else if (restart || !pd.cc.timer_deadline) {
    pd.cc.timer_deadline = now + pd.cc.rto_ms;
  }
}

void Sender::reduce(std::size_t path, double now, double floor_mtus) {
  auto& pd = paths_[path];
  const double guard = pd.est.rtt().has_sample() ? pd.est.rtt().srtt() : 0.0;
  if (now - pd.last_reduction_at < guard) return;
  pd.cc.ssthresh = std::max(pd.cc.cwnd / 2.0, floor_mtus * cfg_.mtu);
  pd.cc.cwnd = std::max(pd.cc.ssthresh, cfg_.mtu);
  pd.cc.mode = CcMode::CongestionAvoidance;
  pd.cc.partial_bytes_acked = 0.0;
  pd.last_reduction_at = now;
  ++reductions_;
}

void Sender::on_fast_loss(std::size_t path, double now) {
  auto& pd = paths_[path];
  switch (cfg_.loss_response) {
    case LossResponse::EcnGuarded:
      break;
    case LossResponse::Standard:
      reduce(path, now, 4.0);
      break;
    case LossResponse::ConsecutiveLoss: {
      const double srtt = pd.est.rtt().has_sample() ? pd.est.rtt().srtt() : cfg_.initial_rto_ms;
      const bool consecutive = now - pd.last_loss_at < srtt;
      const double product = srtt * pd.cc.cwnd;
      const bool congestion =
          pd.min_product > 0.0 && product > cfg_.congestion_product_factor * pd.min_product;
      if (consecutive && congestion) reduce(path, now, 4.0);
      break;
    }
  }
  pd.last_loss_at = now;
}

void Sender::grow(std::size_t path, std::int64_t acked, std::int64_t flight_before) {
  auto& pd = paths_[path];
  auto& cc = pd.cc;
  if (acked <= 0) return;
  // Grow only while the window was the limiting factor.
  if (static_cast<double>(flight_before) + cfg_.mtu <= cc.cwnd) return;
  const double scale = cfg_.scale_growth_by_acceptance ? 1.0 - pd.est.stats().loss_rate : 1.0;
  if (cc.cwnd <= cc.ssthresh) {
    cc.cwnd += static_cast<double>(acked) * scale;
  } else {
    cc.partial_bytes_acked += static_cast<double>(acked);
    if (cc.partial_bytes_acked >= cc.cwnd) {
      cc.partial_bytes_acked -= cc.cwnd;
      cc.cwnd += cfg_.mtu * scale;
    }
  }
  cc.cwnd = std::min(cc.cwnd, cfg_.max_cwnd);
  cc.mode = cc.cwnd <= cc.ssthresh ? CcMode::SlowStart : CcMode::CongestionAvoidance;
}

SackOutcome Sender::process_sack(const SackEvent& sack, double now) {
  SackOutcome out;
  bool malformed = sack.cumulative_tsn >= next_tsn_;
  for (const auto& b : sack.gap_blocks) {
    if (b.start > b.end || b.start <= sack.cumulative_tsn || b.end >= next_tsn_) malformed = true;
  }
  for (const auto& b : sack.skipped_blocks) {
    if (b.start > b.end || b.start == 0 || b.end > sack.cumulative_tsn) malformed = true;
  }
  if (malformed) {
    ++unknown_feedback_;
    out.ignored = true;
    return out;
  }

  const std::size_t n = paths_.size();
  int ecn_path = -1;
  if (sack.ecn_echo) {
    auto it = records_.find(sack.trigger_tsn);
    if (it != records_.end()) ecn_path = it->second.chunk.path;
  }

  struct PerPath {
    std::int64_t acked_bytes = 0;
    std::int64_t flight_before = 0;
    std::uint32_t highest_acked = 0;
    std::optional<double> sample_sent_at;
    std::vector<std::uint32_t> acked;
    std::vector<std::uint32_t> lost;
    bool missing_increment = false;
    bool skipped_loss = false;
  };
  std::vector<PerPath> pp(n);
  for (std::size_t q = 0; q < n; ++q) pp[q].flight_before = paths_[q].outstanding_bytes;

  auto ack_one = [&](std::map<std::uint32_t, Record>::iterator it) {
    Record& rec = it->second;
    const auto q = static_cast<std::size_t>(rec.chunk.path);
    if (rec.outstanding) {
      remove_outstanding(rec);
      pp[q].acked_bytes += rec.chunk.bytes;
      pp[q].highest_acked = std::max(pp[q].highest_acked, rec.chunk.tsn);
      if (rec.chunk.retransmit_count == 0 &&
          (!pp[q].sample_sent_at || rec.chunk.sent_at > *pp[q].sample_sent_at)) {
        pp[q].sample_sent_at = rec.chunk.sent_at;
      }
    }
    pp[q].acked.push_back(rec.chunk.tsn);
    if (!rec.expired) {
      acked_bytes_ += rec.chunk.bytes;
      out.acked.push_back(rec.chunk);
    }
    return records_.erase(it);
  };

  // Expired copies the receiver skipped over never arrived.
  for (const auto& b : sack.skipped_blocks) {
    std::vector<std::uint32_t> gone;
    for (auto it = records_.lower_bound(b.start); it != records_.end() && it->first <= b.end; ++it) {
      if (it->second.expired && it->second.outstanding) gone.push_back(it->first);
    }
    for (auto tsn : gone) {
      const auto q = static_cast<std::size_t>(records_.at(tsn).chunk.path);
      mark_lost(records_.at(tsn), LossCause::MissingReports, out.losses);
      pp[q].lost.push_back(tsn);
      pp[q].skipped_loss = true;
    }
  }
  for (auto it = records_.begin(); it != records_.end() && it->first <= sack.cumulative_tsn;) {
    it = ack_one(it);
  }
  for (const auto& b : sack.gap_blocks) {
    for (auto it = records_.lower_bound(b.start); it != records_.end() && it->first <= b.end;) {
      it = ack_one(it);
    }
  }

  // Split fast retransmit: a TSN is reported missing only when a later TSN
  // sent on the same path was newly acked.
  for (std::size_t q = 0; q < n; ++q) {
    if (pp[q].highest_acked == 0) continue;
    std::vector<std::uint32_t> to_mark;
    for (auto tsn : paths_[q].outstanding) {
      if (tsn >= pp[q].highest_acked) break;
      Record& rec = records_.at(tsn);
      pp[q].missing_increment = true;
      if (++rec.missing >= cfg_.missing_report_threshold) to_mark.push_back(tsn);
    }
    for (auto tsn : to_mark) {
      mark_lost(records_.at(tsn), LossCause::MissingReports, out.losses);
      pp[q].lost.push_back(tsn);
    }
    if (!to_mark.empty()) on_fast_loss(q, now);
  }
  for (std::size_t q = 0; q < n; ++q) {
    if (!pp[q].skipped_loss) continue;
    // As conclusive as a TSN reported missing past the threshold.
    paths_[q].cc.dup_sack_count = std::max(paths_[q].cc.dup_sack_count, cfg_.dup_sack_threshold - 1);
    pp[q].missing_increment = true;
    on_fast_loss(q, now);
  }

  if (ecn_path >= 0) {
    paths_[static_cast<std::size_t>(ecn_path)].cc.ecn_seen = true;
    paths_[static_cast<std::size_t>(ecn_path)].last_ecn_at = now;
  }
  // An echo older than one smoothed RTT no longer describes the queue.
  for (auto& pd : paths_) {
    const double srtt = pd.est.rtt().has_sample() ? pd.est.rtt().srtt() : cfg_.initial_rto_ms;
    if (pd.cc.ecn_seen && now - pd.last_ecn_at > srtt) pd.cc.ecn_seen = false;
  }

  for (std::size_t q = 0; q < n; ++q) {
    auto& pd = paths_[q];
    auto& p = pp[q];
    if (p.missing_increment) {
      if (++pd.cc.dup_sack_count >= cfg_.dup_sack_threshold) {
        if (cfg_.loss_response == LossResponse::EcnGuarded && pd.cc.ecn_seen) {
          const double guard = pd.est.rtt().has_sample() ? pd.est.rtt().srtt() : 0.0;
          if (now - pd.last_reduction_at >= guard) {
            pd.cc = on_dup_sacks(pd.cc, cfg_.mtu);
            pd.last_reduction_at = now;
            ++reductions_;
          }
        }
        pd.cc.dup_sack_count = 0;
      }
    } else if (p.acked_bytes > 0) {
      pd.cc.dup_sack_count = 0;
    }
    if (p.acked.empty() && p.lost.empty()) continue;

    std::optional<double> sample;
    if (p.sample_sent_at) sample = now - *p.sample_sent_at;
    pd.est.apply(AckEvent{p.acked, p.lost, sample, pd.cc.cwnd});
    if (sample) {
      pd.cc.rto_ms = pd.est.rtt().rto();
      pd.min_rtt = pd.min_rtt > 0.0 ? std::min(pd.min_rtt, *sample) : *sample;
      const double product = pd.est.rtt().srtt() * pd.cc.cwnd;
      pd.min_product = pd.min_product > 0.0 ? std::min(pd.min_product, product) : product;
    }
    if (p.acked_bytes > 0) pd.consecutive_timeouts = 0;
    // A congestion-experienced echo holds the window where it is.
    const bool hold = cfg_.loss_response == LossResponse::EcnGuarded && static_cast<int>(q) == ecn_path;
    if (!hold) grow(q, p.acked_bytes, p.flight_before);
    sync_timer(q, now, p.acked_bytes > 0);
    pd.est.refresh_bandwidth(pd.cc.cwnd);
  }
  return out;
}

std::vector<LossNotification> Sender::on_timer(std::size_t path, double now) {
  std::vector<LossNotification> out;
  auto& pd = paths_.at(path);
  if (!pd.cc.timer_deadline || now < *pd.cc.timer_deadline) return out;
  pd.cc.timer_deadline.reset();
  if (pd.outstanding.empty()) return out;

  pd.cc = on_timeout(pd.cc, cfg_.mtu);
  pd.est.rtt().backoff();
  pd.cc.rto_ms = pd.est.rtt().rto();
  std::vector<std::uint32_t> lost(pd.outstanding.begin(), pd.outstanding.end());
  for (auto tsn : lost) mark_lost(records_.at(tsn), LossCause::Timeout, out);
  pd.est.apply(AckEvent{{}, lost, std::nullopt, pd.cc.cwnd});
  pd.last_reduction_at = now;
  ++reductions_;

  ++pd.consecutive_timeouts;
  if (pd.state == PathState::Active) {
    if (cfg_.pf_on_timeout) {
      pd.state = PathState::PotentiallyFailed;
    } else if (pd.consecutive_timeouts >= cfg_.max_path_retransmissions) {
      pd.state = PathState::Inactive;
    }
    if (pd.state != PathState::Active) {
      pd.hb_base_rto = pd.cc.rto_ms;
      pd.hb_unacked = 0;
      pd.hb_next_at = now;
    }
  }
  pd.est.stats().state = pd.state;
  return out;
}

void Sender::abandon(std::uint32_t tsn) {
  auto it = records_.find(tsn);
  if (it == records_.end()) return;
  if (it->second.outstanding) throw std::logic_error("cannot abandon an outstanding TSN");
  abandoned_bytes_ += it->second.chunk.bytes;
  records_.erase(it);
}

std::vector<Chunk> Sender::expire(double now) {
  std::vector<Chunk> out;
  for (auto it = records_.begin(); it != records_.end();) {
    Record& rec = it->second;
    if (rec.expired || now < rec.chunk.send_deadline) {
      ++it;
      continue;
    }
    abandoned_bytes_ += rec.chunk.bytes;
    out.push_back(rec.chunk);
    if (rec.outstanding) {
      rec.expired = true;
      ++it;
    } else {
      it = records_.erase(it);
    }
  }
  return out;
}

bool Sender::awaiting_retransmission(std::uint32_t tsn) const {
  auto it = records_.find(tsn);
  return it != records_.end() && it->second.lost && !it->second.outstanding;
}

std::uint32_t Sender::forward_tsn() const {
  for (const auto& [tsn, rec] : records_) {
    if (!rec.expired) return tsn - 1;
  }
  return next_tsn_ - 1;
}

std::optional<HeartbeatProbe> Sender::heartbeat_check(std::size_t path, double now) {
  auto& pd = paths_.at(path);
  if (pd.state == PathState::Active || now < pd.hb_next_at) return std::nullopt;
  const double interval =
      std::min(pd.hb_base_rto * std::pow(2.0, static_cast<double>(pd.hb_unacked)),
               RttEstimator::kMaxRtoMs);
  pd.hb_next_at = now + interval;
  ++pd.hb_unacked;
  pd.hb_probe = next_probe_id_++;
  pd.hb_sent_at = now;
  return HeartbeatProbe{pd.hb_probe, path, now, pd.hb_next_at};
}

bool Sender::on_heartbeat_ack(std::size_t path, std::uint64_t probe_id, double now) {
  auto& pd = paths_.at(path);
  if (pd.state == PathState::Active || probe_id != pd.hb_probe) return false;
  pd.state = PathState::Active;
  pd.cc.cwnd = cfg_.restart_cwnd_mtus * cfg_.mtu;
  pd.cc.mode = pd.cc.cwnd <= pd.cc.ssthresh ? CcMode::SlowStart : CcMode::CongestionAvoidance;
  pd.cc.partial_bytes_acked = 0.0;
  pd.consecutive_timeouts = 0;
  pd.hb_unacked = 0;
  pd.est.apply(AckEvent{{}, {}, now - pd.hb_sent_at, pd.cc.cwnd});
  pd.cc.rto_ms = pd.est.rtt().rto();
  pd.est.stats().state = pd.state;
  return true;
}

std::size_t Sender::pending_losses() const {
  return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(), [](const auto& kv) {
    return kv.second.lost && !kv.second.outstanding;
  }));
}

std::int64_t Sender::unresolved_bytes() const {
  std::int64_t total = 0;
  for (const auto& [tsn, rec] : records_) {
    if (!rec.expired) total += rec.chunk.bytes;
  }
  return total;
}

std::string Sender::audit() const {
  std::ostringstream err;
  for (std::size_t q = 0; q < paths_.size(); ++q) {
    const auto& pd = paths_[q];
    std::int64_t sum = 0;
    for (auto tsn : pd.outstanding) {
      auto it = records_.find(tsn);
      if (it == records_.end() || !it->second.outstanding ||
          it->second.chunk.path != static_cast<int>(q)) {
        err << "path " << q << ": outstanding TSN " << tsn << " has no matching record; ";
        continue;
      }
      sum += it->second.chunk.bytes;
    }
    if (sum != pd.outstanding_bytes) {
      err << "path " << q << ": outstanding bytes " << pd.outstanding_bytes << " != " << sum << "; ";
    }
    if (pd.cc.timer_deadline.has_value() != !pd.outstanding.empty()) {
      err << "path " << q << ": timer armed=" << pd.cc.timer_deadline.has_value()
          << " with " << pd.outstanding.size() << " outstanding; ";
    }
    if (pd.cc.ssthresh < 3.0 * cfg_.mtu) err << "path " << q << ": ssthresh below 3 MTU; ";
    if (pd.cc.cwnd < cfg_.mtu) err << "path " << q << ": cwnd below one MTU; ";
  }
  return err.str();
}

RetransmitPlan retransmission_decision(std::span<const Chunk> lost,
                                       std::span<const RetransmitPathView> paths,
                                       double loss_requirement, double recorded_loss, double now) {
  RetransmitPlan plan;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (paths[i].state != PathState::Active || !std::isfinite(paths[i].expected_delay_ms)) continue;
    if (!best || paths[i].expected_delay_ms < paths[*best].expected_delay_ms) best = i;
  }
  const bool needed = recorded_loss > loss_requirement;
  for (const auto& c : lost) {
    if (needed && best && paths[*best].expected_delay_ms < c.send_deadline - now) {
      plan.orders.push_back({c, *best});
    } else {
      plan.abandoned.push_back(c);
    }
  }
  return plan;
}

int select_ack_path(std::span<const AckPathView> paths) {
  const AckPathView* best = nullptr;
  for (const auto& p : paths) {
    if (!p.active) continue;
    if (!best || p.loss_rate < best->loss_rate ||
        (p.loss_rate == best->loss_rate &&
         (p.rtt_ms < best->rtt_ms || (p.rtt_ms == best->rtt_ms && p.id < best->id)))) {
      best = &p;
    }
  }
  if (!best) throw std::invalid_argument("no active path for acknowledgements");
  return best->id;
}

void EffectiveLossMonitor::record(bool lost) {
  outcomes_.push_back(lost);
  if (lost) ++lost_;
  while (outcomes_.size() > window_) {
    if (outcomes_.front()) --lost_;
    outcomes_.pop_front();
  }
}

namespace {

void deliver_in_order(ReceiverState& rs, ReceiveResult& res, double now) {
  while (!rs.reorder_buffer.empty() && rs.reorder_buffer.begin()->first <= rs.cumulative_tsn + 1) {
    auto it = rs.reorder_buffer.begin();
    const auto& b = it->second;
    DeliveryRecord d{it->first, b.bytes, b.gop_id, b.original_path, b.arrival_ms, now, b.emitted_at};
    rs.delivered_log.push_back(d);
    res.delivered.push_back(d);
    rs.cumulative_tsn = std::max(rs.cumulative_tsn, it->first);
    rs.buffered_bytes -= b.bytes;
    rs.reorder_buffer.erase(it);
  }
}

}  // namespace

std::vector<GapBlock> gap_blocks(const ReceiverState& rs) {
  std::vector<GapBlock> out;
  for (const auto& [tsn, b] : rs.reorder_buffer) {
    if (!out.empty() && out.back().end + 1 == tsn) {
      out.back().end = tsn;
    } else {
      out.push_back({tsn, tsn});
    }
  }
  return out;
}

ReceiveResult receiver_on_packet(ReceiverState& rs, const DataPacket& pkt, double now) {
  ReceiveResult res;
  if (pkt.tsn == 0) throw std::invalid_argument("TSN 0 is reserved");

  if (pkt.forward_tsn > rs.cumulative_tsn) {
    // Buffered chunks at or below the abandon point are released in order;
    // everything else in that range is skipped.
    std::int64_t held = 0;
    std::uint32_t next = rs.cumulative_tsn + 1;
    auto skip_to = [&](std::uint32_t end) {
      if (next > end) return;
      rs.recent_skips.push_back({next, end});
      if (rs.recent_skips.size() > ReceiverState::kMaxRecentSkips) rs.recent_skips.pop_front();
    };
    while (!rs.reorder_buffer.empty() && rs.reorder_buffer.begin()->first <= pkt.forward_tsn) {
      ++held;
      auto it = rs.reorder_buffer.begin();
      skip_to(it->first - 1);
      next = it->first + 1;
      const auto& b = it->second;
      DeliveryRecord d{it->first, b.bytes, b.gop_id, b.original_path, b.arrival_ms, now, b.emitted_at};
      rs.delivered_log.push_back(d);
      res.delivered.push_back(d);
      rs.buffered_bytes -= b.bytes;
      rs.reorder_buffer.erase(it);
    }
    skip_to(pkt.forward_tsn);
    rs.skipped_tsns += static_cast<std::int64_t>(pkt.forward_tsn - rs.cumulative_tsn) - held;
    rs.cumulative_tsn = pkt.forward_tsn;
    deliver_in_order(rs, res, now);
  }

  if (pkt.tsn <= rs.cumulative_tsn || rs.reorder_buffer.contains(pkt.tsn)) {
    res.duplicate = true;
    ++rs.duplicates;
  } else {
    if (rs.last_received_tsn) {
      res.oo_offset = static_cast<std::int64_t>(pkt.tsn) - static_cast<std::int64_t>(*rs.last_received_tsn);
    }
    rs.last_received_tsn = pkt.tsn;
    const bool in_order = pkt.tsn == rs.cumulative_tsn + 1;
    if (!in_order && rs.buffered_bytes + pkt.bytes > rs.buffer_capacity) {
      res.dropped = true;
      ++rs.blocked_drops;
    } else {
      rs.reorder_buffer.emplace(pkt.tsn, ReceiverState::Buffered{pkt.bytes, pkt.gop_id, pkt.original_path,
                                                                 now, pkt.emitted_at});
      rs.buffered_bytes += pkt.bytes;
      deliver_in_order(rs, res, now);
    }
  }

  res.sack.cumulative_tsn = rs.cumulative_tsn;
  res.sack.gap_blocks = gap_blocks(rs);
  res.sack.skipped_blocks.assign(rs.recent_skips.begin(), rs.recent_skips.end());
  res.sack.ecn_echo = pkt.ecn_ce;
  res.sack.trigger_tsn = pkt.tsn;
  res.sack.timestamp = now;
  return res;
}

}  // namespace cmtda
