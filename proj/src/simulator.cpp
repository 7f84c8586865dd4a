#include "cmtda/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "cmtda/rng.hpp"

namespace cmtda {

double apply_background_traffic(double capacity_kbps, const BackgroundSpec& spec, std::uint64_t seed,
                                int path_id, double t_ms) {
  if (!(spec.max_fraction > spec.min_fraction)) return capacity_kbps * (1.0 - spec.min_fraction);
  const auto period = static_cast<std::uint64_t>(std::max(0.0, std::floor(t_ms / spec.resample_ms)));
  Rng rng(derive_seed(derive_seed(seed, 0xb6c0ull + static_cast<std::uint64_t>(path_id)), period));
  return capacity_kbps * (1.0 - rng.uniform(spec.min_fraction, spec.max_fraction));
}

namespace {

constexpr std::size_t kMaxReportedViolations = 16;

enum class Ev : std::uint8_t {
  Emit,
  Tick,
  Departure,
  Wake,
  Arrival,
  SackArrival,
  Timer,
  Heartbeat,
  HeartbeatEcho,
  HeartbeatAck,
};

struct Event {
  Ev type;
  std::size_t path = 0;
  double aux = 0.0;
  std::uint64_t id = 0;
  DataPacket pkt{};
  SackEvent sack{};
};

struct Link {
  PathSpec spec;
  std::optional<GilbertChannel> down;
  std::optional<GilbertChannel> up;
  std::deque<DataPacket> queue;  // head is in service
  std::int64_t queued_bytes = 0;
  bool busy = false;
  bool wake_pending = false;
};

class Simulation {
 public:
  Simulation(const Scenario& sc, const SchedulerScheme& scheme, const SimOptions& opts)
      : sc_(sc),
        scheme_(scheme),
        opts_(opts),
        sender_(sc.paths.size(), transport_config(scheme, sc.mtu_bytes)),
        rs_(sc.receiver_buffer_bytes) {
    const std::size_t n = sc.paths.size();
    for (std::size_t p = 0; p < n; ++p) {
      Link l{.spec = sc.paths[p], .down = std::nullopt, .up = std::nullopt, .queue = {}};
      if (auto g = l.spec.gilbert()) {
        l.down.emplace(*g, derive_seed(sc.seed, 2 * p));
        l.up.emplace(*g, derive_seed(sc.seed, 2 * p + 1));
      }
      links_.push_back(std::move(l));
    }
    path_queue_.resize(n);
    path_queue_bytes_.assign(n, 0);
    rtx_queue_.resize(n);
    prev_rate_.assign(n, 0.0);
    scheduled_timer_.resize(n);
    hb_scheduled_.assign(n, false);
    last_state_.assign(n, PathState::Active);
    end_time_ = sc.duration_ms + opts.drain_ms;
    req_.deadline_ms = sc.deadline_ms;
    req_.loss_requirement = sc.loss_requirement;
    req_.interval_ms = sc.interval_ms;
    req_.omega_ms = sc.omega_ms;
    req_.mtu_bytes = sc.mtu_bytes;
    scheme_.allocator.tlv = sc.tlv;
  }

  MetricsReport run() {
    for (std::size_t p = 0; p < links_.size(); ++p) sender_.seed_rtt(p, links_[p].spec.base_rtt_ms);
    put(0.0, Event{.type = Ev::Emit});
    put(0.0, Event{.type = Ev::Tick});
    while (!queue_.empty()) {
      auto node = queue_.extract(queue_.begin());
      if (node.key().first > end_time_) break;
      now_ = node.key().first;
      dispatch(node.mapped());
      check_states();
      sync_timers();
      if (opts_.check_invariants) audit();
    }
    return finish();
  }

 private:
  // --- event plumbing ---------------------------------------------------
  void put(double t, Event e) { queue_.emplace(std::make_pair(t, seq_++), std::move(e)); }

  void dispatch(Event& e) {
    switch (e.type) {
      case Ev::Emit: on_emit(e.id); break;
      case Ev::Tick: on_tick(); break;
      case Ev::Departure: on_departure(e.path); break;
      case Ev::Wake:
        links_[e.path].wake_pending = false;
        if (!links_[e.path].busy) start_service(e.path);
        break;
      case Ev::Arrival: on_arrival(e.pkt); break;
      case Ev::SackArrival: on_sack(e.sack); break;
      case Ev::Timer: on_timer(e.path, e.aux); break;
      case Ev::Heartbeat: on_heartbeat(e.path); break;
      case Ev::HeartbeatEcho:
        if (link_passes(e.path, links_[e.path].up)) {
          put(now_ + links_[e.path].spec.base_rtt_ms / 2.0,
              Event{.type = Ev::HeartbeatAck, .path = e.path, .id = e.id});
        }
        break;
      case Ev::HeartbeatAck: sender_.on_heartbeat_ack(e.path, e.id, now_); break;
    }
  }

  void log(EventKind k, int path_id, std::uint32_t tsn, std::int64_t bytes, std::uint32_t gop) {
    trace_.push_back({now_, k, path_id, tsn, bytes, gop});
  }

  int id_of(int index) const { return index >= 0 ? links_[static_cast<std::size_t>(index)].spec.id : 0; }

  double capacity(std::size_t p) const {
    const auto& spec = links_[p].spec;
    return apply_background_traffic(spec.capacity_at(now_), sc_.background, sc_.seed, spec.id, now_);
  }

  /// Availability plus one Gilbert draw for a packet entering the path.
  bool link_passes(std::size_t p, std::optional<GilbertChannel>& chain) {
    const auto& spec = links_[p].spec;
    if (!spec.available_at(now_) || spec.loss_rate >= 1.0) return false;
    if (chain && chain->state_at(now_) == ChannelState::Bad) return false;
    return true;
  }

  // --- scheduling -------------------------------------------------------
  std::vector<SchedulerPathView> views() const {
    std::vector<SchedulerPathView> v(links_.size());
    for (std::size_t p = 0; p < links_.size(); ++p) {
      const auto& st = sender_.stats(p);
      std::int64_t backlog = path_queue_bytes_[p];
      for (const auto& c : rtx_queue_[p]) backlog += c.bytes;
      v[p] = {links_[p].spec.id, sender_.state(p), sender_.cc(p).cwnd, st.rtt_ms, st.loss_rate,
              prev_rate_[p], backlog, sender_.outstanding_bytes(p)};
    }
    return v;
  }

  std::vector<Chunk> split(std::int64_t bytes, std::uint32_t gop, int path) const {
    std::vector<Chunk> out;
    const auto mtu = static_cast<std::int64_t>(sc_.mtu_bytes);
    for (std::int64_t left = bytes; left > 0; left -= mtu) {
      Chunk c;
      c.bytes = std::min(left, mtu);
      c.gop_id = gop;
      c.emitted_at = now_;
      c.send_deadline = now_ + sc_.deadline_ms;
      c.path = path;
      out.push_back(c);
    }
    return out;
  }

  void enqueue_path(std::size_t p, std::vector<Chunk> chunks) {
    for (auto& c : chunks) {
      c.path = static_cast<int>(p);
      path_queue_bytes_[p] += c.bytes;
      path_queue_[p].push_back(c);
    }
  }

  void assign_by_rates(const std::vector<double>& rates, std::int64_t bytes, std::uint32_t gop) {
    double total = 0.0;
    for (double r : rates) total += r;
    if (!(total > 0.0)) {
      for (auto& c : split(bytes, gop, -1)) held_.push_back(c);
      return;
    }
    const auto sizes = chunk_sizes(rates, bytes);
    for (std::size_t p = 0; p < sizes.size(); ++p) {
      if (sizes[p] > 0) enqueue_path(p, split(sizes[p], gop, static_cast<int>(p)));
    }
  }

  void on_emit(std::uint64_t k) {
    const double rate = sc_.video.rate_at(now_);
    const auto bytes = static_cast<std::int64_t>(std::llround(rate * sc_.interval_ms / 8.0));
    const auto gop = static_cast<std::uint32_t>(k);
    log(EventKind::Emit, 0, 0, bytes, gop);
    emitted_bytes_ += bytes;
    switch (scheme_.kind) {
      case SchemeKind::CmtDa: {
        auto req = req_;
        req.target_rate_kbps = rate;
        const auto v = views();
        const auto alloc = schedule_cmt_da(v, req, sc_.video.params, scheme_);
        if (alloc) {
          prev_rate_ = alloc->rates_kbps;
          assign_by_rates(alloc->rates_kbps, bytes, gop);
        } else {
          assign_by_rates(std::vector<double>(links_.size(), 0.0), bytes, gop);
        }
        break;
      }
      case SchemeKind::CmtQa: {
        const auto rates = schedule_cmt_qa(views(), rate);
        prev_rate_ = rates;
        assign_by_rates(rates, bytes, gop);
        break;
      }
      case SchemeKind::CmtPf:
      case SchemeKind::Cmt:
        for (auto& c : split(bytes, gop, -1)) shared_queue_.push_back(c);
        break;
    }
    dispatch_held();
    const double next = now_ + sc_.interval_ms;
    if (next < sc_.duration_ms) put(next, Event{.type = Ev::Emit, .id = k + 1});
  }

  /// Parks chunks stranded on failed paths onto the fastest active path,
  /// oldest first.
  void dispatch_held() {
    if (held_.empty()) return;
    auto v = views();
    std::vector<std::vector<Chunk>> per_path(links_.size());
    std::deque<Chunk> keep;
    for (auto& c : held_) {
      const auto p = fastest_path(v, c.bytes);
      if (!p) {
        keep.push_back(c);
        continue;
      }
      v[*p].backlog_bytes += c.bytes;
      c.path = static_cast<int>(*p);
      per_path[*p].push_back(c);
    }
    held_ = std::move(keep);
    for (std::size_t p = 0; p < per_path.size(); ++p) {
      for (auto it = per_path[p].rbegin(); it != per_path[p].rend(); ++it) {
        path_queue_bytes_[p] += it->bytes;
        path_queue_[p].push_front(*it);
      }
    }
  }

  // --- sending ----------------------------------------------------------
  void on_tick() {
    const std::size_t n = links_.size();
    const bool shared = scheme_.kind == SchemeKind::Cmt || scheme_.kind == SchemeKind::CmtPf;
    if (scheme_.kind == SchemeKind::CmtDa) {
      for (const auto& c : sender_.expire(now_)) {
        log(EventKind::Abandon, id_of(c.original_path), c.tsn, c.bytes, c.gop_id);
        ++abandoned_chunks_;
        monitor_.record(true);
      }
    }
    for (std::size_t k = 0; k < n; ++k) try_send(shared ? (rr_ + k) % n : k, shared);
    if (shared) rr_ = (rr_ + 1) % n;
    if (now_ + sc_.omega_ms <= end_time_) put(now_ + sc_.omega_ms, Event{.type = Ev::Tick});
  }

  void try_send(std::size_t p, bool shared) {
    if (sender_.state(p) != PathState::Active) return;
    auto& rq = rtx_queue_[p];
    while (!rq.empty()) {
      if (!sender_.awaiting_retransmission(rq.front().tsn)) {
        rq.pop_front();
        continue;
      }
      if (now_ >= rq.front().send_deadline) {
        abandon_sent(rq.front());
        rq.pop_front();
        continue;
      }
      if (!sender_.has_room(p, rq.front().bytes)) return;
      Chunk c = rq.front();
      rq.pop_front();
      transmit(c, p);
      return;
    }
    auto& q = shared ? shared_queue_ : path_queue_[p];
    while (!q.empty()) {
      if (now_ >= q.front().send_deadline) {
        abandon_unsent(q.front());
        if (!shared) path_queue_bytes_[p] -= q.front().bytes;
        q.pop_front();
        continue;
      }
      if (!sender_.has_room(p, q.front().bytes)) return;
      Chunk c = q.front();
      q.pop_front();
      if (!shared) path_queue_bytes_[p] -= c.bytes;
      transmit(c, p);
      return;
    }
  }

  void transmit(Chunk& c, std::size_t p) {
    const bool retx = c.tsn != 0;
    if (!sender_.on_send(c, p, now_)) throw std::logic_error("send refused after room check");
    if (opts_.check_invariants &&
        static_cast<double>(sender_.outstanding_bytes(p)) > sender_.cc(p).cwnd) {
      violation("outstanding bytes exceed cwnd on path " + std::to_string(links_[p].spec.id));
    }
    log(retx ? EventKind::Retransmit : EventKind::Send, links_[p].spec.id, c.tsn, c.bytes, c.gop_id);
    if (!retx) sent_payload_bytes_ += c.bytes;
    DataPacket pkt;
    pkt.tsn = c.tsn;
    pkt.bytes = c.bytes;
    pkt.gop_id = c.gop_id;
    pkt.path = static_cast<int>(p);
    pkt.original_path = c.original_path;
    pkt.forward_tsn = sender_.forward_tsn();
    pkt.emitted_at = c.emitted_at;
    link_transmit(p, pkt);
  }

  void link_transmit(std::size_t p, DataPacket pkt) {
    auto& l = links_[p];
    copies_sent_ += pkt.bytes;
    const double depth_bytes = std::max(static_cast<double>(sc_.mtu_bytes), capacity(p) * l.spec.queue_limit_ms / 8.0);
    const bool full = l.queue.size() >= l.spec.queue_limit_packets ||
                      static_cast<double>(l.queued_bytes + pkt.bytes) > depth_bytes;
    if (!link_passes(p, l.down) || full) {
      network_lose(p, pkt);
      return;
    }
    const double bdp_bytes = capacity(p) * l.spec.base_rtt_ms / 8.0;
    if (static_cast<double>(l.queued_bytes + pkt.bytes) > opts_.ecn_bdp_fraction * bdp_bytes) pkt.ecn_ce = true;
    l.queued_bytes += pkt.bytes;
    l.queue.push_back(pkt);
    if (!l.busy) start_service(p);
  }

  void network_lose(std::size_t p, const DataPacket& pkt) {
    copies_lost_ += pkt.bytes;
    ++network_drops_;
    log(EventKind::Lose, links_[p].spec.id, pkt.tsn, pkt.bytes, pkt.gop_id);
  }

  void start_service(std::size_t p) {
    auto& l = links_[p];
    l.busy = false;
    if (l.queue.empty()) return;
    const double cap = capacity(p);
    if (!(cap > 0.0)) {
      const double next = l.spec.next_capacity_change(now_);
      if (std::isfinite(next) && !l.wake_pending) {
        l.wake_pending = true;
        put(next, Event{.type = Ev::Wake, .path = p});
      }
      return;
    }
    l.busy = true;
    put(now_ + static_cast<double>(l.queue.front().bytes) * 8.0 / cap, Event{.type = Ev::Departure, .path = p});
  }

  void on_departure(std::size_t p) {
    auto& l = links_[p];
    DataPacket pkt = l.queue.front();
    l.queue.pop_front();
    l.queued_bytes -= pkt.bytes;
    if (!l.spec.available_at(now_)) {
      network_lose(p, pkt);
    } else {
      propagating_ += pkt.bytes;
      put(now_ + l.spec.base_rtt_ms / 2.0, Event{.type = Ev::Arrival, .path = p, .pkt = pkt});
    }
    start_service(p);
  }

  // --- receiver side ----------------------------------------------------
  void on_arrival(const DataPacket& pkt) {
    propagating_ -= pkt.bytes;
    copies_arrived_ += pkt.bytes;
    const auto p = static_cast<std::size_t>(pkt.path);
    log(EventKind::Arrive, links_[p].spec.id, pkt.tsn, pkt.bytes, pkt.gop_id);
    auto res = receiver_on_packet(rs_, pkt, now_);
    for (const auto& d : res.delivered) {
      if (opts_.check_invariants && d.tsn <= last_delivered_) {
        violation("out-of-order delivery of TSN " + std::to_string(d.tsn));
      }
      last_delivered_ = std::max(last_delivered_, d.tsn);
      delivered_bytes_ += d.bytes;
      log(EventKind::Deliver, id_of(d.original_path), d.tsn, d.bytes, d.gop_id);
    }
    if (res.dropped) log(EventKind::Lose, links_[p].spec.id, pkt.tsn, pkt.bytes, pkt.gop_id);

    std::size_t uplink = p;
    if (scheme_.kind == SchemeKind::CmtDa) {
      std::vector<AckPathView> av;
      for (std::size_t q = 0; q < links_.size(); ++q) {
        const auto& st = sender_.stats(q);
        av.push_back({static_cast<int>(q), st.loss_rate, st.rtt_ms, sender_.state(q) == PathState::Active});
      }
      if (std::any_of(av.begin(), av.end(), [](const auto& a) { return a.active; })) {
        uplink = static_cast<std::size_t>(select_ack_path(av));
      }
    }
    res.sack.uplink_path = static_cast<int>(uplink);
    if (link_passes(uplink, links_[uplink].up)) {
      put(now_ + links_[uplink].spec.base_rtt_ms / 2.0,
          Event{.type = Ev::SackArrival, .path = uplink, .sack = std::move(res.sack)});
    }
  }

  // --- sender feedback --------------------------------------------------
  void on_sack(const SackEvent& sack) {
    const auto u = static_cast<std::size_t>(sack.uplink_path);
    log(EventKind::Sack, links_[u].spec.id, sack.cumulative_tsn, 0, 0);
    auto outcome = sender_.process_sack(sack, now_);
    const double one_way = sender_.stats(u).rtt_ms / 2.0;
    for (const auto& c : outcome.acked) monitor_.record(now_ - one_way > c.send_deadline);
    handle_losses(outcome.losses);
  }

  void on_timer(std::size_t p, double deadline) {
    const auto& armed = sender_.cc(p).timer_deadline;
    if (!armed || *armed != deadline) return;
    auto losses = sender_.on_timer(p, now_);
    if (!losses.empty()) ++timeouts_;
    check_states();
    handle_losses(losses);
  }

  void handle_losses(const std::vector<LossNotification>& losses) {
    if (losses.empty()) return;
    std::vector<Chunk> chunks;
    chunks.reserve(losses.size());
    for (const auto& l : losses) chunks.push_back(l.chunk);
    reroute(chunks);
  }

  void reroute(const std::vector<Chunk>& chunks) {
    const auto v = views();
    if (scheme_.kind == SchemeKind::CmtDa) {
      std::vector<RetransmitPathView> rv;
      for (const auto& pv : v) rv.push_back({chunk_delivery_delay(pv, static_cast<std::int64_t>(sc_.mtu_bytes)), pv.state});
      const auto plan = retransmission_decision(chunks, rv, sc_.loss_requirement, monitor_.value(), now_);
      for (const auto& o : plan.orders) rtx_queue_[o.path].push_back(o.chunk);
      for (const auto& c : plan.abandoned) abandon_sent(c);
      return;
    }
    for (const auto& c : chunks) {
      std::optional<std::size_t> p;
      if (now_ < c.send_deadline) {
        p = scheme_.kind == SchemeKind::CmtQa ? fastest_path(v, c.bytes) : lowest_loss_path(v);
      }
      if (p) {
        rtx_queue_[*p].push_back(c);
      } else {
        abandon_sent(c);
      }
    }
  }

  void abandon_sent(const Chunk& c) {
    if (!sender_.awaiting_retransmission(c.tsn)) return;
    sender_.abandon(c.tsn);
    log(EventKind::Abandon, id_of(c.original_path), c.tsn, c.bytes, c.gop_id);
    ++abandoned_chunks_;
    monitor_.record(true);
  }

  void abandon_unsent(const Chunk& c) {
    log(EventKind::Abandon, id_of(c.path), 0, c.bytes, c.gop_id);
    ++abandoned_chunks_;
    monitor_.record(true);
  }

  // --- failure handling -------------------------------------------------
  void check_states() {
    for (std::size_t p = 0; p < links_.size(); ++p) {
      const auto s = sender_.state(p);
      if (s == last_state_[p]) continue;
      const bool was_active = last_state_[p] == PathState::Active;
      last_state_[p] = s;
      if (was_active) {
        for (auto& c : path_queue_[p]) {
          c.path = -1;
          held_.push_back(c);
        }
        path_queue_[p].clear();
        path_queue_bytes_[p] = 0;
        std::vector<Chunk> pending(rtx_queue_[p].begin(), rtx_queue_[p].end());
        rtx_queue_[p].clear();
        std::erase_if(pending, [&](const Chunk& c) { return !sender_.awaiting_retransmission(c.tsn); });
        reroute(pending);
        if (!hb_scheduled_[p]) {
          hb_scheduled_[p] = true;
          put(now_, Event{.type = Ev::Heartbeat, .path = p});
        }
      }
      dispatch_held();
    }
  }

  void on_heartbeat(std::size_t p) {
    hb_scheduled_[p] = false;
    if (sender_.state(p) == PathState::Active) return;
    if (const auto probe = sender_.heartbeat_check(p, now_)) {
      if (capacity(p) > 0.0 && link_passes(p, links_[p].down)) {
        put(now_ + links_[p].spec.base_rtt_ms / 2.0,
            Event{.type = Ev::HeartbeatEcho, .path = p, .id = probe->id});
      }
    }
    hb_scheduled_[p] = true;
    put(std::max(sender_.next_heartbeat_at(p), now_), Event{.type = Ev::Heartbeat, .path = p});
  }

  void sync_timers() {
    for (std::size_t p = 0; p < links_.size(); ++p) {
      const auto& d = sender_.cc(p).timer_deadline;
      if (d && (!scheduled_timer_[p] || *scheduled_timer_[p] != *d)) {
        put(*d, Event{.type = Ev::Timer, .path = p, .aux = *d});
      }
      scheduled_timer_[p] = d;
    }
  }

  // --- invariants -------------------------------------------------------
  void violation(const std::string& what) {
    ++inv_.violation_count;
    if (inv_.violations.size() < kMaxReportedViolations) {
      std::ostringstream os;
      os << "t=" << now_ << " " << what;
      inv_.violations.push_back(os.str());
    }
  }

  std::int64_t in_network() const {
    std::int64_t b = propagating_;
    for (const auto& l : links_) b += l.queued_bytes;
    return b;
  }

  void audit() {
    ++inv_.events_checked;
    if (const auto msg = sender_.audit(); !msg.empty()) violation(msg);
    if (rs_.buffered_bytes > rs_.buffer_capacity) violation("receiver buffer over capacity");
    if (copies_sent_ != copies_lost_ + copies_arrived_ + in_network()) {
      violation("copy bytes not conserved: sent " + std::to_string(copies_sent_) + " != lost " +
                std::to_string(copies_lost_) + " + arrived " + std::to_string(copies_arrived_) +
                " + in network " + std::to_string(in_network()));
    }
    if (sender_.sent_unique_bytes() !=
        sender_.acked_bytes() + sender_.abandoned_bytes() + sender_.unresolved_bytes()) {
      violation("payload bytes not conserved at the sender");
    }
    if (sender_.acked_bytes() > delivered_bytes_ + rs_.buffered_bytes) {
      violation("sender holds acks for bytes the receiver never accepted");
    }
  }

  void final_audit(const MetricsReport& r) {
    std::unordered_set<std::uint32_t> arrived, delivered, abandoned;
    std::unordered_map<std::uint32_t, std::int64_t> sent;
    for (const auto& e : trace_) {
      switch (e.kind) {
        case EventKind::Send: sent[e.tsn] = e.bytes; break;
        case EventKind::Arrive: arrived.insert(e.tsn); break;
        case EventKind::Deliver:
          if (!arrived.contains(e.tsn)) violation("delivery of TSN " + std::to_string(e.tsn) + " without arrival");
          if (!delivered.insert(e.tsn).second) violation("TSN " + std::to_string(e.tsn) + " delivered twice");
          break;
        case EventKind::Abandon:
          if (e.tsn != 0) abandoned.insert(e.tsn);
          break;
        default: break;
      }
    }
    std::int64_t d = 0, a = 0, f = 0, total = 0;
    for (const auto& [tsn, bytes] : sent) {
      total += bytes;
      if (delivered.contains(tsn)) {
        d += bytes;
      } else if (abandoned.contains(tsn)) {
        a += bytes;
      } else {
        f += bytes;
      }
    }
    if (d != delivered_bytes_) violation("delivered payload differs between trace and receiver");
    if (d + a + f != r.sent_payload_bytes) violation("payload partition does not sum to sent bytes");
    if (copies_sent_ != copies_lost_ + copies_arrived_ + in_network()) violation("copy bytes not conserved at end");
    const double good = r.goodput_kbps * sc_.duration_ms / 8.0;
    if (good > static_cast<double>(delivered_bytes_) + 1e-6 || delivered_bytes_ > sent_payload_bytes_) {
      violation("goodput exceeds throughput");
    }
  }

  // --- report -----------------------------------------------------------
  MetricsReport finish() {
    MetricsReport r;
    r.scenario = sc_.name;
    r.scheme = to_string(scheme_.kind);
    r.seed = sc_.seed;
    r.duration_ms = sc_.duration_ms;
    r.deadline_ms = sc_.deadline_ms;
    const auto gops = gop_losses(trace_, sc_.deadline_ms, sc_.interval_ms);
    const auto ps = psnr_series(gops, sc_.video.params);
    r.psnr_db = ps.psnr_db;
    r.psnr = ps.summary;
    for (const auto& p : links_) r.path_ids.push_back(p.spec.id);
    for (const auto& g : gops) {
      r.gop_times_ms.push_back(g.emitted_at);
      r.gop_effective_loss.push_back(g.effective_loss);
      std::vector<double> share(links_.size(), 0.0);
      double total = 0.0;
      for (std::size_t i = 0; i < g.path_ids.size(); ++i) {
        if (g.path_ids[i] != 0) total += g.rates_kbps[i];
      }
      for (std::size_t i = 0; i < g.path_ids.size(); ++i) {
        for (std::size_t p = 0; p < links_.size(); ++p) {
          if (links_[p].spec.id == g.path_ids[i] && total > 0.0) share[p] = g.rates_kbps[i] / total;
        }
      }
      r.rate_shares.push_back(std::move(share));
    }
    r.goodput_kbps = goodput_kbps(trace_, sc_.deadline_ms, sc_.duration_ms);
    r.offered_kbps = static_cast<double>(emitted_bytes_) * 8.0 / sc_.duration_ms;
    r.effective_loss = effective_loss(trace_, sc_.deadline_ms);
    r.path_effective_loss = per_path_effective_loss(gops);
    auto ipd = inter_packet_delays(trace_, 1.0, sc_.deadline_ms);
    r.inter_packet_delays_ms = std::move(ipd.samples);
    r.ipd_cdf = std::move(ipd.cdf);
    r.mean_ipd_ms = mean_ci(r.inter_packet_delays_ms).mean;
    auto oo = out_of_order_offsets(trace_);
    r.oo_offsets = std::move(oo.offsets);
    r.max_oo_offset = oo.max;
    r.retransmissions = retransmission_counts(trace_, sc_.deadline_ms);
    r.goodput_series = goodput_series(trace_, sc_.deadline_ms, sc_.duration_ms);
    r.timeouts = timeouts_;
    r.abandoned_chunks = abandoned_chunks_;
    r.network_drops = network_drops_;
    r.receiver_blocked_drops = rs_.blocked_drops;
    r.sent_payload_bytes = sent_payload_bytes_;
    r.sent_copy_bytes = copies_sent_;
    r.delivered_bytes = delivered_bytes_;
    if (opts_.check_invariants) final_audit(r);
    r.invariants = inv_;
    r.trace = std::move(trace_);
    return r;
  }

  const Scenario& sc_;
  SchedulerScheme scheme_;
  SimOptions opts_;
  Sender sender_;
  ReceiverState rs_;
  std::vector<Link> links_;
  std::map<std::pair<double, std::uint64_t>, Event> queue_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  double end_time_ = 0.0;
  AllocationRequest req_;

  std::vector<std::deque<Chunk>> path_queue_;
  std::vector<std::int64_t> path_queue_bytes_;
  std::vector<std::deque<Chunk>> rtx_queue_;
  std::deque<Chunk> shared_queue_;
  std::deque<Chunk> held_;
  std::vector<double> prev_rate_;
  std::vector<std::optional<double>> scheduled_timer_;
  std::vector<bool> hb_scheduled_;
  std::vector<PathState> last_state_;
  EffectiveLossMonitor monitor_;
  std::size_t rr_ = 0;

  Trace trace_;
  std::uint32_t last_delivered_ = 0;
  std::int64_t emitted_bytes_ = 0;
  std::int64_t sent_payload_bytes_ = 0;
  std::int64_t delivered_bytes_ = 0;
  std::int64_t copies_sent_ = 0;
  std::int64_t copies_lost_ = 0;
  std::int64_t copies_arrived_ = 0;
  std::int64_t propagating_ = 0;
  std::size_t timeouts_ = 0;
  std::size_t abandoned_chunks_ = 0;
  std::size_t network_drops_ = 0;
  InvariantReport inv_;
};

}  // namespace

MetricsReport run(const Scenario& scenario, const SchedulerScheme& scheme, const SimOptions& opts) {
  scenario.validate();
  scheme.allocator.validate();
  Simulation sim(scenario, scheme, opts);
  return sim.run();
}

}  // namespace cmtda
