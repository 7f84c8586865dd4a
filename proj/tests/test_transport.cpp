#include <doctest.h>

#include <vector>

#include "cmtda/transport.hpp"

using namespace cmtda;

namespace {

Chunk chunk(std::int64_t bytes, double deadline = 1e9) {
  Chunk c;
  c.bytes = bytes;
  c.send_deadline = deadline;
  return c;
}

SackEvent sack(std::uint32_t cum, std::vector<GapBlock> gaps = {}) {
  SackEvent s;
  s.cumulative_tsn = cum;
  s.gap_blocks = std::move(gaps);
  return s;
}

TransportConfig roomy() {
  TransportConfig cfg;
  cfg.initial_cwnd = 30000.0;
  return cfg;
}

}  // namespace

TEST_CASE("timeout response") {
  PathCongestionController cc;
  cc.cwnd = 12000;
  cc.rto_ms = 1000;
  auto t = on_timeout(cc, 1500);
  CHECK(t.ssthresh == 6000);
  CHECK(t.cwnd == 1500);
  CHECK(t.rto_ms == 2000);
  CHECK(t.mode == CcMode::SlowStart);
  cc.cwnd = 3000;
  CHECK(on_timeout(cc, 1500).ssthresh == 4500);
  cc.rto_ms = 50000;
  CHECK(on_timeout(cc, 1500).rto_ms == RttEstimator::kMaxRtoMs);
}

TEST_CASE("duplicate-SACK response needs an ECN mark") {
  PathCongestionController cc;
  cc.cwnd = 12000;
  cc.ecn_seen = true;
  auto r = on_dup_sacks(cc, 1500);
  CHECK(r.cwnd == 6000);
  CHECK(r.ssthresh == 6000);
  CHECK_FALSE(r.ecn_seen);
  cc.cwnd = 2000;
  CHECK(on_dup_sacks(cc, 1500).cwnd == 4500);
  cc.ecn_seen = false;
  cc.cwnd = 12000;
  const auto same = on_dup_sacks(cc, 1500);
  CHECK(same.cwnd == 12000);
  CHECK(same.ssthresh == cc.ssthresh);
}

TEST_CASE("timer discipline on send and ack") {
  Sender s(2, roomy());
  auto a = chunk(1000), b = chunk(1000);
  REQUIRE(s.on_send(a, 0, 10.0));
  REQUIRE(s.timer_armed(0));
  CHECK_FALSE(s.timer_armed(1));
  const double first = *s.cc(0).timer_deadline;
  CHECK(first == doctest::Approx(10.0 + s.cc(0).rto_ms));
  REQUIRE(s.on_send(b, 0, 50.0));
  CHECK(*s.cc(0).timer_deadline == first);
  CHECK(a.tsn == 1);
  CHECK(b.tsn == 2);

  const auto out = s.process_sack(sack(2), 120.0);
  CHECK(out.acked.size() == 2);
  CHECK_FALSE(s.timer_armed(0));
  CHECK(s.outstanding_bytes(0) == 0);
  CHECK(s.stats(0).rtt_ms == doctest::Approx(70.0));
  CHECK(s.audit().empty());
}

TEST_CASE("retransmission restarts the timer and skips the RTT sample") {
  Sender s(1, roomy());
  auto a = chunk(1000), b = chunk(1000);
  s.on_send(a, 0, 0.0);
  s.on_send(b, 0, 0.0);
  const auto lost = s.on_timer(0, 1000.0);
  REQUIRE(lost.size() == 2);
  CHECK(lost[0].cause == LossCause::Timeout);
  CHECK(s.awaiting_retransmission(1));
  CHECK(s.cc(0).cwnd == 1500);
  Chunk again = lost[0].chunk;
  REQUIRE(s.on_send(again, 0, 1500.0));
  CHECK(again.retransmit_count == 1);
  CHECK(*s.cc(0).timer_deadline == doctest::Approx(1500.0 + s.cc(0).rto_ms));
  const double rtt_before = s.stats(0).rtt_ms;
  s.process_sack(sack(1), 1600.0);
  CHECK(s.stats(0).rtt_ms == rtt_before);
}

TEST_CASE("a TSN reported missing four times is lost") {
  Sender s(1, roomy());
  for (int i = 0; i < 6; ++i) {
    auto c = chunk(1000);
    s.on_send(c, 0, 0.0);
  }
  for (std::uint32_t end = 2; end <= 4; ++end) {
    const auto out = s.process_sack(sack(0, {{2, end}}), 10.0 * end);
    CHECK(out.losses.empty());
  }
  const auto out = s.process_sack(sack(0, {{2, 5}}), 50.0);
  REQUIRE(out.losses.size() == 1);
  CHECK(out.losses[0].chunk.tsn == 1);
  CHECK(out.losses[0].cause == LossCause::MissingReports);
  CHECK(s.pending_losses() == 1);
  CHECK(s.audit().empty());
}

TEST_CASE("missing reports count only later acks on the same path") {
  Sender s(2, roomy());
  auto a = chunk(1000), b = chunk(1000);
  s.on_send(a, 0, 0.0);  // TSN 1 on path 0
  s.on_send(b, 1, 0.0);  // TSN 2 on path 1
  for (int t = 3; t <= 8; ++t) {
    auto c = chunk(1000);
    s.on_send(c, 1, 0.0);
  }
  for (std::uint32_t end = 2; end <= 8; ++end) s.process_sack(sack(0, {{2, end}}), 10.0 * end);
  CHECK_FALSE(s.awaiting_retransmission(1));
  CHECK(s.outstanding_count(0) == 1);
}

TEST_CASE("slow start grows by the acked bytes when the window is full") {
  Sender s(1, TransportConfig{});
  auto a = chunk(1500), b = chunk(1500);
  s.on_send(a, 0, 0.0);
  s.on_send(b, 0, 0.0);
  CHECK_FALSE(s.has_room(0, 1500));
  const double before = s.cc(0).cwnd;
  s.process_sack(sack(2), 100.0);
  CHECK(s.cc(0).cwnd == doctest::Approx(before + 3000));
}

TEST_CASE("an under-used window does not grow") {
  Sender s(1, roomy());
  auto a = chunk(1000);
  s.on_send(a, 0, 0.0);
  const double before = s.cc(0).cwnd;
  s.process_sack(sack(1), 100.0);
  CHECK(s.cc(0).cwnd == before);
}

TEST_CASE("malformed SACKs are ignored") {
  Sender s(1, roomy());
  auto a = chunk(1000);
  s.on_send(a, 0, 0.0);
  CHECK(s.process_sack(sack(5), 1.0).ignored);
  CHECK(s.process_sack(sack(0, {{3, 2}}), 1.0).ignored);
  CHECK(s.process_sack(sack(0, {{1, 9}}), 1.0).ignored);
  CHECK(s.unknown_feedback() == 3);
  CHECK(s.outstanding_count(0) == 1);
}

TEST_CASE("expired in-flight chunks release the ack point and feed back as losses") {
  Sender s(1, roomy());
  for (int i = 0; i < 3; ++i) {
    auto c = chunk(1000, 100.0);
    s.on_send(c, 0, 0.0);
  }
  CHECK(s.forward_tsn() == 0);
  CHECK(s.expire(50.0).empty());
  const auto gone = s.expire(150.0);
  CHECK(gone.size() == 3);
  CHECK(s.forward_tsn() == 3);
  CHECK(s.abandoned_bytes() == 3000);
  CHECK(s.unresolved_bytes() == 0);
  CHECK(s.outstanding_count(0) == 3);

  SackEvent ev = sack(3);
  ev.skipped_blocks = {{1, 2}};
  const auto out = s.process_sack(ev, 160.0);
  CHECK(out.losses.empty());
  CHECK(out.acked.empty());
  CHECK(s.acked_bytes() == 0);
  CHECK(s.outstanding_count(0) == 0);
  CHECK_FALSE(s.timer_armed(0));
  CHECK(s.audit().empty());
}

TEST_CASE("abandoning a lost chunk advances the forward point") {
  Sender s(1, roomy());
  auto a = chunk(1000), b = chunk(1000);
  s.on_send(a, 0, 0.0);
  s.on_send(b, 0, 0.0);
  s.on_timer(0, 5000.0);
  CHECK_NOTHROW(s.abandon(99));
  s.abandon(1);
  CHECK(s.forward_tsn() == 1);
  s.abandon(2);
  CHECK(s.forward_tsn() == 2);
}

TEST_CASE("failed paths probe with exponential backoff and restart") {
  TransportConfig cfg = roomy();
  cfg.pf_on_timeout = true;
  cfg.restart_cwnd_mtus = 2.0;
  Sender s(1, cfg);
  auto a = chunk(1000);
  s.on_send(a, 0, 0.0);
  s.on_timer(0, 1000.0);
  REQUIRE(s.state(0) == PathState::PotentiallyFailed);
  const double base = s.cc(0).rto_ms;
  auto p1 = s.heartbeat_check(0, 1000.0);
  REQUIRE(p1);
  CHECK(p1->next_probe_at == doctest::Approx(1000.0 + base));
  CHECK_FALSE(s.heartbeat_check(0, 1000.0 + base / 2));
  auto p2 = s.heartbeat_check(0, p1->next_probe_at);
  REQUIRE(p2);
  CHECK(p2->next_probe_at - p2->sent_at == doctest::Approx(2.0 * base));
  auto p3 = s.heartbeat_check(0, p2->next_probe_at);
  CHECK(p3->next_probe_at - p3->sent_at == doctest::Approx(4.0 * base));
  CHECK_FALSE(s.on_heartbeat_ack(0, p1->id, p3->sent_at + 10));
  CHECK(s.on_heartbeat_ack(0, p3->id, p3->sent_at + 10));
  CHECK(s.state(0) == PathState::Active);
  CHECK(s.cc(0).cwnd == 3000);
}

TEST_CASE("without PF a path turns inactive after repeated timeouts") {
  TransportConfig cfg = roomy();
  cfg.max_path_retransmissions = 3;
  Sender s(1, cfg);
  double now = 0.0;
  for (int k = 0; k < 3; ++k) {
    CHECK(s.state(0) == PathState::Active);
    if (k == 0) {
      auto c = chunk(1000);
      s.on_send(c, 0, now);
    } else {
      Chunk c = chunk(1000);
      c.tsn = 1;
      s.on_send(c, 0, now);
    }
    now = *s.cc(0).timer_deadline;
    s.on_timer(0, now);
  }
  CHECK(s.state(0) == PathState::Inactive);
}

TEST_CASE("retransmission decision") {
  std::vector<RetransmitPathView> paths{{40.0, PathState::Active}, {90.0, PathState::Active}};
  Chunk c = chunk(1000, 160.0);
  c.tsn = 7;
  std::vector<Chunk> lost{c};
  auto plan = retransmission_decision(lost, paths, 0.01, 0.05, 100.0);
  REQUIRE(plan.orders.size() == 1);
  CHECK(plan.orders[0].path == 0);
  CHECK(plan.abandoned.empty());

  plan = retransmission_decision(lost, paths, 0.01, 0.005, 100.0);
  CHECK(plan.orders.empty());

  lost[0].send_deadline = 110.0;
  plan = retransmission_decision(lost, paths, 0.01, 0.05, 100.0);
  CHECK(plan.orders.empty());
  CHECK(plan.abandoned.size() == 1);

  std::vector<RetransmitPathView> failed{{40.0, PathState::PotentiallyFailed}};
  lost[0].send_deadline = 1e9;
  plan = retransmission_decision(lost, failed, 0.01, 0.05, 100.0);
  CHECK(plan.abandoned.size() == 1);
}

TEST_CASE("ack path selection") {
  std::vector<AckPathView> a{{1, 0.02, 100.0}, {2, 0.06, 40.0}};
  CHECK(select_ack_path(a) == 1);
  std::vector<AckPathView> b{{1, 0.02, 80.0}, {2, 0.02, 40.0}};
  CHECK(select_ack_path(b) == 2);
  std::vector<AckPathView> c{{4, 0.3, 80.0}};
  CHECK(select_ack_path(c) == 4);
  std::vector<AckPathView> d{{1, 0.0, 10.0, false}, {2, 0.5, 90.0}};
  CHECK(select_ack_path(d) == 2);
  std::vector<AckPathView> none{{1, 0.0, 10.0, false}};
  CHECK_THROWS(select_ack_path(none));
}

TEST_CASE("effective loss monitor is a sliding window") {
  EffectiveLossMonitor m(4);
  CHECK(m.value() == 0.0);
  m.record(true);
  m.record(false);
  CHECK(m.value() == 0.5);
  for (int i = 0; i < 4; ++i) m.record(false);
  CHECK(m.value() == 0.0);
}

TEST_CASE("receiver reorders and delivers in TSN order") {
  ReceiverState rs;
  DataPacket p;
  p.bytes = 1000;
  p.tsn = 1;
  auto r = receiver_on_packet(rs, p, 1.0);
  CHECK(r.delivered.size() == 1);
  p.tsn = 2;
  r = receiver_on_packet(rs, p, 2.0);
  CHECK(*r.oo_offset == 1);
  CHECK(r.delivered.size() == 1);

  p.tsn = 5;
  r = receiver_on_packet(rs, p, 3.0);
  CHECK(*r.oo_offset == 3);
  CHECK(r.delivered.empty());
  CHECK(r.sack.cumulative_tsn == 2);
  CHECK(r.sack.gap_blocks == std::vector<GapBlock>{{5, 5}});

  p.tsn = 3;
  r = receiver_on_packet(rs, p, 4.0);
  CHECK(r.delivered.size() == 1);
  p.tsn = 4;
  r = receiver_on_packet(rs, p, 5.0);
  REQUIRE(r.delivered.size() == 2);
  CHECK(r.delivered[0].tsn == 4);
  CHECK(r.delivered[1].tsn == 5);
  CHECK(r.sack.cumulative_tsn == 5);
  CHECK(r.sack.gap_blocks.empty());

  r = receiver_on_packet(rs, p, 6.0);
  CHECK(r.duplicate);
  CHECK(r.sack.cumulative_tsn == 5);
  CHECK(rs.buffered_bytes == 0);
}

TEST_CASE("receiver gap blocks and buffer limit") {
  ReceiverState rs(2500);
  DataPacket p;
  p.bytes = 1000;
  for (std::uint32_t t : {3u, 4u, 7u}) {
    p.tsn = t;
    receiver_on_packet(rs, p, 0.0);
  }
  CHECK(rs.blocked_drops == 1);
  CHECK(gap_blocks(rs) == std::vector<GapBlock>{{3, 4}});
  p.tsn = 1;
  const auto r = receiver_on_packet(rs, p, 1.0);
  CHECK_FALSE(r.dropped);
  CHECK(r.sack.cumulative_tsn == 1);
}

TEST_CASE("forward TSN skips missing chunks and reports the ranges") {
  ReceiverState rs;
  DataPacket p;
  p.bytes = 1000;
  p.tsn = 3;
  receiver_on_packet(rs, p, 0.0);
  p.tsn = 6;
  p.forward_tsn = 4;
  const auto r = receiver_on_packet(rs, p, 1.0);
  CHECK(r.sack.cumulative_tsn == 4);
  CHECK(r.sack.skipped_blocks == std::vector<GapBlock>{{1, 2}, {4, 4}});
  CHECK(rs.skipped_tsns == 3);
  REQUIRE(r.delivered.size() == 1);
  CHECK(r.delivered[0].tsn == 3);
  CHECK(r.sack.gap_blocks == std::vector<GapBlock>{{6, 6}});
  CHECK_THROWS(receiver_on_packet(rs, DataPacket{}, 2.0));
}
