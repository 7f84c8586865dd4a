#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "cmtda/metrics.hpp"
#include "cmtda/rng.hpp"
#include "cmtda/trace.hpp"

using namespace cmtda;

namespace {

EventRecord ev(double t, EventKind k, int path, std::uint32_t tsn, std::int64_t bytes, std::uint32_t gop) {
  return {t, k, path, tsn, bytes, gop};
}

// One GoP of four 1000-byte chunks at t=0: TSN 1,3 on path 1, TSN 2,4 on path 2.
// TSN 4 is delivered after the 250 ms deadline, TSN 2 is lost once and retransmitted.
Trace two_path_trace() {
  using K = EventKind;
  return {
      ev(0, K::Emit, 0, 0, 4000, 0),     ev(0, K::Send, 1, 1, 1000, 0),
      ev(0, K::Send, 2, 2, 1000, 0),     ev(5, K::Send, 1, 3, 1000, 0),
      ev(5, K::Send, 2, 4, 1000, 0),     ev(40, K::Arrive, 1, 1, 1000, 0),
      ev(40, K::Deliver, 1, 1, 1000, 0), ev(45, K::Arrive, 1, 3, 1000, 0),
      ev(60, K::Lose, 2, 2, 1000, 0),    ev(90, K::Retransmit, 1, 2, 1000, 0),
      ev(130, K::Arrive, 1, 2, 1000, 0), ev(130, K::Deliver, 2, 2, 1000, 0),
      ev(130, K::Deliver, 1, 3, 1000, 0), ev(300, K::Arrive, 2, 4, 1000, 0),
      ev(300, K::Deliver, 2, 4, 1000, 0),
  };
}

}  // namespace

TEST_CASE("mean and confidence interval") {
  std::vector<double> same{3, 3, 3, 3};
  auto m = mean_ci(same);
  CHECK(m.mean == 3);
  CHECK(m.half_width == 0);
  std::vector<double> v{1, 2, 3, 4};
  m = mean_ci(v);
  CHECK(m.mean == 2.5);
  CHECK(m.half_width == doctest::Approx(1.96 * std::sqrt(5.0 / 3.0) / 2.0));
  std::vector<double> one{7};
  CHECK(mean_ci(one).half_width == 0);
  CHECK(mean_ci({}).n == 0);
}

TEST_CASE("goodput and effective loss") {
  const auto t = two_path_trace();
  CHECK(goodput_kbps(t, 250, 1000) == doctest::Approx(3000 * 8.0 / 1000));
  CHECK(goodput_kbps(t, 1e9, 1000) == doctest::Approx(4000 * 8.0 / 1000));
  CHECK(effective_loss(t, 250) == doctest::Approx(0.25));
  CHECK(effective_loss(t, 1e9) == doctest::Approx(0.0));
  CHECK(effective_loss({}, 250) == 0.0);
  CHECK(goodput_kbps({}, 250, 1000) == 0.0);
  CHECK_THROWS(goodput_kbps(t, 250, 0));

  Trace nothing{ev(0, EventKind::Emit, 0, 0, 5000, 0)};
  CHECK(effective_loss(nothing, 250) == 1.0);
}

TEST_CASE("effective loss agrees with an event-counting oracle on random traces") {
  Rng rng(41);
  for (int k = 0; k < 50; ++k) {
    Trace t;
    std::int64_t emitted = 0, good = 0;
    std::uint32_t tsn = 1;
    for (std::uint32_t g = 0; g < 10; ++g) {
      const double at = g * 250.0;
      const int n = 1 + static_cast<int>(rng.next() % 8);
      t.push_back(ev(at, EventKind::Emit, 0, 0, n * 1000, g));
      emitted += n * 1000;
      for (int i = 0; i < n; ++i, ++tsn) {
        const double delay = rng.uniform(10, 500);
        if (rng.uniform() < 0.2) continue;  // never delivered
        t.push_back(ev(at + delay, EventKind::Deliver, 1, tsn, 1000, g));
        if (delay <= 250) good += 1000;
      }
    }
    CHECK(effective_loss(t, 250) == doctest::Approx(1.0 - static_cast<double>(good) / emitted));
  }
}

TEST_CASE("inter-packet delays") {
  Trace paced{ev(0, EventKind::Emit, 0, 0, 5000, 0)};
  for (int i = 0; i < 5; ++i) paced.push_back(ev(10 + 5 * i, EventKind::Deliver, 1, i + 1, 1000, 0));
  const auto d = inter_packet_delays(paced);
  REQUIRE(d.samples.size() == 4);
  for (double s : d.samples) CHECK(s == 5.0);
  CHECK(d.cdf.back().second == 1.0);

  Trace single{ev(0, EventKind::Emit, 0, 0, 1, 0), ev(3, EventKind::Deliver, 1, 1, 1, 0)};
  CHECK(inter_packet_delays(single).samples.empty());

  const auto t = two_path_trace();
  CHECK(inter_packet_delays(t).samples == std::vector<double>{90, 0, 170});
  CHECK(inter_packet_delays(t, 1.0, 250).samples == std::vector<double>{90, 0});

  std::vector<double> s{3, 7, 21, 20, 19, 40};
  const auto cdf = empirical_cdf(s, 1.0);
  CHECK(cdf[20].first == 20.0);
  CHECK(cdf[20].second == doctest::Approx(4.0 / 6.0));
  CHECK(cdf.front().second == 0.0);
}

TEST_CASE("out-of-order offsets") {
  Trace inorder;
  for (int i = 1; i <= 5; ++i) inorder.push_back(ev(i, EventKind::Arrive, 1, i, 1, 0));
  const auto a = out_of_order_offsets(inorder);
  for (auto o : a.offsets) CHECK(o == 1);
  CHECK(a.max == 1);

  Trace one{ev(0, EventKind::Arrive, 1, 1, 1, 0)};
  CHECK(out_of_order_offsets(one).offsets.empty());
  CHECK(out_of_order_offsets(one).max == 0);

  // Arrivals 1,3,2,4 from the two-path trace; TSN 2 is the retransmitted copy.
  const auto b = out_of_order_offsets(two_path_trace());
  CHECK(b.offsets == std::vector<std::int64_t>{2, -1, 2});
  CHECK(b.max == 2);
  CHECK(b.histogram.at(2) == 2);
}

TEST_CASE("per-GoP losses are attributed to the first path") {
  const auto gops = gop_losses(two_path_trace(), 250, 250);
  REQUIRE(gops.size() == 1);
  const auto& g = gops[0];
  CHECK(g.encoding_rate_kbps == doctest::Approx(4000 * 8.0 / 250));
  REQUIRE(g.path_ids == std::vector<int>{1, 2});
  CHECK(g.losses[0] == doctest::Approx(0.0));
  CHECK(g.losses[1] == doctest::Approx(0.5));
  CHECK(g.effective_loss == doctest::Approx(0.25));
  const auto pp = per_path_effective_loss(gops);
  CHECK(pp.at(1) == doctest::Approx(0.0));
  CHECK(pp.at(2) == doctest::Approx(0.5));

  Trace unsent{ev(0, EventKind::Emit, 0, 0, 2000, 0), ev(0, EventKind::Send, 1, 1, 1000, 0)};
  const auto u = gop_losses(unsent, 250, 250);
  CHECK(u[0].path_ids == std::vector<int>{0, 1});
  CHECK(per_path_effective_loss(u).count(0) == 0);
}

TEST_CASE("psnr series") {
  const DistortionParams p{1.0, 1000.0, 0.0, 50.0};
  std::vector<GopLoss> gops(3);
  for (auto& g : gops) {
    g.encoding_rate_kbps = 1000;
    g.path_ids = {1};
    g.rates_kbps = {1000};
    g.losses = {0.0};
  }
  auto s = psnr_series(gops, p);
  REQUIRE(s.psnr_db.size() == 3);
  for (double v : s.psnr_db) CHECK(v == doctest::Approx(psnr_from_mse(2.0)));
  CHECK(s.summary.half_width == 0.0);

  gops[1].losses = {0.1};
  s = psnr_series(gops, p);
  const double lossy = psnr_from_mse(2.0 + 5.0);
  CHECK(s.psnr_db[1] == doctest::Approx(lossy));
  std::vector<double> direct{psnr_from_mse(2.0), lossy, psnr_from_mse(2.0)};
  CHECK(s.summary.mean == doctest::Approx(mean_ci(direct).mean));
  CHECK(s.summary.half_width == doctest::Approx(mean_ci(direct).half_width));
}

TEST_CASE("retransmission counts") {
  const auto r = retransmission_counts(two_path_trace(), 250);
  CHECK(r.total == 1);
  CHECK(r.effective == 1);
  CHECK(retransmission_counts(two_path_trace(), 100).effective == 0);
}

TEST_CASE("goodput series and moving average") {
  const auto s = goodput_series(two_path_trace(), 250, 500, 100);
  REQUIRE(s.size() == 5);
  CHECK(s[0].second == doctest::Approx(1000 * 8.0 / 100));
  CHECK(s[1].second == doctest::Approx(2000 * 8.0 / 100));
  CHECK(s[3].second == 0.0);

  Series c{{0, 5}, {100, 5}, {200, 5}};
  for (const auto& [x, y] : moving_average(c, 250)) CHECK(y == 5.0);
  Series ramp;
  for (int i = 0; i < 10; ++i) ramp.emplace_back(i * 100.0, i);
  const auto m = moving_average(ramp, 300);
  for (std::size_t i = 0; i < ramp.size(); ++i) {
    double sum = 0;
    int n = 0;
    for (std::size_t j = 0; j <= i; ++j) {
      if (ramp[j].first > ramp[i].first - 300) {
        sum += ramp[j].second;
        ++n;
      }
    }
    CHECK(m[i].second == doctest::Approx(sum / n));
  }
  CHECK_THROWS(moving_average(ramp, 0));
}

TEST_CASE("trace csv round trip") {
  const auto t = two_path_trace();
  std::stringstream ss;
  write_trace_csv(ss, t);
  CHECK(read_trace_csv(ss) == t);
  for (auto k : {EventKind::Emit, EventKind::Send, EventKind::Retransmit, EventKind::Arrive, EventKind::Deliver,
                 EventKind::Lose, EventKind::Abandon, EventKind::Sack}) {
    CHECK(parse_event_kind(to_string(k)) == k);
  }
  CHECK_THROWS(parse_event_kind("bogus"));
}
