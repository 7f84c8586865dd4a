#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "cmtda/allocator.hpp"
#include "cmtda/rng.hpp"

using namespace cmtda;

namespace {

PathStatus path(int id, double mu, double rtt, double loss, double burst = 10.0) {
  PathStatus p;
  p.id = id;
  p.mu_kbps = mu;
  p.rtt_ms = rtt;
  p.loss_rate = loss;
  p.nu_obs_kbps = mu;
  p.mean_burst_ms = burst;
  return p;
}

}  // namespace

TEST_CASE("initial allocation is proportional and clipped") {
  std::vector<double> a{600, 300};
  auto r = initial_allocation(900, a);
  CHECK(r[0] == doctest::Approx(600));
  CHECK(r[1] == doctest::Approx(300));
  std::vector<double> b{1000, 1000};
  r = initial_allocation(500, b);
  CHECK(r[0] == doctest::Approx(250));
  CHECK(r[1] == doctest::Approx(250));
  std::vector<double> t2{300, 1200, 500};
  r = initial_allocation(1000, t2);
  CHECK(r[0] == doctest::Approx(150));
  CHECK(r[1] == doctest::Approx(600));
  CHECK(r[2] == doctest::Approx(250));
  std::vector<double> zero{0, 0};
  CHECK_THROWS(initial_allocation(100, zero));
}

TEST_CASE("initial allocation property: sums to the target and respects capacity") {
  Rng rng(31);
  for (int k = 0; k < 300; ++k) {
    const std::size_t n = 1 + rng.next() % 5;
    std::vector<double> mus(n);
    for (auto& m : mus) m = rng.uniform() < 0.2 ? 0.0 : rng.uniform(10.0, 3000.0);
    const double total = std::accumulate(mus.begin(), mus.end(), 0.0);
    if (total <= 0.0) continue;
    const double target = rng.uniform(0.01, 0.999) * total;
    const auto r = initial_allocation(target, mus);
    CHECK(std::accumulate(r.begin(), r.end(), 0.0) == doctest::Approx(target).epsilon(1e-9));
    for (std::size_t i = 0; i < n; ++i) CHECK(r[i] <= mus[i] * (1 + 1e-12) + 1e-9);
  }
}

TEST_CASE("load imbalance") {
  std::vector<double> rates{500, 100}, mus{800, 200}, losses{0, 0};
  auto l = load_imbalance(rates, mus, losses);
  CHECK(l[0] == doctest::Approx(1.5));
  CHECK(l[1] == doctest::Approx(0.5));
  std::vector<double> r2{100, 200, 300}, m2{200, 300, 400}, z{0, 0, 0};
  for (double v : load_imbalance(r2, m2, z)) CHECK(v == doctest::Approx(1.0));
  std::vector<double> full{800, 200};
  CHECK_THROWS_AS(load_imbalance(full, mus, losses), SaturatedSystem);
}

TEST_CASE("piecewise-linear approximation") {
  auto lin = build_pwl([](double x) { return 3.0 * x + 1.0; }, 0.0, 10.0, 8);
  CHECK(lin.turning_points.empty());
  for (double s : lin.slopes) CHECK(s == doctest::Approx(3.0));
  CHECK(lin.eval(4.3) == doctest::Approx(13.9));
  CHECK(transition_utility(lin, 2.0, 1.5) == doctest::Approx(3.0));

  auto sq = [](double x) { return x * x; };
  auto cvx = build_pwl(sq, 0.0, 4.0, 4);
  CHECK(cvx.turning_points.empty());
  for (std::size_t k = 0; k < cvx.breakpoints.size(); ++k) {
    CHECK(cvx.eval(cvx.breakpoints[k]) == doctest::Approx(sq(cvx.breakpoints[k])));
  }
  for (double x = 0.0; x <= 4.0; x += 0.1) {
    CHECK(cvx.eval_max_of_lines(x) <= cvx.eval(x) + 1e-12);
    CHECK(cvx.eval(x) >= sq(x) - 1e-12);
    CHECK(cvx.eval(x) - sq(x) <= 0.25 + 1e-12);  // chord gap of x^2 over width 1
  }
  CHECK(transition_utility(cvx, 1.0, 1.0) == doctest::Approx(cvx.slopes[1]));
  CHECK_THROWS(transition_utility(cvx, 3.5, 1.0));
  CHECK_THROWS(transition_utility(cvx, 1.0, 0.0));

  auto concave = build_pwl([](double x) { return std::sin(x); }, 0.0, 6.0, 12);
  CHECK_FALSE(concave.turning_points.empty());

  auto pole = build_pwl([](double x) { return x < 5.0 ? 1.0 / (5.0 - x) : INFINITY; }, 0.0, 10.0, 4);
  CHECK(pole.hi() < 5.0);
  CHECK(pole.hi() > 4.99);
  CHECK_THROWS(build_pwl(sq, 1.0, 1.0, 4));
}

TEST_CASE("pwl of the per-path distortion contribution matches at breakpoints and in slope") {
  const AllocationRequest req{1400.0, 250.0, 0.01, 250.0, 5.0, 1500.0};
  const PathModel model(path(2, 1200.0, 80.0, 0.04, 15.0), req);
  auto phi = [&](double r) { return r > 0.0 ? 1500.0 * r * model.effective_loss(r) / 1400.0 : 0.0; };
  const auto pwl = build_pwl(phi, 0.0, 1100.0, 32);
  for (double a : pwl.breakpoints) CHECK(std::abs(pwl.eval(a) - phi(a)) < 1e-9 * std::max(1.0, phi(a)));
  const double step = pwl.breakpoints[1] - pwl.breakpoints[0];
  for (std::size_t k : {3u, 17u}) {
    const double a = pwl.breakpoints[k];
    CHECK(transition_utility(pwl, a, step) == doctest::Approx((phi(a + step) - phi(a)) / step));
  }
}

TEST_CASE("chunk sizes conserve bytes") {
  std::vector<double> a{600, 400};
  CHECK(chunk_sizes(a, 10000) == std::vector<std::int64_t>{6000, 4000});
  std::vector<double> b{1, 1, 1};
  auto s = chunk_sizes(b, 10);
  CHECK(s[0] + s[1] + s[2] == 10);
  std::vector<double> c{150, 600, 250};
  CHECK(chunk_sizes(c, 31250) == std::vector<std::int64_t>{4688, 18750, 7812});
  std::vector<double> zero{0, 0};
  CHECK_THROWS(chunk_sizes(zero, 10));

  Rng rng(33);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> r(1 + rng.next() % 6);
    for (auto& x : r) x = rng.uniform(0.0, 1000.0);
    const auto total = static_cast<std::int64_t>(rng.next() % 100000);
    const auto out = chunk_sizes(r, total);
    CHECK(std::accumulate(out.begin(), out.end(), std::int64_t{0}) == total);
    const double sum = std::accumulate(r.begin(), r.end(), 0.0);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(out[i] - total * r[i] / sum) < 1.0);
  }
}

TEST_CASE("allocate: single path takes everything") {
  const AllocationRequest req{800.0, 250.0, 0.01, 250.0, 5.0, 1500.0};
  std::vector<PathStatus> p{path(1, 2000.0, 60.0, 0.02)};
  const auto a = allocate(p, req, preset_params("foreman"));
  CHECK(a.rates_kbps[0] == doctest::Approx(800.0));
  CHECK(a.chunk_bytes[0] == 25000);
  CHECK_FALSE(a.infeasible);
}

TEST_CASE("allocate: identical paths split evenly") {
  const AllocationRequest req{1000.0, 250.0, 0.01, 250.0, 5.0, 1500.0};
  std::vector<PathStatus> p{path(1, 1500.0, 60.0, 0.03), path(2, 1500.0, 60.0, 0.03)};
  const auto a = allocate(p, req, preset_params("foreman"));
  CHECK(std::abs(a.rates_kbps[0] - a.rates_kbps[1]) <= 1000.0 / 100.0 + 1e-9);
}

TEST_CASE("allocate: the low-loss path is favored") {
  const AllocationRequest req{1000.0, 250.0, 0.01, 250.0, 5.0, 1500.0};
  std::vector<PathStatus> p{path(1, 1500.0, 60.0, 0.01), path(2, 1500.0, 60.0, 0.08)};
  const auto a = allocate(p, req, preset_params("foreman"));
  CHECK(a.rates_kbps[0] > a.rates_kbps[1]);
  CHECK(a.objective <= a.objective_trace.front());
}

TEST_CASE("allocate property: conserves the target, stays within caps, never worsens") {
  Rng rng(35);
  const auto dp = preset_params("foreman");
  for (int k = 0; k < 60; ++k) {
    std::vector<PathStatus> ps;
    const std::size_t n = 1 + rng.next() % 4;
    double sum_mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ps.push_back(path(static_cast<int>(i + 1), rng.uniform(100.0, 2000.0), rng.uniform(10.0, 250.0),
                        rng.uniform(0.0, 0.15), rng.uniform(2.0, 40.0)));
      ps.back().nu_obs_kbps = ps.back().mu_kbps * rng.uniform(0.05, 1.0);
      sum_mu += ps.back().mu_kbps;
    }
    AllocationRequest req;
    req.target_rate_kbps = std::max(dp.r0 + 10.0, rng.uniform(0.1, 1.2) * sum_mu);
    const auto a = allocate(ps, req, dp);
    const double total = std::accumulate(a.rates_kbps.begin(), a.rates_kbps.end(), 0.0);
    if (a.capacity_shortfall) {
      CHECK(total == doctest::Approx(sum_mu));
    } else {
      CHECK(total == doctest::Approx(req.target_rate_kbps).epsilon(1e-9));
    }
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(a.rates_kbps[i] >= -1e-9);
      CHECK(a.rates_kbps[i] <= ps[i].mu_kbps + 1e-6);
      if (!a.infeasible && !a.capacity_shortfall) {
        CHECK(PathModel(ps[i], req).meets_deadline(a.rates_kbps[i] - 1e-6));
      }
    }
    for (std::size_t i = 1; i < a.objective_trace.size(); ++i) {
      CHECK(a.objective_trace[i] <= a.objective_trace[i - 1]);
    }
    CHECK(a.objective == doctest::Approx(predicted_distortion(ps, a.rates_kbps, req, dp)));
    const std::int64_t bytes = std::accumulate(a.chunk_bytes.begin(), a.chunk_bytes.end(), std::int64_t{0});
    CHECK(bytes == std::llround(req.target_rate_kbps * req.interval_ms / 8.0));
  }
}

TEST_CASE("allocate: a split no path can carry in time is flagged") {
  AllocationRequest req{900.0, 100.0, 0.01, 250.0, 5.0, 1500.0};
  std::vector<PathStatus> p{path(1, 1000.0, 150.0, 0.02), path(2, 1000.0, 180.0, 0.02)};
  const auto a = allocate(p, req, preset_params("foreman"));
  CHECK(a.infeasible);
  CHECK(std::accumulate(a.rates_kbps.begin(), a.rates_kbps.end(), 0.0) == doctest::Approx(900.0));
}

TEST_CASE("allocate: target above total capacity") {
  AllocationRequest req{3000.0, 250.0, 0.01, 250.0, 5.0, 1500.0};
  std::vector<PathStatus> p{path(1, 1000.0, 50.0, 0.02), path(2, 500.0, 50.0, 0.02)};
  const auto a = allocate(p, req, preset_params("foreman"));
  CHECK(a.capacity_shortfall);
  CHECK(a.rates_kbps[0] == doctest::Approx(1000.0));
  CHECK(a.rates_kbps[1] == doctest::Approx(500.0));
}

TEST_CASE("allocate rejects bad input") {
  AllocationRequest req{1000.0, 250.0, 0.01, 250.0, 5.0, 1500.0};
  std::vector<PathStatus> none;
  CHECK_THROWS(allocate(none, req, preset_params("foreman")));
  std::vector<PathStatus> dead{path(1, 0.0, 50.0, 0.0)};
  CHECK_THROWS(allocate(dead, req, preset_params("foreman")));
  AllocatorConfig cfg;
  cfg.tlv = 0.5;
  std::vector<PathStatus> ok{path(1, 2000.0, 50.0, 0.0)};
  CHECK_THROWS(allocate(ok, req, preset_params("foreman"), cfg));
}
