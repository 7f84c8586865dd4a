#include "cmtda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace cmtda {

namespace {

struct Emissions {
  std::unordered_map<std::uint32_t, double> time;
  std::map<std::uint32_t, std::int64_t> bytes;  // ordered by GoP id
  std::int64_t total = 0;
};

Emissions collect_emissions(const Trace& trace) {
  Emissions e;
  for (const auto& r : trace) {
    if (r.kind != EventKind::Emit) continue;
    e.time[r.gop_id] = r.t_ms;
    e.bytes[r.gop_id] += r.bytes;
    e.total += r.bytes;
  }
  return e;
}

bool in_deadline(const EventRecord& r, const Emissions& e, double deadline_ms) {
  auto it = e.time.find(r.gop_id);
  if (it == e.time.end()) return false;
  return r.t_ms - it->second <= deadline_ms;
}

}  // namespace

MeanCi mean_ci(std::span<const double> values) {
  MeanCi out;
  out.n = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (values.size() < 2 || *lo == *hi) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  out.half_width = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
  return out;
}

double goodput_kbps(const Trace& trace, double deadline_ms, double duration_ms) {
  if (!(duration_ms > 0.0)) throw std::invalid_argument("run duration must be positive");
  const auto e = collect_emissions(trace);
  std::int64_t bytes = 0;
  for (const auto& r : trace) {
    if (r.kind == EventKind::Deliver && in_deadline(r, e, deadline_ms)) bytes += r.bytes;
  }
  return static_cast<double>(bytes) * 8.0 / duration_ms;
}

double effective_loss(const Trace& trace, double deadline_ms) {
  const auto e = collect_emissions(trace);
  if (e.total == 0) return 0.0;
  std::int64_t good = 0;
  for (const auto& r : trace) {
    if (r.kind == EventKind::Deliver && in_deadline(r, e, deadline_ms)) good += r.bytes;
  }
  return 1.0 - static_cast<double>(good) / static_cast<double>(e.total);
}

Series empirical_cdf(std::span<const double> samples, double grid_ms) {
  if (!(grid_ms > 0.0)) throw std::invalid_argument("CDF grid step must be positive");
  Series out;
  if (samples.empty()) return out;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const auto steps = static_cast<std::size_t>(std::ceil(sorted.back() / grid_ms));
  const double n = static_cast<double>(sorted.size());
  for (std::size_t k = 0; k <= steps; ++k) {
    const double x = static_cast<double>(k) * grid_ms;
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin();
    out.emplace_back(x, static_cast<double>(count) / n);
  }
  out.back().second = 1.0;
  return out;
}

DelayDistribution inter_packet_delays(const Trace& trace, double grid_ms, double deadline_ms) {
  DelayDistribution out;
  const bool filter = std::isfinite(deadline_ms);
  const auto e = filter ? collect_emissions(trace) : Emissions{};
  std::optional<double> prev;
  for (const auto& r : trace) {
    if (r.kind != EventKind::Deliver) continue;
    if (filter && !in_deadline(r, e, deadline_ms)) continue;
    if (prev) out.samples.push_back(r.t_ms - *prev);
    prev = r.t_ms;
  }
  out.cdf = empirical_cdf(out.samples, grid_ms);
  return out;
}

OffsetHistogram out_of_order_offsets(const Trace& trace) {
  OffsetHistogram out;
  std::unordered_set<std::uint32_t> seen;
  std::optional<std::uint32_t> last;
  for (const auto& r : trace) {
    if (r.kind != EventKind::Arrive || !seen.insert(r.tsn).second) continue;
    if (last) {
      const auto off = static_cast<std::int64_t>(r.tsn) - static_cast<std::int64_t>(*last);
      out.offsets.push_back(off);
      ++out.histogram[off];
      out.max = out.offsets.size() == 1 ? off : std::max(out.max, off);
    }
    last = r.tsn;
  }
  return out;
}

std::vector<GopLoss> gop_losses(const Trace& trace, double deadline_ms, double interval_ms) {
  if (!(interval_ms > 0.0)) throw std::invalid_argument("interval must be positive");
  const auto e = collect_emissions(trace);
  std::map<std::uint32_t, std::map<int, std::int64_t>> assigned;
  std::map<std::uint32_t, std::map<int, std::int64_t>> delivered;
  for (const auto& r : trace) {
    if (r.kind == EventKind::Send || (r.kind == EventKind::Abandon && r.tsn == 0)) {
      assigned[r.gop_id][r.path] += r.bytes;
    } else if (r.kind == EventKind::Deliver && in_deadline(r, e, deadline_ms)) {
      delivered[r.gop_id][r.path] += r.bytes;
    }
  }
  std::vector<GopLoss> out;
  for (const auto& [gop, bytes] : e.bytes) {
    GopLoss g;
    g.gop_id = gop;
    g.emitted_at = e.time.at(gop);
    g.encoding_rate_kbps = static_cast<double>(bytes) * 8.0 / interval_ms;
    auto& a = assigned[gop];
    std::int64_t accounted = 0;
    for (const auto& [path, b] : a) accounted += b;
    if (bytes > accounted) a[0] += bytes - accounted;  // never sent by the end of the run
    std::int64_t good = 0;
    for (const auto& [path, b] : a) {
      if (b <= 0) continue;
      const auto d = delivered[gop][path];
      good += d;
      g.path_ids.push_back(path);
      g.rates_kbps.push_back(static_cast<double>(b) * 8.0 / interval_ms);
      g.losses.push_back(1.0 - static_cast<double>(d) / static_cast<double>(b));
    }
    g.effective_loss = bytes > 0 ? 1.0 - static_cast<double>(good) / static_cast<double>(bytes) : 0.0;
    out.push_back(std::move(g));
  }
  return out;
}

PsnrSeries psnr_series(std::span<const GopLoss> gops, const DistortionParams& params, double cap_db) {
  PsnrSeries out;
  for (const auto& g : gops) {
    if (g.rates_kbps.empty()) continue;
    const double d = total_distortion(params, g.encoding_rate_kbps, g.rates_kbps, g.losses);
    out.psnr_db.push_back(psnr_from_mse(d, cap_db));
  }
  out.summary = mean_ci(out.psnr_db);
  return out;
}

std::map<int, double> per_path_effective_loss(std::span<const GopLoss> gops) {
  std::map<int, std::pair<double, double>> acc;  // assigned, delivered
  for (const auto& g : gops) {
    for (std::size_t i = 0; i < g.path_ids.size(); ++i) {
      if (g.path_ids[i] == 0) continue;
      auto& [a, d] = acc[g.path_ids[i]];
      a += g.rates_kbps[i];
      d += g.rates_kbps[i] * (1.0 - g.losses[i]);
    }
  }
  std::map<int, double> out;
  for (const auto& [id, ad] : acc) out[id] = ad.first > 0.0 ? 1.0 - ad.second / ad.first : 0.0;
  return out;
}

RetransmissionCounts retransmission_counts(const Trace& trace, double deadline_ms) {
  const auto e = collect_emissions(trace);
  RetransmissionCounts out;
  std::unordered_set<std::uint32_t> retransmitted;
  for (const auto& r : trace) {
    if (r.kind == EventKind::Retransmit) {
      ++out.total;
      retransmitted.insert(r.tsn);
    } else if (r.kind == EventKind::Deliver && retransmitted.contains(r.tsn) &&
               in_deadline(r, e, deadline_ms)) {
      ++out.effective;
    }
  }
  return out;
}

Series goodput_series(const Trace& trace, double deadline_ms, double duration_ms, double bin_ms) {
  if (!(bin_ms > 0.0)) throw std::invalid_argument("bin width must be positive");
  const auto e = collect_emissions(trace);
  std::vector<double> bins(static_cast<std::size_t>(std::ceil(duration_ms / bin_ms)), 0.0);
  for (const auto& r : trace) {
    if (r.kind != EventKind::Deliver || !in_deadline(r, e, deadline_ms)) continue;
    const auto k = static_cast<std::size_t>(r.t_ms / bin_ms);
    if (k >= bins.size()) bins.resize(k + 1, 0.0);
    bins[k] += static_cast<double>(r.bytes);
  }
  Series out;
  out.reserve(bins.size());
  for (std::size_t k = 0; k < bins.size(); ++k) {
    out.emplace_back(static_cast<double>(k) * bin_ms, bins[k] * 8.0 / bin_ms);
  }
  return out;
}

Series moving_average(const Series& series, double window_ms) {
  if (!(window_ms > 0.0)) throw std::invalid_argument("window must be positive");
  Series out;
  out.reserve(series.size());
  std::size_t lo = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i].second;
    while (series[lo].first <= series[i].first - window_ms) sum -= series[lo++].second;
    out.emplace_back(series[i].first, sum / static_cast<double>(i - lo + 1));
  }
  return out;
}

}  // namespace cmtda
