#include "cmtda/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace cmtda {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double rel_tol(double scale) { return 1e-9 * std::max(1.0, std::abs(scale)); }

}  // namespace

void AllocatorConfig::validate() const {
  if (delta_r_kbps && !(*delta_r_kbps > 0.0)) {
    throw std::invalid_argument("rate step must be positive");
  }
  if (!(tlv > 1.0)) throw std::invalid_argument("load imbalance threshold must exceed 1");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be non-negative");
  if (breakpoints < 2) throw std::invalid_argument("at least two breakpoint intervals required");
  if (max_transfer_steps == 0) throw std::invalid_argument("max transfer steps must be >= 1");
  if (!(jitter_penalty >= 0.0)) throw std::invalid_argument("jitter penalty must be >= 0");
}

// ---------------------------------------------------------------------------
// Piecewise-linear approximation

std::size_t PwlApprox::interval_of(double x) const {
  const std::size_t m = slopes.size();
  if (x <= breakpoints.front()) return 0;
  if (x >= breakpoints.back()) return m - 1;
  const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), x);
  return std::min<std::size_t>(static_cast<std::size_t>(it - breakpoints.begin()) - 1, m - 1);
}

double PwlApprox::eval(double x) const {
  const std::size_t k = interval_of(x);
  return slopes[k] * x + intercepts[k];
}

double PwlApprox::eval_max_of_lines(double x) const {
  const std::size_t k = interval_of(x);
  // Region boundaries are turning-point breakpoints; interval j spans
  // [a_j, a_{j+1}], so the region holding k runs from the last turning point
  // <= k to the first turning point > k.
  std::size_t first = 0;
  std::size_t last = slopes.size();
  for (auto t : turning_points) {
    if (t <= k) first = t;
    if (t > k) {
      last = t;
      break;
    }
  }
  double best = -kInf;
  for (std::size_t j = first; j < last; ++j) best = std::max(best, slopes[j] * x + intercepts[j]);
  return best;
}

PwlApprox build_pwl(const std::function<double(double)>& objective, double lo, double hi,
                    std::size_t m) {
  if (!(lo < hi)) throw std::invalid_argument("pwl interval must satisfy lo < hi");
  if (m < 2) throw std::invalid_argument("pwl needs at least two intervals");
  if (!std::isfinite(objective(lo))) throw std::invalid_argument("objective not finite at lo");
  if (!std::isfinite(objective(hi))) {
    // Truncate below the pole.
    double good = lo;
    double bad = hi;
    for (int i = 0; i < 80; ++i) {
      const double mid = 0.5 * (good + bad);
      (std::isfinite(objective(mid)) ? good : bad) = mid;
    }
    hi = good;
    if (!(lo < hi)) throw std::invalid_argument("objective not finite anywhere above lo");
  }
  PwlApprox pwl;
  pwl.breakpoints.resize(m + 1);
  std::vector<double> values(m + 1);
  for (std::size_t k = 0; k <= m; ++k) {
    pwl.breakpoints[k] = k == m ? hi : lo + (hi - lo) * static_cast<double>(k) / m;
    values[k] = objective(pwl.breakpoints[k]);
  }
  pwl.slopes.resize(m);
  pwl.intercepts.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double a0 = pwl.breakpoints[k];
    const double a1 = pwl.breakpoints[k + 1];
    pwl.slopes[k] = (values[k + 1] - values[k]) / (a1 - a0);
    pwl.intercepts[k] = values[k] - pwl.slopes[k] * a0;
  }
  for (std::size_t k = 1; k < m; ++k) {
    const double a = pwl.slopes[k - 1];
    const double b = pwl.slopes[k];
    if (a > b + 1e-12 * std::max({1.0, std::abs(a), std::abs(b)})) pwl.turning_points.push_back(k);
  }
  return pwl;
}

double transition_utility(const PwlApprox& pwl, double r, double delta_r) {
  if (!(delta_r > 0.0)) throw std::invalid_argument("transition step must be positive");
  const double tol = rel_tol(pwl.hi());
  if (r < pwl.lo() - tol || r + delta_r > pwl.hi() + tol) {
    throw std::out_of_range("transition outside the approximation domain");
  }
  const double a = std::max(r, pwl.lo());
  const double b = std::min(r + delta_r, pwl.hi());
  if (!(b > a)) return pwl.slopes[pwl.interval_of(a)];
  return (pwl.eval(b) - pwl.eval(a)) / (b - a);
}

// ---------------------------------------------------------------------------
// Split helpers

std::vector<double> initial_allocation(double target_rate_kbps, std::span<const double> mus) {
  if (!(target_rate_kbps > 0.0)) throw std::invalid_argument("target rate must be positive");
  std::vector<double> rates(mus.size(), 0.0);
  std::vector<bool> open(mus.size());
  double remaining = target_rate_kbps;
  for (std::size_t i = 0; i < mus.size(); ++i) open[i] = mus[i] > 0.0;
  if (std::none_of(open.begin(), open.end(), [](bool b) { return b; })) {
    throw std::invalid_argument("no path has available bandwidth");
  }
  // Proportional fill; paths hitting capacity are closed and the residual is
  // spread over the rest.
  while (remaining > rel_tol(target_rate_kbps) * 1e-3) {
    double open_mu = 0.0;
    for (std::size_t i = 0; i < mus.size(); ++i) {
      if (open[i]) open_mu += mus[i];
    }
    if (open_mu <= 0.0) break;
    bool clipped = false;
    double placed = 0.0;
    for (std::size_t i = 0; i < mus.size(); ++i) {
      if (!open[i]) continue;
      const double share = remaining * mus[i] / open_mu;
      const double room = mus[i] - rates[i];
      if (share >= room) {
        rates[i] = mus[i];
        placed += room;
        open[i] = false;
        clipped = true;
      }
    }
    if (!clipped) {
      for (std::size_t i = 0; i < mus.size(); ++i) {
        if (open[i]) rates[i] += remaining * mus[i] / open_mu;
      }
      break;
    }
    remaining -= placed;
  }
  return rates;
}

std::vector<double> load_imbalance(std::span<const double> rates, std::span<const double> mus,
                                   std::span<const double> loss_rates) {
  if (rates.size() != mus.size() || rates.size() != loss_rates.size() || rates.empty()) {
    throw std::invalid_argument("load imbalance inputs must be non-empty and equal length");
  }
  const auto n = static_cast<double>(rates.size());
  std::vector<double> headroom(rates.size());
  double total = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    headroom[i] = mus[i] * (1.0 - loss_rates[i]) - rates[i];
    total += headroom[i];
  }
  const double mean = total / n;
  if (!(mean > 0.0)) throw SaturatedSystem();
  for (auto& h : headroom) h /= mean;
  return headroom;
}

std::vector<std::int64_t> chunk_sizes(std::span<const double> rates, std::int64_t total_bytes) {
  long double sum = 0.0L;
  for (double r : rates) {
    if (r < 0.0) throw std::invalid_argument("rates must be non-negative");
    sum += r;
  }
  if (!(sum > 0.0L)) throw std::invalid_argument("total rate must be positive");
  std::vector<std::int64_t> out(rates.size());
  std::vector<std::pair<long double, std::size_t>> remainders;
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const long double exact = static_cast<long double>(total_bytes) * rates[i] / sum;
    const long double fl = std::floor(exact);
    out[i] = static_cast<std::int64_t>(fl);
    assigned += out[i];
    remainders.emplace_back(exact - fl, i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total_bytes; ++k) {
    ++out[remainders[k % remainders.size()].second];
    ++assigned;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-path model

PathModel::PathModel(const PathStatus& status, const AllocationRequest& req)
    : status_(status), req_(req) {
  if (status_.mean_burst_ms && status_.loss_rate > 0.0 && status_.loss_rate < 1.0) {
    gilbert_ = gilbert_from_stats(status_.loss_rate, *status_.mean_burst_ms);
  }
}

double PathModel::effective_loss(double rate_kbps) const {
  const double chunk = std::max(0.0, rate_kbps) * req_.interval_ms / 8.0;
  const std::size_t n = std::max<std::size_t>(1, packets_per_chunk(chunk, req_.mtu_bytes));
  const double pi_star = gilbert_ ? transmission_loss_rate(*gilbert_, req_.omega_ms, n)
                                  : std::clamp(status_.loss_rate, 0.0, 1.0);
  PathLossInputs in;
  in.omega_ms = req_.omega_ms;
  in.chunk_bytes = chunk;
  in.mtu_bytes = req_.mtu_bytes;
  in.rate_kbps = std::max(0.0, rate_kbps);
  in.mu_kbps = status_.mu_kbps;
  in.nu_obs_kbps = std::max(0.0, status_.nu_obs_kbps);
  in.rtt_ms = status_.rtt_ms;
  in.deadline_ms = req_.deadline_ms;
  return effective_loss_rate(pi_star, overdue_probability(in));
}

double PathModel::expected_delay(double rate_kbps) const {
  return cmtda::expected_delay(std::max(0.0, rate_kbps), status_.mu_kbps,
                               std::max(0.0, status_.nu_obs_kbps), status_.rtt_ms,
                               req_.interval_ms);
}

double PathModel::duration(double rate_kbps) const {
  const double chunk = std::max(0.0, rate_kbps) * req_.interval_ms / 8.0;
  const std::size_t n = packets_per_chunk(chunk, req_.mtu_bytes);
  const double spread = n > 1 ? static_cast<double>(n - 1) * req_.omega_ms : 0.0;
  return expected_delay(rate_kbps) + spread;
}

bool PathModel::meets_deadline(double rate_kbps) const {
  return rate_kbps <= 0.0 || duration(rate_kbps) <= req_.deadline_ms;
}

double PathModel::max_feasible_rate() const {
  if (!(status_.mu_kbps > 0.0)) return 0.0;
  double lo = 0.0;
  double hi = status_.mu_kbps;
  if (!meets_deadline(hi * 1e-9)) return 0.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (meets_deadline(mid) ? lo : hi) = mid;
  }
  return lo;
}

double predicted_distortion(std::span<const PathStatus> paths, std::span<const double> rates,
                            const AllocationRequest& req, const DistortionParams& params,
                            double jitter_penalty) {
  if (paths.size() != rates.size()) throw std::invalid_argument("path/rate size mismatch");
  std::vector<double> losses(paths.size());
  double lo_delay = kInf;
  double hi_delay = -kInf;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    PathModel model(paths[i], req);
    losses[i] = rates[i] > 0.0 ? model.effective_loss(rates[i]) : 0.0;
    if (jitter_penalty > 0.0 && rates[i] > 0.0) {
      const double d = model.expected_delay(rates[i]);
      lo_delay = std::min(lo_delay, d);
      hi_delay = std::max(hi_delay, d);
    }
  }
  double d = total_distortion(params, req.target_rate_kbps, rates, losses);
  if (jitter_penalty > 0.0 && hi_delay >= lo_delay) d += jitter_penalty * (hi_delay - lo_delay);
  return d;
}

// ---------------------------------------------------------------------------
// Allocation

namespace {

/// Rates are tracked as integer offsets (in units of the finest step) from
/// the starting split, so every visited point is memoized exactly.
class SearchState {
 public:
  SearchState(std::vector<PathModel> models, std::vector<double> base, double unit,
              double encoding_rate, const DistortionParams& params, double jitter_penalty)
      : models_(std::move(models)),
        base_(std::move(base)),
        unit_(unit),
        source_term_(params.d0 + params.alpha / (encoding_rate - params.r0)),
        beta_(params.beta),
        penalty_(jitter_penalty),
        memo_(models_.size()),
        offsets_(models_.size(), 0) {}

  std::size_t size() const { return models_.size(); }
  double rate(std::size_t p, std::int64_t off) const {
    return std::max(0.0, base_[p] + static_cast<double>(off) * unit_);
  }
  double rate(std::size_t p) const { return rate(p, offsets_[p]); }
  std::int64_t offset(std::size_t p) const { return offsets_[p]; }
  std::vector<std::int64_t>& offsets() { return offsets_; }

  double objective(const std::vector<std::int64_t>& offs) {
    double weighted = 0.0;
    double sum = 0.0;
    double lo_delay = kInf;
    double hi_delay = -kInf;
    for (std::size_t p = 0; p < models_.size(); ++p) {
      const Entry& e = entry(p, offs[p]);
      weighted += e.rate * e.loss;
      sum += e.rate;
      if (penalty_ > 0.0 && e.rate > 0.0) {
        lo_delay = std::min(lo_delay, e.delay);
        hi_delay = std::max(hi_delay, e.delay);
      }
    }
    double d = source_term_ + (sum > 0.0 ? beta_ * weighted / sum : 0.0);
    if (penalty_ > 0.0 && hi_delay >= lo_delay) d += penalty_ * (hi_delay - lo_delay);
    return d;
  }
  double objective() { return objective(offsets_); }

 private:
  struct Entry {
    double rate;
    double loss;
    double delay;
  };

  const Entry& entry(std::size_t p, std::int64_t off) {
    auto [it, inserted] = memo_[p].try_emplace(off);
    if (inserted) {
      const double r = rate(p, off);
      it->second.rate = r;
      it->second.loss = r > 0.0 ? models_[p].effective_loss(r) : 0.0;
      it->second.delay = penalty_ > 0.0 && r > 0.0 ? models_[p].expected_delay(r) : 0.0;
    }
    return it->second;
  }

  std::vector<PathModel> models_;
  std::vector<double> base_;
  double unit_;
  double source_term_;
  double beta_;
  double penalty_;
  std::vector<std::unordered_map<std::int64_t, Entry>> memo_;
  std::vector<std::int64_t> offsets_;
};

void finalize(Allocation& out, std::span<const PathStatus> paths, const AllocationRequest& req,
              const DistortionParams& params) {
  const std::size_t n = paths.size();
  out.expected_delay_ms.assign(n, 0.0);
  out.effective_loss.assign(n, 0.0);
  double lo = kInf;
  double hi = -kInf;
  double weighted = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    PathModel model(paths[i], req);
    const double r = out.rates_kbps[i];
    out.expected_delay_ms[i] = model.expected_delay(r);
    out.effective_loss[i] = r > 0.0 ? model.effective_loss(r) : 0.0;
    if (r > 0.0) {
      lo = std::min(lo, out.expected_delay_ms[i]);
      hi = std::max(hi, out.expected_delay_ms[i]);
      if (!model.meets_deadline(r)) out.infeasible = true;
    }
    weighted += r * out.effective_loss[i];
    sum += r;
  }
  out.jitter_spread_ms = hi >= lo ? hi - lo : 0.0;
  if (std::isnan(out.jitter_spread_ms)) out.jitter_spread_ms = kInf;
  out.loss_requirement_met = sum > 0.0 && weighted / sum <= req.loss_requirement;
  const auto total_bytes = static_cast<std::int64_t>(std::llround(req.target_rate_kbps * req.interval_ms / 8.0));
  out.chunk_bytes = chunk_sizes(out.rates_kbps, total_bytes);
  (void)params;
}

}  // namespace

Allocation allocate(std::span<const PathStatus> paths, const AllocationRequest& req,
                    const DistortionParams& params, const AllocatorConfig& cfg) {
  cfg.validate();
  params.validate();
  if (paths.empty()) throw std::invalid_argument("allocation needs at least one path");
  const double target = req.target_rate_kbps;
  if (!(target > 0.0)) throw std::invalid_argument("target rate must be positive");
  if (!(target > params.r0)) throw std::invalid_argument("target rate below the model's rate offset");

  const std::size_t n = paths.size();
  std::vector<double> mus(n);
  std::vector<double> losses(n);
  double sum_mu = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mus[i] = std::isfinite(paths[i].mu_kbps) && paths[i].mu_kbps > 0.0 ? paths[i].mu_kbps : 0.0;
    losses[i] = std::clamp(paths[i].loss_rate, 0.0, 1.0);
    sum_mu += mus[i];
  }
  if (!(sum_mu > 0.0)) throw std::invalid_argument("no path has available bandwidth");

  Allocation out;
  if (target >= sum_mu) {
    out.rates_kbps = mus;
    out.capacity_shortfall = target > sum_mu;
    out.objective = predicted_distortion(paths, out.rates_kbps, req, params, cfg.jitter_penalty);
    out.objective_trace.push_back(out.objective);
    finalize(out, paths, req, params);
    return out;
  }

  std::vector<PathModel> models;
  models.reserve(n);
  for (const auto& p : paths) models.emplace_back(p, req);

  // Per-path ceilings: the duration constraint when some split satisfies it,
  // otherwise plain capacity and the result is flagged best-effort.
  std::vector<double> caps(n, 0.0);
  double sum_caps = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mus[i] > 0.0) caps[i] = models[i].max_feasible_rate();
    sum_caps += caps[i];
  }
  const bool constrained = sum_caps >= target;
  if (!constrained) caps = mus;

  std::vector<double> base = initial_allocation(target, mus);
  if (constrained) {
    double excess = 0.0;
    double headroom = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (base[i] > caps[i]) {
        excess += base[i] - caps[i];
        base[i] = caps[i];
      }
    }
    for (std::size_t i = 0; i < n; ++i) headroom += caps[i] - base[i];
    if (excess > 0.0 && headroom > 0.0) {
      for (std::size_t i = 0; i < n; ++i) base[i] += excess * (caps[i] - base[i]) / headroom;
    }
  }

  const double coarse = cfg.delta_r_kbps.value_or(target / 100.0);
  const std::int64_t fine_per_coarse = cfg.refine ? 10 : 1;
  const double unit = coarse / static_cast<double>(fine_per_coarse);
  SearchState search(models, base, unit, target, params, cfg.jitter_penalty);

  // Approximations of each path's distortion contribution.
  std::vector<std::optional<PwlApprox>> pwl(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(caps[i] > 0.0)) continue;
    const PathModel& model = models[i];
    const double beta = params.beta;
    pwl[i] = build_pwl(
        [&model, beta, target](double r) {
          return r > 0.0 ? beta * r * model.effective_loss(r) / target : 0.0;
        },
        0.0, caps[i], cfg.breakpoints);
  }

  double current = search.objective();
  out.objective_trace.push_back(current);
  const double tol = rel_tol(target);

  std::vector<std::int64_t> passes{fine_per_coarse};
  if (fine_per_coarse > 1) passes.push_back(1);

  for (std::int64_t k : passes) {
    const double step = unit * static_cast<double>(k);
    while (out.iterations < cfg.max_iterations) {
      std::vector<double> rates(n);
      for (std::size_t i = 0; i < n; ++i) rates[i] = search.rate(i);

      bool saturated = false;
      std::vector<double> imbalance;
      try {
        imbalance = load_imbalance(rates, mus, losses);
      } catch (const SaturatedSystem&) {
        saturated = true;
      }

      // Recipient: largest distortion reduction per unit rate.
      std::optional<std::size_t> recipient;
      double best_gain = -kInf;
      for (std::size_t p = 0; p < n; ++p) {
        if (!pwl[p] || rates[p] + step > caps[p] + tol) continue;
        const double hi = std::min(rates[p] + step, pwl[p]->hi());
        const double lo = std::min(rates[p], hi);
        if (!(hi > lo)) continue;
        const double gain = -transition_utility(*pwl[p], lo, hi - lo);
        if (gain > best_gain) {
          best_gain = gain;
          recipient = p;
        }
      }

      bool moved = false;
      if (recipient && (saturated || imbalance[*recipient] <= cfg.tlv)) {
        // Intra-path allocation: feed the recipient from the donor whose
        // release saves the most distortion per unit rate.
        const std::size_t p = *recipient;
        std::optional<std::size_t> donor;
        double best_release = -kInf;
        for (std::size_t q = 0; q < n; ++q) {
          if (q == p || rates[q] + tol < step || !pwl[q]) continue;
          const double hi = std::min(rates[q], pwl[q]->hi());
          const double lo = std::max(0.0, hi - step);
          if (!(hi > lo)) continue;
          const double release = transition_utility(*pwl[q], lo, hi - lo);
          if (release > best_release) {
            best_release = release;
            donor = q;
          }
        }
        if (donor) {
          auto trial = search.offsets();
          trial[p] += k;
          trial[*donor] -= k;
          const double value = search.objective(trial);
          if (value < current - cfg.epsilon) {
            search.offsets() = trial;
            current = value;
            moved = true;
          }
        }
      }

      if (!moved && !saturated) {
        // Inter-path allocation: best transfer over all ordered pairs and
        // transfer sizes.
        double best_value = current;
        std::vector<std::int64_t> best_trial;
        for (std::size_t d = 0; d < n; ++d) {
          for (std::size_t r = 0; r < n; ++r) {
            if (d == r || !(caps[r] > 0.0)) continue;
            const auto by_donor = static_cast<std::int64_t>(std::floor((rates[d] + tol) / step));
            const auto by_recipient =
                static_cast<std::int64_t>(std::floor((caps[r] - rates[r] + tol) / step));
            const std::int64_t kmax =
                std::min({by_donor, by_recipient, static_cast<std::int64_t>(cfg.max_transfer_steps)});
            for (std::int64_t j = 1; j <= kmax; ++j) {
              auto trial = search.offsets();
              trial[r] += j * k;
              trial[d] -= j * k;
              const double value = search.objective(trial);
              if (value < best_value) {
                best_value = value;
                best_trial = std::move(trial);
              }
            }
          }
        }
        if (!best_trial.empty() && best_value < current - cfg.epsilon) {
          search.offsets() = best_trial;
          current = best_value;
          moved = true;
        }
      }

      if (!moved) break;
      ++out.iterations;
      out.objective_trace.push_back(current);
    }
  }

  out.rates_kbps.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.rates_kbps[i] = search.rate(i);
  out.objective = current;
  out.infeasible = !constrained;
  finalize(out, paths, req, params);
  return out;
}

}  // namespace cmtda
