#include "cmtda/batch.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace cmtda {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  if (schemes.empty()) throw std::invalid_argument("at least one scheme is required");
  if (seeds == 0) throw std::invalid_argument("at least one seed is required");
  if (workers == 0) throw std::invalid_argument("worker count must be >= 1");
  if (!(moving_average_ms > 0.0)) throw std::invalid_argument("moving-average window must be positive");
  scenario.validate();
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string run_file_stem(const std::string& scheme, std::uint64_t seed) {
  return scheme + "_seed" + std::to_string(seed);
}

SchemeSummary summarize(const std::string& scheme, std::span<const MetricsReport> runs) {
  SchemeSummary s;
  s.scheme = scheme;
  s.runs = runs.size();
  std::vector<double> psnr, good, loss, ipd, oo, rtx, to;
  for (const auto& r : runs) {
    psnr.push_back(r.psnr.mean);
    good.push_back(r.goodput_kbps);
    loss.push_back(r.effective_loss);
    ipd.push_back(r.mean_ipd_ms);
    oo.push_back(static_cast<double>(r.max_oo_offset));
    rtx.push_back(static_cast<double>(r.retransmissions.total));
    to.push_back(static_cast<double>(r.timeouts));
  }
  s.psnr_db = mean_ci(psnr);
  s.goodput_kbps = mean_ci(good);
  s.effective_loss = mean_ci(loss);
  s.mean_ipd_ms = mean_ci(ipd);
  s.max_oo_offset = mean_ci(oo);
  s.retransmissions = mean_ci(rtx);
  s.timeouts = mean_ci(to);
  return s;
}

void write_run_csv(std::ostream& os, const MetricsReport& r) {
  os << "gop,time_ms,psnr_db,effective_loss";
  for (int id : r.path_ids) os << ",share_path" << id;
  os << "\n";
  for (std::size_t g = 0; g < r.gop_times_ms.size(); ++g) {
    os << g << ',' << format_number(r.gop_times_ms[g]) << ','
       << (g < r.psnr_db.size() ? format_number(r.psnr_db[g]) : "") << ','
       << format_number(r.gop_effective_loss[g]);
    for (double share : r.rate_shares[g]) os << ',' << format_number(share);
    os << "\n";
  }
}

namespace {

struct Field {
  const char* name;
  MeanCi SchemeSummary::*member;
};

constexpr Field kFields[] = {
    {"psnr_db", &SchemeSummary::psnr_db},
    {"goodput_kbps", &SchemeSummary::goodput_kbps},
    {"effective_loss", &SchemeSummary::effective_loss},
    {"mean_ipd_ms", &SchemeSummary::mean_ipd_ms},
    {"max_oo_offset", &SchemeSummary::max_oo_offset},
    {"retransmissions", &SchemeSummary::retransmissions},
    {"timeouts", &SchemeSummary::timeouts},
};

}  // namespace

void write_summary(std::ostream& os, const SchemeSummary& s) {
  os << "scheme=" << s.scheme << "\n";
  os << "runs=" << s.runs << "\n";
  for (const auto& f : kFields) {
    os << f.name << "_mean=" << format_number((s.*f.member).mean) << "\n";
    os << f.name << "_ci95=" << format_number((s.*f.member).half_width) << "\n";
  }
}

SchemeSummary read_summary(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  SchemeSummary s;
  if (!kv.contains("scheme") || !kv.contains("runs")) throw std::invalid_argument("summary lacks scheme/runs");
  s.scheme = kv["scheme"];
  s.runs = std::stoul(kv["runs"]);
  for (const auto& f : kFields) {
    const std::string m = std::string(f.name) + "_mean";
    const std::string c = std::string(f.name) + "_ci95";
    if (!kv.contains(m) || !kv.contains(c)) throw std::invalid_argument("summary lacks " + std::string(f.name));
    (s.*f.member).mean = std::stod(kv[m]);
    (s.*f.member).half_width = std::stod(kv[c]);
    (s.*f.member).n = s.runs;
  }
  return s;
}

void write_comparison(std::ostream& os, std::span<const SchemeSummary> rows) {
  os << "scheme,runs";
  for (const auto& f : kFields) os << ',' << f.name << "_mean," << f.name << "_ci95";
  os << "\n";
  for (const auto& s : rows) {
    os << s.scheme << ',' << s.runs;
    for (const auto& f : kFields) {
      os << ',' << format_number((s.*f.member).mean) << ',' << format_number((s.*f.member).half_width);
    }
    os << "\n";
  }
}

void write_series(std::ostream& os, const std::string& x_name, const std::string& y_name, const Series& s) {
  os << "# " << x_name << ' ' << y_name << "\n";
  for (const auto& [x, y] : s) os << format_number(x) << ' ' << format_number(y) << "\n";
}

Series pooled_ipd_cdf(std::span<const MetricsReport> runs, double grid_ms) {
  std::vector<double> all;
  for (const auto& r : runs) all.insert(all.end(), r.inter_packet_delays_ms.begin(), r.inter_packet_delays_ms.end());
  return empirical_cdf(all, grid_ms);
}

Series mean_goodput_series(std::span<const MetricsReport> runs, double window_ms) {
  if (runs.empty()) return {};
  std::size_t len = 0;
  for (const auto& r : runs) len = std::max(len, r.goodput_series.size());
  Series mean;
  for (std::size_t k = 0; k < len; ++k) {
    double t = 0.0, sum = 0.0;
    for (const auto& r : runs) {
      if (k < r.goodput_series.size()) {
        t = r.goodput_series[k].first;
        sum += r.goodput_series[k].second;
      }
    }
    mean.emplace_back(t, sum / static_cast<double>(runs.size()));
  }
  return moving_average(mean, window_ms);
}

Series mean_loss_series(std::span<const MetricsReport> runs) {
  if (runs.empty()) return {};
  std::size_t len = 0;
  for (const auto& r : runs) len = std::max(len, r.gop_times_ms.size());
  Series out;
  for (std::size_t g = 0; g < len; ++g) {
    double t = 0.0, sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : runs) {
      if (g < r.gop_times_ms.size()) {
        t = r.gop_times_ms[g];
        sum += r.gop_effective_loss[g];
        ++n;
      }
    }
    out.emplace_back(t, sum / static_cast<double>(n));
  }
  return out;
}

void emit_plotdata(const std::string& dir, const std::string& prefix, std::span<const MetricsReport> runs,
                   double window_ms) {
  const fs::path base(dir);
  {
    std::ofstream os(base / (prefix + "_ipd_cdf.dat"));
    write_series(os, "inter_packet_delay_ms", "cdf", pooled_ipd_cdf(runs));
  }
  {
    std::ofstream os(base / (prefix + "_goodput.dat"));
    write_series(os, "time_ms", "goodput_kbps", mean_goodput_series(runs, window_ms));
  }
  {
    std::ofstream os(base / (prefix + "_loss.dat"));
    write_series(os, "time_ms", "effective_loss", mean_loss_series(runs));
  }
}

int run_batch(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);

  struct Job {
    SchemeKind scheme;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto k : cfg.schemes) {
    for (std::size_t i = 0; i < cfg.seeds; ++i) jobs.push_back({k, cfg.scenario.seed + i});
  }
  std::vector<std::optional<MetricsReport>> results(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;

  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const auto& job = jobs[j];
      const std::string stem = run_file_stem(to_string(job.scheme), job.seed);
      try {
        Scenario sc = cfg.scenario;
        sc.seed = job.seed;
        auto r = run(sc, make_scheme(job.scheme), cfg.sim);
        if (cfg.emit_csv) {
          std::ofstream os(fs::path(cfg.out_dir) / (stem + ".csv"));
          write_run_csv(os, r);
        }
        if (cfg.emit_trace) {
          std::ofstream os(fs::path(cfg.out_dir) / (stem + "_trace.csv"));
          write_trace_csv(os, r.trace);
        }
        r.trace.clear();
        r.trace.shrink_to_fit();
        results[j] = std::move(r);
        std::lock_guard lock(log_mu);
        log << stem << ": psnr " << format_number(results[j]->psnr.mean) << " dB, goodput "
            << format_number(results[j]->goodput_kbps) << " Kbps, effective loss "
            << format_number(results[j]->effective_loss) << "\n";
      } catch (const std::exception& e) {
        errors[j] = e.what();
        std::lock_guard lock(log_mu);
        log << stem << ": FAILED: " << e.what() << "\n";
      }
    }
  };
  const std::size_t n_threads = std::min(cfg.workers, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<SchemeSummary> rows;
  for (auto k : cfg.schemes) {
    std::vector<MetricsReport> ok;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (jobs[j].scheme == k && results[j]) ok.push_back(*results[j]);
    }
    if (ok.empty()) continue;
    const auto s = summarize(to_string(k), ok);
    rows.push_back(s);
    if (cfg.emit_summary) {
      std::ofstream os(fs::path(cfg.out_dir) / (std::string(to_string(k)) + "_summary.txt"));
      write_summary(os, s);
    }
    emit_plotdata(cfg.out_dir, to_string(k), ok, cfg.moving_average_ms);
  }
  {
    std::ofstream os(fs::path(cfg.out_dir) / "comparison.csv");
    write_comparison(os, rows);
  }
  const bool failed = std::any_of(errors.begin(), errors.end(), [](const auto& e) { return !e.empty(); });
  return failed ? 1 : 0;
}

int compare_dir(const std::string& dir, std::ostream& out) {
  std::vector<fs::path> files;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.size() > 12 && name.ends_with("_summary.txt")) files.push_back(e.path());
    }
  }
  if (files.empty()) return 2;
  std::sort(files.begin(), files.end());
  std::vector<SchemeSummary> rows;
  for (const auto& f : files) {
    std::ifstream is(f);
    rows.push_back(read_summary(is));
  }
  // Keep the canonical scheme order where possible.
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    auto rank = [](const std::string& s) {
      const auto all = all_schemes();
      for (std::size_t i = 0; i < all.size(); ++i) {
        if (s == to_string(all[i])) return i;
      }
      return all.size();
    };
    return rank(a.scheme) < rank(b.scheme);
  });
  {
    std::ofstream os(fs::path(dir) / "comparison.csv");
    write_comparison(os, rows);
  }
  write_comparison(out, rows);
  return 0;
}

}  // namespace cmtda
