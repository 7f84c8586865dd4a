#include "cmtda/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace cmtda {

double VideoSpec::rate_at(double t_ms) const {
  double r = rate_trace.empty() ? 0.0 : rate_trace.front().kbps;
  for (const auto& s : rate_trace) {
    if (s.start_ms > t_ms) break;
    r = s.kbps;
  }
  return r;
}

std::vector<std::string> Scenario::validate() const {
  std::vector<std::string> warnings;
  auto fail = [](const std::string& msg) { throw ScenarioError(msg); };
  if (paths.empty()) fail("scenario needs at least one path");
  std::set<int> ids;
  for (const auto& p : paths) {
    try {
      p.validate();
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    if (!ids.insert(p.id).second) fail("duplicate path id " + std::to_string(p.id));
  }
  if (!(interval_ms > 0.0)) fail("interval_ms must be positive");
  if (!(deadline_ms > 0.0)) fail("deadline_ms must be positive");
  if (!(loss_requirement >= 0.0 && loss_requirement <= 1.0)) fail("loss_requirement must lie in [0, 1]");
  if (!(omega_ms > 0.0)) fail("omega_ms must be positive");
  if (!(tlv > 0.0)) fail("tlv must be positive");
  if (!(mtu_bytes >= 1.0)) fail("mtu_bytes must be at least 1");
  if (static_cast<double>(receiver_buffer_bytes) < mtu_bytes) fail("receiver buffer smaller than one MTU");
  if (!(duration_ms > 0.0)) fail("duration_ms must be positive");
  if (!(background.min_fraction >= 0.0 && background.min_fraction <= background.max_fraction &&
        background.max_fraction < 1.0)) {
    fail("background fractions must satisfy 0 <= min <= max < 1");
  }
  if (!(background.resample_ms > 0.0)) fail("background resample_ms must be positive");
  try {
    video.params.validate();
  } catch (const std::invalid_argument& e) {
    fail(std::string("video: ") + e.what());
  }
  if (video.rate_trace.empty()) fail("video rate trace is empty");
  for (std::size_t i = 0; i < video.rate_trace.size(); ++i) {
    const auto& s = video.rate_trace[i];
    if (!(s.kbps > video.params.r0) || !std::isfinite(s.kbps)) {
      fail("video encoding rate must exceed r0 = " + std::to_string(video.params.r0));
    }
    if (i > 0 && !(s.start_ms > video.rate_trace[i - 1].start_ms)) {
      fail("video rate trace must be strictly increasing in time");
    }
  }
  if (deadline_ms < interval_ms) warnings.push_back("deadline_ms is shorter than interval_ms");
  if (background.max_fraction > 0.10) warnings.push_back("background fraction exceeds 10%");
  return warnings;
}

namespace {

std::string at(const YAML::Node& n) { return "line " + std::to_string(n.Mark().line + 1); }

void check_keys(const YAML::Node& map, std::initializer_list<const char*> allowed, const std::string& ctx) {
  if (!map.IsMap()) throw ScenarioError(at(map) + ": " + ctx + " must be a mapping");
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ScenarioError(at(kv.first) + ": unknown field '" + key + "' in " + ctx);
  }
}

template <class T>
T get(const YAML::Node& map, const char* key, T fallback) {
  const auto n = map[key];
  if (!n) return fallback;
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ScenarioError(at(n) + ": field '" + key + "' has the wrong type");
  }
}

std::vector<CapacityStep> steps(const YAML::Node& n, const char* key) {
  if (!n.IsSequence()) throw ScenarioError(at(n) + ": field '" + key + "' must be a list of [ms, kbps]");
  std::vector<CapacityStep> out;
  for (const auto& e : n) {
    if (!e.IsSequence() || e.size() != 2) {
      throw ScenarioError(at(e) + ": field '" + key + "' entries must be [ms, kbps]");
    }
    try {
      out.push_back({e[0].as<double>(), e[1].as<double>()});
    } catch (const YAML::Exception&) {
      throw ScenarioError(at(e) + ": field '" + key + "' entries must be numeric");
    }
  }
  return out;
}

std::vector<TimeInterval> windows(const YAML::Node& n) {
  if (!n.IsSequence()) throw ScenarioError(at(n) + ": field 'availability' must be a list of [start, end]");
  std::vector<TimeInterval> out;
  for (const auto& e : n) {
    if (!e.IsSequence() || e.size() != 2) {
      throw ScenarioError(at(e) + ": availability entries must be [start_ms, end_ms]");
    }
    try {
      out.push_back({e[0].as<double>(), e[1].as<double>()});
    } catch (const YAML::Exception&) {
      throw ScenarioError(at(e) + ": availability entries must be numeric");
    }
  }
  return out;
}

PathSpec parse_path(const YAML::Node& n) {
  check_keys(n, {"id", "name", "capacity_kbps", "capacity_trace", "loss_rate", "burst_ms", "rtt_ms",
                 "availability", "queue_packets", "queue_ms"},
             "path");
  PathSpec p;
  if (!n["id"]) throw ScenarioError(at(n) + ": path is missing 'id'");
  p.id = get<int>(n, "id", 0);
  p.name = get<std::string>(n, "name", "path" + std::to_string(p.id));
  const bool flat = static_cast<bool>(n["capacity_kbps"]);
  const bool traced = static_cast<bool>(n["capacity_trace"]);
  if (flat == traced) {
    throw ScenarioError(at(n) + ": path needs exactly one of 'capacity_kbps' or 'capacity_trace'");
  }
  if (flat) {
    p.capacity_trace = {{0.0, get<double>(n, "capacity_kbps", 0.0)}};
  } else {
    p.capacity_trace = steps(n["capacity_trace"], "capacity_trace");
  }
  p.loss_rate = get<double>(n, "loss_rate", 0.0);
  p.mean_burst_ms = get<double>(n, "burst_ms", 10.0);
  p.base_rtt_ms = get<double>(n, "rtt_ms", 100.0);
  if (n["availability"]) p.availability = windows(n["availability"]);
  const auto q = get<long long>(n, "queue_packets", 100);
  if (q < 1) throw ScenarioError(at(n["queue_packets"]) + ": field 'queue_packets' must be >= 1");
  p.queue_limit_packets = static_cast<std::size_t>(q);
  p.queue_limit_ms = get<double>(n, "queue_ms", 250.0);
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(at(n) + ": " + e.what());
  }
  return p;
}

VideoSpec parse_video(const YAML::Node& n) {
  check_keys(n, {"sequence", "encoding_rate_kbps", "rate_trace", "d0", "alpha", "r0", "beta"}, "video");
  VideoSpec v;
  v.sequence = get<std::string>(n, "sequence", "foreman");
  try {
    v.params = preset_params(v.sequence);
  } catch (const std::invalid_argument& e) {
    if (!(n["d0"] && n["alpha"] && n["r0"] && n["beta"])) {
      throw ScenarioError(at(n) + ": " + e.what() + " (give d0, alpha, r0 and beta explicitly)");
    }
  }
  v.params.d0 = get<double>(n, "d0", v.params.d0);
  v.params.alpha = get<double>(n, "alpha", v.params.alpha);
  v.params.r0 = get<double>(n, "r0", v.params.r0);
  v.params.beta = get<double>(n, "beta", v.params.beta);
  const bool flat = static_cast<bool>(n["encoding_rate_kbps"]);
  const bool traced = static_cast<bool>(n["rate_trace"]);
  if (flat && traced) {
    throw ScenarioError(at(n) + ": video takes 'encoding_rate_kbps' or 'rate_trace', not both");
  }
  if (flat) v.rate_trace = {{0.0, get<double>(n, "encoding_rate_kbps", 0.0)}};
  if (traced) v.rate_trace = steps(n["rate_trace"], "rate_trace");
  return v;
}

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

Scenario load_scenario(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ScenarioError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  check_keys(root, {"name", "duration_ms", "seed", "deadline_ms", "loss_requirement", "interval_ms",
                    "omega_ms", "tlv", "mtu_bytes", "receiver_buffer_bytes", "background", "video", "paths"},
             "scenario");
  Scenario s;
  s.name = get<std::string>(root, "name", s.name);
  s.duration_ms = get<double>(root, "duration_ms", s.duration_ms);
  s.seed = get<std::uint64_t>(root, "seed", s.seed);
  s.deadline_ms = get<double>(root, "deadline_ms", s.deadline_ms);
  s.loss_requirement = get<double>(root, "loss_requirement", s.loss_requirement);
  s.interval_ms = get<double>(root, "interval_ms", s.interval_ms);
  s.omega_ms = get<double>(root, "omega_ms", s.omega_ms);
  s.tlv = get<double>(root, "tlv", s.tlv);
  s.mtu_bytes = get<double>(root, "mtu_bytes", s.mtu_bytes);
  s.receiver_buffer_bytes = get<std::int64_t>(root, "receiver_buffer_bytes", s.receiver_buffer_bytes);
  if (const auto bg = root["background"]) {
    check_keys(bg, {"min_fraction", "max_fraction", "resample_ms"}, "background");
    s.background.min_fraction = get<double>(bg, "min_fraction", s.background.min_fraction);
    s.background.max_fraction = get<double>(bg, "max_fraction", s.background.max_fraction);
    s.background.resample_ms = get<double>(bg, "resample_ms", s.background.resample_ms);
  }
  if (const auto v = root["video"]) s.video = parse_video(v);
  const auto paths = root["paths"];
  if (!paths || !paths.IsSequence()) throw ScenarioError(at(root) + ": 'paths' must be a non-empty list");
  for (const auto& p : paths) s.paths.push_back(parse_path(p));
  s.validate();
  return s;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return load_scenario(ss.str());
  } catch (const ScenarioError& e) {
    throw ScenarioError(path + ": " + e.what());
  }
}

std::string serialize_scenario(const Scenario& s) {
  std::ostringstream os;
  os << "name: " << quoted(s.name) << "\n";
  os << "duration_ms: " << num(s.duration_ms) << "\n";
  os << "seed: " << s.seed << "\n";
  os << "deadline_ms: " << num(s.deadline_ms) << "\n";
  os << "loss_requirement: " << num(s.loss_requirement) << "\n";
  os << "interval_ms: " << num(s.interval_ms) << "\n";
  os << "omega_ms: " << num(s.omega_ms) << "\n";
  os << "tlv: " << num(s.tlv) << "\n";
  os << "mtu_bytes: " << num(s.mtu_bytes) << "\n";
  os << "receiver_buffer_bytes: " << s.receiver_buffer_bytes << "\n";
  os << "background:\n";
  os << "  min_fraction: " << num(s.background.min_fraction) << "\n";
  os << "  max_fraction: " << num(s.background.max_fraction) << "\n";
  os << "  resample_ms: " << num(s.background.resample_ms) << "\n";
  os << "video:\n";
  os << "  sequence: " << quoted(s.video.sequence) << "\n";
  os << "  d0: " << num(s.video.params.d0) << "\n";
  os << "  alpha: " << num(s.video.params.alpha) << "\n";
  os << "  r0: " << num(s.video.params.r0) << "\n";
  os << "  beta: " << num(s.video.params.beta) << "\n";
  os << "  rate_trace: [";
  for (std::size_t i = 0; i < s.video.rate_trace.size(); ++i) {
    os << (i ? ", " : "") << "[" << num(s.video.rate_trace[i].start_ms) << ", "
       << num(s.video.rate_trace[i].kbps) << "]";
  }
  os << "]\n";
  os << "paths:\n";
  for (const auto& p : s.paths) {
    os << "  - id: " << p.id << "\n";
    os << "    name: " << quoted(p.name) << "\n";
    os << "    capacity_trace: [";
    for (std::size_t i = 0; i < p.capacity_trace.size(); ++i) {
      os << (i ? ", " : "") << "[" << num(p.capacity_trace[i].start_ms) << ", "
         << num(p.capacity_trace[i].kbps) << "]";
    }
    os << "]\n";
    os << "    loss_rate: " << num(p.loss_rate) << "\n";
    os << "    burst_ms: " << num(p.mean_burst_ms) << "\n";
    os << "    rtt_ms: " << num(p.base_rtt_ms) << "\n";
    os << "    queue_packets: " << p.queue_limit_packets << "\n";
    os << "    queue_ms: " << num(p.queue_limit_ms) << "\n";
    if (!p.availability.empty()) {
      os << "    availability: [";
      for (std::size_t i = 0; i < p.availability.size(); ++i) {
        os << (i ? ", " : "") << "[" << num(p.availability[i].start_ms) << ", "
           << num(p.availability[i].end_ms) << "]";
      }
      os << "]\n";
    }
  }
  return os.str();
}

}  // namespace cmtda
