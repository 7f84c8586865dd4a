#include "cmtda/trace.hpp"

#include <array>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cmtda {

namespace {
constexpr std::array<const char*, 8> kNames = {"emit", "send",  "retransmit", "arrive",
                                               "deliver", "lose", "abandon", "sack"};
}

const char* to_string(EventKind k) { return kNames.at(static_cast<std::size_t>(k)); }

EventKind parse_event_kind(const std::string& s) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (s == kNames[i]) return static_cast<EventKind>(i);
  }
  throw std::invalid_argument("unknown event kind '" + s + "'");
}

void write_trace_csv(std::ostream& os, const Trace& trace) {
  os << "time_ms,kind,path,tsn,bytes,gop\n";
  os << std::setprecision(17);
  for (const auto& e : trace) {
    os << e.t_ms << ',' << to_string(e.kind) << ',' << e.path << ',' << e.tsn << ',' << e.bytes
       << ',' << e.gop_id << '\n';
  }
}

Trace read_trace_csv(std::istream& is) {
  Trace out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::istringstream ss(line);
    std::string t, kind, path, tsn, bytes, gop;
    if (!std::getline(ss, t, ',') || !std::getline(ss, kind, ',') || !std::getline(ss, path, ',') ||
        !std::getline(ss, tsn, ',') || !std::getline(ss, bytes, ',') || !std::getline(ss, gop)) {
      throw std::invalid_argument("trace line " + std::to_string(lineno) + ": expected 6 fields");
    }
    try {
      out.push_back({std::stod(t), parse_event_kind(kind), std::stoi(path),
                     static_cast<std::uint32_t>(std::stoul(tsn)), std::stoll(bytes),
                     static_cast<std::uint32_t>(std::stoul(gop))});
    } catch (const std::exception& e) {
      throw std::invalid_argument("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cmtda
