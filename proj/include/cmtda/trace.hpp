#pragma once

// Transport event trace.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace cmtda {

enum class EventKind : std::uint8_t {
  Emit,        ///< a GoP entered the sender; bytes = GoP size, tsn = 0
  Send,        ///< first copy of a TSN
  Retransmit,  ///< later copy of a TSN
  Arrive,      ///< copy reached the receiver
  Deliver,     ///< in-order delivery to the application
  Lose,        ///< copy destroyed in the network or at the receiver buffer
  Abandon,     ///< sender gave up on a chunk; tsn = 0 if it was never sent
  Sack,        ///< SACK reached the sender; tsn = cumulative TSN
};

const char* to_string(EventKind k);
EventKind parse_event_kind(const std::string& s);

/// For Deliver and Abandon, path is the first path the chunk was assigned to.
/// For Sack, it is the uplink path. Otherwise it is the path of the copy.
struct EventRecord {
  double t_ms;
  EventKind kind;
  int path;  ///< path id, 0 when not applicable
  std::uint32_t tsn;
  std::int64_t bytes;
  std::uint32_t gop_id;
  bool operator==(const EventRecord&) const = default;
};

using Trace = std::vector<EventRecord>;

void write_trace_csv(std::ostream& os, const Trace& trace);
Trace read_trace_csv(std::istream& is);

}  // namespace cmtda
