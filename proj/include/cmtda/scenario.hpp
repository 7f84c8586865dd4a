#pragma once

// Scenario description and its YAML file format.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmtda/channel.hpp"
#include "cmtda/distortion.hpp"

namespace cmtda {

/// Cross traffic is abstracted into a multiplicative capacity reduction,
/// redrawn uniformly from [min_fraction, max_fraction] every resample_ms.
struct BackgroundSpec {
  double min_fraction = 0.0;
  double max_fraction = 0.10;
  double resample_ms = 500.0;
  bool operator==(const BackgroundSpec&) const = default;
};

struct VideoSpec {
  std::string sequence = "foreman";
  DistortionParams params = preset_params("foreman");
  /// Piecewise-constant encoding rate in Kbps. One GoP spans one interval.
  std::vector<CapacityStep> rate_trace{{0.0, 1400.0}};

  double rate_at(double t_ms) const;
  bool operator==(const VideoSpec&) const = default;
};

struct Scenario {
  std::string name = "scenario";
  std::vector<PathSpec> paths;
  VideoSpec video;
  double deadline_ms = 250.0;
  double loss_requirement = 0.01;
  double interval_ms = 250.0;
  double omega_ms = 5.0;
  double tlv = 1.2;
  double mtu_bytes = 1500.0;
  std::int64_t receiver_buffer_bytes = 64 * 1024;
  BackgroundSpec background;
  double duration_ms = 60000.0;
  std::uint64_t seed = 1;

  /// Throws ScenarioError on an invariant violation; returns warnings.
  std::vector<std::string> validate() const;
  bool operator==(const Scenario&) const = default;
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Scenario load_scenario(const std::string& text);
Scenario load_scenario_file(const std::string& path);
std::string serialize_scenario(const Scenario& s);

}  // namespace cmtda
