#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "optoent/analytic.hpp"

namespace optoent {

struct ClickEvent {
  double time = 0.0;
  DetectorTag tag;
};

/// Photodetection events of one run, in strictly increasing time order.
struct ClickRecord {
  std::vector<ClickEvent> events;
  double start_time = 0.0;
  double duration = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> params;

  double end_time() const { return start_time + duration; }
  std::size_t count(DetectorTag tag) const;
  /// Times of the events carrying `tag`.
  std::vector<double> times(DetectorTag tag) const;
  /// Throws a config error if times are not strictly increasing or fall outside the window.
  void check_ordering() const;
};

}  // namespace optoent
