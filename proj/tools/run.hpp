#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace optoent::cli {

inline const std::vector<std::string> kModes = {"derive",  "sweep",   "simulate-jumps", "simulate-heterodyne",
                                                "analyze", "witness-map"};

/// Resolved command line plus the config it points at. Flags given on the
/// command line take precedence over the [run] section.
struct RunRequest {
  Config config;
  std::string mode;    ///< empty: take [run] mode
  std::string preset;  ///< empty: take [run] preset, else none
  std::optional<std::uint64_t> seed;
  std::string format;  ///< empty: take [run] format, else csv
  std::filesystem::path out_dir = ".";
  std::vector<std::string> inputs;
  unsigned workers = 0;
  bool quiet = false;
};

/// Runs one mode, writes its artifacts and a manifest.cfg under out_dir.
/// Throws optoent::Error on any failure.
void run(RunRequest request);

}  // namespace optoent::cli
