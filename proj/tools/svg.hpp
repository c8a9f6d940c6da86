#pragma once

#include <optional>
#include <string>
#include <vector>

namespace optoent::cli {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  ///< optional symmetric error bars
  bool markers = false;     ///< markers instead of a polyline
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::optional<double> reference;  ///< dashed horizontal line
};

/// Values row-major with the y index outer, as in analytic::WitnessMap.
struct HeatMap {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> values;
  std::vector<Series> overlays;
};

/// Static SVG documents. Output depends only on the inputs; `provenance`
/// goes into a leading comment.
std::string render(const LinePlot& plot, const std::string& provenance);
std::string render(const HeatMap& map, const std::string& provenance);

}  // namespace optoent::cli
