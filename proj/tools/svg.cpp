#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace optoent::cli {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 55.0;

const char* kPalette[] = {"#c0392b", "#2c6fbb", "#2e8b57", "#8e44ad", "#d35400", "#555555"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Comments may not contain "--".
std::string comment_safe(std::string s) {
  for (std::size_t p = s.find("--"); p != std::string::npos; p = s.find("--")) s.replace(p, 2, "- -");
  return s;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!(lo <= hi)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

std::vector<double> ticks(const Range& r) {
  const double span = r.hi - r.lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(r.lo / step) * step; t <= r.hi + 1e-9 * step; t += step) out.push_back(t);
  return out;
}

struct Frame {
  Range x;
  Range y;
  double sx(double v) const { return kLeft + (v - x.lo) / (x.hi - x.lo) * (kWidth - kLeft - kRight); }
  double sy(double v) const { return kHeight - kBottom - (v - y.lo) / (y.hi - y.lo) * (kHeight - kTop - kBottom); }
};

std::string header(const std::string& provenance, const std::string& title) {
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<!-- " + comment_safe(provenance) + " -->\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
       "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
       "</text>\n";
  return s;
}

std::string axes(const Frame& f, const std::string& xl, const std::string& yl) {
  std::string s;
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  s += "<rect x=\"" + num(x0) + "\" y=\"" + num(y1) + "\" width=\"" + num(x1 - x0) + "\" height=\"" + num(y0 - y1) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : ticks(f.x)) {
    const double px = f.sx(t);
    s += "<line x1=\"" + num(px) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(px) + "\" y2=\"" + num(y0 + 5) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(px) + "\" y=\"" + num(y0 + 18) + "\" text-anchor=\"middle\">" + tick_label(t) + "</text>\n";
  }
  for (double t : ticks(f.y)) {
    const double py = f.sy(t);
    s += "<line x1=\"" + num(x0 - 5) + "\" y1=\"" + num(py) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(py) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(x0 - 8) + "\" y=\"" + num(py + 4) + "\" text-anchor=\"end\">" + tick_label(t) + "</text>\n";
  }
  s += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(kHeight - 15) + "\" text-anchor=\"middle\">" + escape(xl) +
       "</text>\n";
  s += "<text x=\"18\" y=\"" + num((y0 + y1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       num((y0 + y1) / 2) + ")\">" + escape(yl) + "</text>\n";
  return s;
}

std::string draw_series(const Frame& f, const Series& s, const char* colour) {
  std::string out;
  if (s.markers) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const double px = f.sx(s.x[i]);
      const double py = f.sy(s.y[i]);
      if (i < s.err.size() && std::isfinite(s.err[i])) {
        out += "<line x1=\"" + num(px) + "\" y1=\"" + num(f.sy(s.y[i] - s.err[i])) + "\" x2=\"" + num(px) +
               "\" y2=\"" + num(f.sy(s.y[i] + s.err[i])) + "\" stroke=\"" + colour + "\"/>\n";
      }
      out += "<circle cx=\"" + num(px) + "\" cy=\"" + num(py) + "\" r=\"2.5\" fill=\"" + colour + "\"/>\n";
    }
    return out;
  }
  std::string pts;
  auto flush = [&] {
    if (!pts.empty()) {
      out += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"1.5\" points=\"" + pts +
             "\"/>\n";
    }
    pts.clear();
  };
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    if (!std::isfinite(s.y[i]) || !std::isfinite(s.x[i])) {
      flush();
      continue;
    }
    if (!pts.empty()) pts += ' ';
    pts += num(f.sx(s.x[i])) + "," + num(f.sy(s.y[i]));
  }
  flush();
  return out;
}

std::string legend(const std::vector<Series>& series, std::size_t offset) {
  std::string s;
  double y = kTop + 14;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].label.empty()) continue;
    const char* colour = kPalette[(i + offset) % std::size(kPalette)];
    const double x = kWidth - kRight - 170;
    s += "<rect x=\"" + num(x) + "\" y=\"" + num(y - 9) + "\" width=\"12\" height=\"3\" fill=\"" + colour + "\"/>\n";
    s += "<text x=\"" + num(x + 18) + "\" y=\"" + num(y - 3) + "\">" + escape(series[i].label) + "</text>\n";
    y += 16;
  }
  return s;
}

// Two-stop ramp from white to dark blue.
std::string shade(double v, double vmax) {
  const double t = vmax > 0.0 ? std::clamp(v / vmax, 0.0, 1.0) : 0.0;
  const int r = static_cast<int>(std::lround(255 - t * (255 - 24)));
  const int g = static_cast<int>(std::lround(255 - t * (255 - 54)));
  const int b = static_cast<int>(std::lround(255 - t * (255 - 128)));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string render(const LinePlot& plot, const std::string& provenance) {
  Frame f;
  for (const auto& s : plot.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      f.x.add(s.x[i]);
      const double e = i < s.err.size() && std::isfinite(s.err[i]) ? s.err[i] : 0.0;
      f.y.add(s.y[i] - e);
      f.y.add(s.y[i] + e);
    }
  }
  if (plot.reference) f.y.add(*plot.reference);
  f.x.settle();
  f.y.settle();
  std::string s = header(provenance, plot.title);
  s += axes(f, plot.x_label, plot.y_label);
  if (plot.reference) {
    const double py = f.sy(*plot.reference);
    s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(py) + "\" x2=\"" + num(kWidth - kRight) + "\" y2=\"" +
         num(py) + "\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (std::size_t i = 0; i < plot.series.size(); ++i) {
    s += draw_series(f, plot.series[i], kPalette[i % std::size(kPalette)]);
  }
  s += legend(plot.series, 0);
  s += "</svg>\n";
  return s;
}

std::string render(const HeatMap& map, const std::string& provenance) {
  Frame f;
  for (double v : map.x) f.x.add(v);
  for (double v : map.y) f.y.add(v);
  f.x.settle();
  f.y.settle();
  double vmax = 0.0;
  for (double v : map.values) {
    if (std::isfinite(v)) vmax = std::max(vmax, v);
  }
  std::string s = header(provenance, map.title);
  const std::size_t nx = map.x.size();
  const std::size_t ny = map.y.size();
  // Cells centred on the grid points, clipped to the frame.
  auto edge = [](const std::vector<double>& g, std::size_t i, bool upper) {
    if (g.size() < 2) return g[0] + (upper ? 0.5 : -0.5);
    if (upper) return i + 1 < g.size() ? 0.5 * (g[i] + g[i + 1]) : g[i];
    return i > 0 ? 0.5 * (g[i - 1] + g[i]) : g[i];
  };
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const double v = map.values[j * nx + i];
      if (!(v > 0.0)) continue;
      const double x0 = f.sx(edge(map.x, i, false));
      const double x1 = f.sx(edge(map.x, i, true));
      const double y0 = f.sy(edge(map.y, j, true));
      const double y1 = f.sy(edge(map.y, j, false));
      s += "<rect x=\"" + num(x0) + "\" y=\"" + num(y0) + "\" width=\"" + num(x1 - x0 + 0.3) + "\" height=\"" +
           num(y1 - y0 + 0.3) + "\" fill=\"" + shade(v, vmax) + "\"/>\n";
    }
  }
  s += axes(f, map.x_label, map.y_label);
  for (std::size_t i = 0; i < map.overlays.size(); ++i) {
    s += draw_series(f, map.overlays[i], i == 0 ? "#000000" : kPalette[i % std::size(kPalette)]);
  }
  s += "<text x=\"" + num(kWidth - kRight) + "\" y=\"" + num(kTop - 6) + "\" text-anchor=\"end\">max " +
       tick_label(vmax) + "</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace optoent::cli
