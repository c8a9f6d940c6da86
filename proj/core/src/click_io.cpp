#include "optoent/click_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "optoent/error.hpp"

namespace optoent {

namespace {

constexpr char kMagic[8] = {'O', 'P', 'T', 'O', 'C', 'L', 'K', '1'};

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string header_text(const ClickRecord& rec) {
  std::ostringstream os;
  os << "# optoent click record\n";
  os << "# start_time = " << fmt(rec.start_time) << "\n";
  os << "# duration = " << fmt(rec.duration) << "\n";
  os << "# seed = " << rec.seed << "\n";
  for (const auto& [k, v] : rec.params) os << "# param." << k << " = " << v << "\n";
  return os.str();
}

void parse_header_line(const std::string& line, ClickRecord& rec, bool& have_duration) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) return;
  const std::string key = trim(line.substr(1, eq - 1));
  const std::string value = trim(line.substr(eq + 1));
  try {
    if (key == "start_time") {
      rec.start_time = std::stod(value);
    } else if (key == "duration") {
      rec.duration = std::stod(value);
      have_duration = true;
    } else if (key == "seed") {
      rec.seed = std::stoull(value);
    } else if (key.rfind("param.", 0) == 0) {
      rec.params.emplace_back(key.substr(6), value);
    }
  } catch (const std::exception&) {
    fail_config("invalid record", "bad header value for '" + key + "'");
  }
}

Detector parse_detector(const std::string& s) {
  if (s == "A") return Detector::A;
  if (s == "B") return Detector::B;
  if (s == "S") return Detector::single;
  fail_config("invalid record", "unknown detector '" + s + "'");
}

Color parse_color(const std::string& s) {
  if (s == "red") return Color::red;
  if (s == "blue") return Color::blue;
  fail_config("invalid record", "unknown color '" + s + "'");
}

std::uint8_t encode_tag(DetectorTag t) {
  return static_cast<std::uint8_t>((static_cast<unsigned>(t.detector) << 1) |
                                   (t.color == Color::blue ? 1u : 0u));
}

DetectorTag decode_tag(std::uint8_t b) {
  const unsigned det = b >> 1;
  if (det > 2) fail_config("invalid record", "bad tag byte in binary record");
  return {static_cast<Detector>(det), (b & 1u) ? Color::blue : Color::red};
}

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    std::reverse(b.begin(), b.end());
    std::memcpy(&v, b.data(), sizeof(T));
  }
  return v;
}

void finish_read(ClickRecord& rec, bool have_duration) {
  if (!have_duration) fail_config("invalid record", "header lacks a duration");
  rec.check_ordering();
}

}  // namespace

void write_clicks_text(std::ostream& os, const ClickRecord& rec) {
  os << header_text(rec);
  for (const auto& e : rec.events) {
    os << fmt(e.time) << '\t' << to_string(e.tag.detector) << '\t' << to_string(e.tag.color) << '\n';
  }
}

ClickRecord read_clicks_text(std::istream& is) {
  ClickRecord rec;
  bool have_duration = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      parse_header_line(line, rec, have_duration);
      continue;
    }
    std::istringstream ls(line);
    std::string t, det, col;
    if (!std::getline(ls, t, '\t') || !std::getline(ls, det, '\t') || !std::getline(ls, col)) {
      fail_config("invalid record", "malformed event on line " + std::to_string(lineno));
    }
    ClickEvent e;
    try {
      e.time = std::stod(t);
    } catch (const std::exception&) {
      fail_config("invalid record", "bad time on line " + std::to_string(lineno));
    }
    e.tag = {parse_detector(trim(det)), parse_color(trim(col))};
    rec.events.push_back(e);
  }
  finish_read(rec, have_duration);
  return rec;
}

void write_clicks_binary(std::ostream& os, const ClickRecord& rec) {
  const std::string header = header_text(rec);
  os.write(kMagic, sizeof kMagic);
  const std::uint32_t len = to_little(static_cast<std::uint32_t>(header.size()));
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::array<char, 9> frame;
  for (const auto& e : rec.events) {
    const double t = to_little(e.time);
    std::memcpy(frame.data(), &t, 8);
    frame[8] = static_cast<char>(encode_tag(e.tag));
    os.write(frame.data(), 9);
  }
}

ClickRecord read_clicks_binary(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    fail_config("invalid record", "missing binary click-record magic");
  }
  std::uint32_t len = 0;
  if (!is.read(reinterpret_cast<char*>(&len), sizeof len)) fail_config("invalid record", "truncated header");
  len = to_little(len);
  std::string header(len, '\0');
  if (!is.read(header.data(), len)) fail_config("invalid record", "truncated header");
  ClickRecord rec;
  bool have_duration = false;
  std::istringstream hs(header);
  std::string line;
  while (std::getline(hs, line)) {
    if (!line.empty() && line[0] == '#') parse_header_line(line, rec, have_duration);
  }
  std::array<char, 9> frame;
  while (is.read(frame.data(), 9)) {
    double t;
    std::memcpy(&t, frame.data(), 8);
    rec.events.push_back({to_little(t), decode_tag(static_cast<std::uint8_t>(frame[8]))});
  }
  if (is.gcount() != 0) fail_config("invalid record", "trailing partial frame");
  finish_read(rec, have_duration);
  return rec;
}

void save_clicks(const std::string& path, const ClickRecord& rec, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) fail_config("io error", "cannot open '" + path + "' for writing");
  if (binary) {
    write_clicks_binary(os, rec);
  } else {
    write_clicks_text(os, rec);
  }
  if (!os) fail_config("io error", "failed writing '" + path + "'");
}

ClickRecord load_clicks(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail_config("io error", "cannot open '" + path + "'");
  char head[8] = {};
  is.read(head, 8);
  const bool binary = is.gcount() == 8 && std::memcmp(head, kMagic, 8) == 0;
  is.clear();
  is.seekg(0);
  return binary ? read_clicks_binary(is) : read_clicks_text(is);
}

}  // namespace optoent
