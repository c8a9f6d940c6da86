#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "optoent/error.hpp"
#include "optoent/heterodyne.hpp"

namespace optoent::heterodyne {

static_assert(std::endian::native == std::endian::little, "record files are written in host order");

namespace {

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

Detector parse_detector(const std::string& s) {
  if (s == "A") return Detector::A;
  if (s == "B") return Detector::B;
  if (s == "S") return Detector::single;
  fail_config("invalid record", "unknown detector '" + s + "'");
}

}  // namespace

void save_record(const std::string& path, const HeterodyneRecord& rec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_config("io error", "cannot open " + path + " for writing");
  out << "# optoent heterodyne record\n";
  out << "# detector = " << to_string(rec.detector) << "\n";
  out << "# dt = " << fmt(rec.dt) << "\n";
  out << "# samples = " << rec.samples.size() << "\n";
  out << "# duration = " << fmt(rec.duration()) << "\n";
  out << "# noise_floor = " << fmt(rec.noise_floor) << "\n";
  out << "# frame = " << fmt(rec.frame) << "\n";
  out << "# omega_m = " << fmt(rec.omega_m) << "\n";
  out << "# start_time = " << fmt(rec.start_time) << "\n";
  out << "# seed = " << rec.seed << "\n";
  for (const auto& [k, v] : rec.params) out << "# param." << k << " = " << v << "\n";
  out << "# end\n";
  // std::complex<double> is laid out as (re, im).
  out.write(reinterpret_cast<const char*>(rec.samples.data()),
            static_cast<std::streamsize>(rec.samples.size() * sizeof(cplx)));
  if (!out) fail_config("io error", "write to " + path + " failed");
}

HeterodyneRecord load_record(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_config("io error", "cannot open " + path);
  HeterodyneRecord rec;
  std::string line;
  std::size_t n = 0;
  bool have_samples = false;
  bool closed = false;
  while (std::getline(in, line)) {
    if (line == "# end") {
      closed = true;
      break;
    }
    if (line.empty() || line[0] != '#') fail_config("invalid record", "malformed header line '" + line + "'");
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(1, eq - 1));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "detector") rec.detector = parse_detector(value);
      else if (key == "dt") rec.dt = std::stod(value);
      else if (key == "samples") { n = std::stoull(value); have_samples = true; }
      else if (key == "noise_floor") rec.noise_floor = std::stod(value);
      else if (key == "frame") rec.frame = std::stod(value);
      else if (key == "omega_m") rec.omega_m = std::stod(value);
      else if (key == "start_time") rec.start_time = std::stod(value);
      else if (key == "seed") rec.seed = std::stoull(value);
      else if (key.rfind("param.", 0) == 0) rec.params.emplace_back(key.substr(6), value);
    } catch (const std::logic_error&) {
      fail_config("invalid record", "bad value for '" + key + "'");
    }
  }
  if (!closed || !have_samples || !(rec.dt > 0.0)) fail_config("invalid record", "incomplete header in " + path);
  rec.samples.resize(n);
  in.read(reinterpret_cast<char*>(rec.samples.data()), static_cast<std::streamsize>(n * sizeof(cplx)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(cplx)) {
    fail_config("invalid record", "sample block shorter than declared");
  }
  return rec;
}

}  // namespace optoent::heterodyne
