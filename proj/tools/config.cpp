#include "config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "optoent/core.hpp"
#include "optoent/error.hpp"

namespace optoent::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct UnitDef {
  const char* name;
  Dim dim;
  double factor;
  UnitSystem system;
};

// Frequencies in Hz are cycles per second; they are stored as rad/s.
constexpr UnitDef kUnits[] = {
    {"Hz", Dim::rate, kTwoPi, UnitSystem::si},
    {"kHz", Dim::rate, kTwoPi * 1e3, UnitSystem::si},
    {"MHz", Dim::rate, kTwoPi * 1e6, UnitSystem::si},
    {"GHz", Dim::rate, kTwoPi * 1e9, UnitSystem::si},
    {"rad/s", Dim::rate, 1.0, UnitSystem::si},
    {"scaled", Dim::rate, 1.0, UnitSystem::scaled},
    {"s", Dim::time, 1.0, UnitSystem::si},
    {"ms", Dim::time, 1e-3, UnitSystem::si},
    {"us", Dim::time, 1e-6, UnitSystem::si},
    {"ns", Dim::time, 1e-9, UnitSystem::si},
    {"scaled", Dim::time, 1.0, UnitSystem::scaled},
    {"K", Dim::temperature, 1.0, UnitSystem::unset},
    {"mK", Dim::temperature, 1e-3, UnitSystem::unset},
    {"uK", Dim::temperature, 1e-6, UnitSystem::unset},
    {"rad", Dim::angle, 1.0, UnitSystem::unset},
    {"deg", Dim::angle, kPi / 180.0, UnitSystem::unset},
};

const char* dim_name(Dim d) {
  switch (d) {
    case Dim::none: return "dimensionless";
    case Dim::rate: return "a rate (Hz, kHz, MHz, GHz, rad/s or scaled)";
    case Dim::time: return "a time (s, ms, us, ns or scaled)";
    case Dim::temperature: return "a temperature (K, mK, uK)";
    case Dim::angle: return "an angle (rad, deg)";
  }
  return "";
}

double parse_number(const std::string& s, const std::string& where) {
  if (s.empty()) fail_config("invalid config", where + ": missing number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) {
    fail_config("invalid config", where + ": '" + s + "' is not a finite number");
  }
  return v;
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Config Config::parse(std::istream& is, const std::string& source) {
  Config c;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail_config("invalid config", where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) fail_config("invalid config", where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail_config("invalid config", where + ": expected 'key = value'");
    if (section.empty()) fail_config("invalid config", where + ": key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail_config("invalid config", where + ": empty key");
    auto& sec = c.sections_[section];
    if (sec.count(key)) fail_config("duplicate key", where + ": " + section + "." + key + " given twice");
    sec[key] = {value, where, false};
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail_config("io error", "cannot open config '" + path + "'");
  return parse(is, path);
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    fail_config("invalid config", "--set expects section.key=value, got '" + assignment + "'");
  }
  set(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
      trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  sections_[section][key] = {value, "--set " + section + "." + key, false};
}

bool Config::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

Config::Entry* Config::find(const std::string& section, const std::string& key) {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return nullptr;
  k->second.used = true;
  return &k->second;
}

void Config::require_units(UnitSystem u, const std::string& why) {
  if (u == UnitSystem::unset) return;
  if (units_ == UnitSystem::unset) {
    units_ = u;
    units_origin_ = why;
    return;
  }
  if (units_ != u) {
    fail_config("ambiguous units", why + " uses " + (u == UnitSystem::si ? "SI" : "scaled") +
                                       " units but " + units_origin_ + " already fixed " +
                                       (units_ == UnitSystem::si ? "SI" : "scaled") + " units");
  }
}

std::optional<double> Config::quantity(const std::string& section, const std::string& key, Dim dim) {
  Entry* e = find(section, key);
  if (!e) return std::nullopt;
  const std::string where = e->origin + " (" + section + "." + key + ")";
  const auto sp = e->value.find_first_of(" \t");
  const std::string number = sp == std::string::npos ? e->value : e->value.substr(0, sp);
  const std::string unit = sp == std::string::npos ? "" : trim(e->value.substr(sp));
  const double v = parse_number(number, where);
  if (dim == Dim::none) {
    if (!unit.empty()) fail_config("invalid units", where + ": dimensionless value takes no unit, got '" + unit + "'");
    return v;
  }
  if (unit.empty()) fail_config("invalid units", where + ": missing unit; expected " + dim_name(dim));
  for (const auto& u : kUnits) {
    if (u.dim == dim && unit == u.name) {
      require_units(u.system, where);
      return v * u.factor;
    }
  }
  fail_config("invalid units", where + ": unit '" + unit + "' is not " + dim_name(dim));
}

std::optional<long long> Config::integer(const std::string& section, const std::string& key) {
  Entry* e = find(section, key);
  if (!e) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(e->value.c_str(), &end, 10);
  if (e->value.empty() || end != e->value.c_str() + e->value.size() || errno == ERANGE) {
    fail_config("invalid config", e->origin + ": " + section + "." + key + " must be an integer");
  }
  return v;
}

std::optional<std::string> Config::text(const std::string& section, const std::string& key) {
  Entry* e = find(section, key);
  if (!e) return std::nullopt;
  return e->value;
}

std::vector<std::string> Config::list(const std::string& section, const std::string& key) {
  std::vector<std::string> out;
  Entry* e = find(section, key);
  if (!e) return out;
  std::istringstream ss(e->value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void Config::reject_unused() const {
  for (const auto& [section, keys] : sections_) {
    for (const auto& [key, e] : keys) {
      if (!e.used) fail_config("unknown key", e.origin + ": " + section + "." + key + " is not used by this run");
    }
  }
}

void ConfigWriter::section(const std::string& name) {
  if (!out_.empty()) out_ += "\n";
  out_ += "[" + name + "]\n";
}

void ConfigWriter::quantity(const std::string& key, double value, Dim dim, UnitSystem units) {
  std::string unit;
  switch (dim) {
    case Dim::none: break;
    case Dim::rate: unit = units == UnitSystem::scaled ? "scaled" : "rad/s"; break;
    case Dim::time: unit = units == UnitSystem::scaled ? "scaled" : "s"; break;
    case Dim::temperature: unit = "K"; break;
    case Dim::angle: unit = "rad"; break;
  }
  out_ += key + " = " + format_double(value) + (unit.empty() ? "" : " " + unit) + "\n";
}

void ConfigWriter::integer(const std::string& key, long long value) {
  out_ += key + " = " + std::to_string(value) + "\n";
}

void ConfigWriter::text(const std::string& key, const std::string& value) { out_ += key + " = " + value + "\n"; }

}  // namespace optoent::cli
