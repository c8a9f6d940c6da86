#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace optoent::cli {

/// Physical dimension of a config value; decides which unit suffixes parse.
enum class Dim { none, rate, time, temperature, angle };

/// Unit system of the dimensional values in one config. Desk runs are in
/// units of gamma_eff ("scaled"); everything else is SI. Mixing is rejected.
enum class UnitSystem { unset, si, scaled };

/// Flat "[section]" / "key = value unit" file. Every key read must be
/// declared by the caller; leftovers are reported by reject_unused().
class Config {
 public:
  static Config parse(std::istream& is, const std::string& source);
  static Config load(const std::string& path);

  /// "section.key=value" override from the command line.
  void set(const std::string& assignment);
  void set(const std::string& section, const std::string& key, const std::string& value);
  bool has(const std::string& section, const std::string& key) const;
  bool has_section(const std::string& section) const { return sections_.count(section) > 0; }

  /// Dimensional values come back in rad/s, s, K or rad (or scaled units).
  std::optional<double> quantity(const std::string& section, const std::string& key, Dim dim);
  std::optional<long long> integer(const std::string& section, const std::string& key);
  std::optional<std::string> text(const std::string& section, const std::string& key);
  std::vector<std::string> list(const std::string& section, const std::string& key);

  UnitSystem units() const { return units_; }
  /// Forces the unit system, e.g. from a preset. Conflicts are config errors.
  void require_units(UnitSystem u, const std::string& why);

  /// Throws "unknown key" for entries nobody asked for.
  void reject_unused() const;

 private:
  struct Entry {
    std::string value;
    std::string origin;  // "file:line" or "--set"
    bool used = false;
  };
  Entry* find(const std::string& section, const std::string& key);

  std::map<std::string, std::map<std::string, Entry>> sections_;
  UnitSystem units_ = UnitSystem::unset;
  std::string units_origin_;
};

/// Writes a resolved config back in the same format; values keep 17 digits.
class ConfigWriter {
 public:
  void section(const std::string& name);
  void quantity(const std::string& key, double value, Dim dim, UnitSystem units);
  void integer(const std::string& key, long long value);
  void text(const std::string& key, const std::string& value);
  std::string str() const { return out_; }

 private:
  std::string out_;
};

std::string format_double(double x);

}  // namespace optoent::cli
