#pragma once

#include <stdexcept>
#include <string>

namespace optoent {

/// Broad failure class; the CLI maps each category onto an exit code.
enum class ErrorCategory {
  config,       ///< malformed or contradictory input (exit 2)
  numerical,    ///< regime or numerical failure (exit 3)
  statistical,  ///< not enough data for an estimate (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string code, const std::string& detail);

  ErrorCategory category() const noexcept { return category_; }
  /// Short stable identifier such as "heating regime" or "empty channel".
  const std::string& code() const noexcept { return code_; }
  /// Exit status used by the command-line tool.
  int exit_code() const noexcept;

 private:
  ErrorCategory category_;
  std::string code_;
};

[[noreturn]] void fail_config(const std::string& code, const std::string& detail);
[[noreturn]] void fail_numerical(const std::string& code, const std::string& detail);
[[noreturn]] void fail_statistical(const std::string& code, const std::string& detail);

}  // namespace optoent
