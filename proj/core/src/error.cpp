#include "optoent/error.hpp"

namespace optoent {

Error::Error(ErrorCategory category, std::string code, const std::string& detail)
    : std::runtime_error(code + ": " + detail), category_(category), code_(std::move(code)) {}

int Error::exit_code() const noexcept {
  switch (category_) {
    case ErrorCategory::config:
      return 2;
    case ErrorCategory::numerical:
      return 3;
    case ErrorCategory::statistical:
      return 4;
  }
  return 1;
}

void fail_config(const std::string& code, const std::string& detail) {
  throw Error(ErrorCategory::config, code, detail);
}

void fail_numerical(const std::string& code, const std::string& detail) {
  throw Error(ErrorCategory::numerical, code, detail);
}

void fail_statistical(const std::string& code, const std::string& detail) {
  throw Error(ErrorCategory::statistical, code, detail);
}

}  // namespace optoent
