#pragma once

#include <stdexcept>
#include <string>

namespace kernbal {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kNonFinite,
  kZeroPivot,
  kRankDeficient,
  kGuardExceeded,
  kParse,
};

// Single exception type for the library; the code lets callers (and the CLI)
// map failures to exit statuses without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kernbal
