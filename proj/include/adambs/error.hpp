#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace adambs {

enum class ErrorKind {
  InvalidConfig,
  InfeasibleFloor,
  IndexOutOfRange,
  NonFinite,
  DimensionMismatch,
  BudgetExceeded,
  AllZeroNorms,
  ParseError,
  RaggedRow,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::InfeasibleFloor: return "infeasible-floor";
    case ErrorKind::IndexOutOfRange: return "index-out-of-range";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::BudgetExceeded: return "budget-exceeded";
    case ErrorKind::AllZeroNorms: return "all-zero-norms";
    case ErrorKind::ParseError: return "parse-error";
    case ErrorKind::RaggedRow: return "ragged-row";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace adambs
