#pragma once

#include <stdexcept>
#include <string>

namespace glmix {

enum class ErrorKind {
  NotMixing,
  DeadSymbol,
  DepthMismatch,
  InadmissibleWord,
  DepthTooSmall,
  NoConvergence,
  InsufficientData,
  WordTooShort,
  BudgetExceeded,
  EigenvalueCrossing,
  ToleranceUndefined,
  NotFound,
  NotNice,
  DegenerateWindow,
  NotPositive,
  ConfigError,
  InvalidArgument,
};

inline const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::NotMixing: return "NotMixing";
    case ErrorKind::DeadSymbol: return "DeadSymbol";
    case ErrorKind::DepthMismatch: return "DepthMismatch";
    case ErrorKind::InadmissibleWord: return "InadmissibleWord";
    case ErrorKind::DepthTooSmall: return "DepthTooSmall";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::WordTooShort: return "WordTooShort";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::EigenvalueCrossing: return "EigenvalueCrossing";
    case ErrorKind::ToleranceUndefined: return "ToleranceUndefined";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::NotNice: return "NotNice";
    case ErrorKind::DegenerateWindow: return "DegenerateWindow";
    case ErrorKind::NotPositive: return "NotPositive";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Error";
}

/// Every failure raised by the library carries one of the kinds above.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(kind_name(kind)) + ": " + what), kind_(kind), detail_(what) {}
  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace glmix
