#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oligo {

enum class ErrorKind {
  InvalidParams,
  NonStationary,
  InvalidMargin,
  NoSolution,
  NoStableRoot,
  Unstable,
  SingularRow,
  NotConverged,
  InsufficientSamples,
  OutOfRange,
  NoStableInit,
};

constexpr std::string_view to_string(ErrorKind k) noexcept {
  switch (k) {
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::NonStationary: return "NonStationary";
    case ErrorKind::InvalidMargin: return "InvalidMargin";
    case ErrorKind::NoSolution: return "NoSolution";
    case ErrorKind::NoStableRoot: return "NoStableRoot";
    case ErrorKind::Unstable: return "Unstable";
    case ErrorKind::SingularRow: return "SingularRow";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::NoStableInit: return "NoStableInit";
  }
  return "Unknown";
}

/// Every library failure is reported as an Error carrying a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace oligo
