#pragma once

#include <stdexcept>
#include <string>

namespace bestsubset {

enum class ErrorKind {
  ZeroVarianceColumn,
  NoConvergence,
  EmptyRegion,
  UnboundedDirection,
  NotKSparse,
  SingularGram,
  InfeasibleUB,
  DegenerateBounds,
  SpecConflict,
  ZeroSignal,
  NonpositiveReference,
  IoError,
  ConfigError,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::ZeroVarianceColumn: return "ZeroVarianceColumn";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::EmptyRegion: return "EmptyRegion";
    case ErrorKind::UnboundedDirection: return "UnboundedDirection";
    case ErrorKind::NotKSparse: return "NotKSparse";
    case ErrorKind::SingularGram: return "SingularGram";
    case ErrorKind::InfeasibleUB: return "InfeasibleUB";
    case ErrorKind::DegenerateBounds: return "DegenerateBounds";
    case ErrorKind::SpecConflict: return "SpecConflict";
    case ErrorKind::ZeroSignal: return "ZeroSignal";
    case ErrorKind::NonpositiveReference: return "NonpositiveReference";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every library failure is an Error carrying a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace bestsubset
