#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hitlab {

enum class ErrorKind {
  PhaseSpaceMismatch,
  Domain,
  Parameter,
  Range,
  Geometry,
  Undersampled,
  InsufficientData,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::PhaseSpaceMismatch: return "phase-space mismatch";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Range: return "range error";
    case ErrorKind::Geometry: return "geometry error";
    case ErrorKind::Undersampled: return "undersampled";
    case ErrorKind::InsufficientData: return "insufficient data";
  }
  return "error";
}

// All library failures are reported through this one exception type; the
// kind is what callers (and the CLI exit-status mapping) dispatch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) +
                           (detail.empty() ? "" : ": " + detail)),
        kind_(kind),
        detail_(detail) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace hitlab
