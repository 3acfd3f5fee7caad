#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>

#include "hitlab/error.hpp"

namespace hitlab {

/// Point of T^1 = R/Z, stored as the representative in [0, 1).
struct CirclePoint {
  double x = 0.0;
};

/// Point of the solid torus T^1 x D.
struct TorusDiskPoint {
  double x = 0.0;
  std::complex<double> z{};
};

/// Billiard configuration at a reflection: arclength r on the boundary and
/// angle phi in (-pi/2, pi/2) between the reflected vector and the inward
/// normal.
struct BilliardPoint {
  double r = 0.0;
  double phi = 0.0;
};

using PhasePoint = std::variant<CirclePoint, TorusDiskPoint, BilliardPoint>;

inline double wrap_unit(double x) {
  double y = x - std::floor(x);
  if (y >= 1.0) y = 0.0;
  return y;
}

inline double wrap_period(double x, double period) {
  double y = std::fmod(x, period);
  if (y < 0.0) y += period;
  if (y >= period) y = 0.0;
  return y;
}

/// Shortest distance between a and b on a circle of the given circumference.
inline double circular_distance(double a, double b, double period = 1.0) {
  double d = std::fabs(a - b);
  d = std::fmod(d, period);
  return std::min(d, period - d);
}

inline CirclePoint make_circle(double x) { return {wrap_unit(x)}; }

inline TorusDiskPoint make_torus_disk(double x, std::complex<double> z) {
  if (!(std::norm(z) <= 1.0)) throw Error(ErrorKind::Domain, "|z| must be at most 1");
  return {wrap_unit(x), z};
}

enum class SystemKind { Doubling, Lsv, Solenoid, Stadium };

inline std::string_view to_string(SystemKind k) {
  switch (k) {
    case SystemKind::Doubling: return "doubling";
    case SystemKind::Lsv: return "lsv";
    case SystemKind::Solenoid: return "solenoid";
    case SystemKind::Stadium: return "stadium";
  }
  return "?";
}

inline SystemKind parse_system_kind(std::string_view s) {
  if (s == "doubling") return SystemKind::Doubling;
  if (s == "lsv") return SystemKind::Lsv;
  if (s == "solenoid") return SystemKind::Solenoid;
  if (s == "stadium") return SystemKind::Stadium;
  throw Error(ErrorKind::Parameter, "unknown system '" + std::string(s) + "'");
}

/// Supremum of the derivative of the degree-2 LSV map, 2 + gamma.
inline double lsv_sup_deriv(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw Error(ErrorKind::Parameter, "SRB measure requires gamma<1 (gamma must lie in (0,1))");
  return 2.0 + gamma;
}

/// Parameters of one dynamical system plus the constants derived from them.
///
/// Use the named constructors; they validate. `zeta` is the return-time tail
/// exponent and `alpha` the contraction exponent of the tower model (infinite
/// for the uniformly expanding doubling map). `sup_deriv` is the sup norm of
/// the base map derivative and is zero for the billiard.
struct SystemSpec {
  SystemKind kind = SystemKind::Doubling;
  double gamma = 0.0;
  double theta = 0.0;
  double ell = 0.0;
  double sup_deriv = 2.0;
  double zeta = std::numeric_limits<double>::infinity();
  double alpha = std::numeric_limits<double>::infinity();

  static SystemSpec doubling() { return {}; }

  static SystemSpec lsv(double gamma) {
    SystemSpec s;
    s.kind = SystemKind::Lsv;
    s.gamma = gamma;
    s.sup_deriv = lsv_sup_deriv(gamma);
    s.zeta = 1.0 / gamma;
    s.alpha = 1.0 + 1.0 / gamma;
    return s;
  }

  static SystemSpec solenoid(double gamma, double theta) {
    SystemSpec s = lsv(gamma);
    s.kind = SystemKind::Solenoid;
    s.theta = theta;
    if (!(theta > 0.0 && theta * (1.0 + s.sup_deriv) < 1.0)) {
      std::ostringstream msg;
      msg << "theta*(1+sup_deriv) must be < 1 (theta=" << theta << ", sup_deriv=" << s.sup_deriv
          << ", product=" << theta * (1.0 + s.sup_deriv) << ")";
      throw Error(ErrorKind::Parameter, msg.str());
    }
    return s;
  }

  static SystemSpec stadium(double ell) {
    if (!(ell > 0.0 && std::isfinite(ell)))
      throw Error(ErrorKind::Parameter, "stadium straight-segment length ell must be > 0");
    SystemSpec s;
    s.kind = SystemKind::Stadium;
    s.ell = ell;
    s.sup_deriv = 0.0;
    s.zeta = 2.0;
    s.alpha = 1.0;
    return s;
  }

  /// Boundary length 2(pi + ell) of the stadium.
  double perimeter() const { return 2.0 * (std::numbers::pi + ell); }
};

/// Builds a billiard point, wrapping r and rejecting |phi| >= pi/2.
inline BilliardPoint make_billiard(double r, double phi, double ell) {
  if (!(std::fabs(phi) < std::numbers::pi / 2))
    throw Error(ErrorKind::Domain, "billiard angle must satisfy |phi| < pi/2");
  return {wrap_period(r, 2.0 * (std::numbers::pi + ell)), phi};
}

inline bool matches(const SystemSpec& spec, const PhasePoint& p) {
  switch (spec.kind) {
    case SystemKind::Doubling:
    case SystemKind::Lsv: return std::holds_alternative<CirclePoint>(p);
    case SystemKind::Solenoid: return std::holds_alternative<TorusDiskPoint>(p);
    case SystemKind::Stadium: return std::holds_alternative<BilliardPoint>(p);
  }
  return false;
}

inline void require_matches(const SystemSpec& spec, const PhasePoint& p) {
  if (!matches(spec, p))
    throw Error(ErrorKind::PhaseSpaceMismatch,
                "point does not belong to the phase space of " + std::string(to_string(spec.kind)));
}

}  // namespace hitlab
