#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <utility>

#include "hitlab/error.hpp"
#include "hitlab/phase_space.hpp"

namespace hitlab {

// ---------------------------------------------------------------------------
// Interval and solenoid maps

/// Degree-2 Liverani-Saussol-Vaienti map on [0,1]:
///   g(x) = x (1 + 2^gamma x^gamma)  for x < 1/2,
///   g(x) = 2x - 1                   for x >= 1/2.
/// x = 0 is a neutral fixed point (g'(0+) = 1).
inline double lsv_map(double x, double gamma) {
  if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorKind::Domain, "lsv_map requires x in [0,1]");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw Error(ErrorKind::Parameter, "SRB measure requires gamma<1 (gamma must lie in (0,1))");
  if (x < 0.5) return x * (1.0 + std::pow(2.0 * x, gamma));
  return 2.0 * x - 1.0;
}

namespace detail {

// Unchecked kernels used inside orbit loops once parameters are validated.
inline double lsv_step(double x, double gamma) {
  const double y = x < 0.5 ? x * (1.0 + std::pow(2.0 * x, gamma)) : 2.0 * x - 1.0;
  return y >= 1.0 ? y - 1.0 : y;
}

inline std::complex<double> unit_phase(double x) {
  const double a = 2.0 * std::numbers::pi * x;
  return {std::cos(a), std::sin(a)};
}

inline void require_solenoid(const SystemSpec& spec) {
  if (spec.kind != SystemKind::Solenoid)
    throw Error(ErrorKind::PhaseSpaceMismatch, "system is not a solenoid");
  if (!(spec.theta > 0.0 && spec.theta * (1.0 + spec.sup_deriv) < 1.0))
    throw Error(ErrorKind::Parameter, "theta*(1+sup_deriv) must be < 1");
}

}  // namespace detail

/// f(x, z) = (g(x), theta z + e^{2 pi i x} / 2) on the solid torus.
inline std::pair<double, std::complex<double>> solenoid_map(double x, std::complex<double> z,
                                                            const SystemSpec& spec) {
  detail::require_solenoid(spec);
  if (!(std::norm(z) <= 1.0)) throw Error(ErrorKind::Domain, "solenoid_map requires |z| <= 1");
  const double base = wrap_unit(x);
  const double gx = detail::lsv_step(base, spec.gamma);
  return {gx, spec.theta * z + 0.5 * detail::unit_phase(base)};
}

/// Evaluates f^n(x, z) through the explicit sum
///   (g^n x, theta^n z + 1/2 sum_{j<n} theta^{n-1-j} e^{2 pi i g^j x}).
/// This shares only the base map with `solenoid_map`; the fiber coordinate
/// is accumulated from the phase sequence, not by composing the fiber map.
inline std::pair<double, std::complex<double>> solenoid_iterate_closed_form(
    double x, std::complex<double> z, long n, const SystemSpec& spec) {
  detail::require_solenoid(spec);
  if (!(std::norm(z) <= 1.0)) throw Error(ErrorKind::Domain, "solenoid_map requires |z| <= 1");
  if (n < 1) throw Error(ErrorKind::Domain, "closed form requires n >= 1");
  double gj = wrap_unit(x);
  std::complex<double> phase_sum{};
  for (long j = 0; j < n; ++j) {
    // Horner form of sum_j theta^{n-1-j} e_j.
    phase_sum = spec.theta * phase_sum + detail::unit_phase(gj);
    gj = detail::lsv_step(gj, spec.gamma);
  }
  return {gj, std::pow(spec.theta, static_cast<double>(n)) * z + 0.5 * phase_sum};
}

// ---------------------------------------------------------------------------
// Stadium billiard

enum class SegmentKind { Bottom, Top, RightArc, LeftArc };

/// Point of the stadium boundary with its inward unit normal.
struct BoundaryPoint {
  std::array<double, 2> position{};
  std::array<double, 2> inward_normal{};
  SegmentKind segment = SegmentKind::RightArc;
};

/// Arclength chart of the stadium boundary, counterclockwise from (ell/2, -1):
/// right arc on [0, pi], top segment on [pi, pi+ell], left arc on
/// [pi+ell, 2pi+ell], bottom segment on [2pi+ell, 2pi+2ell].
inline BoundaryPoint stadium_boundary_point(double r, double ell) {
  constexpr double pi = std::numbers::pi;
  const double h = ell / 2.0;
  r = wrap_period(r, 2.0 * (pi + ell));
  BoundaryPoint b;
  if (r <= pi) {
    const double a = r - pi / 2;
    b.position = {h + std::cos(a), std::sin(a)};
    b.inward_normal = {-std::cos(a), -std::sin(a)};
    b.segment = SegmentKind::RightArc;
  } else if (r < pi + ell) {
    b.position = {h - (r - pi), 1.0};
    b.inward_normal = {0.0, -1.0};
    b.segment = SegmentKind::Top;
  } else if (r <= 2 * pi + ell) {
    const double a = pi / 2 + (r - pi - ell);
    b.position = {-h + std::cos(a), std::sin(a)};
    b.inward_normal = {-std::cos(a), -std::sin(a)};
    b.segment = SegmentKind::LeftArc;
  } else {
    b.position = {-h + (r - 2 * pi - ell), -1.0};
    b.inward_normal = {0.0, 1.0};
    b.segment = SegmentKind::Bottom;
  }
  return b;
}

namespace detail {

// Travel lengths at or below this are the departure point itself.
inline constexpr double kDepartureTolerance = 1e-10;
// Hits this close to an arc/segment junction belong to the arc.
inline constexpr double kJunctionTolerance = 1e-12;

struct StadiumHit {
  double s = std::numeric_limits<double>::infinity();
  double r = 0.0;
  std::array<double, 2> normal{};
};

// Exit of the ray p + s v through the arc of the unit circle centred at
// (cx, 0) on the side sign * (x - cx) >= 0.
inline void intersect_arc(const std::array<double, 2>& p, const std::array<double, 2>& v,
                          double cx, double sign, double ell, StadiumHit& best) {
  constexpr double pi = std::numbers::pi;
  const double qx = p[0] - cx;
  const double qy = p[1];
  const double b = v[0] * qx + v[1] * qy;
  const double c = qx * qx + qy * qy - 1.0;
  const double disc = b * b - c;
  if (disc < 0.0) return;
  const double s = -b + std::sqrt(disc);
  if (!(s > kDepartureTolerance) || s >= best.s) return;
  const double hx = qx + s * v[0];
  const double hy = qy + s * v[1];
  if (sign * hx < -kJunctionTolerance) return;
  const double a = std::atan2(hy, hx);
  double r;
  if (sign > 0) {
    // angle in [-pi/2, pi/2] maps to r = a + pi/2 in [0, pi]
    r = std::clamp(a + pi / 2, 0.0, pi);
  } else {
    // angle in [pi/2, 3pi/2] maps to r = pi + ell + (a - pi/2)
    const double a2 = a < 0 ? a + 2 * pi : a;
    r = pi + ell + std::clamp(a2 - pi / 2, 0.0, pi);
  }
  const double norm = std::hypot(hx, hy);
  best = {s, r, {-hx / norm, -hy / norm}};
}

inline void intersect_flat(const std::array<double, 2>& p, const std::array<double, 2>& v,
                           double y_line, double ell, StadiumHit& best) {
  constexpr double pi = std::numbers::pi;
  const double h = ell / 2.0;
  if (y_line > 0 ? v[1] <= 0.0 : v[1] >= 0.0) return;
  const double s = (y_line - p[1]) / v[1];
  if (!(s > kDepartureTolerance) || s >= best.s) return;
  const double hx = p[0] + s * v[0];
  if (!(std::fabs(hx) < h - kJunctionTolerance)) return;
  if (y_line > 0)
    best = {s, pi + (h - hx), {0.0, -1.0}};
  else
    best = {s, 2 * pi + ell + (hx + h), {0.0, 1.0}};
}

}  // namespace detail

/// One bounce of the stadium billiard map.
///
/// The outgoing direction is the inward normal rotated by phi, positive phi
/// turning toward increasing arclength. Returns the arclength of the next
/// reflection and the angle of the reflected vector there.
inline std::pair<double, double> stadium_map(double r, double phi, double ell) {
  constexpr double pi = std::numbers::pi;
  if (!(std::fabs(phi) < pi / 2)) throw Error(ErrorKind::Domain, "stadium_map requires |phi| < pi/2");
  const BoundaryPoint from = stadium_boundary_point(r, ell);
  const auto& n = from.inward_normal;
  const std::array<double, 2> t{n[1], -n[0]};
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  const std::array<double, 2> v{c * n[0] + s * t[0], c * n[1] + s * t[1]};

  detail::StadiumHit hit;
  detail::intersect_arc(from.position, v, ell / 2.0, 1.0, ell, hit);
  detail::intersect_arc(from.position, v, -ell / 2.0, -1.0, ell, hit);
  detail::intersect_flat(from.position, v, 1.0, ell, hit);
  detail::intersect_flat(from.position, v, -1.0, ell, hit);
  if (!std::isfinite(hit.s)) throw Error(ErrorKind::Geometry, "ray left the stadium without a hit");

  // Reflected direction makes angle phi' with the arrival normal: its normal
  // component is -v.n' and its tangential component is v.t'.
  const auto& m = hit.normal;
  const double vn = v[0] * m[0] + v[1] * m[1];
  const double vt = v[0] * m[1] - v[1] * m[0];
  double phi_out = std::atan2(vt, -vn);
  const double limit = std::nextafter(pi / 2, 0.0);
  phi_out = std::clamp(phi_out, -limit, limit);
  return {wrap_period(hit.r, 2.0 * (pi + ell)), phi_out};
}

}  // namespace hitlab
