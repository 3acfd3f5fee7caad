#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <utility>
#include <variant>

#include "hitlab/error.hpp"
#include "hitlab/phase_space.hpp"
#include "hitlab/rng.hpp"
#include "hitlab/systems.hpp"

namespace hitlab {

namespace detail {

// Fiber terms older than this many steps are scaled by theta^64 < 3^-64 and
// vanish below double resolution, so invariant sampling only evaluates the
// fiber over the final steps of the burn-in.
inline constexpr long kFiberMemory = 64;

inline double distance_unchecked(const SystemSpec& spec, const PhasePoint& p, const PhasePoint& q) {
  switch (spec.kind) {
    case SystemKind::Doubling:
    case SystemKind::Lsv:
      return circular_distance(std::get_if<CirclePoint>(&p)->x, std::get_if<CirclePoint>(&q)->x);
    case SystemKind::Solenoid: {
      const auto* a = std::get_if<TorusDiskPoint>(&p);
      const auto* b = std::get_if<TorusDiskPoint>(&q);
      return std::max(circular_distance(a->x, b->x), std::abs(a->z - b->z));
    }
    case SystemKind::Stadium: {
      const auto* a = std::get_if<BilliardPoint>(&p);
      const auto* b = std::get_if<BilliardPoint>(&q);
      return std::max(circular_distance(a->r, b->r, spec.perimeter()), std::fabs(a->phi - b->phi));
    }
  }
  return 0.0;
}

}  // namespace detail

/// Max-metric distance on the phase space of `spec`; circle coordinates use
/// the shortest arc.
inline double distance(const SystemSpec& spec, const PhasePoint& p, const PhasePoint& q) {
  require_matches(spec, p);
  require_matches(spec, q);
  return detail::distance_unchecked(spec, p, q);
}

/// A forward orbit being stepped in place.
///
/// For the doubling map an orbit may carry a *binary tail*: the state is a
/// 64-bit fixed-point word and each step shifts in a fresh random bit. This
/// is the exact orbit of a point whose binary expansion continues with
/// independent fair bits, i.e. of a Lebesgue-typical point. Without a tail,
/// doubling orbits are computed in double arithmetic, where x -> 2x mod 1 is
/// exact but every double is a dyadic rational that reaches 0 within about
/// 1075 steps.
class Orbit {
 public:
  Orbit(const SystemSpec& spec, const PhasePoint& start) : spec_(spec), point_(start) {
    require_matches(spec_, point_);
  }

  static Orbit with_binary_tail(std::uint64_t word, Rng tail) {
    Orbit o(SystemSpec::doubling(), CirclePoint{word_to_unit(word)});
    o.word_ = word;
    o.tail_.emplace(std::move(tail));
    return o;
  }

  const SystemSpec& spec() const { return spec_; }
  const PhasePoint& point() const { return point_; }

  void step() {
    switch (spec_.kind) {
      case SystemKind::Doubling: {
        auto& c = *std::get_if<CirclePoint>(&point_);
        if (tail_) {
          word_ = (word_ << 1) | static_cast<std::uint64_t>(tail_->next_bit());
          c.x = word_to_unit(word_);
        } else {
          c.x = wrap_unit(2.0 * c.x);
        }
        break;
      }
      case SystemKind::Lsv: {
        auto& c = *std::get_if<CirclePoint>(&point_);
        c.x = detail::lsv_step(c.x, spec_.gamma);
        break;
      }
      case SystemKind::Solenoid: {
        auto& t = *std::get_if<TorusDiskPoint>(&point_);
        t.z = spec_.theta * t.z + 0.5 * detail::unit_phase(t.x);
        t.x = detail::lsv_step(t.x, spec_.gamma);
        break;
      }
      case SystemKind::Stadium: {
        auto& b = *std::get_if<BilliardPoint>(&point_);
        const auto [r, phi] = stadium_map(b.r, b.phi, spec_.ell);
        b = {r, phi};
        break;
      }
    }
  }

  void advance(long n) {
    for (long i = 0; i < n; ++i) step();
  }

  double distance_to(const PhasePoint& q) const { return detail::distance_unchecked(spec_, point_, q); }

 private:
  static double word_to_unit(std::uint64_t w) { return static_cast<double>(w >> 11) * 0x1.0p-53; }

  SystemSpec spec_;
  PhasePoint point_;
  std::uint64_t word_ = 0;
  std::optional<Rng> tail_;
};

/// f^n(p) by n-fold application of the system map.
inline PhasePoint iterate(const SystemSpec& spec, const PhasePoint& p, long n) {
  if (n < 0) throw Error(ErrorKind::Domain, "iterate requires n >= 0");
  if (const auto* t = std::get_if<TorusDiskPoint>(&p); t && std::norm(t->z) > 1.0)
    throw Error(ErrorKind::Domain, "|z| must be at most 1");
  Orbit orbit(spec, p);
  orbit.advance(n);
  return orbit.point();
}

namespace detail {

inline PhasePoint sample_invariant_with(const SystemSpec& spec, Rng& rng, long burn_in) {
  switch (spec.kind) {
    case SystemKind::Doubling: return CirclePoint{rng.uniform()};
    case SystemKind::Stadium: {
      const double r = rng.uniform() * spec.perimeter();
      const double phi = std::asin(2.0 * rng.uniform_open() - 1.0);
      return BilliardPoint{r, phi};
    }
    case SystemKind::Lsv: {
      double x = rng.uniform();
      for (long i = 0; i < burn_in; ++i) x = lsv_step(x, spec.gamma);
      return CirclePoint{x};
    }
    case SystemKind::Solenoid: {
      double x = rng.uniform();
      const long base_only = burn_in > kFiberMemory ? burn_in - kFiberMemory : 0;
      for (long i = 0; i < base_only; ++i) x = lsv_step(x, spec.gamma);
      std::complex<double> z{};
      for (long i = base_only; i < burn_in; ++i) {
        z = spec.theta * z + 0.5 * unit_phase(x);
        x = lsv_step(x, spec.gamma);
      }
      return TorusDiskPoint{x, z};
    }
  }
  return CirclePoint{};
}

}  // namespace detail

/// Recommended burn-in for systems whose invariant measure is only
/// available as a pushforward limit.
inline constexpr long kDefaultBurnIn = 1000;

/// Draws one point distributed according to the invariant measure.
///
/// doubling: uniform on [0,1). stadium: exact draw from
/// cos(phi)/(4(pi+ell)) dr dphi. lsv/solenoid: a uniform base point (with
/// z = 0) pushed forward `burn_in` steps.
inline PhasePoint sample_invariant(const SystemSpec& spec, RngStream stream, long burn_in = kDefaultBurnIn) {
  if (burn_in < 0) throw Error(ErrorKind::Domain, "burn_in must be >= 0");
  Rng rng(stream);
  return detail::sample_invariant_with(spec, rng, burn_in);
}

/// Like sample_invariant, but returns the orbit of the sample. Doubling
/// samples carry a binary tail drawn from the same stream.
inline Orbit sample_orbit(const SystemSpec& spec, RngStream stream, long burn_in = kDefaultBurnIn) {
  if (burn_in < 0) throw Error(ErrorKind::Domain, "burn_in must be >= 0");
  Rng rng(stream);
  if (spec.kind == SystemKind::Doubling) {
    const std::uint64_t word = rng.next_u64();
    return Orbit::with_binary_tail(word, std::move(rng));
  }
  return Orbit(spec, detail::sample_invariant_with(spec, rng, burn_in));
}

/// Closed-form mu(B(x, r)) where the invariant density is explicit
/// (doubling, stadium); empty otherwise.
inline std::optional<double> analytic_ball_measure(const SystemSpec& spec, const PhasePoint& x, double r) {
  require_matches(spec, x);
  if (!(r > 0.0)) throw Error(ErrorKind::Domain, "radius must be positive");
  switch (spec.kind) {
    case SystemKind::Doubling: return std::min(2.0 * r, 1.0);
    case SystemKind::Stadium: {
      constexpr double half_pi = std::numbers::pi / 2;
      const auto& b = std::get<BilliardPoint>(x);
      const double length = spec.perimeter();
      const double width = std::min(2.0 * r, length);
      const double lo = std::max(b.phi - r, -half_pi);
      const double hi = std::min(b.phi + r, half_pi);
      return (width / length) * (std::sin(hi) - std::sin(lo)) / 2.0;
    }
    default: return std::nullopt;
  }
}

}  // namespace hitlab
