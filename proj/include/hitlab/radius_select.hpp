#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "hitlab/dynamics.hpp"
#include "hitlab/error.hpp"
#include "hitlab/hitstats.hpp"
#include "hitlab/rng.hpp"

namespace hitlab {

/// Exponent a = -ln 2 / ln(lambda) of the corona bound produced by a
/// dichotomy with shrink factor lambda.
inline double corona_exponent(double lambda) {
  if (!(lambda > 0.0 && lambda < 0.5)) throw Error(ErrorKind::Parameter, "lambda must lie in (0, 1/2)");
  return -std::log(2.0) / std::log(lambda);
}

/// Measure of annuli between the radii
///   rho(t) = theta^{n+1} + t (theta^n - theta^{n+1}),  t in [0,1],
/// around a fixed center, i.e. m((t1, t2]) = mu(B(x, rho(t2)) \ B(x, rho(t1))).
///
/// All queries on one profile use the same sample set so that masses of
/// different candidate intervals are compared consistently. The doubling
/// map uses the exact Lebesgue measure instead.
class AnnulusProfile {
 public:
  AnnulusProfile(const SystemSpec& spec, const PhasePoint& x, long n, double theta, std::uint64_t budget,
                 RngStream stream, long burn_in = kDefaultBurnIn)
      : spec_(spec), x_(x) {
    require_matches(spec, x);
    if (!(theta > 0.0 && theta < 1.0)) throw Error(ErrorKind::Parameter, "theta must lie in (0,1)");
    if (n < 0) throw Error(ErrorKind::Parameter, "n must be >= 0");
    outer_ = std::pow(theta, static_cast<double>(n));
    inner_ = outer_ * theta;
    if (spec.kind == SystemKind::Doubling) {
      exact_ = true;
      return;
    }
    if (budget == 0) throw Error(ErrorKind::Domain, "budget must be positive");
    budget_ = budget;
    // Only distances in [inner, outer) matter for annulus queries.
    auto d = detail::sample_distances(spec, x, budget, stream, burn_in, outer_);
    const auto first = detail::count_below(d, inner_);
    distances_.assign(d.begin() + static_cast<std::ptrdiff_t>(first), d.end());
    if (distances_.empty()) throw Error(ErrorKind::Undersampled, "no samples in the outer ball");
  }

  double radius_at(double t) const { return inner_ + t * (outer_ - inner_); }
  double inner_radius() const { return inner_; }
  double outer_radius() const { return outer_; }
  bool exact() const { return exact_; }
  std::uint64_t budget() const { return budget_; }

  /// Number of samples with rho(t1) <= d < rho(t2).
  std::uint64_t count(double t1, double t2) const {
    const double lo = radius_at(t1), hi = radius_at(t2);
    return detail::count_below(distances_, hi) - detail::count_below(distances_, lo);
  }

  double mass(double t1, double t2) const {
    if (!(t1 >= 0.0 && t2 <= 1.0 && t1 <= t2)) throw Error(ErrorKind::Domain, "require 0 <= t1 <= t2 <= 1");
    if (t1 == t2) return 0.0;
    if (exact_) {
      const double lo = *analytic_ball_measure(spec_, x_, radius_at(t1));
      const double hi = *analytic_ball_measure(spec_, x_, radius_at(t2));
      return hi - lo;
    }
    return static_cast<double>(count(t1, t2)) / static_cast<double>(budget_);
  }

 private:
  SystemSpec spec_;
  PhasePoint x_;
  double inner_ = 0.0, outer_ = 0.0;
  bool exact_ = false;
  std::uint64_t budget_ = 0;
  std::vector<double> distances_;
};

inline double corona_mass(const SystemSpec& spec, const PhasePoint& x, long n, double theta, double t1, double t2,
                          std::uint64_t budget, RngStream stream, long burn_in = kDefaultBurnIn) {
  if (!(t1 >= 0.0 && t2 <= 1.0 && t1 <= t2)) throw Error(ErrorKind::Domain, "require 0 <= t1 <= t2 <= 1");
  return AnnulusProfile(spec, x, n, theta, budget, stream, burn_in).mass(t1, t2);
}

enum class Side { Left, Right };

/// The two candidate sub-intervals of (a, b): length lambda (b-a), placed
/// rho (b-a) from the left and right endpoints, rho = (1 - 2 lambda)/3.
/// The inner endpoint of the left candidate is a + (rho + lambda)(b-a) with
/// rho + lambda = (1 + lambda)/3 formed in one rounding, so that for
/// lambda = 1/4 on (0,1) every endpoint is the correctly rounded fraction.
inline std::pair<std::pair<double, double>, std::pair<double, double>> dichotomy_candidates(double a, double b,
                                                                                            double lambda) {
  const double len = b - a;
  const double rho = (1.0 - 2.0 * lambda) / 3.0;
  const std::pair<double, double> left{a + rho * len, a + (1.0 + lambda) / 3.0 * len};
  const std::pair<double, double> right{b - rho * len - lambda * len, b - rho * len};
  return {left, right};
}

struct DichotomyTrace {
  double theta = 0.0;  // effective ratio, in (1/2, 1)
  long n = 0;          // effective level
  long root = 1;       // theta_effective = theta_input^(1/root)
  double lambda = 0.0;
  double rho = 0.0;
  std::vector<std::pair<double, double>> intervals;  // I_0 .. I_K
  std::vector<Side> chosen_sides;
  std::vector<double> masses;            // m(I_k)
  std::vector<double> mass_rel_errors;   // Monte Carlo relative std error of m(I_k); 0 when exact
  double t_star = 0.0;
  double radius = 0.0;
  bool exact = false;
};

/// Minimum average number of samples per compared candidate.
inline constexpr std::uint64_t kMinCandidateSamples = 100;

/// Nested-interval dichotomy choosing t_* and the radius
/// r = theta^{n+1} + t_* (theta^n - theta^{n+1}).
///
/// theta <= 1/2 is first replaced by its smallest integer root above 1/2
/// (and n scaled accordingly), which only narrows the target interval. Each
/// level keeps the lighter of two sub-intervals of relative length lambda
/// placed rho = (1 - 2 lambda)/3 from either end; estimated masses within
/// one standard error of each other count as a tie and go left. t_* is the
/// midpoint of I_K.
inline DichotomyTrace dichotomy_radius(const SystemSpec& spec, const PhasePoint& x, long n, double theta,
                                       double lambda, int depth, std::uint64_t budget, RngStream stream,
                                       long burn_in = kDefaultBurnIn) {
  if (!(theta > 0.0 && theta < 1.0)) throw Error(ErrorKind::Parameter, "theta must lie in (0,1)");
  if (!(lambda > 0.0 && lambda < 0.5)) throw Error(ErrorKind::Parameter, "lambda must lie in (0, 1/2)");
  if (depth < 1) throw Error(ErrorKind::Parameter, "depth K must be >= 1");
  if (n < 0) throw Error(ErrorKind::Parameter, "n must be >= 0");

  DichotomyTrace tr;
  tr.root = 1;
  while (!(std::pow(theta, 1.0 / static_cast<double>(tr.root)) > 0.5)) ++tr.root;
  tr.theta = tr.root == 1 ? theta : std::pow(theta, 1.0 / static_cast<double>(tr.root));
  tr.n = n * tr.root;
  tr.lambda = lambda;
  tr.rho = (1.0 - 2.0 * lambda) / 3.0;

  const AnnulusProfile profile(spec, x, tr.n, tr.theta, budget, stream, burn_in);
  tr.exact = profile.exact();

  auto rel_error = [&](double a, double b) {
    if (profile.exact()) return 0.0;
    const auto c = profile.count(a, b);
    return c == 0 ? 1.0 : 1.0 / std::sqrt(static_cast<double>(c));
  };

  double a = 0.0, b = 1.0;
  tr.intervals.emplace_back(a, b);
  tr.masses.push_back(profile.mass(a, b));
  tr.mass_rel_errors.push_back(rel_error(a, b));
  for (int k = 0; k < depth; ++k) {
    const auto [left, right] = dichotomy_candidates(a, b, lambda);
    const double ml = profile.mass(left.first, left.second);
    const double mr = profile.mass(right.first, right.second);
    bool tie;
    if (profile.exact()) {
      tie = std::fabs(ml - mr) <= 1e-12 * (ml + mr);
    } else {
      const auto cl = profile.count(left.first, left.second);
      const auto cr = profile.count(right.first, right.second);
      if (cl + cr < 2 * kMinCandidateSamples)
        throw Error(ErrorKind::Undersampled, "undersampled at level " + std::to_string(k));
      // Std error of the difference of two multinomial cells ~ sqrt(cl + cr).
      tie = std::fabs(static_cast<double>(cl) - static_cast<double>(cr)) <=
            std::sqrt(static_cast<double>(cl + cr));
    }
    const Side side = (tie || ml < mr) ? Side::Left : Side::Right;
    std::tie(a, b) = side == Side::Left ? left : right;
    tr.chosen_sides.push_back(side);
    tr.intervals.emplace_back(a, b);
    tr.masses.push_back(side == Side::Left ? ml : mr);
    tr.mass_rel_errors.push_back(rel_error(a, b));
  }
  tr.t_star = 0.5 * (a + b);
  tr.radius = profile.radius_at(tr.t_star);
  return tr;
}

struct CoronaCheck {
  double s = 0.0;
  double corona = 0.0;
  double corona_std_err = 0.0;
  double ball_2r = 0.0;
  double rhs = 0.0;
  double margin = 0.0;   // rhs - corona
  double c0_needed = 0.0;
  bool pass = false;
};

struct CoronaReport {
  double radius = 0.0;
  double a = 0.0;
  double c0 = 0.0;
  std::vector<CoronaCheck> checks;
  bool all_pass = false;
  /// Smallest C0 for which every s in the schedule passes.
  double smallest_passing_c0 = 0.0;
};

/// Checks mu(B(x,r+s) \ B(x,r)) <= C0 s^a r^{-a} mu(B(x,2r)) along a
/// schedule of s values.
inline CoronaReport verify_corona_bound(const SystemSpec& spec, const PhasePoint& x, double radius, double a,
                                        double c0, std::span<const double> s_schedule, std::uint64_t budget,
                                        RngStream stream, long burn_in = kDefaultBurnIn) {
  require_matches(spec, x);
  detail::require_radius(radius);
  if (!(a > 0.0)) throw Error(ErrorKind::Parameter, "exponent a must be positive");
  if (!(c0 > 0.0)) throw Error(ErrorKind::Parameter, "C0 must be positive");
  if (s_schedule.empty()) throw Error(ErrorKind::Parameter, "empty s schedule");
  for (double s : s_schedule)
    if (!(s > 0.0 && s < radius)) throw Error(ErrorKind::Domain, "every s must satisfy 0 < s < radius");

  const bool exact = spec.kind == SystemKind::Doubling && 2.0 * radius <= 0.5;
  std::vector<double> d;
  if (!exact) {
    if (budget == 0) throw Error(ErrorKind::Domain, "budget must be positive");
    d = detail::sample_distances(spec, x, budget, stream, burn_in, 2.0 * radius);
  }
  auto measure = [&](double rad) {
    return exact ? *analytic_ball_measure(spec, x, rad)
                 : static_cast<double>(detail::count_below(d, rad)) / static_cast<double>(budget);
  };

  CoronaReport rep{radius, a, c0, {}, true, 0.0};
  const double ball2 = measure(2.0 * radius);
  if (!(ball2 > 0.0)) throw Error(ErrorKind::Undersampled, "no samples in B(x,2r)");
  for (double s : s_schedule) {
    CoronaCheck c;
    c.s = s;
    c.corona = measure(radius + s) - measure(radius);
    if (!exact) {
      const double nb = static_cast<double>(budget);
      c.corona_std_err = std::sqrt(c.corona * (1.0 - c.corona) / nb);
    }
    c.ball_2r = ball2;
    const double scale = std::pow(s, a) * std::pow(radius, -a) * ball2;
    c.rhs = c0 * scale;
    c.margin = c.rhs - c.corona;
    c.c0_needed = c.corona / scale;
    c.pass = c.corona <= c.rhs;
    rep.all_pass = rep.all_pass && c.pass;
    rep.smallest_passing_c0 = std::max(rep.smallest_passing_c0, c.c0_needed);
    rep.checks.push_back(c);
  }
  return rep;
}

}  // namespace hitlab
