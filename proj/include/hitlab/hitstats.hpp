#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hitlab/dynamics.hpp"
#include "hitlab/error.hpp"
#include "hitlab/parallel.hpp"
#include "hitlab/phase_space.hpp"
#include "hitlab/rng.hpp"

namespace hitlab {

// ---------------------------------------------------------------------------
// Result types

/// Empirical distribution of a nonnegative integer statistic.
class EmpiricalPMF {
 public:
  EmpiricalPMF() = default;

  void add(std::size_t k, std::uint64_t n = 1) {
    if (k >= counts_.size()) counts_.resize(k + 1, 0);
    counts_[k] += n;
    total_ += n;
  }

  void merge(const EmpiricalPMF& other) {
    for (std::size_t k = 0; k < other.counts_.size(); ++k)
      if (other.counts_[k] != 0) add(k, other.counts_[k]);
  }

  std::uint64_t count(std::size_t k) const { return k < counts_.size() ? counts_[k] : 0; }
  std::uint64_t total() const { return total_; }
  /// One past the largest observed value.
  std::size_t support_size() const { return counts_.size(); }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  double frequency(std::size_t k) const {
    return total_ == 0 ? 0.0 : static_cast<double>(count(k)) / static_cast<double>(total_);
  }

  double mean() const {
    if (total_ == 0) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < counts_.size(); ++k) s += static_cast<double>(k) * static_cast<double>(counts_[k]);
    return s / static_cast<double>(total_);
  }

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Least-squares line through log-log points.
struct SlopeEstimate {
  std::vector<std::pair<double, double>> points;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  /// Radii left out of the fit (Exceeded return times, zero measure).
  std::vector<double> dropped;
};

/// Ordinary least squares. r2 is reported as 0 when the ordinates are
/// constant, so flat degenerate fits are visibly flagged.
inline SlopeEstimate fit_slope(std::vector<std::pair<double, double>> points) {
  SlopeEstimate e;
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (!(sxx > 0.0)) throw Error(ErrorKind::InsufficientData, "abscissae are all equal");
  e.slope = sxy / sxx;
  e.intercept = my - e.slope * mx;
  e.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 0.0;
  e.points = std::move(points);
  return e;
}

struct ReturnTime {
  long steps = 0;
  bool exceeded = false;
};

struct BallMeasure {
  double estimate = 0.0;
  double std_error = 0.0;
  std::uint64_t hits = 0;
  std::uint64_t samples = 0;
  /// Analytic value where the invariant density is explicit.
  std::optional<double> exact;
  bool zero_hits = false;

  /// The value experiments should use: exact when known.
  double value() const { return exact ? *exact : estimate; }
};

struct RatioEstimate {
  double value = 0.0;
  double std_error = 0.0;
  bool exact = false;
};

struct KacResult {
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t members = 0;
  std::uint64_t exceeded = 0;
};

// ---------------------------------------------------------------------------
// Sampling helpers

namespace detail {

inline constexpr std::size_t kSampleBlock = 4096;
inline constexpr std::size_t kEnsembleBlock = 64;

inline void require_radius(double r) {
  if (!(r > 0.0 && std::isfinite(r))) throw Error(ErrorKind::Domain, "radius must be positive");
}

/// Distances from `center` of `budget` invariant samples, keeping only those
/// below `keep_below`. Sorted ascending. Samples are drawn in fixed blocks,
/// each from its own substream.
inline std::vector<double> sample_distances(const SystemSpec& spec, const PhasePoint& center,
                                            std::uint64_t budget, RngStream stream, long burn_in,
                                            double keep_below) {
  const std::size_t blocks = block_count(budget, kSampleBlock);
  std::vector<std::vector<double>> parts(blocks);
  for_each_block(blocks, [&](std::size_t b) {
    const auto range = block_range(b, budget, kSampleBlock);
    Rng rng(stream.substream(b));
    auto& out = parts[b];
    for (std::size_t i = range.begin; i < range.end; ++i) {
      const PhasePoint y = sample_invariant_with(spec, rng, burn_in);
      const double d = distance_unchecked(spec, y, center);
      if (d < keep_below) out.push_back(d);
    }
  });
  std::vector<double> all;
  for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  std::sort(all.begin(), all.end());
  return all;
}

/// Distances from `center` of precomputed samples below `keep_below`, sorted.
inline std::vector<double> pool_distances(const SystemSpec& spec, const PhasePoint& center,
                                          std::span<const PhasePoint> pool, double keep_below) {
  std::vector<double> out;
  for (const auto& y : pool) {
    const double d = distance_unchecked(spec, y, center);
    if (d < keep_below) out.push_back(d);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Number of sorted distances strictly below r (open ball).
inline std::uint64_t count_below(std::span<const double> sorted, double r) {
  return static_cast<std::uint64_t>(std::lower_bound(sorted.begin(), sorted.end(), r) - sorted.begin());
}

inline BallMeasure binomial(std::uint64_t hits, std::uint64_t n) {
  BallMeasure m;
  m.hits = hits;
  m.samples = n;
  m.estimate = static_cast<double>(hits) / static_cast<double>(n);
  m.std_error = std::sqrt(m.estimate * (1.0 - m.estimate) / static_cast<double>(n));
  m.zero_hits = hits == 0;
  return m;
}

/// Draws from the invariant measure until a point lands in B(center, r).
inline std::optional<Orbit> sample_orbit_in_ball(const SystemSpec& spec, const PhasePoint& center, double r,
                                                 RngStream stream, long burn_in, std::uint64_t max_attempts) {
  Rng rng(stream);
  for (std::uint64_t a = 0; a < max_attempts; ++a) {
    if (spec.kind == SystemKind::Doubling) {
      const std::uint64_t word = rng.next_u64();
      const CirclePoint p{static_cast<double>(word >> 11) * 0x1.0p-53};
      if (distance_unchecked(spec, p, center) < r) return Orbit::with_binary_tail(word, std::move(rng));
    } else {
      PhasePoint p = sample_invariant_with(spec, rng, burn_in);
      if (distance_unchecked(spec, p, center) < r) return Orbit(spec, p);
    }
  }
  return std::nullopt;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Visit counts and return times

/// Number of l in [p, q] with d(f^l(y), x) < r, stepping `orbit` (which
/// starts at y) forward to time q.
inline long count_visits(Orbit& orbit, const PhasePoint& x, double r, long p, long q) {
  if (p < 1) throw Error(ErrorKind::Range, "visit window must start at p >= 1");
  if (q < p) throw Error(ErrorKind::Range, "visit window requires q >= p");
  detail::require_radius(r);
  orbit.advance(p);
  long hits = orbit.distance_to(x) < r ? 1 : 0;
  for (long l = p + 1; l <= q; ++l) {
    orbit.step();
    if (orbit.distance_to(x) < r) ++hits;
  }
  return hits;
}

inline long count_visits(const SystemSpec& spec, const PhasePoint& x, double r, const PhasePoint& y, long p,
                         long q) {
  require_matches(spec, x);
  Orbit orbit(spec, y);
  return count_visits(orbit, x, r, p, q);
}

/// First n in [1, cap] with d(f^n x, x) < r for each radius, in one pass
/// over the orbit. `orbit` must start at the center.
inline std::vector<ReturnTime> first_return_times(Orbit orbit, std::span<const double> radii, long cap) {
  if (cap < 1) throw Error(ErrorKind::Domain, "cap must be >= 1");
  for (double r : radii) detail::require_radius(r);
  const PhasePoint center = orbit.point();
  std::vector<ReturnTime> out(radii.size(), ReturnTime{cap, true});
  std::size_t pending = radii.size();
  for (long n = 1; n <= cap && pending > 0; ++n) {
    orbit.step();
    const double d = orbit.distance_to(center);
    for (std::size_t i = 0; i < radii.size(); ++i) {
      if (out[i].exceeded && d < radii[i]) {
        out[i] = {n, false};
        --pending;
      }
    }
  }
  return out;
}

inline ReturnTime first_return_time(const SystemSpec& spec, const PhasePoint& x, double r, long cap) {
  const double radii[] = {r};
  return first_return_times(Orbit(spec, x), radii, cap)[0];
}

namespace detail {

inline void require_decreasing(std::span<const double> radii) {
  for (double r : radii) require_radius(r);
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] < radii[i - 1])) throw Error(ErrorKind::Domain, "radii must be strictly decreasing");
}

}  // namespace detail

/// Least-squares slope of log tau_r against -log r. Radii whose return time
/// exceeds `cap` are dropped, never imputed.
inline SlopeEstimate recurrence_rate(const Orbit& center_orbit, std::span<const double> radii, long cap) {
  detail::require_decreasing(radii);
  const auto times = first_return_times(center_orbit, radii, cap);
  std::vector<std::pair<double, double>> pts;
  std::vector<double> dropped;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (times[i].exceeded)
      dropped.push_back(radii[i]);
    else
      pts.emplace_back(-std::log(radii[i]), std::log(static_cast<double>(times[i].steps)));
  }
  if (pts.size() < 3) throw Error(ErrorKind::InsufficientData, "fewer than 3 radii with a return below cap");
  auto fit = fit_slope(std::move(pts));
  fit.dropped = std::move(dropped);
  return fit;
}

inline SlopeEstimate recurrence_rate(const SystemSpec& spec, const PhasePoint& x, std::span<const double> radii,
                                     long cap) {
  return recurrence_rate(Orbit(spec, x), radii, cap);
}

// ---------------------------------------------------------------------------
// Measure estimates

/// Monte Carlo estimate of mu(B(x, r)) from `budget` invariant samples, with
/// binomial standard error; the analytic value is attached where known.
inline BallMeasure estimate_ball_measure(const SystemSpec& spec, const PhasePoint& x, double r,
                                         std::uint64_t budget, RngStream stream, long burn_in = kDefaultBurnIn) {
  require_matches(spec, x);
  detail::require_radius(r);
  if (budget == 0) throw Error(ErrorKind::Domain, "budget must be positive");
  const auto d = detail::sample_distances(spec, x, budget, stream, burn_in, r);
  BallMeasure m = detail::binomial(d.size(), budget);
  m.exact = analytic_ball_measure(spec, x, r);
  return m;
}

/// Measure used to set time horizons: the analytic value where available,
/// otherwise a Monte Carlo estimate with the given budget.
inline BallMeasure horizon_measure(const SystemSpec& spec, const PhasePoint& x, double r, std::uint64_t budget,
                                   RngStream stream, long burn_in = kDefaultBurnIn) {
  if (auto exact = analytic_ball_measure(spec, x, r)) {
    BallMeasure m;
    m.estimate = *exact;
    m.exact = exact;
    return m;
  }
  return estimate_ball_measure(spec, x, r, budget, stream, burn_in);
}

/// Slope of log mu(B(x,r)) against log r. The doubling map uses the exact
/// measure 2r; other systems share one sample set across all radii.
inline SlopeEstimate local_dimension(const SystemSpec& spec, const PhasePoint& x, std::span<const double> radii,
                                     std::uint64_t budget, RngStream stream, long burn_in = kDefaultBurnIn) {
  require_matches(spec, x);
  detail::require_decreasing(radii);
  std::vector<std::pair<double, double>> pts;
  std::vector<double> dropped;
  if (spec.kind == SystemKind::Doubling) {
    for (double r : radii) pts.emplace_back(std::log(r), std::log(*analytic_ball_measure(spec, x, r)));
  } else {
    if (budget == 0) throw Error(ErrorKind::Domain, "budget must be positive");
    const auto d = detail::sample_distances(spec, x, budget, stream, burn_in, radii.front());
    for (double r : radii) {
      const auto hits = detail::count_below(d, r);
      if (hits == 0)
        dropped.push_back(r);
      else
        pts.emplace_back(std::log(r), std::log(static_cast<double>(hits) / static_cast<double>(budget)));
    }
  }
  if (pts.size() < 3) throw Error(ErrorKind::InsufficientData, "fewer than 3 radii with positive measure");
  auto fit = fit_slope(std::move(pts));
  fit.dropped = std::move(dropped);
  return fit;
}

/// `count` invariant samples drawn block-wise from `stream`, for reuse
/// across many centers.
inline std::vector<PhasePoint> sample_pool(const SystemSpec& spec, std::uint64_t count, RngStream stream,
                                           long burn_in = kDefaultBurnIn) {
  if (burn_in < 0) throw Error(ErrorKind::Domain, "burn_in must be >= 0");
  std::vector<PhasePoint> pool(count);
  for_each_block(block_count(count, detail::kSampleBlock), [&](std::size_t b) {
    const auto range = block_range(b, count, detail::kSampleBlock);
    Rng rng(stream.substream(b));
    for (std::size_t i = range.begin; i < range.end; ++i) pool[i] = detail::sample_invariant_with(spec, rng, burn_in);
  });
  return pool;
}

/// local_dimension against a precomputed sample pool (non-doubling systems).
inline SlopeEstimate local_dimension(const SystemSpec& spec, const PhasePoint& x, std::span<const double> radii,
                                     std::span<const PhasePoint> pool) {
  require_matches(spec, x);
  detail::require_decreasing(radii);
  if (pool.empty()) throw Error(ErrorKind::Domain, "empty sample pool");
  const auto d = detail::pool_distances(spec, x, pool, radii.front());
  std::vector<std::pair<double, double>> pts;
  std::vector<double> dropped;
  for (double r : radii) {
    const auto hits = detail::count_below(d, r);
    if (hits == 0)
      dropped.push_back(r);
    else
      pts.emplace_back(std::log(r), std::log(static_cast<double>(hits) / static_cast<double>(pool.size())));
  }
  if (pts.size() < 3) throw Error(ErrorKind::InsufficientData, "fewer than 3 radii with positive measure");
  auto fit = fit_slope(std::move(pts));
  fit.dropped = std::move(dropped);
  return fit;
}

/// mu(B(x, r + r^delta) \ B(x, r)) / mu(B(x, r)), numerator and denominator
/// taken from the same samples.
inline RatioEstimate corona_ratio(const SystemSpec& spec, const PhasePoint& x, double r, double delta,
                                  std::uint64_t budget, RngStream stream, long burn_in = kDefaultBurnIn) {
  require_matches(spec, x);
  if (!(r > 0.0 && r < 1.0)) throw Error(ErrorKind::Domain, "corona radius must lie in (0,1)");
  if (!(delta > 1.0)) throw Error(ErrorKind::Domain, "corona exponent delta must exceed 1");
  const double outer = r + std::pow(r, delta);
  if (spec.kind == SystemKind::Doubling && outer <= 0.5) {
    return {(*analytic_ball_measure(spec, x, outer) - *analytic_ball_measure(spec, x, r)) /
                *analytic_ball_measure(spec, x, r),
            0.0, true};
  }
  if (budget == 0) throw Error(ErrorKind::Domain, "budget must be positive");
  const auto d = detail::sample_distances(spec, x, budget, stream, burn_in, outer);
  const auto inner = detail::count_below(d, r);
  if (inner == 0) throw Error(ErrorKind::Undersampled, "no samples in B(x,r)");
  const auto ring = d.size() - inner;
  const double ratio = static_cast<double>(ring) / static_cast<double>(inner);
  // Delta method for a ratio of multinomial counts.
  const double se = ratio * std::sqrt(1.0 / static_cast<double>(inner) +
                                      (ring > 0 ? 1.0 / static_cast<double>(ring) : 0.0));
  return {ratio, se, false};
}

/// Mean first entrance time into B(x,r) for starting points drawn from mu
/// conditioned on B(x,r). Kac's lemma gives 1/mu(B) for ergodic systems.
inline KacResult mean_return_time(const SystemSpec& spec, const PhasePoint& x, double r,
                                  std::uint64_t ensemble_size, long cap, RngStream stream,
                                  long burn_in = kDefaultBurnIn, std::uint64_t max_attempts = 100'000'000) {
  require_matches(spec, x);
  detail::require_radius(r);
  if (ensemble_size == 0) throw Error(ErrorKind::Undersampled, "empty ensemble");
  if (cap < 1) throw Error(ErrorKind::Domain, "cap must be >= 1");
  const std::size_t blocks = block_count(ensemble_size, detail::kEnsembleBlock);
  struct Partial {
    double sum = 0.0, sum_sq = 0.0;
    std::uint64_t exceeded = 0;
  };
  std::vector<Partial> parts(blocks);
  for_each_block(blocks, [&](std::size_t b) {
    const auto range = block_range(b, ensemble_size, detail::kEnsembleBlock);
    for (std::size_t i = range.begin; i < range.end; ++i) {
      auto orbit = detail::sample_orbit_in_ball(spec, x, r, stream.substream(i), burn_in, max_attempts);
      if (!orbit) throw Error(ErrorKind::Undersampled, "rejection sampling found no point in B(x,r)");
      long n = 1;
      bool hit = false;
      for (; n <= cap; ++n) {
        orbit->step();
        if (orbit->distance_to(x) < r) {
          hit = true;
          break;
        }
      }
      const double t = hit ? static_cast<double>(n) : static_cast<double>(cap);
      parts[b].sum += t;
      parts[b].sum_sq += t * t;
      if (!hit) ++parts[b].exceeded;
    }
  });
  KacResult k;
  double s = 0.0, s2 = 0.0;
  for (const auto& p : parts) {
    s += p.sum;
    s2 += p.sum_sq;
    k.exceeded += p.exceeded;
  }
  const double n = static_cast<double>(ensemble_size);
  k.members = ensemble_size;
  k.mean = s / n;
  const double var = n > 1 ? std::max(0.0, (s2 - n * k.mean * k.mean) / (n - 1.0)) : 0.0;
  k.std_error = std::sqrt(var / n);
  return k;
}

// ---------------------------------------------------------------------------
// Visit-count distributions

/// PMF of the number of visits to B(x,r) at times 1..horizon over
/// independent invariant samples.
inline EmpiricalPMF visit_count_pmf(const SystemSpec& spec, const PhasePoint& x, double r, long horizon,
                                    std::uint64_t ensemble_size, RngStream stream, long burn_in = kDefaultBurnIn) {
  require_matches(spec, x);
  detail::require_radius(r);
  if (horizon < 0) throw Error(ErrorKind::Range, "horizon must be >= 0");
  if (ensemble_size == 0) throw Error(ErrorKind::Undersampled, "empty ensemble");
  const std::size_t blocks = block_count(ensemble_size, detail::kEnsembleBlock);
  std::vector<EmpiricalPMF> parts(blocks);
  for_each_block(blocks, [&](std::size_t b) {
    const auto range = block_range(b, ensemble_size, detail::kEnsembleBlock);
    for (std::size_t i = range.begin; i < range.end; ++i) {
      if (horizon == 0) {
        parts[b].add(0);
        continue;
      }
      Orbit orbit = sample_orbit(spec, stream.substream(i), burn_in);
      parts[b].add(static_cast<std::size_t>(count_visits(orbit, x, r, 1, horizon)));
    }
  });
  EmpiricalPMF pmf;
  for (const auto& p : parts) pmf.merge(p);
  return pmf;
}

struct VisitCountDistribution {
  EmpiricalPMF pmf;
  long horizon = 0;
  BallMeasure measure;
};

struct VisitCountOptions {
  std::uint64_t measure_budget = 1'000'000;
  long burn_in = kDefaultBurnIn;
};

/// Distribution of N(x,r) = #{1 <= n <= t/mu(B(x,r)) : d(f^n y, x) < r}.
inline VisitCountDistribution visit_count_distribution(const SystemSpec& spec, const PhasePoint& x, double r,
                                                       double t, std::uint64_t ensemble_size, RngStream stream,
                                                       const VisitCountOptions& opts = {}) {
  require_matches(spec, x);
  detail::require_radius(r);
  if (!(t > 0.0)) throw Error(ErrorKind::Domain, "t must be positive");
  VisitCountDistribution out;
  out.measure = horizon_measure(spec, x, r, opts.measure_budget, stream.substream(0), opts.burn_in);
  const double mu = out.measure.value();
  if (!(mu > 0.0)) throw Error(ErrorKind::Undersampled, "estimated ball measure is zero");
  out.horizon = static_cast<long>(std::floor(t / mu));
  out.pmf = visit_count_pmf(spec, x, r, out.horizon, ensemble_size, stream.substream(1), opts.burn_in);
  return out;
}

}  // namespace hitlab
