#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hitlab/dynamics.hpp"
#include "hitlab/error.hpp"
#include "hitlab/hitstats.hpp"
#include "hitlab/parallel.hpp"
#include "hitlab/rng.hpp"

namespace hitlab {

/// P(Poisson(lambda) = k) = lambda^k e^{-lambda} / k!, in log space for k > 20.
inline double poisson_pmf(double lambda, long k) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorKind::Parameter, "Poisson mean must be >= 0");
  if (k < 0) return 0.0;
  if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
  if (k <= 20) {
    double factorial = 1.0;
    for (long i = 2; i <= k; ++i) factorial *= static_cast<double>(i);
    return std::pow(lambda, static_cast<double>(k)) * std::exp(-lambda) / factorial;
  }
  const double kd = static_cast<double>(k);
  return std::exp(kd * std::log(lambda) - lambda - std::lgamma(kd + 1.0));
}

/// A distribution on {0, 1, 2, ...} given by explicit masses on a finite
/// prefix plus an unresolved remainder beyond it.
struct TruncatedPMF {
  std::vector<double> mass;
  double tail = 0.0;
};

inline TruncatedPMF truncate(const EmpiricalPMF& pmf) {
  TruncatedPMF t;
  t.mass.resize(pmf.support_size());
  for (std::size_t k = 0; k < t.mass.size(); ++k) t.mass[k] = pmf.frequency(k);
  return t;
}

struct PoissonLaw {
  double lambda = 1.0;
};

/// Poisson masses up to the first K where the cumulative mass exceeds
/// 1 - 1e-12 (and at least `min_size` terms); the rest is the tail.
inline TruncatedPMF truncate(PoissonLaw law, std::size_t min_size = 0) {
  TruncatedPMF t;
  double cumulative = 0.0;
  for (long k = 0;; ++k) {
    const double p = poisson_pmf(law.lambda, k);
    t.mass.push_back(p);
    cumulative += p;
    if (cumulative > 1.0 - 1e-12 && t.mass.size() >= min_size && static_cast<double>(k) >= law.lambda) break;
  }
  t.tail = std::max(0.0, 1.0 - cumulative);
  return t;
}

/// Half the l1 distance. Unresolved tails are counted as disjoint, so the
/// result is an upper bound exceeding the true distance by at most half the
/// summed tails.
inline double tv_distance(const TruncatedPMF& a, const TruncatedPMF& b) {
  const std::size_t n = std::max(a.mass.size(), b.mass.size());
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double pa = k < a.mass.size() ? a.mass[k] : 0.0;
    const double pb = k < b.mass.size() ? b.mass[k] : 0.0;
    s += std::fabs(pa - pb);
  }
  return std::min(1.0, 0.5 * (s + a.tail + b.tail));
}

inline double tv_distance(const EmpiricalPMF& a, const EmpiricalPMF& b) { return tv_distance(truncate(a), truncate(b)); }

inline double tv_distance(const EmpiricalPMF& a, PoissonLaw b) {
  return tv_distance(truncate(a), truncate(b, a.support_size()));
}

inline double tv_distance(PoissonLaw a, const EmpiricalPMF& b) { return tv_distance(b, a); }

inline double tv_distance(PoissonLaw a, PoissonLaw b) {
  if (a.lambda == b.lambda) return 0.0;
  return tv_distance(truncate(a), truncate(b));
}

// ---------------------------------------------------------------------------
// Error terms of the stationary {0,1}-process Poisson bound

namespace detail {

inline void require_bound_parameters(double epsilon, long n, long p, long m) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error(ErrorKind::Parameter, "epsilon must lie in [0,1]");
  if (!(p >= 2 && p < n)) throw Error(ErrorKind::Parameter, "constraint 2 <= p < N violated");
  if (!(m >= 1 && m <= n - 1)) throw Error(ErrorKind::Parameter, "constraint 1 <= M <= N-1 violated");
}

}  // namespace detail

/// R3 = 4 (M p eps (1 + N eps) + (eps N)^M / M! e^{-N eps} + N eps^2).
inline double r3_bound(double epsilon, long n, long p, long m) {
  detail::require_bound_parameters(epsilon, n, p, m);
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  const double lam = epsilon * nd;
  double poisson_term;
  if (lam == 0.0) {
    poisson_term = 0.0;
  } else if (m <= 20) {
    double factorial = 1.0;
    for (long i = 2; i <= m; ++i) factorial *= static_cast<double>(i);
    poisson_term = std::pow(lam, md) / factorial * std::exp(-lam);
  } else {
    poisson_term = std::exp(md * std::log(lam) - std::lgamma(md + 1.0) - lam);
  }
  return 4.0 * (md * static_cast<double>(p) * epsilon * (1.0 + lam) + poisson_term + nd * epsilon * epsilon);
}

/// R = 2 N M (R1 + R2) + R3 together with its inputs.
struct BoundReport {
  double epsilon = 0.0;
  long n = 0;
  long p = 0;
  long m = 0;
  double r1 = 0.0;
  double r2 = 0.0;
  double r3 = 0.0;
  double total = 0.0;
  double r1_std_err = 0.0;
  double r2_std_err = 0.0;

  /// Standard error of `total` propagated from the R1 and R2 estimates.
  double total_std_err() const {
    const double k = 2.0 * static_cast<double>(n) * static_cast<double>(m);
    return k * std::hypot(r1_std_err, r2_std_err);
  }
};

inline BoundReport total_bound(double epsilon, long n, long p, long m, double r1, double r2, double r3,
                               double r1_std_err = 0.0, double r2_std_err = 0.0) {
  detail::require_bound_parameters(epsilon, n, p, m);
  if (!(r1 >= 0.0 && r2 >= 0.0 && r3 >= 0.0)) throw Error(ErrorKind::Parameter, "error terms must be >= 0");
  BoundReport b{epsilon, n, p, m, r1, r2, r3, 0.0, r1_std_err, r2_std_err};
  b.total = 2.0 * static_cast<double>(n) * static_cast<double>(m) * (r1 + r2) + r3;
  return b;
}

/// Same, with R3 evaluated from (epsilon, N, p, M).
inline BoundReport total_bound(double epsilon, long n, long p, long m, double r1, double r2) {
  return total_bound(epsilon, n, p, m, r1, r2, r3_bound(epsilon, n, p, m));
}

// ---------------------------------------------------------------------------
// Monte Carlo estimates of R1 and R2
//
// A process sampler fills X_1..X_L of one stationary realization:
//   void(RngStream member_stream, std::span<std::uint8_t> x)
// For a dynamical system X_{n+1}(y) = 1_B(x,r)(f^n y) with y ~ mu.

struct MonteCarloValue {
  double value = 0.0;
  double std_error = 0.0;
};

struct CovarianceProbe {
  long j = 0;
  long q = 0;
  double covariance = 0.0;
  double std_error = 0.0;
};

/// Grid probe of R1: the true quantity is a sup over all (j, q), so the
/// maximum over the grid is a lower-bound estimate.
struct R1Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::vector<CovarianceProbe> probes;
};

inline constexpr int kCovarianceBatches = 30;

/// Covariance of 1{X_1 = 1} and 1{X_{p+1} + ... + X_{N-j} = q} on a shared
/// ensemble for each (j, q) in the grid; standard errors by batch means over
/// 30 contiguous batches.
template <class Sampler>
R1Estimate estimate_r1_process(Sampler&& sampler, long n, long p, std::span<const long> j_grid,
                               std::span<const long> q_grid, std::uint64_t ensemble_size, RngStream stream) {
  if (j_grid.empty() || q_grid.empty()) throw Error(ErrorKind::Parameter, "R1 grids must be non-empty");
  if (!(p >= 2 && p < n)) throw Error(ErrorKind::Parameter, "constraint 2 <= p < N violated");
  for (long j : j_grid)
    if (j < 0 || j > n - p) throw Error(ErrorKind::Parameter, "j must lie in [0, N-p]");
  for (long q : q_grid)
    if (q < 0) throw Error(ErrorKind::Parameter, "q must be >= 0");
  if (ensemble_size < static_cast<std::uint64_t>(kCovarianceBatches))
    throw Error(ErrorKind::Parameter, "ensemble must contain at least 30 members");

  const std::size_t nj = j_grid.size(), nq = q_grid.size();
  // Per batch sums: A, and for each (j,q) C and A*C.
  struct Batch {
    double a = 0.0;
    std::vector<double> c, ac;
    std::uint64_t count = 0;
  };
  std::vector<Batch> batches(kCovarianceBatches);
  const std::uint64_t per_batch = ensemble_size / kCovarianceBatches;
  for_each_block(kCovarianceBatches, [&](std::size_t b) {
    Batch& acc = batches[b];
    acc.c.assign(nj * nq, 0.0);
    acc.ac.assign(nj * nq, 0.0);
    const std::uint64_t begin = b * per_batch;
    const std::uint64_t end = b + 1 == kCovarianceBatches ? ensemble_size : begin + per_batch;
    std::vector<std::uint8_t> x(static_cast<std::size_t>(n));
    for (std::uint64_t i = begin; i < end; ++i) {
      sampler(stream.substream(i), std::span<std::uint8_t>(x));
      const double a = x[0] ? 1.0 : 0.0;
      acc.a += a;
      ++acc.count;
      for (std::size_t jj = 0; jj < nj; ++jj) {
        // X_{p+1}..X_{N-j} are x[p]..x[N-j-1].
        long s = 0;
        for (long m = p; m < n - j_grid[jj]; ++m) s += x[static_cast<std::size_t>(m)];
        for (std::size_t qq = 0; qq < nq; ++qq) {
          if (s == q_grid[qq]) {
            acc.c[jj * nq + qq] += 1.0;
            acc.ac[jj * nq + qq] += a;
          }
        }
      }
    }
  });

  R1Estimate out;
  for (std::size_t jj = 0; jj < nj; ++jj) {
    for (std::size_t qq = 0; qq < nq; ++qq) {
      const std::size_t idx = jj * nq + qq;
      double a = 0.0, c = 0.0, ac = 0.0, total = 0.0;
      std::vector<double> covs;
      covs.reserve(kCovarianceBatches);
      for (const auto& bt : batches) {
        const double m = static_cast<double>(bt.count);
        a += bt.a;
        c += bt.c[idx];
        ac += bt.ac[idx];
        total += m;
        covs.push_back(bt.ac[idx] / m - (bt.a / m) * (bt.c[idx] / m));
      }
      const double cov = ac / total - (a / total) * (c / total);
      double mean_b = 0.0;
      for (double v : covs) mean_b += v;
      mean_b /= kCovarianceBatches;
      double var_b = 0.0;
      for (double v : covs) var_b += (v - mean_b) * (v - mean_b);
      var_b /= (kCovarianceBatches - 1);
      const double se = std::sqrt(var_b / kCovarianceBatches);
      out.probes.push_back({j_grid[jj], q_grid[qq], cov, se});
      if (std::fabs(cov) > out.value || out.probes.size() == 1) {
        out.value = std::fabs(cov);
        out.std_error = se;
      }
    }
  }
  return out;
}

namespace detail {

/// Sampler for X_{n+1} = 1_B(x,r)(f^n y), y drawn from the invariant measure.
inline auto orbit_indicator_sampler(const SystemSpec& spec, const PhasePoint& x, double r, long burn_in) {
  return [spec, x, r, burn_in](RngStream s, std::span<std::uint8_t> out) {
    Orbit orbit = sample_orbit(spec, s, burn_in);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (i > 0) orbit.step();
      out[i] = orbit.distance_to(x) < r ? 1 : 0;
    }
  };
}

}  // namespace detail

inline R1Estimate estimate_r1(const SystemSpec& spec, const PhasePoint& x, double r, long n, long p,
                              std::span<const long> j_grid, std::span<const long> q_grid,
                              std::uint64_t ensemble_size, RngStream stream, long burn_in = kDefaultBurnIn) {
  require_matches(spec, x);
  detail::require_radius(r);
  return estimate_r1_process(detail::orbit_indicator_sampler(spec, x, r, burn_in), n, p, j_grid, q_grid,
                             ensemble_size, stream);
}

/// R2 = P(X_1 = 1, X_2 + ... + X_p >= 1): the measure of points of B(x,r)
/// that come back to B(x,r) at some time 1..p-1.
inline MonteCarloValue estimate_r2(const SystemSpec& spec, const PhasePoint& x, double r, long p,
                                   std::uint64_t ensemble_size, RngStream stream, long burn_in = kDefaultBurnIn) {
  require_matches(spec, x);
  detail::require_radius(r);
  if (p < 2) throw Error(ErrorKind::Parameter, "R2 requires p >= 2");
  if (ensemble_size == 0) throw Error(ErrorKind::Undersampled, "empty ensemble");
  const std::size_t blocks = block_count(ensemble_size, detail::kSampleBlock);
  struct Partial {
    std::uint64_t in_ball = 0, returned = 0;
  };
  std::vector<Partial> parts(blocks);
  for_each_block(blocks, [&](std::size_t b) {
    const auto range = block_range(b, ensemble_size, detail::kSampleBlock);
    Rng rng(stream.substream(b));
    for (std::size_t i = range.begin; i < range.end; ++i) {
      std::optional<Orbit> orbit;
      if (spec.kind == SystemKind::Doubling) {
        const std::uint64_t word = rng.next_u64();
        const CirclePoint y{static_cast<double>(word >> 11) * 0x1.0p-53};
        if (!(detail::distance_unchecked(spec, y, x) < r)) continue;
        // Continuation bits come from a member stream so the block stream
        // is consumed identically whether or not the point hit the ball.
        orbit.emplace(Orbit::with_binary_tail(word, Rng(stream.substream(blocks + i))));
      } else {
        const PhasePoint y = detail::sample_invariant_with(spec, rng, burn_in);
        if (!(detail::distance_unchecked(spec, y, x) < r)) continue;
        orbit.emplace(spec, y);
      }
      ++parts[b].in_ball;
      for (long l = 1; l < p; ++l) {
        orbit->step();
        if (orbit->distance_to(x) < r) {
          ++parts[b].returned;
          break;
        }
      }
    }
  });
  std::uint64_t in_ball = 0, returned = 0;
  for (const auto& pt : parts) {
    in_ball += pt.in_ball;
    returned += pt.returned;
  }
  if (in_ball == 0) throw Error(ErrorKind::Undersampled, "no sample landed in B(x,r)");
  const double n = static_cast<double>(ensemble_size);
  const double v = static_cast<double>(returned) / n;
  return {v, std::sqrt(v * (1.0 - v) / n)};
}

}  // namespace hitlab
