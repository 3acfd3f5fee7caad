#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <random>

#include "hitlab/hitlab.hpp"

using namespace hitlab;

namespace {

using big = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<200, boost::multiprecision::digit_base_2>>;

// 200-bit evaluation of R3 = 4(M p e (1 + N e) + (e N)^M / M! exp(-N e) + N e^2).
double r3_oracle(double eps, long n, long p, long m) {
  const big e(eps), N(n), P(p), M(m);
  big fact = 1;
  for (long i = 2; i <= m; ++i) fact *= i;
  const big term = M * P * e * (1 + N * e) + boost::multiprecision::pow(e * N, m) / fact * boost::multiprecision::exp(-N * e) +
                   N * e * e;
  return static_cast<double>(4 * term);
}

}  // namespace

TEST(PoissonPmf, Examples) {
  EXPECT_EQ(poisson_pmf(0.0, 0), 1.0);
  EXPECT_EQ(poisson_pmf(0.0, 3), 0.0);
  EXPECT_NEAR(poisson_pmf(1.0, 0), 0.3678794412, 1e-10);
  EXPECT_NEAR(poisson_pmf(2.0, 2), 0.2706705665, 1e-10);
  EXPECT_THROW(poisson_pmf(-1.0, 0), Error);
}

TEST(PoissonPmf, SumsToOne) {
  for (double lambda : {0.1, 1.0, 7.5, 50.0, 400.0, 1000.0}) {
    const long K = static_cast<long>(lambda + 40 * std::sqrt(lambda) + 40);
    double s = 0.0;
    for (long k = 0; k <= K; ++k) s += poisson_pmf(lambda, k);
    EXPECT_NEAR(s, 1.0, 1e-12) << lambda;
  }
}

TEST(PoissonPmf, LogSpaceBranchIsContinuous) {
  const double via_recursion = poisson_pmf(3.0, 20) * 3.0 / 21.0;
  EXPECT_NEAR(poisson_pmf(3.0, 21) / via_recursion, 1.0, 1e-12);
}

TEST(TvDistance, Examples) {
  EXPECT_EQ(tv_distance(PoissonLaw{1.0}, PoissonLaw{1.0}), 0.0);
  EmpiricalPMF unit;
  unit.add(0);
  EXPECT_NEAR(tv_distance(unit, PoissonLaw{1.0}), 1.0 - std::exp(-1.0), 1e-10);
  EmpiricalPMF unit2;
  unit2.add(0, 5);
  EXPECT_EQ(tv_distance(unit, unit2), 0.0);
}

TEST(TvDistance, MetricProperties) {
  std::mt19937_64 gen(3);
  auto random_pmf = [&] {
    EmpiricalPMF p;
    const int n = 1 + static_cast<int>(gen() % 50);
    for (int i = 0; i < n; ++i) p.add(gen() % 8);
    return p;
  };
  for (int i = 0; i < 500; ++i) {
    const auto a = random_pmf(), b = random_pmf(), c = random_pmf();
    EXPECT_EQ(tv_distance(a, b), tv_distance(b, a));
    EXPECT_LE(tv_distance(a, c), tv_distance(a, b) + tv_distance(b, c) + 1e-12);
    EXPECT_GE(tv_distance(a, b), 0.0);
    EXPECT_LE(tv_distance(a, b), 1.0);
    const PoissonLaw l{0.5 + static_cast<double>(gen() % 5)};
    EXPECT_EQ(tv_distance(a, l), tv_distance(l, a));
  }
}

TEST(R3, Examples) {
  EXPECT_EQ(r3_bound(0.0, 100, 2, 1), 0.0);
  EXPECT_NEAR(r3_bound(0.01, 100, 2, 1), 1.6715177647, 1e-9);
  EXPECT_NEAR(r3_bound(0.001, 1000, 10, 3), 0.48925296078, 1e-9);
}

TEST(R3, ParameterErrors) {
  EXPECT_THROW(r3_bound(0.1, 10, 1, 1), Error);
  EXPECT_THROW(r3_bound(0.1, 10, 10, 1), Error);
  EXPECT_THROW(r3_bound(0.1, 10, 2, 10), Error);
  EXPECT_THROW(r3_bound(1.5, 10, 2, 1), Error);
  try {
    r3_bound(0.1, 10, 2, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parameter);
  }
}

TEST(R3, MatchesHighPrecisionOracle) {
  std::mt19937_64 gen(12);
  for (int i = 0; i < 300; ++i) {
    const long n = 3 + static_cast<long>(gen() % 5000);
    const long p = 2 + static_cast<long>(gen() % static_cast<std::uint64_t>(n - 2));
    const long m = 1 + static_cast<long>(gen() % static_cast<std::uint64_t>(std::min<long>(n - 1, 60)));
    const double eps = std::ldexp(static_cast<double>(gen() >> 11), -53) * std::min(1.0, 50.0 / n);
    const double ref = r3_oracle(eps, n, p, m);
    EXPECT_LE(std::fabs(r3_bound(eps, n, p, m) - ref), 1e-12 * ref) << eps << ' ' << n << ' ' << p << ' ' << m;
  }
}

TEST(R3, MonotoneInEpsilonAndP) {
  for (long n : {10L, 100L, 1000L}) {
    for (long m : {1L, 3L, 8L}) {
      if (m > n - 1) continue;
      for (long p = 2; p < n; p += std::max(1L, n / 7)) {
        double prev = -1.0;
        // Past N eps = M the Poisson tail term shrinks, so monotonicity in
        // eps only holds below that point.
        for (int k = 0; k <= 50; ++k) {
          const double eps = k / 50.0 * std::min(1.0, static_cast<double>(m) / n);
          const double v = r3_bound(eps, n, p, m);
          EXPECT_GE(v, prev);
          prev = v;
        }
      }
      for (double eps : {0.0, 1e-4, 1e-3, 0.01}) {
        double prev = -1.0;
        for (long p = 2; p < n; ++p) {
          const double v = r3_bound(eps, n, p, m);
          EXPECT_GE(v, prev);
          prev = v;
        }
      }
    }
  }
}

TEST(TotalBound, Examples) {
  const auto a = total_bound(0.001, 1000, 10, 3, 0.0, 0.0, 0.5);
  EXPECT_EQ(a.total, 0.5);
  const auto b = total_bound(0.01, 100, 2, 1, 0.001, 0.002);
  EXPECT_NEAR(b.total, 2.2715177647, 1e-9);
  EXPECT_EQ(b.total, 2.0 * 100 * 1 * (b.r1 + b.r2) + b.r3);
  EXPECT_THROW(total_bound(0.01, 100, 2, 1, -0.1, 0.0), Error);
  EXPECT_THROW(total_bound(0.01, 100, 100, 1, 0.0, 0.0), Error);
}

TEST(R1, IidProcessHasNoCovariance) {
  const double eps = 0.01;
  auto iid = [eps](RngStream s, std::span<std::uint8_t> out) {
    Rng rng(s);
    for (auto& v : out) v = rng.uniform() < eps ? 1 : 0;
  };
  const std::vector<long> js{0, 50}, qs{0, 1, 2};
  const auto r = estimate_r1_process(iid, 200, 10, js, qs, 60000, RngStream{5, 0});
  for (const auto& pr : r.probes) EXPECT_LE(std::fabs(pr.covariance), 3 * pr.std_error + 1e-12);
}

TEST(R1, ImpossibleEventHasZeroCovariance) {
  const auto dbl = SystemSpec::doubling();
  const long n = 64;
  const std::vector<long> js{0}, qs{n};
  const auto r = estimate_r1(dbl, CirclePoint{0.3}, 0.01, n, 4, js, qs, 300, RngStream{6, 0});
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.probes.front().covariance, 0.0);
}

TEST(R1, DoublingCovarianceIsSmall) {
  const auto dbl = SystemSpec::doubling();
  const PhasePoint x = sample_orbit(dbl, RngStream{7, 0}).point();
  const long n = 2048;
  const std::vector<long> js{0, n / 2}, qs{0, 1, 2};
  const auto r = estimate_r1(dbl, x, std::ldexp(1.0, -10), n, 32, js, qs, 100000, RngStream{7, 1});
  EXPECT_EQ(r.probes.size(), 6u);
  EXPECT_LE(r.value, 3 * r.std_error);
}

TEST(R1, Errors) {
  const auto dbl = SystemSpec::doubling();
  const std::vector<long> empty, qs{0};
  EXPECT_THROW(estimate_r1(dbl, CirclePoint{0.3}, 0.01, 64, 4, empty, qs, 300, RngStream{}), Error);
  const std::vector<long> bad_j{100};
  EXPECT_THROW(estimate_r1(dbl, CirclePoint{0.3}, 0.01, 64, 4, bad_j, qs, 300, RngStream{}), Error);
}

TEST(R2, FixedPointMatchesGridOracle) {
  // Grid oracle: fraction of [0,1) whose point lies in B(0,r) and returns
  // at one of the steps 1..p-1.
  const double r = 0.01;
  const long p = 5;
  constexpr long grid = 2000000;
  long hits = 0;
  for (long i = 0; i < grid; ++i) {
    double y = (i + 0.5) / grid;
    if (!(circular_distance(y, 0.0) < r)) continue;
    for (long k = 1; k < p; ++k) {
      y = wrap_unit(2 * y);
      if (circular_distance(y, 0.0) < r) {
        ++hits;
        break;
      }
    }
  }
  const double oracle = static_cast<double>(hits) / grid;
  EXPECT_NEAR(oracle, 0.01, 1e-6);
  const auto est = estimate_r2(SystemSpec::doubling(), CirclePoint{0.0}, r, p, 1000000, RngStream{8, 0});
  EXPECT_NEAR(est.value, oracle, 0.1 * oracle);
  EXPECT_LE(std::fabs(est.value - oracle), 4 * est.std_error);
}

TEST(R2, TypicalCenterIsSmall) {
  const auto dbl = SystemSpec::doubling();
  const PhasePoint x = sample_orbit(dbl, RngStream{9, 0}).point();
  const double r = std::ldexp(1.0, -12);
  const auto est = estimate_r2(dbl, x, r, 64, 4000000, RngStream{9, 1});
  EXPECT_LE(est.value, 0.1 * 2 * r);
}

TEST(R2, WholeSpaceReturnsAlways) {
  const auto est = estimate_r2(SystemSpec::doubling(), CirclePoint{0.5}, 0.6, 2, 10000, RngStream{10, 0});
  EXPECT_EQ(est.value, 1.0);
}

TEST(R2, Undersampled) {
  try {
    estimate_r2(SystemSpec::doubling(), CirclePoint{0.5}, 1e-12, 2, 1000, RngStream{11, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Undersampled);
  }
}
