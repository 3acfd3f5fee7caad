#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "hitlab/hitlab.hpp"

using namespace hitlab;

namespace {

constexpr double kPi = std::numbers::pi;

// Reference billiard: brute-force marching along the ray with bisection on
// the signed distance to the stadium boundary. Independent of the
// closed-form intersection code.
double stadium_sdf(double x, double y, double ell) {
  const double h = ell / 2;
  if (std::fabs(x) <= h) return 1.0 - std::fabs(y);  // inside strip: distance to flat walls
  const double cx = x > 0 ? h : -h;
  return 1.0 - std::hypot(x - cx, y);
}

std::pair<double, double> reference_hit(std::array<double, 2> p, std::array<double, 2> v, double ell) {
  double lo = 1e-6, hi = lo;
  const double step = 1e-3;
  while (stadium_sdf(p[0] + hi * v[0], p[1] + hi * v[1], ell) > 0.0) {
    lo = hi;
    hi += step;
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (stadium_sdf(p[0] + mid * v[0], p[1] + mid * v[1], ell) > 0.0 ? lo : hi) = mid;
  }
  const double s = 0.5 * (lo + hi);
  return {p[0] + s * v[0], p[1] + s * v[1]};
}

}  // namespace

TEST(Lsv, Examples) {
  EXPECT_EQ(lsv_map(0.0, 0.3), 0.0);
  EXPECT_EQ(lsv_map(0.75, 0.3), 0.5);
  EXPECT_NEAR(lsv_map(0.25, 0.5), 0.25 * (1 + std::sqrt(2.0) * 0.5), 1e-15);
  EXPECT_NEAR(lsv_map(0.25, 0.5), 0.426777, 1e-6);
}

TEST(Lsv, Errors) {
  try {
    lsv_map(1.5, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Domain);
  }
  try {
    lsv_map(0.5, 1.2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parameter);
    EXPECT_NE(std::string(e.what()).find("gamma<1"), std::string::npos);
  }
}

TEST(Lsv, LeftBranchIncreasingAndEscaping) {
  for (double gamma : {0.1, 0.5, 0.9}) {
    double prev = -1.0;
    for (int i = 0; i < 10000; ++i) {
      const double x = 0.5 * i / 10000.0;
      const double y = lsv_map(x, gamma);
      EXPECT_GT(y, prev);
      if (x > 0) EXPECT_GT(y, x);
      prev = y;
    }
  }
}

TEST(Lsv, SupDerivative) {
  EXPECT_DOUBLE_EQ(lsv_sup_deriv(0.5), 2.5);
  EXPECT_DOUBLE_EQ(lsv_sup_deriv(0.25), 2.25);
  EXPECT_NEAR(lsv_sup_deriv(1e-12), 2.0, 1e-11);
  EXPECT_THROW(lsv_sup_deriv(0.0), Error);
  // Finite-difference check of the left-branch derivative sup.
  const double g = 0.5, x = 0.5 - 1e-7, hstep = 1e-9;
  const double d = (lsv_map(x + hstep, g) - lsv_map(x - hstep, g)) / (2 * hstep);
  EXPECT_NEAR(d, 2.5, 1e-4);
}

TEST(Solenoid, MapExamples) {
  const auto spec = SystemSpec::solenoid(0.5, 0.2);
  auto [x1, z1] = solenoid_map(0.0, {0.625, 0.0}, spec);
  EXPECT_EQ(x1, 0.0);
  EXPECT_NEAR(std::abs(z1 - std::complex<double>(0.625, 0)), 0.0, 1e-15);
  auto [x2, z2] = solenoid_map(0.5, 0.0, spec);
  EXPECT_EQ(x2, 0.0);
  EXPECT_NEAR(std::abs(z2 - std::complex<double>(-0.5, 0)), 0.0, 1e-15);
  auto [x3, z3] = solenoid_map(0.25, 0.0, spec);
  EXPECT_NEAR(x3, 0.426777, 1e-6);
  EXPECT_NEAR(std::abs(z3 - std::complex<double>(0, 0.5)), 0.0, 1e-15);
}

TEST(Solenoid, Errors) {
  const auto spec = SystemSpec::solenoid(0.5, 0.2);
  EXPECT_THROW(solenoid_map(0.1, {1.0, 1.0}, spec), Error);
  try {
    SystemSpec::solenoid(0.5, 0.9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parameter);
    EXPECT_NE(std::string(e.what()).find("theta*(1+sup_deriv) must be < 1"), std::string::npos);
  }
}

TEST(Solenoid, ClosedFormExamples) {
  const auto spec = SystemSpec::solenoid(0.5, 0.2);
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double x = u(gen);
    const std::complex<double> z = std::polar(u(gen), 2 * kPi * u(gen));
    const auto a = solenoid_map(x, z, spec);
    const auto b = solenoid_iterate_closed_form(x, z, 1, spec);
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
  }
  const auto c = solenoid_iterate_closed_form(0.0, 0.0, 3, spec);
  EXPECT_EQ(c.first, 0.0);
  EXPECT_NEAR(c.second.real(), 0.62, 1e-15);
  EXPECT_NEAR(c.second.imag(), 0.0, 1e-15);

  double x = 0.3;
  std::complex<double> z{0.1, 0.2};
  for (int k = 0; k < 10; ++k) std::tie(x, z) = solenoid_map(x, z, spec);
  const auto d = solenoid_iterate_closed_form(0.3, {0.1, 0.2}, 10, spec);
  EXPECT_NEAR(d.first, x, 1e-10);
  EXPECT_NEAR(std::abs(d.second - z), 0.0, 1e-10);
  EXPECT_THROW(solenoid_iterate_closed_form(0.3, 0.0, 0, spec), Error);
}

TEST(Solenoid, InvariantDisk) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double theta : {0.05, 0.2, 0.28}) {
    const auto spec = SystemSpec::solenoid(0.5, theta);
    const double R = 1.0 / (2.0 * (1.0 - theta));
    for (int i = 0; i < 2000; ++i) {
      const std::complex<double> z = std::polar(R * std::sqrt(u(gen)), 2 * kPi * u(gen));
      const auto out = solenoid_map(u(gen), z, spec);
      EXPECT_LE(std::abs(out.second), R + 1e-15);
    }
  }
}

TEST(Stadium, BoundaryExamples) {
  auto b0 = stadium_boundary_point(0.0, 2.0);
  EXPECT_NEAR(b0.position[0], 1.0, 1e-15);
  EXPECT_NEAR(b0.position[1], -1.0, 1e-15);
  EXPECT_NEAR(b0.inward_normal[0], 0.0, 1e-15);
  EXPECT_NEAR(b0.inward_normal[1], 1.0, 1e-15);
  auto b1 = stadium_boundary_point(kPi / 2, 2.0);
  EXPECT_NEAR(b1.position[0], 2.0, 1e-15);
  EXPECT_NEAR(b1.position[1], 0.0, 1e-15);
  EXPECT_NEAR(b1.inward_normal[0], -1.0, 1e-15);
  EXPECT_NEAR(b1.inward_normal[1], 0.0, 1e-15);
  auto b2 = stadium_boundary_point(kPi + 1, 2.0);
  EXPECT_NEAR(b2.position[0], 0.0, 1e-15);
  EXPECT_NEAR(b2.position[1], 1.0, 1e-15);
  EXPECT_EQ(b2.segment, SegmentKind::Top);
  EXPECT_NEAR(b2.inward_normal[1], -1.0, 1e-15);
}

TEST(Stadium, BoundaryChartIsBijective) {
  const double ell = 2.0;
  const double L = 2 * (kPi + ell);
  EXPECT_DOUBLE_EQ(SystemSpec::stadium(ell).perimeter(), 2 * kPi + 2 * ell);
  constexpr int n = 10000;
  std::vector<std::array<double, 2>> pts;
  for (int i = 0; i < n; ++i) {
    const auto b = stadium_boundary_point(L * i / n, ell);
    EXPECT_NEAR(std::hypot(b.inward_normal[0], b.inward_normal[1]), 1.0, 1e-12);
    EXPECT_NEAR(stadium_sdf(b.position[0], b.position[1], ell), 0.0, 1e-12);
    // Inward normal points into the table.
    EXPECT_GT(stadium_sdf(b.position[0] + 1e-3 * b.inward_normal[0], b.position[1] + 1e-3 * b.inward_normal[1], ell),
              0.0);
    pts.push_back(b.position);
  }
  // Consecutive grid points are one grid step apart in arclength; distinct.
  double min_gap = 1e9;
  for (int i = 0; i < n; ++i) {
    const auto& a = pts[i];
    const auto& b = pts[(i + 1) % n];
    min_gap = std::min(min_gap, std::hypot(a[0] - b[0], a[1] - b[1]));
  }
  EXPECT_GT(min_gap, 0.5 * L / n);
  std::sort(pts.begin(), pts.end());
  EXPECT_EQ(std::unique(pts.begin(), pts.end()) - pts.begin(), n);
}

TEST(Stadium, MapExamples) {
  auto [r1, p1] = stadium_map(2 * kPi + 3, 0.0, 2.0);
  EXPECT_NEAR(r1, kPi + 1, 1e-12);
  EXPECT_NEAR(p1, 0.0, 1e-12);
  auto [r2, p2] = stadium_map(kPi / 2, 0.0, 2.0);
  EXPECT_NEAR(r2, 3 * kPi / 2 + 2, 1e-12);
  EXPECT_NEAR(p2, 0.0, 1e-12);
  EXPECT_THROW(stadium_map(0.0, kPi / 2, 2.0), Error);
}

TEST(Stadium, Reversibility) {
  const double ell = 2.0, L = 2 * (kPi + ell);
  Rng rng(RngStream{77, 0});
  const auto spec = SystemSpec::stadium(ell);
  for (int i = 0; i < 1000; ++i) {
    const auto p = std::get<BilliardPoint>(detail::sample_invariant_with(spec, rng, 0));
    const auto [r1, f1] = stadium_map(p.r, p.phi, ell);
    const auto [r2, f2] = stadium_map(r1, -f1, ell);
    EXPECT_LE(circular_distance(r2, p.r, L), 1e-9);
    EXPECT_LE(std::fabs(-f2 - p.phi), 1e-9);
  }
}

TEST(Stadium, MapAgreesWithMarchingReference) {
  const double ell = 2.0;
  Rng rng(RngStream{78, 0});
  const auto spec = SystemSpec::stadium(ell);
  for (int i = 0; i < 300; ++i) {
    const auto p = std::get<BilliardPoint>(detail::sample_invariant_with(spec, rng, 0));
    if (std::fabs(p.phi) > 1.4) continue;  // grazing shots need finer marching
    const auto from = stadium_boundary_point(p.r, ell);
    const auto& n = from.inward_normal;
    const std::array<double, 2> v{std::cos(p.phi) * n[0] + std::sin(p.phi) * n[1],
                                  std::cos(p.phi) * n[1] - std::sin(p.phi) * n[0]};
    const auto ref = reference_hit(from.position, v, ell);
    const auto [r1, f1] = stadium_map(p.r, p.phi, ell);
    const auto to = stadium_boundary_point(r1, ell);
    EXPECT_NEAR(to.position[0], ref.first, 1e-8);
    EXPECT_NEAR(to.position[1], ref.second, 1e-8);
    EXPECT_LT(std::fabs(f1), kPi / 2);
  }
}

TEST(Stadium, OutputsStayOnTableOverLongOrbits) {
  const double ell = 2.0;
  Orbit o(SystemSpec::stadium(ell), BilliardPoint{0.3, 0.7});
  for (int i = 0; i < 100000; ++i) {
    o.step();
    const auto& b = std::get<BilliardPoint>(o.point());
    ASSERT_LT(std::fabs(b.phi), kPi / 2);
    const auto pos = stadium_boundary_point(b.r, ell).position;
    ASSERT_NEAR(stadium_sdf(pos[0], pos[1], ell), 0.0, 1e-10);
  }
}

TEST(Stadium, PushforwardPreservesMeasure) {
  const auto spec = SystemSpec::stadium(2.0);
  constexpr int bins = 20;
  constexpr int n = 1000000;
  const double L = spec.perimeter();
  std::vector<double> before(bins * bins, 0.0), after(bins * bins, 0.0);
  auto bin = [&](double r, double phi) {
    const int ir = std::min(bins - 1, static_cast<int>(r / L * bins));
    const int ip = std::min(bins - 1, static_cast<int>((phi + kPi / 2) / kPi * bins));
    return ir * bins + ip;
  };
  Rng rng(RngStream{19, 0});
  for (int i = 0; i < n; ++i) {
    const auto p = std::get<BilliardPoint>(detail::sample_invariant_with(spec, rng, 0));
    before[bin(p.r, p.phi)] += 1.0;
    const auto [r, phi] = stadium_map(p.r, p.phi, spec.ell);
    after[bin(r, phi)] += 1.0;
  }
  double tv = 0.0, tv_exact = 0.0;
  for (int ir = 0; ir < bins; ++ir)
    for (int ip = 0; ip < bins; ++ip) {
      const double lo = -kPi / 2 + kPi * ip / bins, hi = -kPi / 2 + kPi * (ip + 1) / bins;
      const double prob = (1.0 / bins) * (std::sin(hi) - std::sin(lo)) / 2.0;
      tv += std::fabs(before[ir * bins + ip] - after[ir * bins + ip]) / n;
      tv_exact += std::fabs(after[ir * bins + ip] / n - prob);
    }
  EXPECT_LE(0.5 * tv_exact, 0.01);
  // Two empirical histograms carry twice the sampling noise.
  EXPECT_LE(0.5 * tv, 0.015);
}
