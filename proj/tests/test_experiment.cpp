#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hitlab/experiment.hpp"

using namespace hitlab;

namespace {

std::string key_of_failure(const std::string& text) {
  try {
    validate_config(parse_config_text(text));
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

}  // namespace

TEST(Config, ParsesKeyValueWithComments) {
  const auto m = parse_config_text("# header\nexperiment = kac  # trailing\n\n system=doubling\nradii=2^-7\n");
  EXPECT_EQ(m.at("experiment"), "kac");
  EXPECT_EQ(m.at("system"), "doubling");
  const auto c = validate_config(m);
  EXPECT_EQ(c.radii.size(), 1u);
  EXPECT_EQ(c.radii[0], std::ldexp(1.0, -7));
  EXPECT_THROW(parse_config_text("no equals sign"), ConfigError);
}

TEST(Config, GeometricSchedule) {
  const auto c = validate_config(
      parse_config_text("experiment=recurrence\nsystem=doubling\nradii.r0=2^-4\nradii.ratio=0.5\nradii.count=11\n"));
  ASSERT_EQ(c.radii.size(), 11u);
  EXPECT_EQ(c.radii.front(), 0.0625);
  EXPECT_EQ(c.radii.back(), std::ldexp(1.0, -14));
}

TEST(Config, ValidationNamesOffendingKey) {
  EXPECT_EQ(key_of_failure("system=doubling\nradii=0.1"), "experiment");
  EXPECT_EQ(key_of_failure("experiment=kac\nsystem=circle\nradii=0.1"), "system");
  EXPECT_EQ(key_of_failure("experiment=kac\nsystem=solenoid\ngamma=0.5\ntheta=0.9\nradii=0.1"), "theta");
  EXPECT_EQ(key_of_failure("experiment=kac\nsystem=lsv\ngamma=1.5\nradii=0.1"), "gamma");
  EXPECT_EQ(key_of_failure("experiment=kac\nsystem=doubling\nradii=0.1\nensemble_size=0"), "ensemble_size");
  EXPECT_EQ(key_of_failure("experiment=kac\nsystem=doubling\nradii=0.1\nseed=-3"), "seed");
  EXPECT_EQ(key_of_failure("experiment=kac\nsystem=doubling\nradii=0.1\nbogus=1"), "bogus");
  EXPECT_EQ(key_of_failure("experiment=recurrence\nsystem=doubling\nradii=0.1,0.05"), "radii");
  EXPECT_EQ(key_of_failure("experiment=recurrence\nsystem=doubling\nradii=0.1,0.2,0.05"), "radii");
  EXPECT_EQ(key_of_failure("experiment=corona\nsystem=doubling\nradii=0.1\ncorona.delta=1"), "corona.delta");
  EXPECT_EQ(key_of_failure("experiment=kac\nsystem=stadium\nell=-1\nradii=0.1"), "ell");
  EXPECT_EQ(key_of_failure("experiment=kac\nsystem=stadium\ncenter=explicit\ncenter.r=1\ncenter.phi=2\nradii=0.1"),
            "center.phi");
  EXPECT_EQ(key_of_failure("experiment=kac\nsystem=doubling\nradii=abc"), "radii");
  EXPECT_EQ(key_of_failure("experiment=dichotomy\nsystem=doubling\ndichotomy.lambda=0.5"), "dichotomy.lambda");
}

TEST(Config, SolenoidThetaMessageNamesConstraint) {
  try {
    validate_config(parse_config_text("experiment=kac\nsystem=solenoid\ngamma=0.5\ntheta=0.9\nradii=0.1"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("theta*(1+sup_deriv) must be < 1"), std::string::npos);
  }
}

TEST(Config, ResolvedIncludesDefaults) {
  const auto c = validate_config(parse_config_text("experiment=kac\nsystem=stadium\nradii=0.05"));
  EXPECT_EQ(c.resolved.at("seed"), "1");
  EXPECT_EQ(c.resolved.at("ell"), "2");
  EXPECT_EQ(c.resolved.at("threads"), "1");
  // Re-validating the resolved view is a fixed point.
  EXPECT_EQ(validate_config(c.resolved).resolved, c.resolved);
}

TEST(Format, ShortestRoundTrip) {
  std::mt19937_64 gen(1);
  for (int i = 0; i < 10000; ++i) {
    const double v = std::ldexp(static_cast<double>(gen() >> 11), static_cast<int>(gen() % 80) - 90);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(2.0), "2");
}

TEST(Compare, ExactAndStatistical) {
  nlohmann::ordered_json a = {{"x", 1.0}, {"x_std_err", 0.1}, {"n", 3}, {"y", 2.0}};
  nlohmann::ordered_json b = a;
  EXPECT_TRUE(compare_results(a, b, false).equal);
  b["x"] = 1.2;
  const auto exact = compare_results(a, b, false);
  EXPECT_FALSE(exact.equal);
  EXPECT_EQ(exact.first_difference, "results.x");
  EXPECT_TRUE(compare_results(a, b, true).equal);
  b["x"] = 1.5;
  EXPECT_FALSE(compare_results(a, b, true).equal);
  b = a;
  b["y"] = 2.0000001;  // no std error sibling: must match exactly
  EXPECT_EQ(compare_results(a, b, true).first_difference, "results.y");
  b = a;
  b["n"] = 4;
  EXPECT_EQ(compare_results(a, b, true).first_difference, "results.n");
}

TEST(Execute, KacIsDeterministic) {
  const auto c = validate_config(
      parse_config_text("experiment=kac\nsystem=doubling\nradii=2^-6\nensemble_size=500\nseed=5\ncenters=2"));
  const auto a = execute(c);
  const auto b = execute(c);
  EXPECT_EQ(a.results.dump(), b.results.dump());
  EXPECT_EQ(a.csv, b.csv);
  EXPECT_EQ(a.csv.substr(0, a.csv.find('\n')), "center,radius,mean_return_time,std_err,ball_measure,product");
}

TEST(Execute, SeedChangesResults) {
  auto m = parse_config_text("experiment=poisson-test\nsystem=doubling\nradii=2^-8\nensemble_size=300\nseed=5");
  const auto a = execute(validate_config(m));
  m["seed"] = "6";
  const auto b = execute(validate_config(m));
  EXPECT_FALSE(compare_results(a.results, b.results, false).equal);
}

TEST(Execute, ThreadCountDoesNotChangeResults) {
  auto m = parse_config_text(
      "experiment=poisson-test\nsystem=stadium\nradii=0.1\nensemble_size=400\nseed=9\nthreads=1");
  const auto a = execute(validate_config(m));
  m["threads"] = "4";
  const auto b = execute(validate_config(m));
  set_thread_count(1);
  EXPECT_EQ(a.results.dump(), b.results.dump());
  EXPECT_EQ(a.csv, b.csv);
}

TEST(Execute, PoissonCsvColumns) {
  const auto out = execute(validate_config(
      parse_config_text("experiment=poisson-test\nsystem=doubling\nradii=2^-8\nensemble_size=300\nseed=5")));
  EXPECT_EQ(out.csv.substr(0, out.csv.find('\n')), "k,count,frequency,poisson_pmf");
  EXPECT_TRUE(out.results.contains("tv_distance"));
  EXPECT_EQ(out.csv.find('\r'), std::string::npos);
}

TEST(Execute, BoundReportFieldNames) {
  const auto out = execute(validate_config(parse_config_text(
      "experiment=bound\nsystem=doubling\nradii=2^-8\nensemble_size=3000\nseed=5\nbound.p=8\nbound.j_grid=0,100")));
  const auto& b = out.results.at("bound");
  for (const char* k : {"epsilon", "n", "p", "m", "r1", "r2", "r3", "total", "r1_std_err", "r2_std_err"})
    EXPECT_TRUE(b.contains(k)) << k;
  EXPECT_EQ(b.at("total").get<double>(),
            2.0 * b.at("n").get<double>() * b.at("m").get<double>() *
                    (b.at("r1").get<double>() + b.at("r2").get<double>()) +
                b.at("r3").get<double>());
}

TEST(Execute, DichotomyWithCoronaCheck) {
  const auto out = execute(validate_config(parse_config_text(
      "experiment=dichotomy\nsystem=doubling\ncenter=explicit\ncenter.x=0.3\ndichotomy.theta=0.5\n"
      "dichotomy.n=3\ndichotomy.depth=1\ncorona.s=1e-4,1e-6\n")));
  EXPECT_EQ(out.results.at("interval_left")[1].get<double>(), 1.0 / 6.0);
  EXPECT_EQ(out.results.at("interval_right")[1].get<double>(), 5.0 / 12.0);
  EXPECT_TRUE(out.results.at("corona_check").at("all_pass").get<bool>());
}
