#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "hitlab/hitlab.hpp"

#ifndef HITLAB_VERSION
#define HITLAB_VERSION "0.1.0"
#endif

namespace hitlab {

inline constexpr std::string_view kCodeVersion = HITLAB_VERSION;
inline constexpr std::string_view kReportSchema = "hitlab-report/1";

// ---------------------------------------------------------------------------
// Number formatting and parsing

/// Shortest decimal string that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// A configuration problem tied to one key.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error(ErrorKind::Parameter, "key '" + key + "': " + message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_plain_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Accepts a decimal literal or `base^exponent` (e.g. 2^-12).
inline double parse_number(const std::string& key, std::string_view s) {
  s = trim(s);
  if (const auto caret = s.find('^'); caret != std::string_view::npos) {
    const auto base = parse_plain_double(trim(s.substr(0, caret)));
    const auto expo = parse_plain_double(trim(s.substr(caret + 1)));
    if (!base || !expo) throw ConfigError(key, "not a number: '" + std::string(s) + "'");
    return std::pow(*base, *expo);
  }
  const auto v = parse_plain_double(s);
  if (!v) throw ConfigError(key, "not a number: '" + std::string(s) + "'");
  return *v;
}

inline std::int64_t parse_integer(const std::string& key, std::string_view s) {
  const double v = parse_number(key, s);
  if (!(std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 9.0e18))
    throw ConfigError(key, "not an integer: '" + std::string(trim(s)) + "'");
  return static_cast<std::int64_t>(v);
}

inline std::uint64_t parse_seed(const std::string& key, std::string_view s) {
  s = trim(s);
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ConfigError(key, "not an unsigned 64-bit integer: '" + std::string(s) + "'");
  return v;
}

inline std::vector<double> parse_list(const std::string& key, std::string_view s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const auto item = trim(s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (!item.empty()) out.push_back(parse_number(key, item));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw ConfigError(key, "empty list");
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Configuration

enum class ExperimentKind { PoissonTest, Recurrence, Dimension, Kac, Corona, Dichotomy, Bound };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::PoissonTest: return "poisson-test";
    case ExperimentKind::Recurrence: return "recurrence";
    case ExperimentKind::Dimension: return "dimension";
    case ExperimentKind::Kac: return "kac";
    case ExperimentKind::Corona: return "corona";
    case ExperimentKind::Dichotomy: return "dichotomy";
    case ExperimentKind::Bound: return "bound";
  }
  return "?";
}

/// Raw key=value pairs in file order of first appearance, last value wins.
using ConfigMap = std::map<std::string, std::string>;

/// Parses the flat `key = value` format; `#` starts a comment.
inline ConfigMap parse_config_text(std::string_view text) {
  ConfigMap m;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "empty key");
    m[std::string(key)] = std::string(detail::trim(line.substr(eq + 1)));
  }
  return m;
}

inline ConfigMap read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Fully validated description of one experiment.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::PoissonTest;
  std::string name;
  SystemSpec system;
  std::optional<PhasePoint> center;  // empty: sample centers from mu
  std::int64_t centers = 1;
  std::vector<double> radii;
  double t = 1.0;
  std::int64_t ensemble_size = 10'000;
  std::int64_t horizon_cap = 10'000'000;
  std::int64_t measure_budget = 1'000'000;
  std::int64_t burn_in = kDefaultBurnIn;
  std::uint64_t seed = 1;
  std::int64_t threads = 1;
  std::string output_path = ".";
  double delta = 1.5;
  double shell_theta = 0.5;
  std::int64_t shell_n = 3;
  double lambda = 0.25;
  std::int64_t depth = 8;
  double c0 = 8.0;
  std::vector<double> s_schedule;
  std::optional<std::int64_t> bound_p;
  std::int64_t bound_m = 3;
  std::vector<double> j_grid;
  std::vector<double> q_grid{0, 1, 2};

  /// The resolved key/value set written into reports.
  ConfigMap resolved;
};

namespace detail {

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "experiment", "name", "system", "gamma", "theta", "ell", "center", "center.x", "center.z_re", "center.z_im",
      "center.r", "center.phi", "centers", "radii", "radii.r0", "radii.ratio", "radii.count", "t", "ensemble_size",
      "horizon_cap", "measure_budget", "burn_in", "seed", "threads", "output_path", "corona.delta", "corona.c0",
      "corona.s", "dichotomy.theta", "dichotomy.n", "dichotomy.lambda", "dichotomy.depth", "bound.p", "bound.m",
      "bound.j_grid", "bound.q_grid"};
  return keys;
}

class Reader {
 public:
  explicit Reader(const ConfigMap& m) : m_(m) {}

  bool has(const std::string& k) const { return m_.count(k) != 0; }
  const std::string& raw(const std::string& k) const { return m_.at(k); }

  double number(const std::string& k, double def) const { return has(k) ? parse_number(k, raw(k)) : def; }
  std::int64_t integer(const std::string& k, std::int64_t def) const {
    return has(k) ? parse_integer(k, raw(k)) : def;
  }
  double required_number(const std::string& k) const {
    if (!has(k)) throw ConfigError(k, "required key missing");
    return parse_number(k, raw(k));
  }

 private:
  const ConfigMap& m_;
};

inline void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

}  // namespace detail

/// Validates every key against the preconditions of the operations the
/// experiment will call. Throws ConfigError naming the offending key.
inline ExperimentConfig validate_config(const ConfigMap& m) {
  using detail::require;
  for (const auto& [k, v] : m) {
    bool known = false;
    for (const auto& kk : detail::known_keys()) known = known || kk == k;
    if (!known) throw ConfigError(k, "unknown key");
  }
  detail::Reader rd(m);
  ExperimentConfig c;

  if (!rd.has("experiment")) throw ConfigError("experiment", "required key missing");
  const std::string& exp = rd.raw("experiment");
  bool found = false;
  for (auto k : {ExperimentKind::PoissonTest, ExperimentKind::Recurrence, ExperimentKind::Dimension,
                 ExperimentKind::Kac, ExperimentKind::Corona, ExperimentKind::Dichotomy, ExperimentKind::Bound}) {
    if (exp == to_string(k)) {
      c.experiment = k;
      found = true;
    }
  }
  if (!found) throw ConfigError("experiment", "unknown experiment '" + exp + "'");
  c.name = rd.has("name") ? rd.raw("name") : std::string(to_string(c.experiment));
  require(!c.name.empty() && c.name.find('/') == std::string::npos, "name", "must be a plain file stem");

  if (!rd.has("system")) throw ConfigError("system", "required key missing");
  SystemKind kind;
  try {
    kind = parse_system_kind(rd.raw("system"));
  } catch (const Error& e) {
    throw ConfigError("system", e.detail());
  }
  try {
    switch (kind) {
      case SystemKind::Doubling: c.system = SystemSpec::doubling(); break;
      case SystemKind::Lsv: c.system = SystemSpec::lsv(rd.required_number("gamma")); break;
      case SystemKind::Solenoid:
        c.system = SystemSpec::solenoid(rd.required_number("gamma"), rd.required_number("theta"));
        break;
      case SystemKind::Stadium: c.system = SystemSpec::stadium(rd.number("ell", 2.0)); break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    const std::string key = e.detail().find("theta") != std::string::npos ? "theta"
                            : e.detail().find("gamma") != std::string::npos ? "gamma"
                                                                             : "ell";
    throw ConfigError(key, e.detail());
  }

  const std::string center_mode = rd.has("center") ? rd.raw("center") : "sampled";
  require(center_mode == "sampled" || center_mode == "explicit", "center", "must be 'sampled' or 'explicit'");
  if (center_mode == "explicit") {
    try {
      switch (kind) {
        case SystemKind::Doubling:
        case SystemKind::Lsv: c.center = make_circle(rd.required_number("center.x")); break;
        case SystemKind::Solenoid:
          c.center = make_torus_disk(rd.required_number("center.x"),
                                     {rd.number("center.z_re", 0.0), rd.number("center.z_im", 0.0)});
          break;
        case SystemKind::Stadium:
          c.center = make_billiard(rd.required_number("center.r"), rd.required_number("center.phi"), c.system.ell);
          break;
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(kind == SystemKind::Stadium ? "center.phi" : "center.z_re", e.detail());
    }
  }
  c.centers = rd.integer("centers", 1);
  require(c.centers >= 1, "centers", "must be >= 1");
  require(!(c.center && c.centers != 1), "centers", "must be 1 with an explicit center");

  if (rd.has("radii")) {
    c.radii = detail::parse_list("radii", rd.raw("radii"));
  } else if (rd.has("radii.r0")) {
    const double r0 = rd.required_number("radii.r0");
    const double ratio = rd.number("radii.ratio", 0.5);
    const auto count = rd.integer("radii.count", 1);
    require(ratio > 0.0 && ratio < 1.0, "radii.ratio", "must lie in (0,1)");
    require(count >= 1 && count <= 64, "radii.count", "must lie in [1,64]");
    for (std::int64_t i = 0; i < count; ++i) c.radii.push_back(r0 * std::pow(ratio, static_cast<double>(i)));
  }
  for (double r : c.radii) require(r > 0.0 && std::isfinite(r), "radii", "radii must be positive");
  for (std::size_t i = 1; i < c.radii.size(); ++i)
    require(c.radii[i] < c.radii[i - 1], "radii", "radii must be strictly decreasing");

  c.t = rd.number("t", 1.0);
  require(c.t > 0.0 && std::isfinite(c.t), "t", "must be positive");
  c.ensemble_size = rd.integer("ensemble_size", 10'000);
  require(c.ensemble_size >= 1, "ensemble_size", "must be >= 1");
  c.horizon_cap = rd.integer("horizon_cap", 10'000'000);
  require(c.horizon_cap >= 1, "horizon_cap", "must be >= 1");
  c.measure_budget = rd.integer("measure_budget", 1'000'000);
  require(c.measure_budget >= 1000, "measure_budget", "must be >= 1000");
  c.burn_in = rd.integer("burn_in", kDefaultBurnIn);
  require(c.burn_in >= 0, "burn_in", "must be >= 0");
  c.seed = rd.has("seed") ? detail::parse_seed("seed", rd.raw("seed")) : 1;
  c.threads = rd.integer("threads", 1);
  require(c.threads >= 1 && c.threads <= 1024, "threads", "must lie in [1,1024]");
  c.output_path = rd.has("output_path") ? rd.raw("output_path") : ".";

  c.delta = rd.number("corona.delta", 1.5);
  c.c0 = rd.number("corona.c0", 8.0);
  require(c.c0 > 0.0, "corona.c0", "must be positive");
  if (rd.has("corona.s")) c.s_schedule = detail::parse_list("corona.s", rd.raw("corona.s"));
  c.shell_theta = rd.number("dichotomy.theta", 0.5);
  require(c.shell_theta > 0.0 && c.shell_theta < 1.0, "dichotomy.theta", "must lie in (0,1)");
  c.shell_n = rd.integer("dichotomy.n", 3);
  require(c.shell_n >= 0, "dichotomy.n", "must be >= 0");
  c.lambda = rd.number("dichotomy.lambda", 0.25);
  require(c.lambda > 0.0 && c.lambda < 0.5, "dichotomy.lambda", "must lie in (0, 1/2)");
  c.depth = rd.integer("dichotomy.depth", 8);
  require(c.depth >= 1 && c.depth <= 40, "dichotomy.depth", "must lie in [1,40]");
  if (rd.has("bound.p")) c.bound_p = rd.integer("bound.p", 2);
  c.bound_m = rd.integer("bound.m", 3);
  require(c.bound_m >= 1, "bound.m", "must be >= 1");
  if (rd.has("bound.j_grid")) c.j_grid = detail::parse_list("bound.j_grid", rd.raw("bound.j_grid"));
  if (rd.has("bound.q_grid")) c.q_grid = detail::parse_list("bound.q_grid", rd.raw("bound.q_grid"));
  for (double j : c.j_grid) require(j >= 0 && j == std::floor(j), "bound.j_grid", "entries must be integers >= 0");
  for (double q : c.q_grid) require(q >= 0 && q == std::floor(q), "bound.q_grid", "entries must be integers >= 0");

  // Experiment-specific requirements.
  const bool explicit_zero = [&] {
    if (!c.center) return false;
    if (const auto* p = std::get_if<CirclePoint>(&*c.center)) return p->x == 0.0 && kind != SystemKind::Doubling;
    if (const auto* p = std::get_if<TorusDiskPoint>(&*c.center)) return p->x == 0.0;
    return false;
  }();
  require(!explicit_zero, "center.x", "the neutral fixed point x = 0 is excluded as a center");

  switch (c.experiment) {
    case ExperimentKind::PoissonTest:
      require(c.radii.size() == 1, "radii", "poisson-test takes exactly one radius");
      require(c.centers == 1, "centers", "poisson-test takes one center");
      break;
    case ExperimentKind::Recurrence:
    case ExperimentKind::Dimension:
      require(c.radii.size() >= 3, "radii", "slope estimates need at least 3 radii");
      if (c.experiment == ExperimentKind::Dimension && kind != SystemKind::Doubling)
        require(c.measure_budget >= 10'000, "measure_budget", "must be >= 10^4 for dimension estimates");
      break;
    case ExperimentKind::Kac:
      require(c.radii.size() == 1, "radii", "kac takes exactly one radius");
      break;
    case ExperimentKind::Corona:
      require(!c.radii.empty(), "radii", "required");
      for (double r : c.radii) require(r < 1.0, "radii", "corona radii must lie in (0,1)");
      require(c.delta > 1.0, "corona.delta", "must exceed 1");
      break;
    case ExperimentKind::Dichotomy:
      require(c.centers == 1, "centers", "dichotomy takes one center");
      for (double s : c.s_schedule) require(s > 0.0, "corona.s", "entries must be positive");
      break;
    case ExperimentKind::Bound:
      require(c.radii.size() == 1, "radii", "bound takes exactly one radius");
      require(c.centers == 1, "centers", "bound takes one center");
      require(c.ensemble_size >= 30, "ensemble_size", "must be >= 30 for batch-means errors");
      break;
  }

  // Resolved view: explicit keys plus the defaults that apply.
  c.resolved = m;
  auto put_default = [&](const std::string& k, const std::string& v) { c.resolved.emplace(k, v); };
  put_default("name", c.name);
  put_default("center", center_mode);
  put_default("centers", std::to_string(c.centers));
  put_default("t", format_double(c.t));
  put_default("ensemble_size", std::to_string(c.ensemble_size));
  put_default("horizon_cap", std::to_string(c.horizon_cap));
  put_default("measure_budget", std::to_string(c.measure_budget));
  put_default("burn_in", std::to_string(c.burn_in));
  put_default("seed", std::to_string(c.seed));
  put_default("threads", std::to_string(c.threads));
  put_default("output_path", c.output_path);
  if (kind == SystemKind::Stadium) put_default("ell", format_double(c.system.ell));
  return c;
}

// ---------------------------------------------------------------------------
// Running experiments

/// Result of one experiment before it is written anywhere.
struct ExperimentOutput {
  nlohmann::ordered_json results;
  std::string csv;
};

namespace detail {

// Stream layout: every use of randomness derives from (seed, 0) by a fixed
// tag so experiments never share substreams.
enum StreamTag : std::uint64_t { kCenters = 1, kMeasure = 2, kEnsemble = 3, kPool = 4, kR1 = 5, kR2 = 6 };

inline RngStream tagged(const ExperimentConfig& c, StreamTag tag, std::uint64_t index = 0) {
  return RngStream{c.seed, 0}.substream(tag).substream(index);
}

inline nlohmann::ordered_json point_json(const PhasePoint& p) {
  nlohmann::ordered_json j;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, CirclePoint>) {
          j["x"] = v.x;
        } else if constexpr (std::is_same_v<T, TorusDiskPoint>) {
          j["x"] = v.x;
          j["z_re"] = v.z.real();
          j["z_im"] = v.z.imag();
        } else {
          j["r"] = v.r;
          j["phi"] = v.phi;
        }
      },
      p);
  return j;
}

inline bool is_neutral_point(const PhasePoint& p) {
  if (const auto* c = std::get_if<CirclePoint>(&p)) return c->x == 0.0;
  if (const auto* t = std::get_if<TorusDiskPoint>(&p)) return t->x == 0.0;
  return false;
}

/// Center orbit number i: the explicit center, or a draw from mu. Exact
/// zeros of the intermittent base are skipped.
inline Orbit center_orbit(const ExperimentConfig& c, std::uint64_t i) {
  if (c.center) return Orbit(c.system, *c.center);
  const bool skip_zero = c.system.kind == SystemKind::Lsv || c.system.kind == SystemKind::Solenoid;
  for (std::uint64_t attempt = 0;; ++attempt) {
    Orbit o = sample_orbit(c.system, tagged(c, kCenters, i).substream(attempt), c.burn_in);
    if (!(skip_zero && is_neutral_point(o.point()))) return o;
  }
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double std_err_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

inline nlohmann::ordered_json slope_json(const SlopeEstimate& s) {
  nlohmann::ordered_json j;
  j["slope"] = s.slope;
  j["intercept"] = s.intercept;
  j["r2"] = s.r2;
  j["dropped_radii"] = s.dropped;
  return j;
}

inline ExperimentOutput run_poisson_test(const ExperimentConfig& c) {
  const double r = c.radii.front();
  const Orbit center = center_orbit(c, 0);
  const PhasePoint x = center.point();
  VisitCountOptions opts;
  opts.measure_budget = static_cast<std::uint64_t>(c.measure_budget);
  opts.burn_in = c.burn_in;
  BallMeasure mu = horizon_measure(c.system, x, r, opts.measure_budget, tagged(c, kMeasure), c.burn_in);
  if (!(mu.value() > 0.0)) throw Error(ErrorKind::Undersampled, "estimated ball measure is zero");
  const long horizon = static_cast<long>(std::floor(c.t / mu.value()));
  const EmpiricalPMF pmf = visit_count_pmf(c.system, x, r, horizon, static_cast<std::uint64_t>(c.ensemble_size),
                                           tagged(c, kEnsemble), c.burn_in);
  const double lambda = static_cast<double>(horizon) * mu.value();

  ExperimentOutput out;
  std::ostringstream csv;
  csv << "k,count,frequency,poisson_pmf\n";
  const auto poisson = truncate(PoissonLaw{c.t}, pmf.support_size());
  for (std::size_t k = 0; k < poisson.mass.size(); ++k)
    csv << k << ',' << pmf.count(k) << ',' << format_double(pmf.frequency(k)) << ','
        << format_double(poisson.mass[k]) << '\n';
  out.csv = csv.str();

  auto& res = out.results;
  res["center"] = point_json(x);
  res["radius"] = r;
  res["t"] = c.t;
  res["ball_measure"] = mu.value();
  res["ball_measure_std_err"] = mu.exact ? 0.0 : mu.std_error;
  res["ball_measure_exact"] = mu.exact.has_value();
  res["horizon"] = horizon;
  res["ensemble_size"] = c.ensemble_size;
  res["mean_visits"] = pmf.mean();
  res["tv_distance"] = tv_distance(pmf, PoissonLaw{c.t});
  res["tv_distance_poisson_n_eps"] = tv_distance(pmf, PoissonLaw{lambda});
  res["counts"] = pmf.counts();
  return out;
}

inline ExperimentOutput run_recurrence(const ExperimentConfig& c) {
  ExperimentOutput out;
  std::ostringstream csv;
  csv << "center,radius,return_time,exceeded\n";
  auto& res = out.results;
  res["radii"] = c.radii;
  res["horizon_cap"] = c.horizon_cap;
  std::vector<double> slopes;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::int64_t i = 0; i < c.centers; ++i) {
    const Orbit o = center_orbit(c, static_cast<std::uint64_t>(i));
    const auto times = first_return_times(o, c.radii, c.horizon_cap);
    for (std::size_t k = 0; k < c.radii.size(); ++k)
      csv << i << ',' << format_double(c.radii[k]) << ',' << times[k].steps << ',' << (times[k].exceeded ? 1 : 0)
          << '\n';
    auto entry = slope_json(recurrence_rate(o, c.radii, c.horizon_cap));
    entry["center"] = point_json(o.point());
    slopes.push_back(entry["slope"].get<double>());
    per.push_back(std::move(entry));
  }
  res["slope"] = mean_of(slopes);
  res["slope_std_err"] = std_err_of(slopes);
  res["centers"] = std::move(per);
  out.csv = csv.str();
  return out;
}

inline ExperimentOutput run_dimension(const ExperimentConfig& c) {
  ExperimentOutput out;
  std::ostringstream csv;
  csv << "center,radius,measure\n";
  auto& res = out.results;
  res["radii"] = c.radii;
  std::vector<PhasePoint> pool;
  if (c.system.kind != SystemKind::Doubling)
    pool = sample_pool(c.system, static_cast<std::uint64_t>(c.measure_budget), tagged(c, kPool), c.burn_in);
  std::vector<double> slopes;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::int64_t i = 0; i < c.centers; ++i) {
    const PhasePoint x = center_orbit(c, static_cast<std::uint64_t>(i)).point();
    const SlopeEstimate s = c.system.kind == SystemKind::Doubling
                                ? local_dimension(c.system, x, c.radii, 0, tagged(c, kPool))
                                : local_dimension(c.system, x, c.radii, pool);
    for (const auto& [lr, lm] : s.points)
      csv << i << ',' << format_double(std::exp(lr)) << ',' << format_double(std::exp(lm)) << '\n';
    auto entry = slope_json(s);
    entry["center"] = point_json(x);
    slopes.push_back(s.slope);
    per.push_back(std::move(entry));
  }
  res["slope"] = mean_of(slopes);
  res["slope_std_err"] = std_err_of(slopes);
  res["centers"] = std::move(per);
  out.csv = csv.str();
  return out;
}

inline ExperimentOutput run_kac(const ExperimentConfig& c) {
  ExperimentOutput out;
  std::ostringstream csv;
  csv << "center,radius,mean_return_time,std_err,ball_measure,product\n";
  const double r = c.radii.front();
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::int64_t i = 0; i < c.centers; ++i) {
    const PhasePoint x = center_orbit(c, static_cast<std::uint64_t>(i)).point();
    const BallMeasure mu = horizon_measure(c.system, x, r, static_cast<std::uint64_t>(c.measure_budget),
                                           tagged(c, kMeasure, static_cast<std::uint64_t>(i)), c.burn_in);
    const KacResult k = mean_return_time(c.system, x, r, static_cast<std::uint64_t>(c.ensemble_size), c.horizon_cap,
                                         tagged(c, kEnsemble, static_cast<std::uint64_t>(i)), c.burn_in);
    const double product = k.mean * mu.value();
    nlohmann::ordered_json e;
    e["center"] = point_json(x);
    e["mean_return_time"] = k.mean;
    e["mean_return_time_std_err"] = k.std_error;
    e["ball_measure"] = mu.value();
    e["ball_measure_exact"] = mu.exact.has_value();
    e["product"] = product;
    e["product_std_err"] = k.std_error * mu.value();
    e["exceeded"] = k.exceeded;
    csv << i << ',' << format_double(r) << ',' << format_double(k.mean) << ',' << format_double(k.std_error) << ','
        << format_double(mu.value()) << ',' << format_double(product) << '\n';
    per.push_back(std::move(e));
  }
  out.results["radius"] = r;
  out.results["centers"] = std::move(per);
  out.csv = csv.str();
  return out;
}

inline ExperimentOutput run_corona(const ExperimentConfig& c) {
  ExperimentOutput out;
  std::ostringstream csv;
  csv << "center,radius,ratio,std_err,exact\n";
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::int64_t i = 0; i < c.centers; ++i) {
    const PhasePoint x = center_orbit(c, static_cast<std::uint64_t>(i)).point();
    nlohmann::ordered_json e;
    e["center"] = point_json(x);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < c.radii.size(); ++k) {
      const RatioEstimate q = corona_ratio(c.system, x, c.radii[k], c.delta,
                                           static_cast<std::uint64_t>(c.measure_budget),
                                           tagged(c, kMeasure, static_cast<std::uint64_t>(i)), c.burn_in);
      rows.push_back({{"radius", c.radii[k]}, {"ratio", q.value}, {"ratio_std_err", q.std_error}, {"exact", q.exact}});
      csv << i << ',' << format_double(c.radii[k]) << ',' << format_double(q.value) << ','
          << format_double(q.std_error) << ',' << (q.exact ? 1 : 0) << '\n';
    }
    e["radii"] = std::move(rows);
    per.push_back(std::move(e));
  }
  out.results["delta"] = c.delta;
  out.results["centers"] = std::move(per);
  out.csv = csv.str();
  return out;
}

inline ExperimentOutput run_dichotomy(const ExperimentConfig& c) {
  ExperimentOutput out;
  const PhasePoint x = center_orbit(c, 0).point();
  const auto tr = dichotomy_radius(c.system, x, c.shell_n, c.shell_theta, c.lambda, static_cast<int>(c.depth),
                                   static_cast<std::uint64_t>(c.measure_budget), tagged(c, kMeasure), c.burn_in);
  std::ostringstream csv;
  csv << "level,left,right,side,mass,mass_rel_err\n";
  nlohmann::ordered_json left = nlohmann::ordered_json::array(), right = nlohmann::ordered_json::array(),
                         sides = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < tr.intervals.size(); ++k) {
    left.push_back(tr.intervals[k].first);
    right.push_back(tr.intervals[k].second);
    const std::string side = k == 0 ? "" : (tr.chosen_sides[k - 1] == Side::Left ? "left" : "right");
    if (k > 0) sides.push_back(side);
    csv << k << ',' << format_double(tr.intervals[k].first) << ',' << format_double(tr.intervals[k].second) << ','
        << side << ',' << format_double(tr.masses[k]) << ',' << format_double(tr.mass_rel_errors[k]) << '\n';
  }
  auto& res = out.results;
  res["center"] = point_json(x);
  res["theta"] = tr.theta;
  res["n"] = tr.n;
  res["root"] = tr.root;
  res["lambda"] = tr.lambda;
  res["rho"] = tr.rho;
  res["interval_left"] = std::move(left);
  res["interval_right"] = std::move(right);
  res["chosen_sides"] = std::move(sides);
  res["masses"] = tr.masses;
  res["mass_rel_errors"] = tr.mass_rel_errors;
  res["t_star"] = tr.t_star;
  res["radius"] = tr.radius;
  res["exact"] = tr.exact;
  if (!c.s_schedule.empty()) {
    for (double s : c.s_schedule)
      if (!(s < tr.radius)) throw ConfigError("corona.s", "every s must be below the selected radius");
    const double a = corona_exponent(c.lambda);
    const auto rep = verify_corona_bound(c.system, x, tr.radius, a, c.c0, c.s_schedule,
                                         static_cast<std::uint64_t>(c.measure_budget), tagged(c, kPool), c.burn_in);
    nlohmann::ordered_json checks = nlohmann::ordered_json::array();
    for (const auto& ch : rep.checks)
      checks.push_back({{"s", ch.s},
                        {"corona", ch.corona},
                        {"corona_std_err", ch.corona_std_err},
                        {"rhs", ch.rhs},
                        {"margin", ch.margin},
                        {"c0_needed", ch.c0_needed},
                        {"pass", ch.pass}});
    res["corona_check"] = {{"a", a},
                           {"c0", c.c0},
                           {"all_pass", rep.all_pass},
                           {"smallest_passing_c0", rep.smallest_passing_c0},
                           {"checks", std::move(checks)}};
  }
  out.csv = csv.str();
  return out;
}

inline ExperimentOutput run_bound(const ExperimentConfig& c) {
  ExperimentOutput out;
  const double r = c.radii.front();
  const PhasePoint x = center_orbit(c, 0).point();
  const BallMeasure mu = horizon_measure(c.system, x, r, static_cast<std::uint64_t>(c.measure_budget),
                                         tagged(c, kMeasure), c.burn_in);
  const double eps = mu.value();
  if (!(eps > 0.0)) throw Error(ErrorKind::Undersampled, "estimated ball measure is zero");
  const long n = static_cast<long>(std::floor(c.t / eps));
  const long p = c.bound_p ? static_cast<long>(*c.bound_p) : static_cast<long>(std::floor(1.0 / std::sqrt(r)));
  const long m = static_cast<long>(c.bound_m);
  if (!(p >= 2 && p < n)) throw ConfigError("bound.p", "requires 2 <= p < N (N = " + std::to_string(n) + ")");
  if (!(m <= n - 1)) throw ConfigError("bound.m", "requires M <= N-1 (N = " + std::to_string(n) + ")");
  std::vector<long> js, qs;
  if (c.j_grid.empty()) {
    js = {0, (n - p) / 2};
  } else {
    for (double j : c.j_grid) js.push_back(static_cast<long>(j));
  }
  for (long j : js)
    if (j > n - p) throw ConfigError("bound.j_grid", "entries must be <= N-p (= " + std::to_string(n - p) + ")");
  for (double q : c.q_grid) qs.push_back(static_cast<long>(q));

  const auto ens = static_cast<std::uint64_t>(c.ensemble_size);
  const EmpiricalPMF pmf = visit_count_pmf(c.system, x, r, n, ens, tagged(c, kEnsemble), c.burn_in);
  const double lambda = static_cast<double>(n) * eps;
  const double tv = tv_distance(pmf, PoissonLaw{lambda});
  const R1Estimate r1 = estimate_r1(c.system, x, r, n, p, js, qs, ens, tagged(c, kR1), c.burn_in);
  const MonteCarloValue r2 = estimate_r2(c.system, x, r, p, std::max<std::uint64_t>(ens, 1'000'000), tagged(c, kR2),
                                         c.burn_in);
  const BoundReport b = total_bound(eps, n, p, m, r1.value, r2.value, r3_bound(eps, n, p, m), r1.std_error,
                                    r2.std_error);

  std::ostringstream csv;
  csv << "j,q,covariance,std_err\n";
  for (const auto& pr : r1.probes)
    csv << pr.j << ',' << pr.q << ',' << format_double(pr.covariance) << ',' << format_double(pr.std_error) << '\n';
  out.csv = csv.str();

  auto& res = out.results;
  res["center"] = point_json(x);
  res["radius"] = r;
  res["epsilon_exact"] = mu.exact.has_value();
  res["bound"] = {{"epsilon", b.epsilon}, {"n", b.n},   {"p", b.p},         {"m", b.m},
                  {"r1", b.r1},           {"r2", b.r2}, {"r3", b.r3},       {"total", b.total},
                  {"r1_std_err", b.r1_std_err},         {"r2_std_err", b.r2_std_err}};
  res["r1_estimate_kind"] = "grid lower-bound probe";
  res["tv_distance"] = tv;
  res["total_std_err"] = b.total_std_err();
  res["bound_holds"] = tv <= b.total + 3.0 * b.total_std_err();
  return out;
}

}  // namespace detail

/// Runs the experiment with the configured thread count and returns the
/// results and CSV table.
inline ExperimentOutput execute(const ExperimentConfig& c) {
  set_thread_count(static_cast<unsigned>(c.threads));
  switch (c.experiment) {
    case ExperimentKind::PoissonTest: return detail::run_poisson_test(c);
    case ExperimentKind::Recurrence: return detail::run_recurrence(c);
    case ExperimentKind::Dimension: return detail::run_dimension(c);
    case ExperimentKind::Kac: return detail::run_kac(c);
    case ExperimentKind::Corona: return detail::run_corona(c);
    case ExperimentKind::Dichotomy: return detail::run_dichotomy(c);
    case ExperimentKind::Bound: return detail::run_bound(c);
  }
  return {};
}

/// Full JSON report: metadata, resolved config, seed and results.
inline nlohmann::ordered_json make_report(const ExperimentConfig& c, const ExperimentOutput& out,
                                          const std::string& csv_file) {
  nlohmann::ordered_json rep;
  rep["schema"] = kReportSchema;
  rep["code_version"] = kCodeVersion;
  rep["experiment"] = to_string(c.experiment);
  rep["system"] = to_string(c.system.kind);
  rep["seed"] = c.seed;
  rep["threads"] = c.threads;
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : c.resolved) cfg[k] = v;
  rep["config"] = std::move(cfg);
  rep["system_constants"] = {{"gamma", c.system.gamma},   {"theta", c.system.theta},
                             {"ell", c.system.ell},       {"sup_deriv", c.system.sup_deriv},
                             {"zeta", std::isfinite(c.system.zeta) ? nlohmann::ordered_json(c.system.zeta)
                                                                   : nlohmann::ordered_json("inf")},
                             {"alpha", std::isfinite(c.system.alpha) ? nlohmann::ordered_json(c.system.alpha)
                                                                     : nlohmann::ordered_json("inf")}};
  rep["csv"] = csv_file;
  rep["results"] = out.results;
  return rep;
}

/// Outcome of comparing two result trees.
struct Comparison {
  bool equal = true;
  std::string first_difference;
};

namespace detail {

inline void compare_json(const nlohmann::ordered_json& a, const nlohmann::ordered_json& b, const std::string& path,
                         bool statistical, const nlohmann::ordered_json* parent_a, const std::string& key,
                         Comparison& cmp) {
  if (!cmp.equal) return;
  auto fail = [&] {
    cmp.equal = false;
    cmp.first_difference = path;
  };
  if (a.type() != b.type() && !(a.is_number() && b.is_number())) return fail();
  if (a.is_object()) {
    if (a.size() != b.size()) return fail();
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key())) return fail();
      compare_json(it.value(), b.at(it.key()), path + "." + it.key(), statistical, &a, it.key(), cmp);
      if (!cmp.equal) return;
    }
    return;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) return fail();
    for (std::size_t i = 0; i < a.size(); ++i) {
      compare_json(a[i], b[i], path + "[" + std::to_string(i) + "]", statistical, parent_a, key, cmp);
      if (!cmp.equal) return;
    }
    return;
  }
  if (a.is_number_float() || b.is_number_float()) {
    const double x = a.get<double>(), y = b.get<double>();
    if (x == y) return;
    if (statistical && parent_a && parent_a->is_object() && parent_a->contains(key + "_std_err")) {
      const double se = parent_a->at(key + "_std_err").get<double>();
      if (std::fabs(x - y) <= 3.0 * se) return;
    }
    return fail();
  }
  if (a != b) fail();
}

}  // namespace detail

/// Compares result trees. Exact mode requires identical values; statistical
/// mode lets a float differ by up to three times a sibling `<name>_std_err`.
inline Comparison compare_results(const nlohmann::ordered_json& a, const nlohmann::ordered_json& b,
                                  bool statistical) {
  Comparison cmp;
  detail::compare_json(a, b, "results", statistical, nullptr, "", cmp);
  return cmp;
}

}  // namespace hitlab
