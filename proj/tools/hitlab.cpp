// Command-line runner for hitting-time experiments.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "hitlab/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kValidation = 2, kUndersampled = 3, kMismatch = 4, kIo = 5 };

int emit_error(int code, const std::string& kind, const std::string& message, const std::string& key = {}) {
  ordered_json j;
  j["status"] = "error";
  j["exit_code"] = code;
  j["kind"] = kind;
  if (!key.empty()) j["key"] = key;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
  return code;
}

int exit_for(const hitlab::Error& e) {
  switch (e.kind()) {
    case hitlab::ErrorKind::Undersampled:
    case hitlab::ErrorKind::InsufficientData: return kUndersampled;
    default: return kValidation;
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + p.string() + "'");
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<long> threads;
  std::optional<std::string> output_dir;

  void apply(hitlab::ConfigMap& m) const {
    if (seed) m["seed"] = std::to_string(*seed);
    if (threads) m["threads"] = std::to_string(*threads);
    if (output_dir) m["output_path"] = *output_dir;
  }
};

// Wraps a command body with the shared error-to-exit-code mapping.
template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const hitlab::ConfigError& e) {
    return emit_error(kValidation, "validation", e.detail(), e.key());
  } catch (const hitlab::Error& e) {
    return emit_error(exit_for(e), std::string(hitlab::to_string(e.kind())), e.detail());
  } catch (const nlohmann::json::exception& e) {
    return emit_error(kValidation, "validation", std::string("malformed report: ") + e.what());
  } catch (const std::exception& e) {
    return emit_error(kIo, "io", e.what());
  }
}

int cmd_validate(const std::string& path, const Overrides& ov) {
  return guarded([&] {
    auto m = hitlab::read_config_file(path);
    ov.apply(m);
    const auto cfg = hitlab::validate_config(m);
    ordered_json j;
    j["status"] = "ok";
    j["experiment"] = hitlab::to_string(cfg.experiment);
    ordered_json resolved;
    for (const auto& [k, v] : cfg.resolved) resolved[k] = v;
    j["config"] = std::move(resolved);
    std::cout << j.dump(2) << '\n';
    return int{kOk};
  });
}

int cmd_run(const std::string& path, const Overrides& ov) {
  return guarded([&] {
    auto m = hitlab::read_config_file(path);
    ov.apply(m);
    const auto cfg = hitlab::validate_config(m);
    const fs::path dir = cfg.output_path;
    fs::create_directories(dir);
    const auto out = hitlab::execute(cfg);
    const std::string csv_name = cfg.name + ".csv";
    const auto report = hitlab::make_report(cfg, out, csv_name);
    write_file(dir / csv_name, out.csv);
    write_file(dir / (cfg.name + ".json"), report.dump(2) + "\n");
    std::cout << (dir / (cfg.name + ".json")).string() << '\n';
    return int{kOk};
  });
}

int cmd_check(const std::string& report_path, const Overrides& ov) {
  return guarded([&] {
    const ordered_json report = ordered_json::parse(slurp(report_path));
    hitlab::ConfigMap m;
    for (const auto& [k, v] : report.at("config").items()) m[k] = v.get<std::string>();
    // The top-level seed and thread count are authoritative.
    m["seed"] = std::to_string(report.at("seed").get<std::uint64_t>());
    m["threads"] = std::to_string(report.at("threads").get<long>());
    Overrides rerun = ov;
    rerun.seed.reset();
    rerun.output_dir.reset();
    rerun.apply(m);
    const auto cfg = hitlab::validate_config(m);
    const bool statistical = report.at("threads").get<long>() > 1 || cfg.threads > 1;
    const std::string mode = statistical ? "statistical" : "exact";

    auto mismatch = [&](const std::string& field) {
      ordered_json j{{"status", "mismatch"}, {"mode", mode}, {"field", field}};
      std::cout << j.dump() << '\n';
      return int{kMismatch};
    };
    if (report.at("schema") != hitlab::kReportSchema) return mismatch("schema");
    if (report.at("experiment") != hitlab::to_string(cfg.experiment)) return mismatch("experiment");
    if (report.at("config").at("seed").get<std::string>() != std::to_string(cfg.seed)) return mismatch("config.seed");
    const auto out = hitlab::execute(cfg);
    const auto cmp = hitlab::compare_results(report.at("results"), out.results, statistical);
    if (!cmp.equal) return mismatch(cmp.first_difference);
    if (!statistical) {
      const fs::path csv = fs::path(report_path).parent_path() / report.at("csv").get<std::string>();
      if (fs::exists(csv) && slurp(csv) != out.csv) return mismatch("csv");
    }
    ordered_json j{{"status", "reproduced"}, {"mode", mode}};
    std::cout << j.dump() << '\n';
    return int{kOk};
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hitting-time statistics experiments"};
  app.require_subcommand(1);

  Overrides ov;
  std::uint64_t seed = 0;
  long threads = 0;
  std::string output_dir;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::Range(1L, 1024L));
    sub->add_option("--output-dir", output_dir, "Directory for the JSON and CSV outputs");
  };

  std::string config_path, report_path;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Config file")->required();
  add_overrides(run);
  auto* check = app.add_subcommand("check", "Re-execute a report and compare its results");
  check->add_option("report", report_path, "Report JSON")->required();
  check->add_option("--threads", threads, "Worker threads for the rerun")->check(CLI::Range(1L, 1024L));
  auto* validate = app.add_subcommand("validate", "Validate a config file without running it");
  validate->add_option("config", config_path, "Config file")->required();
  add_overrides(validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return emit_error(kValidation, "usage", e.what());
  }

  auto pick = [&](CLI::App* sub) {
    if (sub->count("--seed")) ov.seed = seed;
    if (sub->count("--threads")) ov.threads = threads;
    if (sub->get_option_no_throw("--output-dir") && sub->count("--output-dir")) ov.output_dir = output_dir;
  };
  if (run->parsed()) {
    pick(run);
    return cmd_run(config_path, ov);
  }
  if (validate->parsed()) {
    pick(validate);
    return cmd_validate(config_path, ov);
  }
  if (check->parsed()) {
    if (check->count("--threads")) ov.threads = threads;
    return cmd_check(report_path, ov);
  }
  return kValidation;
}
