// Command-line front end: run, sweep, accept, export-data, preset.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tta/acceptance.hpp"
#include "tta/errors.hpp"
#include "tta/presets.hpp"
#include "tta/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAcceptance = 3;
constexpr int kExitPoisoned = 4;

tta::ExperimentConfig resolve(const std::string& config_path,
                              const std::string& preset_name) {
  if (!preset_name.empty()) {
    auto c = tta::preset(preset_name);
    if (!c) throw tta::ConfigError("preset", "unknown preset '" + preset_name + "'");
    return *c;
  }
  if (config_path.empty()) {
    throw tta::ConfigError("", "one of --config or --preset is required");
  }
  return tta::load_config(config_path);
}

void print_outcome(const tta::RunOutcome& o) {
  std::printf("run_id %s  method %s  steps %zu  online_acc %.4f  verdict %s",
              o.run_id.c_str(), o.trajectory.method.c_str(), o.trajectory.size(),
              o.online_accuracy,
              o.verdict ? std::string(tta::to_string(*o.verdict)).c_str() : "none");
  if (o.pool_accuracy) std::printf("  pool_acc %.4f", *o.pool_accuracy);
  std::printf("  (%.2fs)\n", o.runtime_seconds);
  if (o.poisoned()) {
    std::printf("poisoned at step %zu: %s\n", *o.failed_step, o.failure.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time adaptation experiments on synthetic streams"};
  app.require_subcommand(1);

  std::string config_path, preset_name, out_dir, axes_path;
  std::optional<std::uint64_t> seed;
  bool plots = false;
  std::size_t jobs = 1;

  auto* run_cmd = app.add_subcommand("run", "Run one experiment");
  run_cmd->add_option("--config", config_path, "Config file (JSON)");
  run_cmd->add_option("--preset", preset_name, "Built-in config instead of --config");
  run_cmd->add_option("--out", out_dir, "Override output_dir");
  run_cmd->add_option("--seed", seed, "Override seed");
  run_cmd->add_flag("--plots", plots, "Write SVG panels");

  auto* sweep_cmd = app.add_subcommand("sweep", "Cross product over axes");
  sweep_cmd->add_option("--config", config_path, "Base config (JSON)");
  sweep_cmd->add_option("--preset", preset_name, "Built-in base config");
  sweep_cmd->add_option("--axes", axes_path, "Axes file (JSON)")->required();
  sweep_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--out", out_dir, "Override output_dir");

  std::string work_dir = "acceptance-out";
  std::size_t accept_jobs = 4;
  auto* accept_cmd = app.add_subcommand("accept", "Run the acceptance suite");
  accept_cmd->add_option("--work-dir", work_dir, "Scratch directory for artifacts");
  accept_cmd->add_option("--jobs", accept_jobs, "Parallel level for determinism checks")
      ->check(CLI::PositiveNumber);

  auto* export_cmd = app.add_subcommand("export-data", "Write datasets as text");
  export_cmd->add_option("--config", config_path, "Config file (JSON)");
  export_cmd->add_option("--preset", preset_name, "Built-in config");
  export_cmd->add_option("--out", out_dir, "Override output_dir");

  std::string show_name;
  auto* preset_cmd = app.add_subcommand("preset", "Print a built-in config");
  preset_cmd->add_option("name", show_name, "collapse-bench | stable-bench")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      tta::ExperimentConfig c = resolve(config_path, preset_name);
      if (!out_dir.empty()) c.output_dir = out_dir;
      if (seed) c.seed = *seed;
      if (plots) c.emit_plots = true;
      const tta::RunOutcome o = tta::run(c);
      print_outcome(o);
      std::printf("artifacts in %s\n", c.output_dir.c_str());
      return o.poisoned() ? kExitPoisoned : kExitOk;
    }
    if (*sweep_cmd) {
      tta::ExperimentConfig base = resolve(config_path, preset_name);
      if (!out_dir.empty()) base.output_dir = out_dir;
      std::ifstream in(axes_path);
      if (!in) throw tta::ConfigError("axes", "cannot open '" + axes_path + "'");
      tta::Json axes;
      try {
        in >> axes;
      } catch (const tta::Json::parse_error& e) {
        throw tta::ConfigError("axes", std::string("not valid JSON: ") + e.what());
      }
      const auto report = tta::sweep(tta::sweep_from_json(base, axes), jobs);
      tta::write_sweep_table(std::cout, report);
      return kExitOk;
    }
    if (*accept_cmd) {
      tta::AcceptanceOptions options;
      options.work_dir = work_dir;
      options.jobs = accept_jobs;
      bool all = true;
      tta::run_acceptance(options, [&](const tta::CriterionResult& r) {
        all = all && r.passed;
        std::printf("%s\n", tta::format_result(r).c_str());
        std::fflush(stdout);
      });
      return all ? kExitOk : kExitAcceptance;
    }
    if (*export_cmd) {
      tta::ExperimentConfig c = resolve(config_path, preset_name);
      if (!out_dir.empty()) c.output_dir = out_dir;
      tta::export_data(c, c.output_dir);
      std::printf("wrote %s/source.txt and %s/stream.txt\n", c.output_dir.c_str(),
                  c.output_dir.c_str());
      return kExitOk;
    }
    if (*preset_cmd) {
      auto c = tta::preset(show_name);
      if (!c) throw tta::ConfigError("preset", "unknown preset '" + show_name + "'");
      std::cout << tta::config_to_json(*c).dump(2) << '\n';
      return kExitOk;
    }
  } catch (const tta::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const tta::PoisonedStateError& e) {
    std::fprintf(stderr, "poisoned: %s\n", e.what());
    return kExitPoisoned;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
