// Command-line front end for the dynamic flow sensing pipeline.
//
// Subcommands mirror the pipeline stages: generate, pod, select, plan,
// evaluate, run, sweep, export. Exit codes: 0 success, 2 validation error,
// 3 numerical failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dcsflow/errors.hpp"
#include "dcsflow/pipeline.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Pipeline config JSON")->required();
  cmd->add_option("--seed", flags.seed, "Override the master seed");
  cmd->add_option("--out", flags.out, "Override the output directory");
  cmd->add_option("--threads", flags.threads, "Worker threads (0 = auto)");
}

dcsflow::PipelineConfig load_config(const CommonFlags& flags) {
  dcsflow::PipelineConfig config = dcsflow::PipelineConfig::load(flags.config_path);
  if (flags.seed) config.seed = *flags.seed;
  if (flags.out) config.output_dir = *flags.out;
  if (flags.threads) config.threads = *flags.threads;
  config.validate();
  return config;
}

void report(const dcsflow::StageArtifacts& artifacts) {
  for (const auto& path : artifacts.files) std::cout << "wrote " << path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic compressed sensing of unsteady flow fields"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string export_kind = "field-map";

  CLI::App* generate = app.add_subcommand("generate", "Build and store the snapshot matrix");
  add_common(generate, flags);
  CLI::App* pod = app.add_subcommand("pod", "Compute the POD basis");
  add_common(pod, flags);
  CLI::App* select = app.add_subcommand("select", "Select optimal sensing waypoints");
  add_common(select, flags);
  CLI::App* plan = app.add_subcommand("plan", "Optimize the sensing trajectory");
  add_common(plan, flags);
  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate trajectory reconstruction");
  add_common(evaluate, flags);
  CLI::App* run = app.add_subcommand("run", "Run the full pipeline");
  add_common(run, flags);
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Waypoint-size performance sweep");
  add_common(sweep_cmd, flags);
  CLI::App* export_cmd = app.add_subcommand("export", "Write plot-ready CSV data");
  add_common(export_cmd, flags);
  export_cmd->add_option("--kind", export_kind,
                         "field-map | error-map | trajectory-overlay | sweep-bars");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    const dcsflow::PipelineConfig config = load_config(flags);
    if (generate->parsed()) {
      report(dcsflow::run_generate(config));
    } else if (pod->parsed()) {
      report(dcsflow::run_pod(config));
    } else if (select->parsed()) {
      report(dcsflow::run_select(config));
    } else if (plan->parsed()) {
      report(dcsflow::run_plan(config));
    } else if (evaluate->parsed()) {
      report(dcsflow::run_evaluate(config));
    } else if (run->parsed()) {
      report(dcsflow::run_pipeline(config));
    } else if (sweep_cmd->parsed()) {
      report(dcsflow::run_sweep(config));
    } else if (export_cmd->parsed()) {
      report(dcsflow::export_plot_data(config, dcsflow::parse_plot_kind(export_kind)));
    }
  } catch (const dcsflow::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const dcsflow::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
