#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/runner.hpp"

namespace {

std::string default_output_dir(const std::string& label) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::localtime(&t));
  return (std::filesystem::path("runs") / (std::string(stamp) + "-" + label))
      .string();
}

std::string run_label(const std::string& preset_name,
                      const std::string& config_path) {
  if (!preset_name.empty()) return preset_name;
  return std::filesystem::path(config_path).stem().string();
}

// Seed precedence: --seed flag > FEDSIM_SEED env > config file.
void apply_seed_env_and_flag(fedsim::ExperimentConfig& cfg, bool seed_given,
                             uint64_t seed_flag) {
  if (const char* env = std::getenv("FEDSIM_SEED"); env && !seed_given) {
    try {
      cfg.common.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw fedsim::ConfigError("FEDSIM_SEED is not an unsigned integer: " +
                                std::string(env));
    }
  }
  if (seed_given) cfg.common.seed = seed_flag;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated-learning attack/defense simulation harness"};
  app.require_subcommand(1);

  std::string config_path, preset_name, output_dir;
  std::vector<std::string> overrides;
  uint64_t seed_flag = 0;

  auto* run = app.add_subcommand("run", "Run an experiment");
  auto* run_config =
      run->add_option("--config", config_path, "YAML config file");
  auto* run_preset =
      run->add_option("--preset", preset_name, "Named scenario preset");
  run_config->excludes(run_preset);
  run->add_option("--override", overrides,
                  "Dotted-path config override, e.g. common.rounds=2");
  auto* seed_opt =
      run->add_option("--seed", seed_flag, "Master seed (overrides env/file)");
  run->add_option("--output-dir", output_dir,
                  "Output directory (default runs/<timestamp>-<label>)");

  auto* validate = app.add_subcommand("validate", "Validate a config file");
  std::string validate_path;
  validate->add_option("--config", validate_path, "YAML config file")
      ->required();

  auto* list = app.add_subcommand("list-presets", "List the preset catalog");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << e.what() << "\n\n" << app.help() << std::endl;
    return 2;
  }

  try {
    if (list->parsed()) {
      for (const auto& name : fedsim::preset_names())
        std::cout << name << "\n";
      return 0;
    }

    if (validate->parsed()) {
      fedsim::load_config(validate_path);
      std::cout << "OK" << std::endl;
      return 0;
    }

    if (config_path.empty() && preset_name.empty()) {
      std::cerr << "run: either --config or --preset is required\n";
      return 2;
    }

    fedsim::ExperimentConfig cfg =
        preset_name.empty() ? fedsim::load_config(config_path, overrides)
                            : fedsim::preset(preset_name, overrides);
    apply_seed_env_and_flag(cfg, seed_opt->count() > 0, seed_flag);

    if (!output_dir.empty()) {
      cfg.output.dir = output_dir;
    } else if (cfg.output.dir.empty()) {
      cfg.output.dir = default_output_dir(run_label(preset_name, config_path));
    }

    const fedsim::RunResult result = fedsim::run_experiment(cfg);
    for (const auto& r : result.records) {
      std::printf("round=%d accuracy=%.4f loss=%.4f updates=%d\n", r.round,
                  r.test_accuracy, r.test_loss, r.num_updates_aggregated);
    }
    std::printf("final accuracy=%.4f; outputs in %s\n",
                result.records.back().test_accuracy, cfg.output.dir.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}
