#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/attack.hpp"
#include "fedsim/defense.hpp"
#include "fedsim/model.hpp"
#include "fedsim/optimizer.hpp"

namespace fedsim {

struct CommonConfig {
  uint64_t seed = 0;
  int rounds = 1;
  int clients_total = 1;
  int clients_per_round = 0;  // 0 means all clients
};

struct DataConfig {
  std::string source = "synthetic";  // synthetic | csv
  int num_classes = 2;
  int64_t dim = 2;
  int64_t samples_per_client = 32;
  double dirichlet_alpha = 0.5;
  double test_fraction = 0.2;
  std::string path;  // csv only
};

struct SecurityConfig {
  bool enable_attack = false;
  std::string attack_type;
  AttackSpec attack;
  bool enable_defense = false;
  std::string defense_type;
  DefenseSpec defense;
};

struct OutputConfig {
  std::string dir;
  bool write_csv = true;
  bool write_json = true;
};

/// Fully validated experiment description. model.input_dim / num_classes are
/// filled from the data block.
struct ExperimentConfig {
  CommonConfig common;
  DataConfig data;
  ModelSpec model;
  TrainConfig local;
  OptimizerSpec optimizer;
  SecurityConfig security;
  OutputConfig output;

  std::string preset_name;  // set when built from a preset

  int clients_per_round() const {
    return common.clients_per_round > 0 ? common.clients_per_round
                                        : common.clients_total;
  }
};

/// Parses and validates YAML config text. Unknown keys are hard errors; all
/// error messages name the offending key. Dotted-path overrides
/// ("common.rounds=2") are applied before validation; override values are
/// parsed as YAML scalars/sequences.
ExperimentConfig parse_config_text(const std::string& yaml_text,
                                   const std::vector<std::string>& overrides = {});

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});

/// Names of the shipped scenario presets.
std::vector<std::string> preset_names();

/// YAML text of one preset (errors list the catalog for unknown names).
std::string preset_yaml(const std::string& name);

/// Validated preset config with optional overrides applied.
ExperimentConfig preset(const std::string& name,
                        const std::vector<std::string>& overrides = {});

}  // namespace fedsim
