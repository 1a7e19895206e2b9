#pragma once

#include <string>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/engine.hpp"
#include "fedsim/metrics.hpp"

namespace fedsim {

struct RunResult {
  std::vector<MetricsRecord> records;
  ParamVector final_global;
};

/// Runs a full experiment: builds data partitions, installs the singleton
/// attacker/defender per the security flags, drives the engine for
/// cfg.common.rounds rounds, and writes outputs when output.dir is set.
/// Deterministic for a fixed seed (wall_time_ms excluded).
RunResult run_experiment(const ExperimentConfig& cfg);

/// CSV text with the fixed header
/// round,test_accuracy,test_loss,train_loss_mean,num_updates_aggregated,wall_time_ms
std::string metrics_to_csv(const std::vector<MetricsRecord>& records);

/// JSON summary text: config echo, final/best accuracy, per-round records.
std::string summary_to_json(const std::vector<MetricsRecord>& records,
                            const ExperimentConfig& cfg);

/// Writes metrics.csv / summary.json (per output.formats) under
/// cfg.output.dir, creating the directory. Requires nonempty records.
void write_metrics(const std::vector<MetricsRecord>& records,
                   const ExperimentConfig& cfg);

/// Versioned binary snapshot of cross-round defender memory
/// (defender_state.bin; layout documented in docs/config.md). On load, pass
/// the model layout so histories stay combinable with live parameters.
void save_defender_state(const DefenderState& state, const std::string& path);
DefenderState load_defender_state(const std::string& path,
                                  std::shared_ptr<const Layout> layout = nullptr);

}  // namespace fedsim
