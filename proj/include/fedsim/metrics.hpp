#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace fedsim {

/// Per-round bookkeeping: evaluation results plus attack/defense context.
/// wall_time_ms is measured, never part of determinism guarantees.
struct MetricsRecord {
  int round = 0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  double train_loss_mean = 0.0;
  int num_updates_aggregated = 0;
  std::optional<std::vector<int>> defense_selected_ids;
  std::optional<std::vector<int>> attack_poisoned_ids;
  int64_t wall_time_ms = 0;
};

}  // namespace fedsim
