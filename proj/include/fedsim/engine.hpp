#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/attack.hpp"
#include "fedsim/defense.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/model.hpp"
#include "fedsim/optimizer.hpp"

namespace fedsim {

/// Holds the run's attacker and defender handles. At most one of each may be
/// active; installing a second is rejected. `global()` is the process-wide
/// instance the harness uses.
class HookRegistry {
 public:
  HookRegistry() = default;
  HookRegistry(const HookRegistry&) = delete;
  HookRegistry& operator=(const HookRegistry&) = delete;

  static HookRegistry& global();

  Attacker& install_attacker(AttackSpec spec, int num_total_clients,
                             uint64_t master_seed);
  Defender& install_defender(DefenseSpec spec);
  void clear();

  bool has_attacker() const { return attacker_ != nullptr; }
  bool has_defender() const { return defender_ != nullptr; }
  Attacker* attacker() { return attacker_.get(); }
  const Attacker* attacker() const { return attacker_.get(); }
  Defender* defender() { return defender_.get(); }
  const Defender* defender() const { return defender_.get(); }

  // Enabled-and-applicable predicates; all false without the matching hook.
  bool is_data_poisoning_attack() const;
  bool is_model_poisoning_attack() const;
  bool is_data_reconstruction_attack() const;
  bool is_defense_before_aggregation() const;
  bool is_defense_on_aggregation() const;
  bool is_defense_after_aggregation() const;

 private:
  std::unique_ptr<Attacker> attacker_;
  std::unique_ptr<Defender> defender_;
};

/// Clears both hooks of a registry on scope exit.
class ScopedHooks {
 public:
  explicit ScopedHooks(HookRegistry& registry) : registry_(registry) {}
  ~ScopedHooks() { registry_.clear(); }
  ScopedHooks(const ScopedHooks&) = delete;
  ScopedHooks& operator=(const ScopedHooks&) = delete;

 private:
  HookRegistry& registry_;
};

/// One client's work order for a round.
struct ClientTask {
  int client_id = 0;
  Dataset data;
  TrainConfig train;
};

/// Stage-trace entry; client_id is -1 for server-side stages.
struct StageEvent {
  std::string stage;
  int client_id = -1;
  bool operator==(const StageEvent&) const = default;
};

struct EngineOptions {
  bool trace_stages = false;
  bool parallel_clients = true;
};

/// The federated round loop. Per round: optional data poisoning of malicious
/// clients' dataset views, local training, optional model poisoning of the
/// update list, the defense's before/on/after hooks around aggregation, an
/// optional passive reconstruction pass, and evaluation on the held-out test
/// set. Deterministic for fixed seeds.
class Engine {
 public:
  Engine(ModelSpec model, Dataset test_data, OptimizerSpec optimizer,
         EngineOptions options = {});

  std::pair<RoundState, MetricsRecord> run_round(
      const RoundState& state, const std::vector<ClientTask>& clients,
      HookRegistry& registry);

  const ModelSpec& model() const { return model_; }
  const Dataset& test_data() const { return test_; }

  /// Hook firing order of the most recent round (only when tracing).
  const std::vector<StageEvent>& stage_trace() const { return trace_; }

 private:
  ModelSpec model_;
  Dataset test_;
  ServerOptimizer optimizer_;
  EngineOptions options_;
  std::vector<StageEvent> trace_;
};

}  // namespace fedsim
