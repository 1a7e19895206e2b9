#include "fedsim/engine.hpp"

#include <algorithm>
#include <chrono>
#include <future>

#include "fedsim/errors.hpp"

namespace fedsim {

HookRegistry& HookRegistry::global() {
  static HookRegistry instance;
  return instance;
}

Attacker& HookRegistry::install_attacker(AttackSpec spec, int num_total_clients,
                                         uint64_t master_seed) {
  if (attacker_)
    throw ContractError(
        "HookRegistry: an attacker is already active in this run");
  attacker_ =
      std::make_unique<Attacker>(std::move(spec), num_total_clients, master_seed);
  return *attacker_;
}

Defender& HookRegistry::install_defender(DefenseSpec spec) {
  if (defender_)
    throw ContractError(
        "HookRegistry: a defender is already active in this run");
  defender_ = std::make_unique<Defender>(spec);
  return *defender_;
}

void HookRegistry::clear() {
  attacker_.reset();
  defender_.reset();
}

bool HookRegistry::is_data_poisoning_attack() const {
  return attacker_ && attacker_->is_data_poisoning_attack();
}
bool HookRegistry::is_model_poisoning_attack() const {
  return attacker_ && attacker_->is_model_poisoning_attack();
}
bool HookRegistry::is_data_reconstruction_attack() const {
  return attacker_ && attacker_->is_data_reconstruction_attack();
}
bool HookRegistry::is_defense_before_aggregation() const {
  return defender_ && defender_->is_defense_before_aggregation();
}
bool HookRegistry::is_defense_on_aggregation() const {
  return defender_ && defender_->is_defense_on_aggregation();
}
bool HookRegistry::is_defense_after_aggregation() const {
  return defender_ && defender_->is_defense_after_aggregation();
}

Engine::Engine(ModelSpec model, Dataset test_data, OptimizerSpec optimizer,
               EngineOptions options)
    : model_(std::move(model)),
      test_(std::move(test_data)),
      optimizer_(optimizer),
      options_(options) {
  model_.validate();
  if (test_.empty()) throw ContractError("Engine: empty test dataset");
}

std::pair<RoundState, MetricsRecord> Engine::run_round(
    const RoundState& state, const std::vector<ClientTask>& clients,
    HookRegistry& registry) {
  const auto t0 = std::chrono::steady_clock::now();
  if (clients.empty()) throw ContractError("run_round: no clients");
  trace_.clear();
  auto trace = [&](const char* stage, int client_id = -1) {
    if (options_.trace_stages) trace_.push_back({stage, client_id});
  };

  // (1a) Malicious clients' dataset views are poisoned before training.
  Attacker* attacker = registry.attacker();
  std::vector<int> poisoned_ids;
  std::vector<const Dataset*> views(clients.size());
  std::vector<Dataset> poisoned;  // stable storage for poisoned views
  poisoned.reserve(clients.size());
  for (size_t i = 0; i < clients.size(); ++i) {
    views[i] = &clients[i].data;
    if (registry.is_data_poisoning_attack() &&
        attacker->is_malicious(clients[i].client_id, state.round_index)) {
      poisoned.push_back(attacker->poison_data(clients[i].data));
      views[i] = &poisoned.back();
      poisoned_ids.push_back(clients[i].client_id);
      trace("data-poison", clients[i].client_id);
    }
  }

  // (1b) Local training; clients are independent, so this section may run
  // concurrently. Results are merged in task order for determinism.
  auto train_one = [&](size_t i) -> std::optional<ParamVector> {
    if (views[i]->empty()) return std::nullopt;
    return local_train(model_, state.global_params, *views[i],
                       clients[i].train);
  };

  std::vector<std::optional<ParamVector>> trained(clients.size());
  if (options_.parallel_clients && clients.size() > 1) {
    std::vector<std::future<std::optional<ParamVector>>> futures;
    futures.reserve(clients.size());
    for (size_t i = 0; i < clients.size(); ++i)
      futures.push_back(std::async(std::launch::async, train_one, i));
    for (size_t i = 0; i < clients.size(); ++i) trained[i] = futures[i].get();
  } else {
    for (size_t i = 0; i < clients.size(); ++i) trained[i] = train_one(i);
  }

  std::vector<ClientUpdate> updates;
  double train_loss_sum = 0.0;
  int trained_count = 0;
  for (size_t i = 0; i < clients.size(); ++i) {
    if (!trained[i]) continue;  // empty dataset: skip this client
    trace("local-train", clients[i].client_id);
    updates.push_back(ClientUpdate{clients[i].client_id, views[i]->size(),
                                   std::move(*trained[i])});
    train_loss_sum += evaluate(model_, updates.back().params, *views[i]).loss;
    ++trained_count;
  }
  if (updates.empty())
    throw ContractError("run_round: every client was skipped (no updates)");

  // (2) Model poisoning on the submitted update list.
  if (registry.is_model_poisoning_attack()) {
    updates = attacker->attack_model(updates, state);
    for (int id : attacker->malicious_clients(state.round_index)) {
      if (std::any_of(updates.begin(), updates.end(),
                      [&](const ClientUpdate& u) { return u.client_id == id; }))
        poisoned_ids.push_back(id);
    }
    trace("model-poison");
  }

  MetricsRecord record;
  record.round = state.round_index;
  if (attacker) record.attack_poisoned_ids = poisoned_ids;

  // (3) Defense, before aggregation.
  Defender* defender = registry.defender();
  if (registry.is_defense_before_aggregation()) {
    updates = defender->defend_before_aggregation(updates, state);
    trace("defense-before");
    if (updates.empty())
      throw ContractError("run_round: defense '" +
                          defense_kind_name(defender->spec().kind) +
                          "' removed every update (empty aggregation)");
    if (defender->last_selected_ids())
      record.defense_selected_ids = *defender->last_selected_ids();
  }

  // (4) Aggregation: the on-aggregation defense replaces the optimizer rule.
  ParamVector new_global;
  if (registry.is_defense_on_aggregation()) {
    new_global = defender->defend_on_aggregation(updates, state);
    trace("defense-on");
  } else {
    new_global = optimizer_.step(state, updates);
    trace("aggregate");
  }

  // (5) Defense, after aggregation.
  if (registry.is_defense_after_aggregation()) {
    new_global = defender->defend_after_aggregation(new_global, state);
    trace("defense-after");
  }
  new_global.check_finite("aggregated global model");

  // (6) Passive reconstruction: observational only, never alters any state
  // used by the run.
  if (registry.is_data_reconstruction_attack()) {
    const auto& cfg = clients.front().train;
    const int64_t n = clients.front().data.size();
    const int64_t batches =
        n > 0 ? (n + cfg.batch_size - 1) / cfg.batch_size : 1;
    const double lr_times_steps = std::max(
        cfg.learning_rate * static_cast<double>(cfg.local_epochs * batches),
        1e-12);
    auto rng = state.stream("dlg-reconstruct");
    attacker->store_reconstruction(attacker->reconstruct_from_models(
        model_, state.global_params, new_global, lr_times_steps, rng));
    trace("reconstruct");
  }

  // (7) Evaluate the new global model.
  const EvalResult eval = evaluate(model_, new_global, test_);
  trace("evaluate");

  record.test_accuracy = eval.accuracy;
  record.test_loss = eval.loss;
  record.train_loss_mean =
      trained_count > 0 ? train_loss_sum / trained_count : 0.0;
  record.num_updates_aggregated = static_cast<int>(updates.size());
  record.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - t0)
                            .count();

  RoundState next;
  next.round_index = state.round_index + 1;
  next.global_params = std::move(new_global);
  next.prev_global_params = state.global_params;
  next.master_seed = state.master_seed;
  return {std::move(next), std::move(record)};
}

}  // namespace fedsim
