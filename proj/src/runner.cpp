#include "fedsim/runner.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fedsim/data_gen.hpp"
#include "fedsim/errors.hpp"

namespace fedsim {

namespace {

using nlohmann::json;

// Shortest round-trip formatting so CSV bytes are reproducible.
std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double parsed = 0.0;
  std::sscanf(buf, "%lg", &parsed);
  if (parsed == v) {
    for (int prec = 1; prec < 17; ++prec) {
      char probe[64];
      std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
      std::sscanf(probe, "%lg", &parsed);
      if (parsed == v) return probe;
    }
  }
  return buf;
}

struct PreparedData {
  std::vector<Dataset> client_data;
  Dataset test_data;
};

// Builds the train/test pools and the per-client Dirichlet partition. The
// synthetic pool is one draw split train/test so both share class means;
// labels cycle round-robin, so a tail split stays class-balanced.
PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData out;
  Dataset pool;
  int64_t train_total = 0;
  if (cfg.data.source == "synthetic") {
    train_total = cfg.data.samples_per_client * cfg.common.clients_total;
    const int64_t test_total = std::max<int64_t>(
        cfg.data.num_classes,
        static_cast<int64_t>(static_cast<double>(train_total) *
                             cfg.data.test_fraction));
    pool = make_synthetic(cfg.data.num_classes, cfg.data.dim,
                          train_total + test_total,
                          derive_seed(cfg.common.seed, "data"));
  } else {
    pool = load_csv_dataset(cfg.data.path, cfg.data.num_classes);
    if (pool.dim() != cfg.data.dim)
      throw ConfigError("config: data.dim does not match the CSV feature count");
    train_total = static_cast<int64_t>(
        static_cast<double>(pool.size()) * (1.0 - cfg.data.test_fraction));
    if (train_total < cfg.common.clients_total)
      throw ConfigError("config: CSV has too few rows for the client count");
  }

  std::vector<int64_t> train_idx(static_cast<size_t>(train_total));
  std::iota(train_idx.begin(), train_idx.end(), 0);
  std::vector<int64_t> test_idx(
      static_cast<size_t>(pool.size() - train_total));
  std::iota(test_idx.begin(), test_idx.end(), train_total);

  const Dataset train_pool = pool.subset(train_idx);
  out.test_data = pool.subset(test_idx);
  out.client_data =
      partition_dirichlet(train_pool, cfg.common.clients_total,
                          cfg.data.dirichlet_alpha,
                          derive_seed(cfg.common.seed, "partition"));
  return out;
}

// model_replacement needs a concrete backdoor model: local training on a
// label-flipped copy of the (first) malicious client's data.
void synthesize_backdoor_target(Attacker& attacker,
                                const ExperimentConfig& cfg,
                                const std::vector<Dataset>& client_data,
                                const ParamVector& init_global) {
  if (attacker.spec().kind != AttackKind::model_replacement ||
      attacker.spec().backdoor_target)
    return;
  const auto malicious = attacker.malicious_clients(0);
  if (malicious.empty())
    throw ConfigError("model_replacement: no malicious clients configured");
  const Dataset& base = client_data[static_cast<size_t>(malicious.front())];
  const Dataset flipped = flip_labels(base, attacker.spec().flip_pairs);
  TrainConfig cfg_train = cfg.local;
  cfg_train.seed = derive_seed(cfg.common.seed, "backdoor-train");
  auto trained = local_train(cfg.model, init_global, flipped, cfg_train);
  if (!trained)
    throw ConfigError("model_replacement: malicious client has no data");
  attacker.set_backdoor_target(std::move(*trained));
}

json record_to_json(const MetricsRecord& r) {
  json j{{"round", r.round},
         {"test_accuracy", r.test_accuracy},
         {"test_loss", r.test_loss},
         {"train_loss_mean", r.train_loss_mean},
         {"num_updates_aggregated", r.num_updates_aggregated},
         {"wall_time_ms", r.wall_time_ms}};
  if (r.defense_selected_ids) j["defense_selected_ids"] = *r.defense_selected_ids;
  if (r.attack_poisoned_ids) j["attack_poisoned_ids"] = *r.attack_poisoned_ids;
  return j;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["common"] = {{"seed", cfg.common.seed},
                 {"rounds", cfg.common.rounds},
                 {"clients_total", cfg.common.clients_total},
                 {"clients_per_round", cfg.clients_per_round()}};
  j["data"] = {{"source", cfg.data.source},
               {"num_classes", cfg.data.num_classes},
               {"dim", cfg.data.dim},
               {"samples_per_client", cfg.data.samples_per_client},
               {"dirichlet_alpha", cfg.data.dirichlet_alpha},
               {"test_fraction", cfg.data.test_fraction}};
  if (!cfg.data.path.empty()) j["data"]["path"] = cfg.data.path;
  j["model"] = {{"kind", cfg.model.kind == ModelKind::logreg ? "logreg" : "mlp"},
                {"input_dim", cfg.model.input_dim},
                {"num_classes", cfg.model.num_classes}};
  if (!cfg.model.hidden_dims.empty())
    j["model"]["hidden_dims"] = cfg.model.hidden_dims;
  j["local"] = {{"epochs", cfg.local.local_epochs},
                {"batch_size", cfg.local.batch_size},
                {"learning_rate", cfg.local.learning_rate}};
  j["optimizer"] = {
      {"kind", cfg.optimizer.kind == OptimizerKind::fedavg ? "fedavg" : "fedopt"}};
  if (cfg.optimizer.kind == OptimizerKind::fedopt) {
    j["optimizer"]["server_opt"] =
        cfg.optimizer.server_opt == ServerOpt::sgd ? "sgd" : "adam";
    j["optimizer"]["server_lr"] = cfg.optimizer.server_lr;
  }
  j["security"] = {{"enable_attack", cfg.security.enable_attack},
                   {"enable_defense", cfg.security.enable_defense}};
  if (cfg.security.enable_attack)
    j["security"]["attack_type"] = cfg.security.attack_type;
  if (cfg.security.enable_defense)
    j["security"]["defense_type"] = cfg.security.defense_type;
  if (!cfg.preset_name.empty()) j["preset"] = cfg.preset_name;
  return j;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  const PreparedData data = prepare_data(cfg);

  HookRegistry& registry = HookRegistry::global();
  ScopedHooks hook_guard(registry);

  ParamVector global =
      init_params(cfg.model, derive_seed(cfg.common.seed, "model-init"));

  if (cfg.security.enable_attack) {
    Attacker& attacker = registry.install_attacker(
        cfg.security.attack, cfg.common.clients_total, cfg.common.seed);
    synthesize_backdoor_target(attacker, cfg, data.client_data, global);
  }
  if (cfg.security.enable_defense)
    registry.install_defender(cfg.security.defense);

  Engine engine(cfg.model, data.test_data, cfg.optimizer);

  RoundState state;
  state.round_index = 0;
  state.global_params = std::move(global);
  state.master_seed = cfg.common.seed;

  RunResult result;
  result.records.reserve(static_cast<size_t>(cfg.common.rounds));
  for (int round = 0; round < cfg.common.rounds; ++round) {
    const auto selected =
        select_clients(round, cfg.common.clients_total, cfg.clients_per_round(),
                       cfg.common.seed);
    std::vector<ClientTask> tasks;
    tasks.reserve(selected.size());
    for (int id : selected) {
      TrainConfig train = cfg.local;
      train.seed = derive_seed(cfg.common.seed, "local-train",
                               static_cast<uint64_t>(round),
                               static_cast<uint64_t>(id));
      tasks.push_back(
          ClientTask{id, data.client_data[static_cast<size_t>(id)], train});
    }
    try {
      auto [next, record] = engine.run_round(state, tasks, registry);
      state = std::move(next);
      result.records.push_back(std::move(record));
    } catch (const std::exception& e) {
      throw ContractError("round " + std::to_string(round) + ": " + e.what());
    }
  }
  result.final_global = state.global_params;

  if (!cfg.output.dir.empty()) {
    write_metrics(result.records, cfg);
    if (registry.has_defender() &&
        cfg.security.defense.kind == DefenseKind::foolsgold) {
      save_defender_state(
          registry.defender()->state(),
          (std::filesystem::path(cfg.output.dir) / "defender_state.bin")
              .string());
    }
  }
  return result;
}

std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
  std::string out =
      "round,test_accuracy,test_loss,train_loss_mean,num_updates_aggregated,"
      "wall_time_ms\n";
  for (const auto& r : records) {
    out += std::to_string(r.round);
    out += ',';
    out += format_double(r.test_accuracy);
    out += ',';
    out += format_double(r.test_loss);
    out += ',';
    out += format_double(r.train_loss_mean);
    out += ',';
    out += std::to_string(r.num_updates_aggregated);
    out += ',';
    out += std::to_string(r.wall_time_ms);
    out += '\n';
  }
  return out;
}

std::string summary_to_json(const std::vector<MetricsRecord>& records,
                            const ExperimentConfig& cfg) {
  json rounds = json::array();
  double best = 0.0;
  for (const auto& r : records) {
    rounds.push_back(record_to_json(r));
    best = std::max(best, r.test_accuracy);
  }
  json j{{"config", config_to_json(cfg)},
         {"final_accuracy", records.empty() ? 0.0 : records.back().test_accuracy},
         {"best_accuracy", best},
         {"final_loss", records.empty() ? 0.0 : records.back().test_loss},
         {"rounds", rounds}};
  return j.dump(2) + "\n";
}

void write_metrics(const std::vector<MetricsRecord>& records,
                   const ExperimentConfig& cfg) {
  if (records.empty())
    throw ContractError("write_metrics: no records to write");
  if (cfg.output.dir.empty())
    throw ContractError("write_metrics: output.dir is empty");

  std::error_code ec;
  std::filesystem::create_directories(cfg.output.dir, ec);
  if (ec)
    throw IoError("cannot create output directory " + cfg.output.dir + ": " +
                  ec.message());

  auto write_file = [&](const char* name, const std::string& text) {
    const auto path = std::filesystem::path(cfg.output.dir) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
  };

  if (cfg.output.write_csv) write_file("metrics.csv", metrics_to_csv(records));
  if (cfg.output.write_json)
    write_file("summary.json", summary_to_json(records, cfg));
}

namespace {
constexpr char kStateMagic[4] = {'F', 'S', 'D', 'S'};
constexpr uint32_t kStateVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError("defender state: truncated file");
  return v;
}
}  // namespace

void save_defender_state(const DefenderState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write defender state: " + path);
  out.write(kStateMagic, sizeof(kStateMagic));
  write_pod<uint32_t>(out, kStateVersion);
  write_pod<uint64_t>(out, state.foolsgold_history.size());
  for (const auto& [client_id, history] : state.foolsgold_history) {
    write_pod<int64_t>(out, client_id);
    write_pod<uint64_t>(out, static_cast<uint64_t>(history.size()));
    out.write(reinterpret_cast<const char*>(history.values().data()),
              static_cast<std::streamsize>(history.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed for defender state: " + path);
}

DefenderState load_defender_state(const std::string& path,
                                  std::shared_ptr<const Layout> layout) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open defender state: " + path);
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kStateMagic, sizeof(magic)) != 0)
    throw IoError("defender state: bad magic in " + path);
  const auto version = read_pod<uint32_t>(in);
  if (version != kStateVersion)
    throw IoError("defender state: unsupported version " +
                  std::to_string(version));
  DefenderState state;
  const auto count = read_pod<uint64_t>(in);
  std::shared_ptr<const Layout> flat;
  for (uint64_t i = 0; i < count; ++i) {
    const auto client_id = read_pod<int64_t>(in);
    const auto len = read_pod<uint64_t>(in);
    std::vector<double> values(len);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(len * sizeof(double)));
    if (!in) throw IoError("defender state: truncated history in " + path);
    std::shared_ptr<const Layout> use = layout;
    if (!use || layout_size(*use) != static_cast<int64_t>(len)) {
      if (!flat || layout_size(*flat) != static_cast<int64_t>(len))
        flat = std::make_shared<Layout>(
            Layout{{"history", {static_cast<int64_t>(len)}}});
      use = flat;
    }
    state.foolsgold_history.emplace(static_cast<int>(client_id),
                                    ParamVector(std::move(values), use));
  }
  return state;
}

}  // namespace fedsim
