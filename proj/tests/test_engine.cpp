#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fedsim/data_gen.hpp"
#include "fedsim/engine.hpp"
#include "fedsim/errors.hpp"

using namespace fedsim;

namespace {

std::shared_ptr<const Layout> flat_layout(int64_t n) {
  return std::make_shared<Layout>(Layout{{"w", {n}}});
}

ClientUpdate update(int id, int64_t count, std::vector<double> values,
                    std::shared_ptr<const Layout> layout = nullptr) {
  if (!layout) layout = flat_layout(static_cast<int64_t>(values.size()));
  return ClientUpdate{id, count, ParamVector(std::move(values), layout)};
}

// A small deterministic federation for round-level tests.
struct Fixture {
  ModelSpec model{ModelKind::logreg, 4, 3, {}};
  Dataset test_data;
  std::vector<ClientTask> tasks;
  RoundState state;

  explicit Fixture(uint64_t seed = 42, int clients = 4) {
    const Dataset pool = make_synthetic(3, 4, 40 * clients + 30, seed);
    std::vector<int64_t> test_idx(30);
    std::iota(test_idx.begin(), test_idx.end(), 40 * clients);
    test_data = pool.subset(test_idx);

    std::vector<int64_t> train_idx(static_cast<size_t>(40 * clients));
    std::iota(train_idx.begin(), train_idx.end(), 0);
    const Dataset train = pool.subset(train_idx);
    const auto parts = partition_dirichlet(train, clients, 0.7, seed + 1);
    for (int c = 0; c < clients; ++c) {
      TrainConfig cfg{1, 16, 0.2, derive_seed(seed, "train", 0, c)};
      tasks.push_back(ClientTask{c, parts[static_cast<size_t>(c)], cfg});
    }
    state.round_index = 0;
    state.global_params = init_params(model, seed);
    state.master_seed = seed;
  }
};

std::vector<std::string> stage_names(const std::vector<StageEvent>& events) {
  std::vector<std::string> names;
  for (const auto& e : events) names.push_back(e.stage);
  return names;
}

}  // namespace

TEST_CASE("fedavg_aggregate computes the sample-weighted mean") {
  const auto layout = flat_layout(2);
  const std::vector<ClientUpdate> updates = {
      update(0, 2, {1.0, 1.0}, layout), update(1, 1, {4.0, 4.0}, layout)};
  const ParamVector avg = fedavg_aggregate(updates);
  CHECK(avg[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(avg[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("fedavg_aggregate: single update, permutation, and envelope") {
  const auto layout = flat_layout(3);
  const std::vector<ClientUpdate> updates = {
      update(2, 5, {0.5, -1.0, 2.0}, layout),
      update(0, 3, {1.5, 0.0, -2.0}, layout),
      update(1, 2, {-0.5, 3.0, 0.25}, layout)};

  SUBCASE("single update returns its params") {
    const std::vector<ClientUpdate> one = {updates[0]};
    CHECK(fedavg_aggregate(one) == updates[0].params);
  }

  SUBCASE("permuting the update list is bit-exact") {
    std::vector<ClientUpdate> shuffled = {updates[1], updates[2], updates[0]};
    CHECK(fedavg_aggregate(updates) == fedavg_aggregate(shuffled));
  }

  SUBCASE("result stays inside the coordinate-wise envelope") {
    const ParamVector avg = fedavg_aggregate(updates);
    for (int64_t c = 0; c < avg.size(); ++c) {
      double lo = updates[0].params[c], hi = lo;
      for (const auto& u : updates) {
        lo = std::min(lo, u.params[c]);
        hi = std::max(hi, u.params[c]);
      }
      CHECK(avg[c] >= lo);
      CHECK(avg[c] <= hi);
    }
  }

  SUBCASE("empty list and zero total weight are contract errors") {
    CHECK_THROWS_AS(fedavg_aggregate({}), ContractError);
    const std::vector<ClientUpdate> zero = {update(0, 0, {1.0, 1.0, 1.0}, layout)};
    CHECK_THROWS_AS(fedavg_aggregate(zero), ContractError);
  }
}

TEST_CASE("fedopt server steps") {
  const auto layout = flat_layout(2);
  RoundState state;
  state.global_params = ParamVector({1.0, -1.0}, layout);
  const std::vector<ClientUpdate> updates = {update(0, 1, {2.0, 1.0}, layout),
                                             update(1, 1, {0.0, 3.0}, layout)};

  SUBCASE("server sgd with unit lr matches plain fedavg") {
    OptimizerSpec spec{OptimizerKind::fedopt, ServerOpt::sgd, 1.0};
    ServerOptimizer opt(spec);
    const ParamVector got = opt.step(state, updates);
    const ParamVector want = fedavg_aggregate(updates);
    for (int64_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }

  SUBCASE("zero server lr leaves the global unchanged") {
    OptimizerSpec spec{OptimizerKind::fedopt, ServerOpt::sgd, 0.0};
    ServerOptimizer opt(spec);
    CHECK(opt.step(state, updates) == state.global_params);
  }

  SUBCASE("adam with zero pseudo-gradient never moves") {
    OptimizerSpec spec{OptimizerKind::fedopt, ServerOpt::adam, 0.5};
    ServerOptimizer opt(spec);
    const std::vector<ClientUpdate> still = {
        update(0, 1, {1.0, -1.0}, layout), update(1, 3, {1.0, -1.0}, layout)};
    for (int round = 0; round < 3; ++round)
      CHECK(opt.step(state, still) == state.global_params);
  }

  SUBCASE("momentum state persists across rounds") {
    OptimizerSpec spec{OptimizerKind::fedopt, ServerOpt::sgd, 1.0, 0.5};
    ServerOptimizer opt(spec);
    const ParamVector first = opt.step(state, updates);
    RoundState next = state;
    next.global_params = first;
    // second step gains the momentum carry-over: delta + 0.5 * old buffer
    const ParamVector second = opt.step(next, updates);
    const ParamVector delta2 = fedavg_aggregate(updates) - first;
    const ParamVector delta1 = fedavg_aggregate(updates) - state.global_params;
    for (int64_t i = 0; i < second.size(); ++i)
      CHECK(second[i] ==
            doctest::Approx(first[i] + delta2[i] + 0.5 * delta1[i]).epsilon(1e-12));
  }
}

TEST_CASE("select_clients is a deterministic uniform sample") {
  const auto all = select_clients(3, 7, 7, 99);
  CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5, 6});

  const auto some = select_clients(5, 20, 8, 99);
  CHECK(some.size() == 8);
  CHECK(std::is_sorted(some.begin(), some.end()));
  CHECK(std::adjacent_find(some.begin(), some.end()) == some.end());
  CHECK(select_clients(5, 20, 8, 99) == some);
  CHECK(select_clients(6, 20, 8, 99) != some);

  CHECK_THROWS_AS(select_clients(0, 5, 6, 1), ConfigError);
}

TEST_CASE("run_round without hooks reproduces plain fedavg bit-exactly") {
  Fixture fx;
  Engine engine(fx.model, fx.test_data, OptimizerSpec{});
  HookRegistry registry;

  auto [next, record] = engine.run_round(fx.state, fx.tasks, registry);

  // manual reference: train every client from the broadcast model, average
  std::vector<ClientUpdate> expected;
  for (const auto& task : fx.tasks) {
    auto trained = local_train(fx.model, fx.state.global_params, task.data,
                               task.train);
    REQUIRE(trained);
    expected.push_back(
        ClientUpdate{task.client_id, task.data.size(), std::move(*trained)});
  }
  CHECK(next.global_params == fedavg_aggregate(expected));
  CHECK(next.round_index == 1);
  REQUIRE(next.prev_global_params);
  CHECK(*next.prev_global_params == fx.state.global_params);
  CHECK(record.round == 0);
  CHECK(record.num_updates_aggregated == 4);
  CHECK(record.test_accuracy >= 0.0);
  CHECK(record.test_accuracy <= 1.0);
  CHECK_FALSE(record.attack_poisoned_ids);
  CHECK_FALSE(record.defense_selected_ids);
}

TEST_CASE("run_round is deterministic regardless of client scheduling") {
  Fixture fx;
  EngineOptions serial;
  serial.parallel_clients = false;
  Engine par(fx.model, fx.test_data, OptimizerSpec{});
  Engine seq(fx.model, fx.test_data, OptimizerSpec{}, serial);
  HookRegistry r1, r2;
  auto [a, ra] = par.run_round(fx.state, fx.tasks, r1);
  auto [b, rb] = seq.run_round(fx.state, fx.tasks, r2);
  CHECK(a.global_params == b.global_params);
  CHECK(ra.train_loss_mean == rb.train_loss_mean);
}

TEST_CASE("stage trace records the fixed hook order") {
  Fixture fx;
  EngineOptions opts;
  opts.trace_stages = true;

  SUBCASE("no hooks: train, aggregate, evaluate") {
    Engine engine(fx.model, fx.test_data, OptimizerSpec{}, opts);
    HookRegistry registry;
    engine.run_round(fx.state, fx.tasks, registry);
    CHECK(stage_names(engine.stage_trace()) ==
          std::vector<std::string>{"local-train", "local-train", "local-train",
                                   "local-train", "aggregate", "evaluate"});
  }

  SUBCASE("full pipeline with data poisoning and a three-stage defense") {
    Engine engine(fx.model, fx.test_data, OptimizerSpec{}, opts);
    HookRegistry registry;
    AttackSpec attack;
    attack.kind = AttackKind::label_flip;
    attack.flip_pairs = {{0, 1}};
    attack.malicious_ids = {1};
    registry.install_attacker(attack, 4, fx.state.master_seed);
    DefenseSpec defense;
    defense.kind = DefenseKind::crfl;
    defense.clip_tau = 100.0;
    defense.noise_sigma = 0.0;
    registry.install_defender(defense);

    engine.run_round(fx.state, fx.tasks, registry);
    CHECK(stage_names(engine.stage_trace()) ==
          std::vector<std::string>{"data-poison", "local-train", "local-train",
                                   "local-train", "local-train", "aggregate",
                                   "defense-after", "evaluate"});
  }

  SUBCASE("model poisoning and an on-aggregation defense") {
    Engine engine(fx.model, fx.test_data, OptimizerSpec{}, opts);
    HookRegistry registry;
    AttackSpec attack;
    attack.kind = AttackKind::byzantine;
    attack.byzantine_mode = ByzantineMode::zero;
    attack.malicious_ids = {0};
    registry.install_attacker(attack, 4, fx.state.master_seed);
    DefenseSpec defense;
    defense.kind = DefenseKind::coord_median;
    registry.install_defender(defense);

    engine.run_round(fx.state, fx.tasks, registry);
    CHECK(stage_names(engine.stage_trace()) ==
          std::vector<std::string>{"local-train", "local-train", "local-train",
                                   "local-train", "model-poison", "defense-on",
                                   "evaluate"});
  }

  SUBCASE("reconstruction fires at the end and a before-defense in the middle") {
    Engine engine(fx.model, fx.test_data, OptimizerSpec{}, opts);
    HookRegistry registry;
    AttackSpec attack;
    attack.kind = AttackKind::dlg;
    attack.dlg_iters = 3;
    registry.install_attacker(attack, 4, fx.state.master_seed);
    DefenseSpec defense;
    defense.kind = DefenseKind::krum;
    defense.byzantine_f = 1;
    registry.install_defender(defense);

    engine.run_round(fx.state, fx.tasks, registry);
    CHECK(stage_names(engine.stage_trace()) ==
          std::vector<std::string>{"local-train", "local-train", "local-train",
                                   "local-train", "defense-before", "aggregate",
                                   "reconstruct", "evaluate"});
  }
}

TEST_CASE("a data-poisoning attack is a no-op at the model stage") {
  Fixture fx;
  Engine plain(fx.model, fx.test_data, OptimizerSpec{});
  HookRegistry none;
  auto [base, _] = plain.run_round(fx.state, fx.tasks, none);

  // identity flip pairs: the data stage fires but rewrites nothing, and the
  // model stage must not touch the update list at all
  Engine engine(fx.model, fx.test_data, OptimizerSpec{});
  HookRegistry registry;
  AttackSpec attack;
  attack.kind = AttackKind::label_flip;
  attack.flip_pairs = {};
  attack.malicious_ids = {0, 1};
  registry.install_attacker(attack, 4, fx.state.master_seed);
  auto [poisoned, record] = engine.run_round(fx.state, fx.tasks, registry);

  CHECK(poisoned.global_params == base.global_params);
  REQUIRE(record.attack_poisoned_ids);
  CHECK(*record.attack_poisoned_ids == std::vector<int>{0, 1});
}

TEST_CASE("passive reconstruction never alters the training trajectory") {
  Fixture fx;
  Engine plain(fx.model, fx.test_data, OptimizerSpec{});
  HookRegistry none;
  RoundState clean = fx.state;
  RoundState spied = fx.state;
  for (int round = 0; round < 3; ++round)
    clean = plain.run_round(clean, fx.tasks, none).first;

  Engine engine(fx.model, fx.test_data, OptimizerSpec{});
  HookRegistry registry;
  AttackSpec attack;
  attack.kind = AttackKind::dlg;
  attack.dlg_iters = 5;
  registry.install_attacker(attack, 4, fx.state.master_seed);
  for (int round = 0; round < 3; ++round)
    spied = engine.run_round(spied, fx.tasks, registry).first;

  CHECK(clean.global_params == spied.global_params);
  CHECK(registry.attacker()->last_reconstruction());
}

TEST_CASE("hook registry enforces the one-attacker/one-defender rule") {
  HookRegistry registry;
  AttackSpec attack;
  attack.kind = AttackKind::byzantine;
  attack.malicious_ratio = 0.2;
  registry.install_attacker(attack, 10, 1);
  CHECK_THROWS_AS(registry.install_attacker(attack, 10, 1), ContractError);

  DefenseSpec defense;
  defense.kind = DefenseKind::coord_median;
  registry.install_defender(defense);
  CHECK_THROWS_AS(registry.install_defender(defense), ContractError);

  registry.clear();
  registry.install_attacker(attack, 10, 1);  // allowed again after clear
  CHECK(registry.has_attacker());
}

TEST_CASE("registry predicates are all false without hooks") {
  HookRegistry registry;
  CHECK_FALSE(registry.is_data_poisoning_attack());
  CHECK_FALSE(registry.is_model_poisoning_attack());
  CHECK_FALSE(registry.is_data_reconstruction_attack());
  CHECK_FALSE(registry.is_defense_before_aggregation());
  CHECK_FALSE(registry.is_defense_on_aggregation());
  CHECK_FALSE(registry.is_defense_after_aggregation());
}

TEST_CASE("engine errors name the failure") {
  Fixture fx;
  Engine engine(fx.model, fx.test_data, OptimizerSpec{});
  HookRegistry registry;

  SUBCASE("no clients") {
    CHECK_THROWS_AS(engine.run_round(fx.state, {}, registry), ContractError);
  }

  SUBCASE("every client skipped") {
    std::vector<ClientTask> empties = {
        ClientTask{0, Dataset{}, TrainConfig{1, 4, 0.1, 0}},
        ClientTask{1, Dataset{}, TrainConfig{1, 4, 0.1, 0}}};
    CHECK_THROWS_WITH_AS(engine.run_round(fx.state, empties, registry),
                         doctest::Contains("skipped"), ContractError);
  }
}
