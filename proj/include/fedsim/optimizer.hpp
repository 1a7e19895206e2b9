#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedsim/client_update.hpp"

namespace fedsim {

enum class OptimizerKind { fedavg, fedopt };
enum class ServerOpt { sgd, adam };

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::fedavg;
  // fedopt only: server-side optimizer applied to the pseudo-gradient.
  ServerOpt server_opt = ServerOpt::sgd;
  double server_lr = 1.0;
  double momentum = 0.0;  // sgd
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;  // adam

  void validate() const;
};

/// Sample-weighted coordinate-wise mean. Updates are reduced in ascending
/// client_id order so the result is bit-exact under input permutation.
ParamVector fedavg_aggregate(const std::vector<ClientUpdate>& updates);

/// Server aggregation with persistent cross-round state (momentum / Adam
/// moments). fedavg reduces to the weighted mean; fedopt forms the
/// pseudo-gradient fedavg(updates) - global and applies a server step to it.
class ServerOptimizer {
 public:
  explicit ServerOptimizer(OptimizerSpec spec);

  ParamVector step(const RoundState& state,
                   const std::vector<ClientUpdate>& updates);

  const OptimizerSpec& spec() const { return spec_; }

 private:
  OptimizerSpec spec_;
  std::optional<ParamVector> momentum_buf_;
  std::optional<ParamVector> adam_m_, adam_v_;
  int64_t adam_t_ = 0;
};

/// Uniform sample of num_per_round distinct client ids from [0, num_total),
/// returned in ascending order; deterministic per (seed, round_index).
std::vector<int> select_clients(int round_index, int num_total,
                                int num_per_round, uint64_t master_seed);

}  // namespace fedsim
