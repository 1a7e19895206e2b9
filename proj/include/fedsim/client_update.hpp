#pragma once

#include <cstdint>
#include <optional>

#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

/// One client's submission for a round: who, how many samples they trained
/// on, and the resulting local model.
struct ClientUpdate {
  int client_id = 0;
  int64_t sample_count = 0;
  ParamVector params;
};

/// Server-side round context threaded through attack/defense hooks as
/// auxiliary information. global_params is the model broadcast this round;
/// prev_global_params is absent at round 0.
struct RoundState {
  int round_index = 0;
  ParamVector global_params;
  std::optional<ParamVector> prev_global_params;
  uint64_t master_seed = 0;

  /// Named substream scoped to this round: independent of every other
  /// (purpose, round, key) stream.
  RngStream stream(std::string_view purpose, uint64_t key = 0) const {
    return RngStream(derive_seed(master_seed, purpose,
                                 static_cast<uint64_t>(round_index), key));
  }
};

}  // namespace fedsim
