#include "fedsim/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsim/errors.hpp"

namespace fedsim {

void OptimizerSpec::validate() const {
  if (kind == OptimizerKind::fedopt) {
    if (!(server_lr > 0.0) && server_lr != 0.0)
      throw ConfigError("optimizer: server_lr must be non-negative");
    if (momentum < 0.0 || momentum >= 1.0)
      throw ConfigError("optimizer: momentum must be in [0, 1)");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw ConfigError("optimizer: betas must be in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("optimizer: eps must be positive");
  }
}

ParamVector fedavg_aggregate(const std::vector<ClientUpdate>& updates) {
  if (updates.empty())
    throw ContractError("fedavg_aggregate: empty update list");

  std::vector<size_t> order(updates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return updates[a].client_id < updates[b].client_id;
  });

  int64_t total = 0;
  for (const auto& u : updates) {
    if (u.sample_count < 0)
      throw ContractError("fedavg_aggregate: negative sample count");
    total += u.sample_count;
  }
  if (total <= 0)
    throw ContractError("fedavg_aggregate: total sample weight is zero");

  ParamVector acc = ParamVector::zeros_like(updates[order[0]].params);
  for (size_t idx : order) {
    const auto& u = updates[idx];
    const double w =
        static_cast<double>(u.sample_count) / static_cast<double>(total);
    axpy(w, u.params, acc);
  }
  return acc;
}

ServerOptimizer::ServerOptimizer(OptimizerSpec spec) : spec_(spec) {
  spec_.validate();
}

ParamVector ServerOptimizer::step(const RoundState& state,
                                  const std::vector<ClientUpdate>& updates) {
  ParamVector avg = fedavg_aggregate(updates);
  if (spec_.kind == OptimizerKind::fedavg) return avg;

  if (state.global_params.empty())
    throw ContractError("fedopt: missing global model");
  const ParamVector delta = avg - state.global_params;

  if (spec_.server_opt == ServerOpt::sgd) {
    if (!momentum_buf_)
      momentum_buf_ = ParamVector::zeros_like(delta);
    for (int64_t i = 0; i < delta.size(); ++i)
      (*momentum_buf_)[i] = spec_.momentum * (*momentum_buf_)[i] + delta[i];
    ParamVector out = state.global_params;
    axpy(spec_.server_lr, *momentum_buf_, out);
    return out;
  }

  // Adam on the pseudo-gradient.
  if (!adam_m_) {
    adam_m_ = ParamVector::zeros_like(delta);
    adam_v_ = ParamVector::zeros_like(delta);
  }
  ++adam_t_;
  const double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(adam_t_));
  const double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(adam_t_));
  ParamVector out = state.global_params;
  for (int64_t i = 0; i < delta.size(); ++i) {
    (*adam_m_)[i] = spec_.beta1 * (*adam_m_)[i] + (1.0 - spec_.beta1) * delta[i];
    (*adam_v_)[i] =
        spec_.beta2 * (*adam_v_)[i] + (1.0 - spec_.beta2) * delta[i] * delta[i];
    const double mhat = (*adam_m_)[i] / bc1;
    const double vhat = (*adam_v_)[i] / bc2;
    out[i] += spec_.server_lr * mhat / (std::sqrt(vhat) + spec_.eps);
  }
  return out;
}

std::vector<int> select_clients(int round_index, int num_total,
                                int num_per_round, uint64_t master_seed) {
  if (num_total <= 0)
    throw ConfigError("select_clients: num_total must be positive");
  if (num_per_round <= 0 || num_per_round > num_total)
    throw ConfigError("select_clients: num_per_round must be in [1, num_total]");

  std::vector<int> ids(static_cast<size_t>(num_total));
  std::iota(ids.begin(), ids.end(), 0);
  RngStream rng(derive_seed(master_seed, "client-select",
                            static_cast<uint64_t>(round_index)));
  for (int i = 0; i < num_per_round; ++i) {
    const int64_t j = i + rng.uniform_int(num_total - i);
    std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
  }
  ids.resize(static_cast<size_t>(num_per_round));
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace fedsim
