#include "fedsim/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "fedsim/errors.hpp"

namespace fedsim {

bool attack_poisons_data(AttackKind kind) {
  return kind == AttackKind::label_flip;
}

bool attack_poisons_model(AttackKind kind) {
  return kind == AttackKind::byzantine || kind == AttackKind::model_replacement;
}

bool attack_reconstructs_data(AttackKind kind) {
  return kind == AttackKind::dlg;
}

void AttackSpec::validate(int num_classes) const {
  if (malicious_ratio < 0.0 || malicious_ratio > 1.0)
    throw ConfigError("attack: malicious_ratio must be in [0, 1]");
  for (int id : malicious_ids)
    if (id < 0) throw ConfigError("attack: malicious client ids must be >= 0");

  switch (kind) {
    case AttackKind::byzantine:
      if (!(random_sigma > 0.0))
        throw ConfigError("attack: random_sigma must be positive");
      if (!flip_pairs.empty())
        throw ConfigError("attack: flip_pairs is not a byzantine parameter");
      break;
    case AttackKind::label_flip:
    case AttackKind::model_replacement:
      for (const auto& [src, dst] : flip_pairs) {
        if (src == dst)
          throw ConfigError("attack: flip pair must have distinct classes");
        if (src < 0 || dst < 0)
          throw ConfigError("attack: flip pair classes must be >= 0");
        if (num_classes > 0 && (src >= num_classes || dst >= num_classes))
          throw ConfigError("attack: flip pair class " +
                            std::to_string(std::max(src, dst)) +
                            " outside [0, " + std::to_string(num_classes) + ")");
      }
      if (kind == AttackKind::model_replacement && scale_gamma < 0.0)
        throw ConfigError("attack: scale_gamma must be positive (or 0 for auto)");
      break;
    case AttackKind::dlg:
      if (dlg_iters <= 0) throw ConfigError("attack: dlg_iters must be positive");
      if (!(dlg_lr > 0.0)) throw ConfigError("attack: dlg_lr must be positive");
      break;
  }
}

namespace {

// Match loss: squared L2 distance between the dummy-sample gradient and the
// target gradient.
double match_loss_at(const ModelSpec& model, const ParamVector& params,
                     const ParamVector& target,
                     const std::vector<double>& features,
                     const std::vector<double>& logits) {
  std::vector<double> probs(logits.size());
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - zmax);
    s += probs[k];
  }
  for (double& p : probs) p /= s;
  const LossGrad lg = forward_loss_grad_soft(model, params, features, probs);
  return squared_distance(lg.grad, target);
}

}  // namespace

Reconstruction dlg_reconstruct(
    const ModelSpec& model, const ParamVector& params,
    const ParamVector& target_gradient, int iters, double lr, RngStream& rng,
    std::optional<std::pair<std::vector<double>, std::vector<double>>> init) {
  model.validate();
  check_same_layout(params, target_gradient, "dlg_reconstruct");

  const size_t d = static_cast<size_t>(model.input_dim);
  const size_t c = static_cast<size_t>(model.num_classes);
  std::vector<double> x(d), u(c);
  if (init) {
    if (init->first.size() != d || init->second.size() != c)
      throw ContractError("dlg_reconstruct: init size mismatch");
    x = init->first;
    u = init->second;
  } else {
    for (double& v : x) v = rng.normal();
    for (double& v : u) v = rng.normal();
  }

  auto objective = [&](const std::vector<double>& xs,
                       const std::vector<double>& us) {
    return match_loss_at(model, params, target_gradient, xs, us);
  };

  double cur = objective(x, u);
  if (!std::isfinite(cur))
    throw ContractError("dlg_reconstruct: non-finite match loss at iteration 0");

  Reconstruction out;
  out.loss_history.push_back(cur);

  // Descent direction from central finite differences on the match loss; the
  // dummy problem is tiny so the extra evaluations are cheap.
  std::vector<double> gx(d), gu(c);
  auto fd_gradient = [&]() {
    const double h = 1e-4;
    for (size_t j = 0; j < d; ++j) {
      const double keep = x[j];
      x[j] = keep + h;
      const double fp = objective(x, u);
      x[j] = keep - h;
      const double fm = objective(x, u);
      x[j] = keep;
      gx[j] = (fp - fm) / (2.0 * h);
    }
    for (size_t k = 0; k < c; ++k) {
      const double keep = u[k];
      u[k] = keep + h;
      const double fp = objective(x, u);
      u[k] = keep - h;
      const double fm = objective(x, u);
      u[k] = keep;
      gu[k] = (fp - fm) / (2.0 * h);
    }
  };

  double step = lr;
  for (int it = 0; it < iters && cur > 0.0; ++it) {
    fd_gradient();
    bool accepted = false;
    bool backtracked = false;
    while (step > 1e-18) {
      std::vector<double> xt = x, ut = u;
      for (size_t j = 0; j < d; ++j) xt[j] -= step * gx[j];
      for (size_t k = 0; k < c; ++k) ut[k] -= step * gu[k];
      const double trial = objective(xt, ut);
      if (std::isfinite(trial) && trial <= cur) {
        x = std::move(xt);
        u = std::move(ut);
        cur = trial;
        accepted = true;
        break;
      }
      step *= 0.5;  // backtracking: halve on any increase
      backtracked = true;
    }
    if (!accepted) break;
    if (!std::isfinite(cur))
      throw ContractError("dlg_reconstruct: non-finite match loss at iteration " +
                          std::to_string(it + 1));
    out.loss_history.push_back(cur);
    if (!backtracked) step *= 1.5;  // clean step: probe a larger one next
  }

  out.features = std::move(x);
  out.label_probs.resize(c);
  const double zmax = *std::max_element(u.begin(), u.end());
  double s = 0.0;
  for (size_t k = 0; k < c; ++k) {
    out.label_probs[k] = std::exp(u[k] - zmax);
    s += out.label_probs[k];
  }
  for (double& p : out.label_probs) p /= s;
  out.match_loss = cur;
  return out;
}

Attacker::Attacker(AttackSpec spec, int num_total_clients, uint64_t master_seed)
    : spec_(std::move(spec)),
      num_total_clients_(num_total_clients),
      master_seed_(master_seed) {
  if (num_total_clients_ <= 0)
    throw ConfigError("Attacker: num_total_clients must be positive");
  spec_.validate();
  for (int id : spec_.malicious_ids)
    if (id >= num_total_clients_)
      throw ConfigError("attack: malicious client id " + std::to_string(id) +
                        " outside [0, " + std::to_string(num_total_clients_) +
                        ")");

  if (!spec_.malicious_ids.empty()) {
    fixed_malicious_ = spec_.malicious_ids;
    std::sort(fixed_malicious_.begin(), fixed_malicious_.end());
  } else if (!spec_.redraw_per_round) {
    RngStream rng(derive_seed(master_seed_, "malicious-select"));
    fixed_malicious_ = [&] {
      int count = static_cast<int>(spec_.malicious_ratio * num_total_clients_);
      if (spec_.malicious_ratio > 0.0 && count == 0) count = 1;
      std::vector<int> ids(static_cast<size_t>(num_total_clients_));
      std::iota(ids.begin(), ids.end(), 0);
      for (int i = 0; i < count; ++i) {
        const int64_t j = i + rng.uniform_int(num_total_clients_ - i);
        std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
      }
      ids.resize(static_cast<size_t>(count));
      std::sort(ids.begin(), ids.end());
      return ids;
    }();
  }
}

bool Attacker::is_data_poisoning_attack() const {
  return attack_poisons_data(spec_.kind);
}
bool Attacker::is_model_poisoning_attack() const {
  return attack_poisons_model(spec_.kind);
}
bool Attacker::is_data_reconstruction_attack() const {
  return attack_reconstructs_data(spec_.kind);
}

void Attacker::set_backdoor_target(ParamVector target) {
  spec_.backdoor_target = std::move(target);
}

std::vector<int> Attacker::malicious_clients(int round_index) const {
  if (!spec_.malicious_ids.empty() || !spec_.redraw_per_round)
    return fixed_malicious_;
  RngStream rng(derive_seed(master_seed_, "malicious-select",
                            static_cast<uint64_t>(round_index)));
  int count = static_cast<int>(spec_.malicious_ratio * num_total_clients_);
  if (spec_.malicious_ratio > 0.0 && count == 0) count = 1;
  std::vector<int> ids(static_cast<size_t>(num_total_clients_));
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < count; ++i) {
    const int64_t j = i + rng.uniform_int(num_total_clients_ - i);
    std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
  }
  ids.resize(static_cast<size_t>(count));
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool Attacker::is_malicious(int client_id, int round_index) const {
  const auto ids = malicious_clients(round_index);
  return std::binary_search(ids.begin(), ids.end(), client_id);
}

Dataset flip_labels(const Dataset& data,
                    const std::vector<std::pair<int, int>>& pairs) {
  for (const auto& [src, dst] : pairs) {
    if (src < 0 || dst < 0 || src >= data.num_classes() ||
        dst >= data.num_classes())
      throw ConfigError("flip_labels: flip class outside the dataset's range");
  }
  std::vector<int> labels = data.labels();
  for (int& y : labels) {
    for (const auto& [src, dst] : pairs) {
      if (y == src) {
        y = dst;
        break;
      }
    }
  }
  return data.with_labels(std::move(labels));
}

Dataset Attacker::poison_data(const Dataset& data) const {
  if (!is_data_poisoning_attack())
    throw ContractError("poison_data: attack kind does not poison data");
  return flip_labels(data, spec_.flip_pairs);
}

std::vector<ClientUpdate> Attacker::attack_model(
    const std::vector<ClientUpdate>& updates, const RoundState& aux) const {
  if (!is_model_poisoning_attack())
    throw ContractError("attack_model: attack kind does not poison models");
  if (updates.empty())
    throw ContractError("attack_model: empty update list");

  const auto malicious = malicious_clients(aux.round_index);
  auto is_mal = [&](int id) {
    return std::binary_search(malicious.begin(), malicious.end(), id);
  };

  int64_t total_samples = 0, malicious_samples = 0;
  for (const auto& u : updates) {
    total_samples += u.sample_count;
    if (is_mal(u.client_id)) malicious_samples += u.sample_count;
  }

  std::vector<ClientUpdate> out = updates;
  for (auto& u : out) {
    if (!is_mal(u.client_id)) continue;
    switch (spec_.kind) {
      case AttackKind::byzantine:
        switch (spec_.byzantine_mode) {
          case ByzantineMode::zero:
            u.params = ParamVector::zeros_like(u.params);
            break;
          case ByzantineMode::random: {
            RngStream rng(derive_seed(master_seed_, "byzantine-random",
                                      static_cast<uint64_t>(aux.round_index),
                                      static_cast<uint64_t>(u.client_id)));
            ParamVector p = ParamVector::zeros_like(u.params);
            for (double& v : p.values())
              v = rng.normal(0.0, spec_.random_sigma);
            u.params = std::move(p);
            break;
          }
          case ByzantineMode::flip: {
            if (aux.global_params.empty())
              throw ContractError(
                  "attack_model: flip mode needs a global model");
            check_same_layout(aux.global_params, u.params, "attack_model flip");
            // w' = w_g + (w_g - w_l)
            ParamVector p = aux.global_params;
            for (int64_t i = 0; i < p.size(); ++i)
              p[i] += aux.global_params[i] - u.params[i];
            u.params = std::move(p);
            break;
          }
        }
        break;
      case AttackKind::model_replacement: {
        if (!spec_.backdoor_target)
          throw ContractError(
              "attack_model: model_replacement needs a backdoor target");
        if (aux.global_params.empty())
          throw ContractError(
              "attack_model: model_replacement needs a global model");
        double gamma = spec_.scale_gamma;
        if (gamma <= 0.0) {
          gamma = malicious_samples > 0
                      ? static_cast<double>(total_samples) /
                            static_cast<double>(malicious_samples)
                      : 1.0;
        }
        // w' = w_g + gamma * (w_backdoor - w_g)
        ParamVector p = aux.global_params;
        axpy(gamma, *spec_.backdoor_target - aux.global_params, p);
        u.params = std::move(p);
        break;
      }
      default:
        break;
    }
  }
  return out;
}

Reconstruction Attacker::reconstruct_data(const ModelSpec& model,
                                          const ParamVector& params,
                                          const ParamVector& gradient_target,
                                          RngStream& rng) const {
  if (!is_data_reconstruction_attack())
    throw ContractError("reconstruct_data: attack kind is not a reconstruction");
  return dlg_reconstruct(model, params, gradient_target, spec_.dlg_iters,
                         spec_.dlg_lr, rng);
}

Reconstruction Attacker::reconstruct_from_models(const ModelSpec& model,
                                                 const ParamVector& prev_global,
                                                 const ParamVector& curr_global,
                                                 double lr_times_steps,
                                                 RngStream& rng) const {
  check_same_layout(prev_global, curr_global, "reconstruct_from_models");
  if (!(lr_times_steps > 0.0))
    throw ContractError("reconstruct_from_models: lr_times_steps must be > 0");
  // One-step approximation of the training gradient from the model delta.
  ParamVector target = prev_global;
  for (int64_t i = 0; i < target.size(); ++i)
    target[i] = (prev_global[i] - curr_global[i]) / lr_times_steps;
  return reconstruct_data(model, prev_global, target, rng);
}

}  // namespace fedsim
