#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "fedsim/client_update.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

enum class AttackKind { byzantine, label_flip, model_replacement, dlg };
enum class ByzantineMode { zero, random, flip };

// Attack class membership: data poisoning happens at clients, model
// poisoning on the submitted update list, reconstruction is passive.
bool attack_poisons_data(AttackKind kind);
bool attack_poisons_model(AttackKind kind);
bool attack_reconstructs_data(AttackKind kind);

struct AttackSpec {
  AttackKind kind = AttackKind::byzantine;

  // byzantine
  ByzantineMode byzantine_mode = ByzantineMode::random;
  double random_sigma = 1.0;

  // malicious-client selection (byzantine / label_flip / model_replacement)
  double malicious_ratio = 0.0;
  std::vector<int> malicious_ids;  // explicit list; overrides the ratio
  bool redraw_per_round = false;

  // label_flip: (source class -> target class) pairs. model_replacement also
  // accepts pairs as the backdoor objective used to synthesize the target.
  std::vector<std::pair<int, int>> flip_pairs;

  // model_replacement
  double scale_gamma = 0.0;  // 0 means auto: total samples / attacker samples
  std::optional<ParamVector> backdoor_target;

  // dlg
  int dlg_iters = 400;
  double dlg_lr = 0.1;

  /// Checks that exactly the fields of `kind`'s parameter group make sense;
  /// num_classes 0 skips label-range checks.
  void validate(int num_classes = 0) const;
};

/// Relabels every sample whose class matches a pair's source to the pair's
/// target. Features and sample order are untouched.
Dataset flip_labels(const Dataset& data,
                    const std::vector<std::pair<int, int>>& pairs);

/// Result of a gradient-matching reconstruction: recovered features, the
/// recovered label distribution and the final match loss. loss_history holds
/// the accepted (non-increasing) match-loss sequence.
struct Reconstruction {
  std::vector<double> features;
  std::vector<double> label_probs;
  double match_loss = 0.0;
  std::vector<double> loss_history;
};

/// Runs gradient-matching reconstruction against a target model gradient:
/// dummy features and label logits start from N(0,1) draws (or `init` when
/// given) and are optimized by plain gradient descent with backtracking step
/// halving, so the accepted match loss never increases. Throws ContractError
/// (naming the iteration) if the match loss turns non-finite.
Reconstruction dlg_reconstruct(
    const ModelSpec& model, const ParamVector& params,
    const ParamVector& target_gradient, int iters, double lr, RngStream& rng,
    std::optional<std::pair<std::vector<double>, std::vector<double>>> init =
        std::nullopt);

/// Singleton attack handle: one per run, installed through HookRegistry.
/// All operations are pure given (inputs, spec, seeded streams); none of
/// them mutates its inputs.
class Attacker {
 public:
  Attacker(AttackSpec spec, int num_total_clients, uint64_t master_seed);

  bool is_data_poisoning_attack() const;
  bool is_model_poisoning_attack() const;
  bool is_data_reconstruction_attack() const;

  const AttackSpec& spec() const { return spec_; }
  void set_backdoor_target(ParamVector target);

  /// Malicious set for a round: fixed at construction unless the spec asks
  /// for a per-round re-draw.
  std::vector<int> malicious_clients(int round_index) const;
  bool is_malicious(int client_id, int round_index) const;

  /// Label flipping: every label equal to a source class becomes its paired
  /// target class; features and size are untouched.
  Dataset poison_data(const Dataset& data) const;

  /// Model poisoning on the full update list; only malicious clients'
  /// updates are replaced, ids/counts/order preserved.
  std::vector<ClientUpdate> attack_model(const std::vector<ClientUpdate>& updates,
                                         const RoundState& aux) const;

  /// Reconstruction from an explicit gradient target.
  Reconstruction reconstruct_data(const ModelSpec& model,
                                  const ParamVector& params,
                                  const ParamVector& gradient_target,
                                  RngStream& rng) const;

  /// Reconstruction from a model pair, with the pseudo-gradient
  /// (prev - curr) / lr_times_steps as the (approximate) target.
  Reconstruction reconstruct_from_models(const ModelSpec& model,
                                         const ParamVector& prev_global,
                                         const ParamVector& curr_global,
                                         double lr_times_steps,
                                         RngStream& rng) const;

  const std::optional<Reconstruction>& last_reconstruction() const {
    return last_reconstruction_;
  }
  void store_reconstruction(Reconstruction r) {
    last_reconstruction_ = std::move(r);
  }

 private:
  AttackSpec spec_;
  int num_total_clients_ = 0;
  uint64_t master_seed_ = 0;
  std::vector<int> fixed_malicious_;
  std::optional<Reconstruction> last_reconstruction_;
};

}  // namespace fedsim
