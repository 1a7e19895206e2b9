#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/client_update.hpp"

namespace fedsim {

enum class DefenseKind {
  krum,
  mkrum,
  foolsgold,
  norm_clip,
  robust_lr,
  slsgd,
  geo_median,
  weak_dp,
  cclip,
  coord_median,
  trimmed_mean,
  rfa,
  crfl
};

std::string defense_kind_name(DefenseKind kind);

// Stage occupancy. A kind not at a stage dispatches as a bit-exact identity
// there.
bool defense_at_before_stage(DefenseKind kind);
bool defense_at_on_stage(DefenseKind kind);
bool defense_at_after_stage(DefenseKind kind);

struct DefenseSpec {
  DefenseKind kind = DefenseKind::krum;

  int byzantine_f = 0;      // krum family
  int krum_m = 1;           // mkrum
  double clip_tau = 0.0;    // norm_clip, cclip, weak_dp, crfl
  double noise_sigma = 0.0; // weak_dp, crfl
  double trim_beta = 0.0;   // trimmed_mean, slsgd
  double slsgd_alpha = 1.0;
  int rlr_theta = 1;        // robust_lr
  double rlr_eta = 1.0;
  double weiszfeld_nu = 1e-6;  // geo_median, rfa
  int weiszfeld_iters = 100;
  double foolsgold_kappa = 1.0;

  /// Validates the parameter group of `kind`. n > 0 additionally checks the
  /// client-count constraints (krum: n - f - 2 >= 1; mkrum: n - m > 2f + 2).
  void validate(int n = 0) const;
};

/// Cross-round defender memory. Foolsgold accumulates each client's
/// update-delta history; other kinds are stateless.
struct DefenderState {
  std::map<int, ParamVector> foolsgold_history;
};

// --- kernels ---------------------------------------------------------------

/// Krum score per update: sum of squared distances to its n - f - 2 nearest
/// other models. Requires n - f - 2 >= 1.
std::vector<double> krum_scores(const std::vector<ClientUpdate>& updates, int f);

/// krum: singleton list holding the argmin-score update (ties to the lowest
/// client id). mkrum: the krum_m smallest-score updates in original order.
std::vector<ClientUpdate> krum_select(const std::vector<ClientUpdate>& updates,
                                      const DefenseSpec& spec);

/// Accumulates each client's delta from the global model into `state`, then
/// re-weights updates by pairwise history similarity (pardoning + logit,
/// weights clipped to [0, 1]): params become global + alpha_i * (w_i - global).
std::vector<ClientUpdate> foolsgold_reweight(
    const std::vector<ClientUpdate>& updates, DefenderState& state,
    const DefenseSpec& spec, const ParamVector& global);

/// Per-update delta clipping: d_i <- d_i * min(1, tau / ||d_i||).
std::vector<ClientUpdate> norm_clip(const std::vector<ClientUpdate>& updates,
                                    const DefenseSpec& spec,
                                    const ParamVector& global);

/// Unweighted per-coordinate median (even count: mean of the two middle).
ParamVector coord_median_aggregate(const std::vector<ClientUpdate>& updates);

/// Per coordinate, drops the floor(beta*n) smallest and largest values and
/// averages the rest (unweighted). Requires 2*floor(beta*n) < n.
ParamVector trimmed_mean_aggregate(const std::vector<ClientUpdate>& updates,
                                   double beta);

/// (1 - alpha) * prev_global + alpha * trimmed_mean(updates, beta).
ParamVector slsgd_aggregate(const std::vector<ClientUpdate>& updates,
                            const ParamVector& prev_global,
                            const DefenseSpec& spec);

/// Smoothed Weiszfeld iteration for the weighted geometric median: starting
/// from the weighted mean, theta <- sum(beta_i w_i) / sum(beta_i) with
/// beta_i = alpha_i / max(nu, ||theta - w_i||), for `iters` steps or until
/// the step norm drops below 1e-8.
ParamVector geometric_median(const std::vector<ParamVector>& points,
                             const std::vector<double>& weights, double nu,
                             int iters);

/// Geometric median of the update params weighted by sample counts.
ParamVector rfa_aggregate(const std::vector<ClientUpdate>& updates,
                          const DefenseSpec& spec);

/// Clip deltas to tau, fedavg, then add N(0, sigma^2) noise per coordinate.
ParamVector weak_dp_aggregate(const std::vector<ClientUpdate>& updates,
                              const DefenseSpec& spec,
                              const ParamVector& global, RngStream& rng);

/// Centered clipping around v = prev_global:
/// v + sum_i p_i (w_i - v) min(1, tau / ||w_i - v||).
ParamVector cclip_aggregate(const std::vector<ClientUpdate>& updates,
                            const ParamVector& prev_global,
                            const DefenseSpec& spec);

/// Sign-vote learning rate: coordinates where |sum_i sign(delta_ik)| >= theta
/// move along +eta * mean delta, all others along -eta * mean delta.
ParamVector robust_lr_aggregate(const std::vector<ClientUpdate>& updates,
                                const ParamVector& prev_global,
                                const DefenseSpec& spec);

/// Global-model clip to tau plus N(0, sigma^2) noise per coordinate.
ParamVector crfl_postprocess(const ParamVector& global, const DefenseSpec& spec,
                             RngStream& rng);

// --- dispatcher ------------------------------------------------------------

/// Singleton defense handle: one per run, installed through HookRegistry.
/// Dispatches the three stage hooks to the configured kind; a stage the kind
/// does not occupy is a bit-exact identity.
class Defender {
 public:
  explicit Defender(DefenseSpec spec);

  bool is_defense_before_aggregation() const;
  bool is_defense_on_aggregation() const;
  bool is_defense_after_aggregation() const;

  std::vector<ClientUpdate> defend_before_aggregation(
      const std::vector<ClientUpdate>& updates, const RoundState& aux);
  ParamVector defend_on_aggregation(const std::vector<ClientUpdate>& updates,
                                    const RoundState& aux);
  ParamVector defend_after_aggregation(const ParamVector& global,
                                       const RoundState& aux);

  const DefenseSpec& spec() const { return spec_; }
  DefenderState& state() { return state_; }
  const DefenderState& state() const { return state_; }
  void set_state(DefenderState state) { state_ = std::move(state); }

  /// Client ids kept by the last before-aggregation selection (krum family).
  const std::optional<std::vector<int>>& last_selected_ids() const {
    return last_selected_ids_;
  }

 private:
  DefenseSpec spec_;
  DefenderState state_;
  std::optional<std::vector<int>> last_selected_ids_;
};

}  // namespace fedsim
