#include "fedsim/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsim/errors.hpp"
#include "fedsim/optimizer.hpp"

namespace fedsim {

std::string defense_kind_name(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::krum: return "krum";
    case DefenseKind::mkrum: return "mkrum";
    case DefenseKind::foolsgold: return "foolsgold";
    case DefenseKind::norm_clip: return "norm_clip";
    case DefenseKind::robust_lr: return "robust_lr";
    case DefenseKind::slsgd: return "slsgd";
    case DefenseKind::geo_median: return "geo_median";
    case DefenseKind::weak_dp: return "weak_dp";
    case DefenseKind::cclip: return "cclip";
    case DefenseKind::coord_median: return "coord_median";
    case DefenseKind::trimmed_mean: return "trimmed_mean";
    case DefenseKind::rfa: return "rfa";
    case DefenseKind::crfl: return "crfl";
  }
  return "?";
}

bool defense_at_before_stage(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::krum:
    case DefenseKind::mkrum:
    case DefenseKind::foolsgold:
    case DefenseKind::norm_clip:
      return true;
    default:
      return false;
  }
}

bool defense_at_on_stage(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::robust_lr:
    case DefenseKind::slsgd:
    case DefenseKind::geo_median:
    case DefenseKind::weak_dp:
    case DefenseKind::cclip:
    case DefenseKind::coord_median:
    case DefenseKind::trimmed_mean:
    case DefenseKind::rfa:
      return true;
    default:
      return false;
  }
}

bool defense_at_after_stage(DefenseKind kind) {
  return kind == DefenseKind::crfl;
}

void DefenseSpec::validate(int n) const {
  switch (kind) {
    case DefenseKind::krum:
      if (byzantine_f < 0)
        throw ConfigError("defense: byzantine_f must be >= 0");
      if (n > 0 && n - byzantine_f - 2 < 1)
        throw ConfigError("defense: krum requires n - f - 2 >= 1 (n=" +
                          std::to_string(n) +
                          ", f=" + std::to_string(byzantine_f) + ")");
      break;
    case DefenseKind::mkrum:
      if (byzantine_f < 0)
        throw ConfigError("defense: byzantine_f must be >= 0");
      if (krum_m < 1) throw ConfigError("defense: krum_m must be >= 1");
      if (n > 0) {
        if (n - byzantine_f - 2 < 1)
          throw ConfigError("defense: mkrum requires n - f - 2 >= 1 (n=" +
                            std::to_string(n) +
                            ", f=" + std::to_string(byzantine_f) + ")");
        if (!(n - krum_m > 2 * byzantine_f + 2))
          throw ConfigError(
              "defense: mkrum requires n - m > 2f + 2 (n=" + std::to_string(n) +
              ", m=" + std::to_string(krum_m) +
              ", f=" + std::to_string(byzantine_f) + ")");
      }
      break;
    case DefenseKind::foolsgold:
      if (!(foolsgold_kappa > 0.0))
        throw ConfigError("defense: foolsgold_kappa must be positive");
      break;
    case DefenseKind::norm_clip:
    case DefenseKind::cclip:
      if (!(clip_tau > 0.0))
        throw ConfigError("defense: clip_tau must be positive");
      break;
    case DefenseKind::weak_dp:
    case DefenseKind::crfl:
      if (!(clip_tau > 0.0))
        throw ConfigError("defense: clip_tau must be positive");
      if (noise_sigma < 0.0)
        throw ConfigError("defense: noise_sigma must be >= 0");
      break;
    case DefenseKind::trimmed_mean:
      if (trim_beta < 0.0 || trim_beta >= 0.5)
        throw ConfigError("defense: trim_beta must be in [0, 0.5)");
      break;
    case DefenseKind::slsgd:
      if (trim_beta < 0.0 || trim_beta >= 0.5)
        throw ConfigError("defense: trim_beta must be in [0, 0.5)");
      if (!(slsgd_alpha > 0.0) || slsgd_alpha > 1.0)
        throw ConfigError("defense: slsgd_alpha must be in (0, 1]");
      break;
    case DefenseKind::robust_lr:
      if (rlr_theta < 1) throw ConfigError("defense: rlr_theta must be >= 1");
      if (!(rlr_eta > 0.0))
        throw ConfigError("defense: rlr_eta must be positive");
      break;
    case DefenseKind::geo_median:
    case DefenseKind::rfa:
      if (!(weiszfeld_nu > 0.0))
        throw ConfigError("defense: weiszfeld_nu must be positive");
      if (weiszfeld_iters < 1)
        throw ConfigError("defense: weiszfeld_iters must be >= 1");
      break;
    case DefenseKind::coord_median:
      break;
  }
}

namespace {

void check_consistent(const std::vector<ClientUpdate>& updates,
                      std::string_view what) {
  if (updates.empty())
    throw ContractError(std::string(what) + ": empty update list");
  for (const auto& u : updates)
    check_same_layout(u.params, updates.front().params, what);
}

// Indices sorted by client id; the fixed reduction order that makes
// aggregation bit-exact under permutation.
std::vector<size_t> id_order(const std::vector<ClientUpdate>& updates) {
  std::vector<size_t> order(updates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return updates[a].client_id < updates[b].client_id;
  });
  return order;
}

std::vector<double> normalized_sample_weights(
    const std::vector<ClientUpdate>& updates) {
  double total = 0.0;
  for (const auto& u : updates) total += static_cast<double>(u.sample_count);
  std::vector<double> w(updates.size());
  for (size_t i = 0; i < updates.size(); ++i) {
    w[i] = total > 0.0
               ? static_cast<double>(updates[i].sample_count) / total
               : 1.0 / static_cast<double>(updates.size());
  }
  return w;
}

}  // namespace

std::vector<double> krum_scores(const std::vector<ClientUpdate>& updates,
                                int f) {
  check_consistent(updates, "krum_scores");
  const int n = static_cast<int>(updates.size());
  const int k = n - f - 2;  // neighborhood size
  if (f < 0) throw ConfigError("krum_scores: f must be >= 0");
  if (k < 1)
    throw ConfigError("krum_scores: requires n - f - 2 >= 1 (n=" +
                      std::to_string(n) + ", f=" + std::to_string(f) + ")");

  std::vector<double> dist2(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d =
          squared_distance(updates[static_cast<size_t>(i)].params,
                           updates[static_cast<size_t>(j)].params);
      dist2[static_cast<size_t>(i) * n + j] = d;
      dist2[static_cast<size_t>(j) * n + i] = d;
    }
  }

  std::vector<double> scores(static_cast<size_t>(n));
  std::vector<double> row;
  for (int i = 0; i < n; ++i) {
    row.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) row.push_back(dist2[static_cast<size_t>(i) * n + j]);
    std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
    double s = 0.0;
    for (int t = 0; t < k; ++t) s += row[static_cast<size_t>(t)];
    // nth_element leaves the k smallest in the first k slots
    scores[static_cast<size_t>(i)] = s;
  }
  return scores;
}

std::vector<ClientUpdate> krum_select(const std::vector<ClientUpdate>& updates,
                                      const DefenseSpec& spec) {
  const auto scores = krum_scores(updates, spec.byzantine_f);
  const int n = static_cast<int>(updates.size());

  if (spec.kind == DefenseKind::krum) {
    int best = 0;
    for (int i = 1; i < n; ++i) {
      const auto& u = updates[static_cast<size_t>(i)];
      const auto& b = updates[static_cast<size_t>(best)];
      const double si = scores[static_cast<size_t>(i)];
      const double sb = scores[static_cast<size_t>(best)];
      if (si < sb || (si == sb && u.client_id < b.client_id)) best = i;
    }
    return {updates[static_cast<size_t>(best)]};
  }

  if (spec.kind != DefenseKind::mkrum)
    throw ContractError("krum_select: spec kind is not krum/mkrum");
  if (spec.krum_m < 1 || spec.krum_m > n)
    throw ConfigError("krum_select: krum_m must be in [1, n]");

  // Rank by (score, client_id), keep the m best, return in original order.
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double sa = scores[static_cast<size_t>(a)];
    const double sb = scores[static_cast<size_t>(b)];
    if (sa != sb) return sa < sb;
    return updates[static_cast<size_t>(a)].client_id <
           updates[static_cast<size_t>(b)].client_id;
  });
  std::vector<bool> keep(static_cast<size_t>(n), false);
  for (int t = 0; t < spec.krum_m; ++t)
    keep[static_cast<size_t>(idx[static_cast<size_t>(t)])] = true;

  std::vector<ClientUpdate> out;
  out.reserve(static_cast<size_t>(spec.krum_m));
  for (int i = 0; i < n; ++i)
    if (keep[static_cast<size_t>(i)]) out.push_back(updates[static_cast<size_t>(i)]);
  return out;
}

std::vector<ClientUpdate> foolsgold_reweight(
    const std::vector<ClientUpdate>& updates, DefenderState& state,
    const DefenseSpec& spec, const ParamVector& global) {
  check_consistent(updates, "foolsgold_reweight");
  const size_t n = updates.size();

  // Accumulate this round's deltas into the per-client histories.
  for (const auto& u : updates) {
    check_same_layout(u.params, global, "foolsgold_reweight");
    auto it = state.foolsgold_history.find(u.client_id);
    if (it == state.foolsgold_history.end()) {
      state.foolsgold_history.emplace(u.client_id, u.params - global);
    } else {
      check_same_layout(it->second, global, "foolsgold_reweight history");
      axpy(1.0, u.params - global, it->second);
    }
  }

  std::vector<const ParamVector*> hist(n);
  std::vector<double> norms(n);
  for (size_t i = 0; i < n; ++i) {
    hist[i] = &state.foolsgold_history.at(updates[i].client_id);
    norms[i] = l2_norm(*hist[i]);
  }

  // Pairwise cosine similarity of histories; zero-norm histories (new or
  // never-moving clients) get similarity 0 and end up honest.
  std::vector<double> cs(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      double v = 0.0;
      if (norms[i] > 0.0 && norms[j] > 0.0)
        v = dot(*hist[i], *hist[j]) / (norms[i] * norms[j]);
      cs[i * n + j] = v;
      cs[j * n + i] = v;
    }
  }

  auto row_max = [&](size_t i) {
    double m = 0.0;
    bool first = true;
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (first || cs[i * n + j] > m) m = cs[i * n + j];
      first = false;
    }
    return first ? 0.0 : m;  // lone client: no peers, similarity 0
  };

  std::vector<double> vmax(n);
  for (size_t i = 0; i < n; ++i) vmax[i] = row_max(i);

  // Pardoning: scale cs_ij down by v_i/v_j when client j looks more sybil
  // than client i.
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (vmax[j] > vmax[i] && vmax[j] != 0.0)
        cs[i * n + j] *= vmax[i] / vmax[j];
    }
  }

  std::vector<double> alpha(n);
  for (size_t i = 0; i < n; ++i) {
    alpha[i] = 1.0 - row_max(i);
    alpha[i] = std::clamp(alpha[i], 0.0, 1.0);
  }
  const double amax = *std::max_element(alpha.begin(), alpha.end());
  if (amax > 0.0)
    for (double& a : alpha) a /= amax;

  // Logit sharpening, clamped to [0, 1].
  for (double& a : alpha) {
    if (a >= 1.0) {
      a = 1.0;
    } else if (a <= 0.0) {
      a = 0.0;
    } else {
      a = std::clamp(spec.foolsgold_kappa * (std::log(a / (1.0 - a)) + 0.5),
                     0.0, 1.0);
    }
  }

  std::vector<ClientUpdate> out = updates;
  for (size_t i = 0; i < n; ++i) {
    ParamVector p = global;
    axpy(alpha[i], updates[i].params - global, p);
    out[i].params = std::move(p);
  }
  return out;
}

std::vector<ClientUpdate> norm_clip(const std::vector<ClientUpdate>& updates,
                                    const DefenseSpec& spec,
                                    const ParamVector& global) {
  check_consistent(updates, "norm_clip");
  if (!(spec.clip_tau > 0.0))
    throw ConfigError("norm_clip: clip_tau must be positive");

  std::vector<ClientUpdate> out = updates;
  for (auto& u : out) {
    check_same_layout(u.params, global, "norm_clip");
    ParamVector delta = u.params - global;
    const double norm = l2_norm(delta);
    if (norm > spec.clip_tau) {
      ParamVector p = global;
      axpy(spec.clip_tau / norm, delta, p);
      u.params = std::move(p);
    }
  }
  return out;
}

ParamVector coord_median_aggregate(const std::vector<ClientUpdate>& updates) {
  check_consistent(updates, "coord_median_aggregate");
  const size_t n = updates.size();
  const auto order = id_order(updates);

  ParamVector out = ParamVector::zeros_like(updates.front().params);
  std::vector<double> column(n);
  for (int64_t c = 0; c < out.size(); ++c) {
    for (size_t i = 0; i < n; ++i) column[i] = updates[order[i]].params[c];
    std::sort(column.begin(), column.end());
    out[c] = (n % 2 == 1) ? column[n / 2]
                          : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  return out;
}

ParamVector trimmed_mean_aggregate(const std::vector<ClientUpdate>& updates,
                                   double beta) {
  check_consistent(updates, "trimmed_mean_aggregate");
  if (beta < 0.0 || beta >= 0.5)
    throw ConfigError("trimmed_mean_aggregate: beta must be in [0, 0.5)");
  const size_t n = updates.size();
  const size_t k = static_cast<size_t>(beta * static_cast<double>(n) + 1e-9);
  if (2 * k >= n)
    throw ConfigError(
        "trimmed_mean_aggregate: trim count too large (2*floor(beta*n) >= n)");
  const auto order = id_order(updates);

  ParamVector out = ParamVector::zeros_like(updates.front().params);
  std::vector<double> column(n);
  for (int64_t c = 0; c < out.size(); ++c) {
    for (size_t i = 0; i < n; ++i) column[i] = updates[order[i]].params[c];
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (size_t i = k; i < n - k; ++i) s += column[i];
    out[c] = s / static_cast<double>(n - 2 * k);
  }
  return out;
}

ParamVector slsgd_aggregate(const std::vector<ClientUpdate>& updates,
                            const ParamVector& prev_global,
                            const DefenseSpec& spec) {
  if (!(spec.slsgd_alpha > 0.0) || spec.slsgd_alpha > 1.0)
    throw ConfigError("slsgd_aggregate: slsgd_alpha must be in (0, 1]");
  ParamVector trimmed = trimmed_mean_aggregate(updates, spec.trim_beta);
  check_same_layout(trimmed, prev_global, "slsgd_aggregate");
  ParamVector out = (1.0 - spec.slsgd_alpha) * prev_global;
  axpy(spec.slsgd_alpha, trimmed, out);
  return out;
}

ParamVector geometric_median(const std::vector<ParamVector>& points,
                             const std::vector<double>& weights, double nu,
                             int iters) {
  if (points.empty())
    throw ContractError("geometric_median: empty point list");
  if (weights.size() != points.size())
    throw ContractError("geometric_median: weight count mismatch");
  for (double w : weights)
    if (!(w > 0.0))
      throw ContractError("geometric_median: weights must be positive");
  for (const auto& p : points)
    check_same_layout(p, points.front(), "geometric_median");
  if (!(nu > 0.0))
    throw ConfigError("geometric_median: nu must be positive");
  if (iters < 1)
    throw ConfigError("geometric_median: iters must be >= 1");

  double wsum = 0.0;
  for (double w : weights) wsum += w;

  // Start at the weighted mean.
  ParamVector theta = ParamVector::zeros_like(points.front());
  for (size_t i = 0; i < points.size(); ++i)
    axpy(weights[i] / wsum, points[i], theta);
  if (points.size() == 1) return theta;

  for (int it = 0; it < iters; ++it) {
    double bsum = 0.0;
    ParamVector next = ParamVector::zeros_like(theta);
    std::vector<double> beta(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
      const double dist = std::sqrt(squared_distance(theta, points[i]));
      beta[i] = weights[i] / std::max(nu, dist);
      bsum += beta[i];
    }
    for (size_t i = 0; i < points.size(); ++i)
      axpy(beta[i] / bsum, points[i], next);

    const double move = std::sqrt(squared_distance(theta, next));
    theta = std::move(next);
    if (move < 1e-8) break;
  }
  return theta;
}

ParamVector rfa_aggregate(const std::vector<ClientUpdate>& updates,
                          const DefenseSpec& spec) {
  check_consistent(updates, "rfa_aggregate");
  const auto order = id_order(updates);
  std::vector<ParamVector> points;
  std::vector<double> weights;
  points.reserve(updates.size());
  for (size_t i : order) {
    points.push_back(updates[i].params);
    weights.push_back(updates[i].sample_count > 0
                          ? static_cast<double>(updates[i].sample_count)
                          : 1.0);
  }
  return geometric_median(points, weights, spec.weiszfeld_nu,
                          spec.weiszfeld_iters);
}

ParamVector weak_dp_aggregate(const std::vector<ClientUpdate>& updates,
                              const DefenseSpec& spec,
                              const ParamVector& global, RngStream& rng) {
  ParamVector out = fedavg_aggregate(norm_clip(updates, spec, global));
  if (spec.noise_sigma > 0.0) {
    for (double& v : out.values()) v += rng.normal(0.0, spec.noise_sigma);
  }
  return out;
}

ParamVector cclip_aggregate(const std::vector<ClientUpdate>& updates,
                            const ParamVector& prev_global,
                            const DefenseSpec& spec) {
  check_consistent(updates, "cclip_aggregate");
  if (!(spec.clip_tau > 0.0))
    throw ConfigError("cclip_aggregate: clip_tau must be positive");
  const auto order = id_order(updates);
  const auto weights = normalized_sample_weights(updates);

  ParamVector out = prev_global;
  for (size_t i : order) {
    check_same_layout(updates[i].params, prev_global, "cclip_aggregate");
    ParamVector delta = updates[i].params - prev_global;
    const double norm = l2_norm(delta);
    const double scale = norm > spec.clip_tau ? spec.clip_tau / norm : 1.0;
    axpy(weights[i] * scale, delta, out);
  }
  return out;
}

ParamVector robust_lr_aggregate(const std::vector<ClientUpdate>& updates,
                                const ParamVector& prev_global,
                                const DefenseSpec& spec) {
  check_consistent(updates, "robust_lr_aggregate");
  if (spec.rlr_theta < 1)
    throw ConfigError("robust_lr_aggregate: rlr_theta must be >= 1");

  ParamVector mean_delta = fedavg_aggregate(updates) - prev_global;
  ParamVector out = prev_global;
  for (int64_t c = 0; c < out.size(); ++c) {
    int vote = 0;
    for (const auto& u : updates) {
      const double d = u.params[c] - prev_global[c];
      vote += (d > 0.0) - (d < 0.0);
    }
    const double lr =
        std::abs(vote) >= spec.rlr_theta ? spec.rlr_eta : -spec.rlr_eta;
    out[c] += lr * mean_delta[c];
  }
  return out;
}

ParamVector crfl_postprocess(const ParamVector& global, const DefenseSpec& spec,
                             RngStream& rng) {
  if (!(spec.clip_tau > 0.0))
    throw ConfigError("crfl_postprocess: clip_tau must be positive");
  ParamVector out = global;
  const double norm = l2_norm(out);
  if (norm > spec.clip_tau) {
    const double scale = spec.clip_tau / norm;
    for (double& v : out.values()) v *= scale;
  }
  if (spec.noise_sigma > 0.0) {
    for (double& v : out.values()) v += rng.normal(0.0, spec.noise_sigma);
  }
  return out;
}

Defender::Defender(DefenseSpec spec) : spec_(spec) { spec_.validate(); }

bool Defender::is_defense_before_aggregation() const {
  return defense_at_before_stage(spec_.kind);
}
bool Defender::is_defense_on_aggregation() const {
  return defense_at_on_stage(spec_.kind);
}
bool Defender::is_defense_after_aggregation() const {
  return defense_at_after_stage(spec_.kind);
}

std::vector<ClientUpdate> Defender::defend_before_aggregation(
    const std::vector<ClientUpdate>& updates, const RoundState& aux) {
  last_selected_ids_.reset();
  if (!is_defense_before_aggregation()) return updates;

  switch (spec_.kind) {
    case DefenseKind::krum:
    case DefenseKind::mkrum: {
      spec_.validate(static_cast<int>(updates.size()));
      auto kept = krum_select(updates, spec_);
      std::vector<int> ids;
      ids.reserve(kept.size());
      for (const auto& u : kept) ids.push_back(u.client_id);
      last_selected_ids_ = std::move(ids);
      return kept;
    }
    case DefenseKind::foolsgold:
      return foolsgold_reweight(updates, state_, spec_, aux.global_params);
    case DefenseKind::norm_clip:
      return norm_clip(updates, spec_, aux.global_params);
    default:
      return updates;
  }
}

ParamVector Defender::defend_on_aggregation(
    const std::vector<ClientUpdate>& updates, const RoundState& aux) {
  // Identity dispatch: a kind with no on-aggregation function yields to the
  // default aggregation rule.
  if (!is_defense_on_aggregation()) return fedavg_aggregate(updates);
  switch (spec_.kind) {
    case DefenseKind::robust_lr:
      return robust_lr_aggregate(updates, aux.global_params, spec_);
    case DefenseKind::slsgd:
      return slsgd_aggregate(updates, aux.global_params, spec_);
    case DefenseKind::geo_median:
    case DefenseKind::rfa:
      return rfa_aggregate(updates, spec_);
    case DefenseKind::weak_dp: {
      auto rng = aux.stream("defense-noise");
      return weak_dp_aggregate(updates, spec_, aux.global_params, rng);
    }
    case DefenseKind::cclip:
      return cclip_aggregate(updates, aux.global_params, spec_);
    case DefenseKind::coord_median:
      return coord_median_aggregate(updates);
    case DefenseKind::trimmed_mean:
      return trimmed_mean_aggregate(updates, spec_.trim_beta);
    default:
      throw ContractError("defend_on_aggregation: unreachable kind");
  }
}

ParamVector Defender::defend_after_aggregation(const ParamVector& global,
                                               const RoundState& aux) {
  if (!is_defense_after_aggregation()) return global;
  auto rng = aux.stream("defense-noise");
  return crfl_postprocess(global, spec_, rng);
}

}  // namespace fedsim
