// Test-only reference implementations, independent of the library's
// optimized paths. Everything here favors obviousness over speed.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fedsim/client_update.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/model.hpp"

namespace oracles {

// Central finite differences of the batch loss, coordinate by coordinate.
inline fedsim::ParamVector fd_gradient(const fedsim::ModelSpec& spec,
                                       const fedsim::ParamVector& params,
                                       const fedsim::Dataset& batch,
                                       double eps = 1e-4) {
  fedsim::ParamVector grad = fedsim::ParamVector::zeros_like(params);
  fedsim::ParamVector probe = params;
  for (int64_t i = 0; i < params.size(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + eps;
    const double fp = fedsim::forward_loss_grad(spec, probe, batch).loss;
    probe[i] = keep - eps;
    const double fm = fedsim::forward_loss_grad(spec, probe, batch).loss;
    probe[i] = keep;
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

// Krum scores by full sort over the raw distance matrix.
inline std::vector<double> brute_krum_scores(
    const std::vector<fedsim::ClientUpdate>& updates, int f) {
  const int n = static_cast<int>(updates.size());
  const int k = n - f - 2;
  std::vector<double> scores(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    std::vector<double> d2;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      d2.push_back(fedsim::squared_distance(updates[static_cast<size_t>(i)].params,
                                            updates[static_cast<size_t>(j)].params));
    }
    std::sort(d2.begin(), d2.end());
    for (int t = 0; t < k; ++t) scores[static_cast<size_t>(i)] += d2[static_cast<size_t>(t)];
  }
  return scores;
}

// Brute-force krum selection: indices of the m best (score, client_id) pairs.
inline std::vector<int> brute_krum_selected_ids(
    const std::vector<fedsim::ClientUpdate>& updates, int f, int m) {
  const auto scores = brute_krum_scores(updates, f);
  std::vector<int> idx(updates.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
      return scores[static_cast<size_t>(a)] < scores[static_cast<size_t>(b)];
    return updates[static_cast<size_t>(a)].client_id <
           updates[static_cast<size_t>(b)].client_id;
  });
  std::vector<int> ids;
  for (int t = 0; t < m; ++t)
    ids.push_back(updates[static_cast<size_t>(idx[static_cast<size_t>(t)])].client_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline double geomedian_objective(const fedsim::ParamVector& theta,
                                  const std::vector<fedsim::ParamVector>& points,
                                  const std::vector<double>& weights) {
  double obj = 0.0;
  for (size_t i = 0; i < points.size(); ++i)
    obj += weights[i] * std::sqrt(fedsim::squared_distance(theta, points[i]));
  return obj;
}

// True iff the candidate's objective is within tol of the best value on a
// step-spaced lattice (offsets -2..2 per coordinate) centered on it.
inline bool beats_local_grid(const fedsim::ParamVector& theta,
                             const std::vector<fedsim::ParamVector>& points,
                             const std::vector<double>& weights, double step,
                             double tol) {
  const double base = geomedian_objective(theta, points, weights);
  const int64_t d = theta.size();
  std::vector<int> offset(static_cast<size_t>(d), -2);
  for (;;) {
    fedsim::ParamVector probe = theta;
    for (int64_t i = 0; i < d; ++i) probe[i] += step * offset[static_cast<size_t>(i)];
    if (geomedian_objective(probe, points, weights) < base - tol) return false;
    int64_t pos = 0;
    while (pos < d) {
      if (++offset[static_cast<size_t>(pos)] <= 2) break;
      offset[static_cast<size_t>(pos)] = -2;
      ++pos;
    }
    if (pos == d) break;
  }
  return true;
}

// Weighted median of scalars: smallest value whose cumulative weight reaches
// half the total.
inline double weighted_median(std::vector<std::pair<double, double>> value_weight) {
  std::sort(value_weight.begin(), value_weight.end());
  double total = 0.0;
  for (const auto& [v, w] : value_weight) total += w;
  double cum = 0.0;
  for (const auto& [v, w] : value_weight) {
    cum += w;
    if (cum >= 0.5 * total) return v;
  }
  return value_weight.back().first;
}

// Sort-based per-coordinate reference for median / trimmed mean.
inline std::vector<double> sorted_column(
    const std::vector<fedsim::ClientUpdate>& updates, int64_t coord) {
  std::vector<double> col;
  for (const auto& u : updates) col.push_back(u.params[coord]);
  std::sort(col.begin(), col.end());
  return col;
}

inline double ref_median(std::vector<double> col) {
  std::sort(col.begin(), col.end());
  const size_t n = col.size();
  return n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
}

inline double ref_trimmed_mean(std::vector<double> col, size_t k) {
  std::sort(col.begin(), col.end());
  double s = 0.0;
  for (size_t i = k; i < col.size() - k; ++i) s += col[i];
  return s / static_cast<double>(col.size() - 2 * k);
}

}  // namespace oracles
