#include "fedsim/data_gen.hpp"

#include <algorithm>
#include <numeric>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

namespace {
constexpr double kClusterMeanScale = 1.0;
}

Dataset make_synthetic(int num_classes, int64_t dim, int64_t total_samples,
                       uint64_t seed) {
  if (num_classes < 2)
    throw ConfigError("make_synthetic: num_classes must be at least 2");
  if (dim <= 0) throw ConfigError("make_synthetic: dim must be positive");
  if (total_samples <= 0)
    throw ConfigError("make_synthetic: total_samples must be positive");

  RngStream mean_rng(derive_seed(seed, "synthetic-means"));
  std::vector<double> means(static_cast<size_t>(num_classes) *
                            static_cast<size_t>(dim));
  for (double& m : means) m = mean_rng.normal(0.0, kClusterMeanScale);

  RngStream noise_rng(derive_seed(seed, "synthetic-noise"));
  std::vector<double> features(static_cast<size_t>(total_samples) *
                               static_cast<size_t>(dim));
  std::vector<int> labels(static_cast<size_t>(total_samples));
  for (int64_t i = 0; i < total_samples; ++i) {
    const int c = static_cast<int>(i % num_classes);
    labels[static_cast<size_t>(i)] = c;
    const double* mu = means.data() + static_cast<size_t>(c) * dim;
    double* x = features.data() + static_cast<size_t>(i) * dim;
    for (int64_t j = 0; j < dim; ++j) x[j] = mu[j] + noise_rng.normal();
  }
  return Dataset(std::move(features), std::move(labels), dim, num_classes);
}

std::vector<Dataset> partition_dirichlet(const Dataset& data, int num_clients,
                                         double alpha, uint64_t seed) {
  if (num_clients < 1)
    throw ConfigError("partition_dirichlet: num_clients must be at least 1");
  if (!(alpha > 0.0))
    throw ConfigError("partition_dirichlet: alpha must be positive");
  if (data.size() < num_clients)
    throw ConfigError("partition_dirichlet: fewer samples (" +
                      std::to_string(data.size()) + ") than clients (" +
                      std::to_string(num_clients) + ")");

  // Sample indices grouped by class, preserving source order.
  std::vector<std::vector<int64_t>> by_class(
      static_cast<size_t>(data.num_classes()));
  for (int64_t i = 0; i < data.size(); ++i)
    by_class[static_cast<size_t>(data.label(i))].push_back(i);

  RngStream rng(derive_seed(seed, "dirichlet-partition"));
  std::vector<std::vector<int64_t>> assigned(static_cast<size_t>(num_clients));

  for (const auto& members : by_class) {
    if (members.empty()) continue;
    const int64_t nc = static_cast<int64_t>(members.size());

    // Dirichlet proportions via normalized gammas.
    std::vector<double> prop(static_cast<size_t>(num_clients));
    double total = 0.0;
    for (double& p : prop) {
      p = rng.gamma(alpha);
      total += p;
    }
    if (!(total > 0.0)) {
      std::fill(prop.begin(), prop.end(), 1.0);
      total = static_cast<double>(num_clients);
    }

    // Integer allocation by largest remainder so counts sum exactly to nc.
    std::vector<int64_t> counts(static_cast<size_t>(num_clients));
    std::vector<std::pair<double, int>> remainders;
    int64_t used = 0;
    for (int k = 0; k < num_clients; ++k) {
      const double share =
          prop[static_cast<size_t>(k)] / total * static_cast<double>(nc);
      counts[static_cast<size_t>(k)] = static_cast<int64_t>(share);
      used += counts[static_cast<size_t>(k)];
      remainders.push_back({share - std::floor(share), k});
    }
    std::sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int64_t r = 0; r < nc - used; ++r)
      ++counts[static_cast<size_t>(remainders[static_cast<size_t>(r)].second)];

    int64_t pos = 0;
    for (int k = 0; k < num_clients; ++k) {
      for (int64_t t = 0; t < counts[static_cast<size_t>(k)]; ++t)
        assigned[static_cast<size_t>(k)].push_back(members[static_cast<size_t>(pos++)]);
    }
  }

  // Re-draw rule: any empty client takes one sample from the largest client.
  for (int k = 0; k < num_clients; ++k) {
    auto& mine = assigned[static_cast<size_t>(k)];
    if (!mine.empty()) continue;
    int largest = -1;
    size_t largest_size = 1;  // donor must keep at least one sample
    for (int j = 0; j < num_clients; ++j) {
      const size_t sz = assigned[static_cast<size_t>(j)].size();
      if (sz > largest_size) {
        largest_size = sz;
        largest = j;
      }
    }
    if (largest < 0)
      throw ConfigError("partition_dirichlet: cannot give every client a sample");
    auto& donor = assigned[static_cast<size_t>(largest)];
    mine.push_back(donor.back());
    donor.pop_back();
  }

  std::vector<Dataset> parts;
  parts.reserve(static_cast<size_t>(num_clients));
  for (auto& idxs : assigned) {
    std::sort(idxs.begin(), idxs.end());
    parts.push_back(data.subset(idxs));
  }
  return parts;
}

}  // namespace fedsim
