#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/dataset.hpp"

namespace fedsim {

/// Gaussian class-cluster data: one mean per class drawn from the seed
/// (N(0, 3^2) per coordinate), samples = class mean + unit Gaussian noise.
/// Labels are assigned round-robin so class counts are as balanced as
/// divisibility allows. Deterministic for a fixed seed.
Dataset make_synthetic(int num_classes, int64_t dim, int64_t total_samples,
                       uint64_t seed);

/// Splits `data` across `num_clients` with per-class Dirichlet(alpha)
/// proportions. The union of the partitions equals the input multiset, and
/// every client receives at least one sample (one sample is moved from the
/// largest client to any empty one). Errors if there are fewer samples than
/// clients.
std::vector<Dataset> partition_dirichlet(const Dataset& data, int num_clients,
                                         double alpha, uint64_t seed);

}  // namespace fedsim
