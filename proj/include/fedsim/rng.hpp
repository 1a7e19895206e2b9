#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedsim {

/// Deterministic seeded random stream. Every draw goes through explicit
/// transforms (Box-Muller, rejection sampling) instead of the standard
/// library's distribution objects, so sequences are stable across standard
/// library versions.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1).
  double uniform();

  /// Standard normal draw.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n). Requires n > 0.
  int64_t uniform_int(int64_t n);

  /// Gamma(shape, 1) draw via Marsaglia-Tsang. Requires shape > 0.
  double gamma(double shape);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Stable seed for a named substream of a master seed. Streams are keyed by
/// (purpose, a, b) -- typically (purpose, round, client) -- so enabling one
/// consumer never perturbs the draws seen by another.
uint64_t derive_seed(uint64_t master, std::string_view purpose, uint64_t a = 0,
                     uint64_t b = 0);

}  // namespace fedsim
