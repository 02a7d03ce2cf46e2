#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace scd {

/// Mixes a root seed with a consumer tag (e.g. "data", "init", "sampling") so
/// every consumer draws from its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);

/// Seeded generator. Bits come from mt19937_64 (fully specified by the
/// standard); the real-valued conversions are implemented here so streams are
/// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  /// Normal(0, sigma²) redrawn until within ±2σ.
  double truncated_normal(double sigma);
  Rng split(std::string_view tag) const { return Rng(derive_seed(seed_, tag)); }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace scd
