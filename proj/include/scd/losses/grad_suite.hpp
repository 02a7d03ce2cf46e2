#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace scd::loss {

inline constexpr double kGradTolerance = 1e-4;

struct GradSuiteEntry {
  std::string name;
  std::size_t instances = 0;
  double max_rel_error = 0;
  /// Gradient values at the worst coordinate.
  double analytic = 0, numeric = 0;
  bool passed() const { return max_rel_error < kGradTolerance; }
};

/// Finite-difference check of every training loss (64-bit) on `instances`
/// random problems each, with L in [2, 16] tokens and D in [2, 8] channels
/// and unit expected row norm.
/// Also covers RoIAlign w.r.t. its feature field.
std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed, std::size_t instances = 50);

}  // namespace scd::loss
