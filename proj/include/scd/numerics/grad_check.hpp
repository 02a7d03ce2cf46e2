#pragma once

#include <cstddef>
#include <functional>

#include "scd/numerics/tensor.hpp"

namespace scd::num {

inline constexpr double kGradFloor = 1e-6;

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0;
  double numeric_at_worst = 0;
};

/// Compares the reverse-mode gradient of a scalar function against five-point
/// central differences (truncation error O(eps⁴)) at `point`, coordinate by
/// coordinate. The relative error per coordinate is
///   |analytic − numeric| / max(|analytic|, |numeric|, kGradFloor),
/// so gradients below the floor are held to an absolute tolerance instead.
/// Runs in 64-bit verification mode, so any non-finite intermediate throws
/// NonFiniteError.
GradCheckReport grad_check(const std::function<TensorD(const TensorD&)>& f, const TensorD& point,
                           double eps = 1e-4);

}  // namespace scd::num
