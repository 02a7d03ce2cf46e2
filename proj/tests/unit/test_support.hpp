#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "scd/image.hpp"
#include "scd/numerics/ops.hpp"
#include "scd/numerics/tensor.hpp"
#include "scd/rng.hpp"

namespace scd::testing {

template <typename T>
num::Tensor<T> random_tensor(Rng& rng, num::Shape shape, bool requires_grad = false, double scale = 1.0) {
  std::vector<T> v(num::shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(scale * rng.normal());
  return num::Tensor<T>::from_data(std::move(shape), std::move(v), requires_grad);
}

inline Image random_image(Rng& rng, std::size_t h = 64, std::size_t w = 64) {
  Image img(3, h, w);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  return img;
}

/// Weighted-sum probe: f(x) = sum(g(x) ⊙ c) for a fixed random c.
template <typename T>
num::Tensor<T> probe_sum(const num::Tensor<T>& y, Rng& rng) {
  auto c = random_tensor<T>(rng, y.shape());
  return num::sum(num::mul(y, c));
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

/// Independent bilinear oracle: cell-centred sample sites, border clamping.
inline std::vector<double> naive_bilinear(const std::vector<double>& field, std::size_t gh, std::size_t gw,
                                          std::size_t d, double y, double x) {
  y = std::min(std::max(y, 0.0), static_cast<double>(gh - 1));
  x = std::min(std::max(x, 0.0), static_cast<double>(gw - 1));
  std::vector<double> out(d, 0.0);
  for (std::size_t r = 0; r < gh; ++r)
    for (std::size_t c = 0; c < gw; ++c) {
      const double wy = std::max(0.0, 1.0 - std::abs(y - static_cast<double>(r)));
      const double wx = std::max(0.0, 1.0 - std::abs(x - static_cast<double>(c)));
      for (std::size_t k = 0; k < d; ++k) out[k] += wy * wx * field[(r * gw + c) * d + k];
    }
  return out;
}

/// Independent RoIAlign oracle: one bilinear sample per output cell centre,
/// box given as normalized (x0, y0, x1, y1).
inline std::vector<double> naive_roi_align(const std::vector<double>& field, std::size_t gh, std::size_t gw,
                                           std::size_t d, double x0, double y0, double x1, double y1,
                                           std::size_t oh, std::size_t ow) {
  std::vector<double> out;
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      const double cy = y0 + (y1 - y0) * (2.0 * i + 1.0) / (2.0 * oh);
      const double cx = x0 + (x1 - x0) * (2.0 * j + 1.0) / (2.0 * ow);
      auto v = naive_bilinear(field, gh, gw, d, cy * gh - 0.5, cx * gw - 0.5);
      out.insert(out.end(), v.begin(), v.end());
    }
  return out;
}

}  // namespace scd::testing
