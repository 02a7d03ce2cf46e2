#pragma once

#include <cstddef>
#include <vector>

#include "scd/numerics/tensor.hpp"

// Differentiable primitives. Every function here records an exact analytic
// backward when any input requires a gradient. Shapes must conform exactly;
// the only implicit alignment is tensor-scalar (the *_scalar family). Row
// vector broadcasts are spelled out by name (add_rowvec, mul_rowvec).
namespace scd::num {

// --- linear algebra -------------------------------------------------------
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// a · bᵀ without materializing the transpose.
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
/// x·W + b with W stored [in × out] and b of length out.
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// --- elementwise ----------------------------------------------------------
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);
/// Adds v (numel == cols) to every row of a rank-2 tensor.
template <typename T> Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& v);
template <typename T> Tensor<T> mul_rowvec(const Tensor<T>& a, const Tensor<T>& v);
template <typename T> Tensor<T> exp(const Tensor<T>& a);
template <typename T> Tensor<T> log(const Tensor<T>& a);
template <typename T> Tensor<T> pow(const Tensor<T>& a, T exponent);
template <typename T> Tensor<T> gelu(const Tensor<T>& a);

// --- reductions -----------------------------------------------------------
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
/// Rank-2 reductions: axis 0 → [1 × cols], axis 1 → [rows × 1].
template <typename T> Tensor<T> sum_axis(const Tensor<T>& a, std::size_t axis);
template <typename T> Tensor<T> mean_axis(const Tensor<T>& a, std::size_t axis);

// --- normalization --------------------------------------------------------
/// Row-wise softmax over the last axis, computed with max subtraction.
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& a);
template <typename T> Tensor<T> log_softmax_rows(const Tensor<T>& a);
template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5));
template <typename T> Tensor<T> l2_normalize_rows(const Tensor<T>& a, T eps = T(1e-12));
/// Row-wise cosine similarity of two equally shaped matrices → [rows × 1].
template <typename T> Tensor<T> cosine_similarity_rows(const Tensor<T>& a, const Tensor<T>& b);

// --- structure ------------------------------------------------------------
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<std::size_t>& index);
/// out[r] = a[r, index[r]] → [rows × 1].
template <typename T> Tensor<T> pick(const Tensor<T>& a, const std::vector<std::size_t>& index);

/// Sample location in grid coordinates: row/column index space where the
/// centre of cell (r, c) sits at (r, c). Out-of-range locations clamp to the
/// border.
struct SamplePoint {
  double y = 0;
  double x = 0;
};

/// Bilinear sampling of a field stored as [grid_h·grid_w × D] (row-major
/// cells) at the given points → [points × D].
template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& field, std::size_t grid_h, std::size_t grid_w,
                          const std::vector<SamplePoint>& points);

}  // namespace scd::num
