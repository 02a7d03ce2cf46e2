#pragma once

#include <vector>

#include "scd/numerics/tensor.hpp"

namespace scd::loss {

using num::Tensor;

/// L×L token-pair similarity. Raw matrices are Z·Zᵀ; normalized ones are the
/// row-wise softmax of raw/τ.
template <typename T>
struct CorrelationMatrix {
  Tensor<T> values;
  bool normalized = false;
  T temperature = T(1);
};

struct LossWeights {
  double lambda = 0.2;
  double tau_s = 0.2;
  double tau_t = 0.2;

  void validate() const;
};

enum class AlignMode { cosine, infonce };

inline constexpr double kRlaTemperature = 0.07;
inline constexpr double kRefinerTemperature = 0.1;

template <typename T> CorrelationMatrix<T> correlation(const Tensor<T>& z);
template <typename T> CorrelationMatrix<T> normalize(const CorrelationMatrix<T>& c, T tau);

/// Mean over rows of −Σ_k target(j,k)·log softmax(logits)(j,k). The target
/// contributes no gradient.
template <typename T> Tensor<T> soft_cross_entropy(const Tensor<T>& target_probs, const Tensor<T>& logits);

/// Spatial correlation distillation: per region, teacher correlation rows
/// (softmax at τ_t) are soft targets for the student rows (softmax at τ_s);
/// averaged over rows and regions. Teacher features are detached.
template <typename T>
Tensor<T> scd_loss(const std::vector<Tensor<T>>& student, const std::vector<Tensor<T>>& teacher, T tau_s, T tau_t);

/// Region-level alignment of pooled features [B × D] with supervision
/// vectors [B × D]. cosine: mean(1 − cos). infonce: symmetric cross-entropy
/// over the B×B cosine-similarity logits with in-batch negatives.
template <typename T>
Tensor<T> rla_loss(const Tensor<T>& region_feats, const Tensor<T>& supervision, AlignMode mode,
                   T temperature = T(kRlaTemperature));

/// Token alignment between refined tokens and local-crop tokens [L × D],
/// paired by position. infonce treats the other tokens of the same crop as
/// negatives. The local tokens are detached.
template <typename T>
Tensor<T> refiner_loss(const Tensor<T>& refined, const Tensor<T>& local, AlignMode mode,
                       T temperature = T(kRefinerTemperature));

/// L_RLA + λ·L_SCD.
template <typename T> Tensor<T> sc_rla_loss(const Tensor<T>& l_rla, const Tensor<T>& l_scd, T lambda);

/// ‖Cs − Ct‖²_F / L² on raw correlations (Ct detached).
template <typename T> Tensor<T> frobenius_loss(const Tensor<T>& cs, const Tensor<T>& ct);

/// scd_loss applied to the B×B correlation of pooled region vectors.
template <typename T>
Tensor<T> inter_instance_loss(const Tensor<T>& pooled_student, const Tensor<T>& pooled_teacher, T tau_s, T tau_t);

/// Cross-entropy between attention maps (one [T × T] probability map per
/// head), teacher as target, averaged over rows and heads.
template <typename T>
Tensor<T> attention_loss(const std::vector<Tensor<T>>& student, const std::vector<Tensor<T>>& teacher);

}  // namespace scd::loss
