#include "scd/losses/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "scd/numerics/ops.hpp"

namespace scd::loss {

using num::ShapeError;

void LossWeights::validate() const {
  if (!(lambda >= 0)) throw std::invalid_argument("LossWeights: lambda must be >= 0");
  if (!(tau_s > 0 && tau_t > 0)) throw std::invalid_argument("LossWeights: temperatures must be > 0");
}

namespace {

template <typename T>
void require_nonzero_rows(const Tensor<T>& x, const char* who) {
  const std::size_t n = x.cols();
  const auto v = x.data();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    T s = 0;
    for (std::size_t j = 0; j < n; ++j) s += v[i * n + j] * v[i * n + j];
    if (!(s > T(1e-24))) throw std::invalid_argument(std::string(who) + ": zero-norm vector at row " + std::to_string(i));
  }
}

template <typename T>
std::vector<std::size_t> diagonal_index(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

// −mean_j log softmax(logits)(j, j)
template <typename T>
Tensor<T> diagonal_nce(const Tensor<T>& logits) {
  return num::mul_scalar(num::mean(num::pick(num::log_softmax_rows(logits), diagonal_index<T>(logits.rows()))), T(-1));
}

template <typename T>
Tensor<T> cosine_alignment(const Tensor<T>& a, const Tensor<T>& b) {
  return num::add_scalar(num::mul_scalar(num::mean(num::cosine_similarity_rows(a, b)), T(-1)), T(1));
}

}  // namespace

template <typename T>
CorrelationMatrix<T> correlation(const Tensor<T>& z) {
  if (z.rank() != 2 || z.rows() == 0) throw ShapeError("correlation", "expected L×D features with L >= 1");
  return {num::matmul_nt(z, z), false, T(1)};
}

template <typename T>
CorrelationMatrix<T> normalize(const CorrelationMatrix<T>& c, T tau) {
  if (!(tau > 0)) throw std::invalid_argument("normalize: temperature must be > 0");
  return {num::softmax_rows(num::mul_scalar(c.values, T(1) / tau)), true, tau};
}

template <typename T>
Tensor<T> soft_cross_entropy(const Tensor<T>& target_probs, const Tensor<T>& logits) {
  if (target_probs.shape() != logits.shape()) {
    throw ShapeError("soft_cross_entropy", num::shape_str(target_probs.shape()) + " vs " + num::shape_str(logits.shape()));
  }
  const Tensor<T> target = target_probs.detach();
  const Tensor<T> row_ce = num::sum_axis(num::mul(target, num::log_softmax_rows(logits)), 1);
  return num::mul_scalar(num::mean(row_ce), T(-1));
}

template <typename T>
Tensor<T> scd_loss(const std::vector<Tensor<T>>& student, const std::vector<Tensor<T>>& teacher, T tau_s, T tau_t) {
  if (student.empty() || student.size() != teacher.size()) {
    throw ShapeError("scd_loss", std::to_string(student.size()) + " student vs " + std::to_string(teacher.size()) +
                                     " teacher regions");
  }
  if (!(tau_s > 0 && tau_t > 0)) throw std::invalid_argument("scd_loss: temperatures must be > 0");
  std::vector<Tensor<T>> per_region;
  per_region.reserve(student.size());
  for (std::size_t i = 0; i < student.size(); ++i) {
    if (student[i].rows() != teacher[i].rows()) {
      throw ShapeError("scd_loss", "region " + std::to_string(i) + ": L " + std::to_string(student[i].rows()) +
                                       " vs " + std::to_string(teacher[i].rows()));
    }
    const Tensor<T> zt = teacher[i].detach();
    const Tensor<T> target = normalize(correlation(zt), tau_t).values;
    const Tensor<T> logits = num::mul_scalar(correlation(student[i]).values, T(1) / tau_s);
    per_region.push_back(soft_cross_entropy(target, logits));
  }
  Tensor<T> total = per_region[0];
  for (std::size_t i = 1; i < per_region.size(); ++i) total = num::add(total, per_region[i]);
  return num::mul_scalar(total, T(1) / static_cast<T>(per_region.size()));
}

template <typename T>
Tensor<T> rla_loss(const Tensor<T>& region_feats, const Tensor<T>& supervision, AlignMode mode, T temperature) {
  if (region_feats.rank() != 2 || region_feats.shape() != supervision.shape() || region_feats.rows() == 0) {
    throw ShapeError("rla_loss", num::shape_str(region_feats.shape()) + " vs " + num::shape_str(supervision.shape()));
  }
  require_nonzero_rows(region_feats, "rla_loss");
  require_nonzero_rows(supervision, "rla_loss");
  if (mode == AlignMode::cosine) return cosine_alignment(region_feats, supervision);

  if (region_feats.rows() < 2) throw std::invalid_argument("rla_loss: infonce requires at least 2 regions");
  const Tensor<T> logits = num::mul_scalar(
      num::matmul_nt(num::l2_normalize_rows(region_feats), num::l2_normalize_rows(supervision)), T(1) / temperature);
  return num::mul_scalar(num::add(diagonal_nce(logits), diagonal_nce(num::transpose(logits))), T(0.5));
}

template <typename T>
Tensor<T> refiner_loss(const Tensor<T>& refined, const Tensor<T>& local, AlignMode mode, T temperature) {
  if (refined.rank() != 2 || refined.shape() != local.shape()) {
    throw ShapeError("refiner_loss", num::shape_str(refined.shape()) + " vs " + num::shape_str(local.shape()));
  }
  const Tensor<T> target = local.detach();
  if (mode == AlignMode::cosine) return cosine_alignment(refined, target);
  const Tensor<T> logits = num::mul_scalar(
      num::matmul_nt(num::l2_normalize_rows(refined), num::l2_normalize_rows(target)), T(1) / temperature);
  return diagonal_nce(logits);
}

template <typename T>
Tensor<T> sc_rla_loss(const Tensor<T>& l_rla, const Tensor<T>& l_scd, T lambda) {
  if (!(lambda >= 0)) throw std::invalid_argument("sc_rla_loss: lambda must be >= 0");
  return num::add(l_rla, num::mul_scalar(l_scd, lambda));
}

template <typename T>
Tensor<T> frobenius_loss(const Tensor<T>& cs, const Tensor<T>& ct) {
  if (cs.rank() != 2 || cs.shape() != ct.shape() || cs.rows() != cs.cols()) {
    throw ShapeError("frobenius_loss", num::shape_str(cs.shape()) + " vs " + num::shape_str(ct.shape()));
  }
  const T l = static_cast<T>(cs.rows());
  const Tensor<T> diff = num::sub(cs, ct.detach());
  return num::mul_scalar(num::sum(num::mul(diff, diff)), T(1) / (l * l));
}

template <typename T>
Tensor<T> inter_instance_loss(const Tensor<T>& pooled_student, const Tensor<T>& pooled_teacher, T tau_s, T tau_t) {
  if (pooled_student.shape() != pooled_teacher.shape()) {
    throw ShapeError("inter_instance_loss",
                     num::shape_str(pooled_student.shape()) + " vs " + num::shape_str(pooled_teacher.shape()));
  }
  return scd_loss<T>({pooled_student}, {pooled_teacher}, tau_s, tau_t);
}

template <typename T>
Tensor<T> attention_loss(const std::vector<Tensor<T>>& student, const std::vector<Tensor<T>>& teacher) {
  if (student.empty() || student.size() != teacher.size()) {
    throw ShapeError("attention_loss", std::to_string(student.size()) + " vs " + std::to_string(teacher.size()) + " heads");
  }
  Tensor<T> total;
  for (std::size_t h = 0; h < student.size(); ++h) {
    if (student[h].shape() != teacher[h].shape()) {
      throw ShapeError("attention_loss", "head " + std::to_string(h) + ": " + num::shape_str(student[h].shape()) +
                                             " vs " + num::shape_str(teacher[h].shape()));
    }
    const Tensor<T> ce = num::mul_scalar(
        num::mean(num::sum_axis(num::mul(teacher[h].detach(), num::log(student[h])), 1)), T(-1));
    total = total.defined() ? num::add(total, ce) : ce;
  }
  return num::mul_scalar(total, T(1) / static_cast<T>(student.size()));
}

#define SCD_INSTANTIATE_LOSSES(T)                                                                              \
  template CorrelationMatrix<T> correlation(const Tensor<T>&);                                                 \
  template CorrelationMatrix<T> normalize(const CorrelationMatrix<T>&, T);                                     \
  template Tensor<T> soft_cross_entropy(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scd_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&, T, T);             \
  template Tensor<T> rla_loss(const Tensor<T>&, const Tensor<T>&, AlignMode, T);                               \
  template Tensor<T> refiner_loss(const Tensor<T>&, const Tensor<T>&, AlignMode, T);                           \
  template Tensor<T> sc_rla_loss(const Tensor<T>&, const Tensor<T>&, T);                                       \
  template Tensor<T> frobenius_loss(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> inter_instance_loss(const Tensor<T>&, const Tensor<T>&, T, T);                            \
  template Tensor<T> attention_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&);

SCD_INSTANTIATE_LOSSES(float)
SCD_INSTANTIATE_LOSSES(double)

#undef SCD_INSTANTIATE_LOSSES

}  // namespace scd::loss
