#include "scd/numerics/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace scd::num {

Optimizer::Optimizer(ParameterList params) : params_(std::move(params)) {
  check_unique_names(params_);
  for (const auto& p : params_) {
    if (!p.tensor.requires_grad()) throw std::invalid_argument("optimizer given frozen parameter " + p.name);
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

AdamW::AdamW(ParameterList params, AdamWConfig config) : Optimizer(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0f);
    v_.emplace_back(p.tensor.numel(), 0.0f);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(config_.beta1), b2 = static_cast<float>(config_.beta2);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    auto w = p.tensor.mutable_data();
    const auto g = p.tensor.grad();
    const double decay = p.decay ? config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m_[k][i] = b1 * m_[k][i] + (1 - b1) * g[i];
      v_[k][i] = b2 * v_[k][i] + (1 - b2) * g[i] * g[i];
      const double mhat = m_[k][i] / bc1;
      const double vhat = v_[k][i] / bc2;
      const double update = mhat / (std::sqrt(vhat) + config_.eps) + decay * w[i];
      w[i] = static_cast<float>(w[i] - config_.lr * update);
    }
  }
}

SgdMomentum::SgdMomentum(ParameterList params, SgdConfig config) : Optimizer(std::move(params)), config_(config) {
  for (const auto& p : params_) velocity_.emplace_back(p.tensor.numel(), 0.0f);
}

void SgdMomentum::step() {
  const auto mu = static_cast<float>(config_.momentum);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    auto w = p.tensor.mutable_data();
    const auto g = p.tensor.grad();
    const float decay = p.decay ? static_cast<float>(config_.weight_decay) : 0.0f;
    for (std::size_t i = 0; i < w.size(); ++i) {
      velocity_[k][i] = mu * velocity_[k][i] + g[i] + decay * w[i];
      w[i] -= static_cast<float>(config_.lr) * velocity_[k][i];
    }
  }
}

}  // namespace scd::num
