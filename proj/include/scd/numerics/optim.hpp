#pragma once

#include <vector>

#include "scd/numerics/tensor.hpp"

namespace scd::num {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

struct SgdConfig {
  double lr = 1e-4;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step() = 0;
  virtual void set_lr(double lr) = 0;
  virtual double lr() const = 0;
  void zero_grad();

 protected:
  explicit Optimizer(ParameterList params);
  ParameterList params_;
};

/// Adaptive moments with decoupled weight decay:
///   m ← β1·m + (1−β1)·g,  v ← β2·v + (1−β2)·g²
///   θ ← θ − lr·(m̂ / (√v̂ + ε) + wd·θ)
class AdamW final : public Optimizer {
 public:
  AdamW(ParameterList params, AdamWConfig config);
  void step() override;
  void set_lr(double lr) override { config_.lr = lr; }
  double lr() const override { return config_.lr; }

 private:
  AdamWConfig config_;
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
};

class SgdMomentum final : public Optimizer {
 public:
  SgdMomentum(ParameterList params, SgdConfig config);
  void step() override;
  void set_lr(double lr) override { config_.lr = lr; }
  double lr() const override { return config_.lr; }

 private:
  SgdConfig config_;
  std::vector<std::vector<float>> velocity_;
};

}  // namespace scd::num
