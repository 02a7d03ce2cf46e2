#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "scd/losses/losses.hpp"
#include "scd/numerics/optim.hpp"
#include "scd/regions/regions.hpp"
#include "scd/vit/encoder.hpp"

namespace scd::refiner {

using regions::Box;
using vit::FeatureMap;
using vit::TensorF;

enum class InitMode { clone, random, exogenous };

InitMode parse_init(const std::string& s);
const char* init_name(InitMode m);

struct RefinerConfig {
  /// Trunk depth; clone mode requires the encoder's split_k.
  std::size_t depth_k = 2;
  InitMode init = InitMode::clone;
  std::size_t hidden = 128;
  /// Run the trunk over the whole token field and RoIAlign afterwards.
  bool late_variant = false;
  /// Enable the intermediate processor and the region cls generator.
  bool aux_heads = true;
};

/// Two-layer perceptron in → hidden → out with GELU; the output layer starts
/// at zero so the head initially contributes nothing.
struct ZeroHead {
  TensorF w1, b1, w2, b2;

  static ZeroHead init(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out);
  TensorF forward(const TensorF& x) const;
  ZeroHead clone() const;
  void collect(const std::string& prefix, num::ParameterList& out) const;
};

/// Context-decontamination head on top of a frozen encoder.
///
///   Z_inter = FC_Inter([tap_l1, tap_l2])
///   region  = RoIAlign(f_A(X) + Z_inter, b)
///   ẑ       = cls_A + FC_CLS(RoIPool(f_A(X), b))
///   Ẑ       = trunk([ẑ; region])
///
/// In exogenous mode f_A is replaced by the full encoder and the trunk is a
/// fresh stack appended after it.
class Refiner {
 public:
  Refiner(const vit::Encoder& encoder, const RefinerConfig& config, std::uint64_t seed);

  const RefinerConfig& config() const { return config_; }

  /// Base features the refiner consumes for one image: stage A of the
  /// encoder, or its full output in exogenous mode. Computing them once per
  /// image lets several boxes share them.
  vit::StageA base(const vit::Encoder& encoder, const Image& image) const;

  /// Refined region features (cls + out_h × out_w tokens).
  FeatureMap refine(const vit::StageA& base, const Box& box, std::size_t out_h, std::size_t out_w) const;
  FeatureMap refine(const vit::Encoder& encoder, const Image& image, const Box& box, std::size_t out_h,
                    std::size_t out_w) const;

  /// Parameters under the "refiner." prefix.
  num::ParameterList parameters() const;
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }
  Refiner clone() const;

 private:
  Refiner() = default;

  RefinerConfig config_;
  vit::BlockStack trunk_;
  ZeroHead fc_inter_, fc_cls_;
  bool frozen_ = false;
};

enum class Direction { global_to_local, local_to_global };

enum class OptimizerKind { adamw, sgd };

struct RefinerTrainConfig {
  std::size_t epochs = 4;
  std::size_t batch = 8;
  std::size_t crops = 4;
  regions::Range scale{0.3, 0.7};
  regions::Range aspect{0.75, 4.0 / 3.0};
  loss::AlignMode mode = loss::AlignMode::infonce;
  double temperature = loss::kRefinerTemperature;
  OptimizerKind optimizer = OptimizerKind::adamw;
  double lr = 1e-4;
  double weight_decay = 0.05;
  Direction direction = Direction::global_to_local;
  std::uint64_t seed = 0;
};

struct RefinerStep {
  std::size_t step = 0;
  double loss = 0;
  double lr = 0;
};

struct RefinerTrainResult {
  std::vector<RefinerStep> steps;
  double heldout_before = 0;
  double heldout_after = 0;
};

/// Summed refiner loss over cfg.crops crops of one image drawn from `rng`.
TensorF image_loss(const Refiner& refiner, const vit::Encoder& teacher, const Image& image, Rng& rng,
                   const RefinerTrainConfig& cfg);

/// AdamW or momentum SGD as selected by the config.
std::unique_ptr<num::Optimizer> make_optimizer(const num::ParameterList& params, const RefinerTrainConfig& cfg);

/// Mean refiner loss over `images` using crops drawn from `seed`.
double heldout_loss(const Refiner& refiner, const vit::Encoder& teacher, const std::vector<Image>& images,
                    const RefinerTrainConfig& cfg, std::uint64_t seed);

/// Global-to-local: refined tokens of crop b′ taken from the full image are
/// aligned with the teacher's tokens of the cropped-and-resized image.
/// Local-to-global reverses the roles. The teacher must be frozen.
RefinerTrainResult train_refiner(Refiner& refiner, const vit::Encoder& teacher, const std::vector<Image>& images,
                                 const std::vector<Image>& heldout, const RefinerTrainConfig& cfg,
                                 const std::function<void(const RefinerStep&)>& on_step = {});

}  // namespace scd::refiner
