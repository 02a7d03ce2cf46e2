#include "scd/refiner/refiner.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "scd/numerics/ops.hpp"
#include "scd/numerics/optim.hpp"

namespace scd::refiner {

InitMode parse_init(const std::string& s) {
  if (s == "clone") return InitMode::clone;
  if (s == "random") return InitMode::random;
  if (s == "exogenous") return InitMode::exogenous;
  throw std::invalid_argument("unknown refiner init '" + s + "' (expected clone, random or exogenous)");
}

const char* init_name(InitMode m) {
  switch (m) {
    case InitMode::clone:
      return "clone";
    case InitMode::random:
      return "random";
    case InitMode::exogenous:
      return "exogenous";
  }
  return "?";
}

// --- ZeroHead -------------------------------------------------------------

ZeroHead ZeroHead::init(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out) {
  ZeroHead h;
  std::vector<float> w(in * hidden);
  for (auto& v : w) v = static_cast<float>(rng.truncated_normal(0.02));
  h.w1 = TensorF::from_data({in, hidden}, std::move(w));
  h.b1 = TensorF::zeros({hidden});
  h.w2 = TensorF::zeros({hidden, out});
  h.b2 = TensorF::zeros({out});
  return h;
}

TensorF ZeroHead::forward(const TensorF& x) const {
  return num::linear(num::gelu(num::linear(x, w1, b1)), w2, b2);
}

ZeroHead ZeroHead::clone() const { return {w1.clone(), b1.clone(), w2.clone(), b2.clone()}; }

void ZeroHead::collect(const std::string& prefix, num::ParameterList& out) const {
  out.push_back({prefix + ".fc1.w", w1, true});
  out.push_back({prefix + ".fc1.b", b1, false});
  out.push_back({prefix + ".fc2.w", w2, true});
  out.push_back({prefix + ".fc2.b", b2, false});
}

// --- Refiner --------------------------------------------------------------

Refiner::Refiner(const vit::Encoder& encoder, const RefinerConfig& config, std::uint64_t seed) : config_(config) {
  const auto& ec = encoder.config();
  Rng rng(seed);
  if (config_.init == InitMode::clone) {
    if (config_.depth_k != ec.split_k) {
      throw std::invalid_argument("refiner: clone init requires depth_k (" + std::to_string(config_.depth_k) +
                                  ") == encoder split_k (" + std::to_string(ec.split_k) + ")");
    }
    trunk_ = encoder.clone_late_blocks();
  } else {
    trunk_ = vit::BlockStack::random(rng, config_.depth_k, ec.dim, ec.mlp_hidden(), ec.heads, true);
  }
  if (config_.aux_heads) {
    if (config_.hidden == 0) throw std::invalid_argument("refiner: hidden width must be >= 1");
    fc_inter_ = ZeroHead::init(rng, 2 * ec.dim, config_.hidden, ec.dim);
    fc_cls_ = ZeroHead::init(rng, ec.dim, config_.hidden, ec.dim);
  }
  set_frozen(false);
}

vit::StageA Refiner::base(const vit::Encoder& encoder, const Image& image) const {
  vit::StageA a = encoder.forward_a(image);
  if (config_.init == InitMode::exogenous) a.features = encoder.forward_b(a.features);
  return a;
}

FeatureMap Refiner::refine(const vit::StageA& base, const Box& box, std::size_t out_h, std::size_t out_w) const {
  regions::require_valid(box, "refine");
  const FeatureMap& f = base.features;
  FeatureMap dense;
  dense.grid_h = f.grid_h;
  dense.grid_w = f.grid_w;
  dense.tokens = f.tokens;
  TensorF cls = f.cls;
  if (config_.aux_heads) {
    dense.tokens = num::add(f.tokens, fc_inter_.forward(num::concat_cols<float>({base.tap1, base.tap2})));
    FeatureMap plain{TensorF(), f.tokens, f.grid_h, f.grid_w};
    cls = num::add(cls, fc_cls_.forward(regions::roi_pool(plain, box)));
  }
  if (config_.late_variant) {
    dense.cls = cls;
    const FeatureMap full = trunk_.forward(dense);
    FeatureMap out = regions::roi_align(FeatureMap{TensorF(), full.tokens, full.grid_h, full.grid_w}, box, out_h, out_w);
    out.cls = full.cls;
    return out;
  }
  FeatureMap region = regions::roi_align(dense, box, out_h, out_w);
  region.cls = cls;
  return trunk_.forward(region);
}

FeatureMap Refiner::refine(const vit::Encoder& encoder, const Image& image, const Box& box, std::size_t out_h,
                           std::size_t out_w) const {
  return refine(base(encoder, image), box, out_h, out_w);
}

num::ParameterList Refiner::parameters() const {
  num::ParameterList out = trunk_.parameters("refiner.trunk");
  if (config_.aux_heads) {
    fc_inter_.collect("refiner.fc_inter", out);
    fc_cls_.collect("refiner.fc_cls", out);
  }
  return out;
}

void Refiner::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (auto& p : parameters()) p.tensor.set_requires_grad(!frozen);
}

Refiner Refiner::clone() const {
  Refiner r;
  r.config_ = config_;
  r.trunk_ = trunk_.clone();
  if (config_.aux_heads) {
    r.fc_inter_ = fc_inter_.clone();
    r.fc_cls_ = fc_cls_.clone();
  }
  r.frozen_ = frozen_;
  return r;
}

// --- training -------------------------------------------------------------

namespace {

// Loss of one (image, crop) pair in the configured direction.
TensorF pair_loss(const Refiner& refiner, const vit::Encoder& teacher, const Image& image, const vit::StageA& base,
                  const FeatureMap* teacher_full, const Box& crop, const RefinerTrainConfig& cfg) {
  const std::size_t g = teacher.config().grid();
  const Image local = regions::crop_image(image, crop, image.height, image.width);
  TensorF refined, target;
  if (cfg.direction == Direction::global_to_local) {
    refined = refiner.refine(base, crop, g, g).tokens;
    target = teacher.forward(local).tokens;
  } else {
    refined = refiner.refine(teacher, local, Box::whole(), g, g).tokens;
    target = regions::roi_align(*teacher_full, crop, g, g).tokens;
  }
  return loss::refiner_loss(refined, target, cfg.mode, static_cast<float>(cfg.temperature));
}

}  // namespace

TensorF image_loss(const Refiner& refiner, const vit::Encoder& teacher, const Image& image, Rng& rng,
                   const RefinerTrainConfig& cfg) {
  const auto crops = regions::sample_proposals(rng, cfg.crops, cfg.scale, cfg.aspect);
  const vit::StageA base = refiner.base(teacher, image);
  FeatureMap full;
  if (cfg.direction == Direction::local_to_global) full = teacher.forward(image);
  TensorF total;
  for (const auto& b : crops.boxes) {
    TensorF l = pair_loss(refiner, teacher, image, base, &full, b, cfg);
    total = total.defined() ? num::add(total, l) : l;
  }
  return total;
}

std::unique_ptr<num::Optimizer> make_optimizer(const num::ParameterList& params, const RefinerTrainConfig& cfg) {
  if (cfg.optimizer == OptimizerKind::sgd) {
    return std::make_unique<num::SgdMomentum>(params, num::SgdConfig{cfg.lr, 0.9, cfg.weight_decay});
  }
  num::AdamWConfig ac;
  ac.lr = cfg.lr;
  ac.weight_decay = cfg.weight_decay;
  return std::make_unique<num::AdamW>(params, ac);
}

double heldout_loss(const Refiner& refiner, const vit::Encoder& teacher, const std::vector<Image>& images,
                    const RefinerTrainConfig& cfg, std::uint64_t seed) {
  if (images.empty()) return 0.0;
  Refiner frozen = refiner.clone();
  frozen.set_frozen(true);
  Rng rng(seed);
  double sum = 0;
  for (const auto& img : images) sum += image_loss(frozen, teacher, img, rng, cfg).item();
  return sum / static_cast<double>(images.size() * cfg.crops);
}

RefinerTrainResult train_refiner(Refiner& refiner, const vit::Encoder& teacher, const std::vector<Image>& images,
                                 const std::vector<Image>& heldout, const RefinerTrainConfig& cfg,
                                 const std::function<void(const RefinerStep&)>& on_step) {
  if (!teacher.frozen()) throw std::invalid_argument("train_refiner: teacher must be frozen");
  if (images.empty() || cfg.batch == 0 || cfg.crops == 0) {
    throw std::invalid_argument("train_refiner: need images, batch >= 1 and crops >= 1");
  }
  refiner.set_frozen(false);
  const std::uint64_t eval_seed = derive_seed(cfg.seed, "refiner/heldout");
  RefinerTrainResult result;
  result.heldout_before = heldout_loss(refiner, teacher, heldout, cfg, eval_seed);

  auto params = refiner.parameters();
  auto opt = make_optimizer(params, cfg);
  Rng crop_rng(derive_seed(cfg.seed, "refiner/crops"));
  std::vector<std::size_t> order(images.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle(derive_seed(cfg.seed, "refiner/epoch/" + std::to_string(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      TensorF total;
      for (std::size_t k = start; k < end; ++k) {
        TensorF l = image_loss(refiner, teacher, images[order[k]], crop_rng, cfg);
        total = total.defined() ? num::add(total, l) : l;
      }
      total = num::mul_scalar(total, 1.0f / static_cast<float>((end - start) * cfg.crops));
      const double value = total.item();
      if (!std::isfinite(value)) {
        throw num::NonFiniteError("train_refiner: non-finite loss at step " + std::to_string(step));
      }
      opt->zero_grad();
      total.backward();
      opt->step();
      RefinerStep rec{step++, value, opt->lr()};
      result.steps.push_back(rec);
      if (on_step) on_step(rec);
    }
  }
  result.heldout_after = heldout_loss(refiner, teacher, heldout, cfg, eval_seed);
  return result;
}

}  // namespace scd::refiner
