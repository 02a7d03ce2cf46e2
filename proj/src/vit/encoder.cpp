#include "scd/vit/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "scd/numerics/ops.hpp"

namespace scd::vit {

namespace {

constexpr double kInitSigma = 0.02;

TensorF trunc_normal(Rng& rng, num::Shape shape, bool trainable) {
  std::vector<float> data(num::shape_numel(shape));
  for (auto& v : data) v = static_cast<float>(rng.truncated_normal(kInitSigma));
  return TensorF::from_data(std::move(shape), std::move(data), trainable);
}

TensorF filled(std::size_t n, float value, bool trainable) { return TensorF::full({n}, value, trainable); }

// Output-norm gain starts at 1/√D so dense tokens begin near unit norm and
// raw inner products stay O(1) under correlation temperatures around 0.2.
float output_norm_gain(std::size_t dim) { return 1.0f / std::sqrt(static_cast<float>(dim)); }

void set_trainable(num::ParameterList params, bool on) {
  for (auto& p : params) p.tensor.set_requires_grad(on);
}

}  // namespace

void EncoderConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("EncoderConfig: " + msg); };
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0)
    fail("image_size must be a positive multiple of patch_size");
  if (dim == 0 || heads == 0 || dim % heads != 0) fail("dim must be a positive multiple of heads");
  if (mlp_ratio == 0) fail("mlp_ratio must be positive");
  if (depth == 0) {
    if (split_k != 0 || tap_l1 != 0 || tap_l2 != 0) fail("depth-0 encoder requires split_k = 0 and taps (0, 0)");
    return;
  }
  if (split_k < 1 || split_k >= depth) fail("require 1 <= split_k < depth");
  if (!(tap_l1 < tap_l2 && tap_l2 <= depth - split_k)) fail("require l1 < l2 <= depth - split_k");
}

// --- Block ----------------------------------------------------------------

Block Block::init(Rng& rng, std::size_t dim, std::size_t hidden, bool trainable) {
  Block b;
  b.ln1_g = filled(dim, 1.0f, trainable);
  b.ln1_b = filled(dim, 0.0f, trainable);
  b.wqkv = trunc_normal(rng, {dim, 3 * dim}, trainable);
  b.bqkv = filled(3 * dim, 0.0f, trainable);
  b.wo = trunc_normal(rng, {dim, dim}, trainable);
  b.bo = filled(dim, 0.0f, trainable);
  b.ln2_g = filled(dim, 1.0f, trainable);
  b.ln2_b = filled(dim, 0.0f, trainable);
  b.w1 = trunc_normal(rng, {dim, hidden}, trainable);
  b.b1 = filled(hidden, 0.0f, trainable);
  b.w2 = trunc_normal(rng, {hidden, dim}, trainable);
  b.b2 = filled(dim, 0.0f, trainable);
  return b;
}

TensorF Block::forward(const TensorF& x, std::size_t heads, std::vector<TensorF>* attention) const {
  const std::size_t d = x.cols();
  const std::size_t dh = d / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  const TensorF qkv = num::linear(num::layer_norm_rows(x, ln1_g, ln1_b), wqkv, bqkv);
  std::vector<TensorF> per_head;
  per_head.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const TensorF q = num::slice_cols(qkv, h * dh, (h + 1) * dh);
    const TensorF k = num::slice_cols(qkv, d + h * dh, d + (h + 1) * dh);
    const TensorF v = num::slice_cols(qkv, 2 * d + h * dh, 2 * d + (h + 1) * dh);
    const TensorF probs = num::softmax_rows(num::mul_scalar(num::matmul_nt(q, k), scale));
    if (attention) attention->push_back(probs);
    per_head.push_back(num::matmul(probs, v));
  }
  TensorF out = num::add(x, num::linear(num::concat_cols(per_head), wo, bo));
  const TensorF hidden = num::gelu(num::linear(num::layer_norm_rows(out, ln2_g, ln2_b), w1, b1));
  return num::add(out, num::linear(hidden, w2, b2));
}

Block Block::clone() const {
  return Block{ln1_g.clone(), ln1_b.clone(), wqkv.clone(), bqkv.clone(), wo.clone(), bo.clone(),
               ln2_g.clone(), ln2_b.clone(), w1.clone(),   b1.clone(),   w2.clone(), b2.clone()};
}

void Block::collect(const std::string& prefix, num::ParameterList& out) const {
  out.push_back({prefix + ".ln1.g", ln1_g, false});
  out.push_back({prefix + ".ln1.b", ln1_b, false});
  out.push_back({prefix + ".attn.wqkv", wqkv, true});
  out.push_back({prefix + ".attn.bqkv", bqkv, false});
  out.push_back({prefix + ".attn.wo", wo, true});
  out.push_back({prefix + ".attn.bo", bo, false});
  out.push_back({prefix + ".ln2.g", ln2_g, false});
  out.push_back({prefix + ".ln2.b", ln2_b, false});
  out.push_back({prefix + ".mlp.w1", w1, true});
  out.push_back({prefix + ".mlp.b1", b1, false});
  out.push_back({prefix + ".mlp.w2", w2, true});
  out.push_back({prefix + ".mlp.b2", b2, false});
}

// --- BlockStack -----------------------------------------------------------

BlockStack::BlockStack(std::vector<Block> blocks, TensorF norm_g, TensorF norm_b, std::size_t heads)
    : blocks_(std::move(blocks)), norm_g_(std::move(norm_g)), norm_b_(std::move(norm_b)), heads_(heads) {}

BlockStack BlockStack::random(Rng& rng, std::size_t count, std::size_t dim, std::size_t hidden, std::size_t heads,
                              bool trainable) {
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < count; ++i) blocks.push_back(Block::init(rng, dim, hidden, trainable));
  return BlockStack(std::move(blocks), filled(dim, output_norm_gain(dim), trainable), filled(dim, 0.0f, trainable),
                    heads);
}

FeatureMap BlockStack::forward(const FeatureMap& in, ForwardTrace* trace) const {
  TensorF x = in.has_cls() ? num::concat_rows<float>({in.cls, in.tokens}) : in.tokens;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const bool last = i + 1 == blocks_.size();
    x = blocks_[i].forward(x, heads_, (trace && last) ? &trace->last_attention : nullptr);
  }
  x = num::layer_norm_rows(x, norm_g_, norm_b_);
  FeatureMap out;
  out.grid_h = in.grid_h;
  out.grid_w = in.grid_w;
  if (in.has_cls()) {
    out.cls = num::slice_rows(x, 0, 1);
    out.tokens = num::slice_rows(x, 1, x.rows());
  } else {
    out.tokens = x;
  }
  return out;
}

BlockStack BlockStack::clone() const {
  std::vector<Block> blocks;
  blocks.reserve(blocks_.size());
  for (const auto& b : blocks_) blocks.push_back(b.clone());
  return BlockStack(std::move(blocks), norm_g_.clone(), norm_b_.clone(), heads_);
}

num::ParameterList BlockStack::parameters(const std::string& prefix, std::size_t first_index) const {
  num::ParameterList out;
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].collect(prefix + ".block" + std::to_string(first_index + i), out);
  out.push_back({prefix + ".norm.g", norm_g_, false});
  out.push_back({prefix + ".norm.b", norm_b_, false});
  return out;
}

// --- Encoder --------------------------------------------------------------

Encoder::Encoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.dim;
  const std::size_t patch_dim = 3 * config_.patch_size * config_.patch_size;
  patch_w_ = trunc_normal(rng, {patch_dim, d}, true);
  patch_b_ = filled(d, 0.0f, true);
  cls_ = trunc_normal(rng, {1, d}, true);
  pos_ = trunc_normal(rng, {config_.tokens(), d}, true);
  // Blocks are drawn in order from one stream so parameters do not depend on
  // where the stage split falls.
  std::vector<Block> late;
  for (std::size_t i = 0; i < config_.depth; ++i) {
    Block b = Block::init(rng, d, config_.mlp_hidden(), true);
    if (i < config_.depth - config_.split_k) {
      early_.push_back(std::move(b));
    } else {
      late.push_back(std::move(b));
    }
  }
  late_ = BlockStack(std::move(late), filled(d, output_norm_gain(d), true), filled(d, 0.0f, true), config_.heads);
}

void Encoder::check_image(const Image& image) const {
  const std::size_t p = config_.patch_size, s = config_.image_size;
  auto ok_extent = [&](std::size_t e) { return e > 0 && e % p == 0 && (e <= s || e % s == 0); };
  if (image.channels != 3 || !ok_extent(image.height) || !ok_extent(image.width) ||
      image.pixels.size() != image.channels * image.height * image.width) {
    throw std::invalid_argument("encoder: image " + std::to_string(image.channels) + "x" +
                                std::to_string(image.height) + "x" + std::to_string(image.width) +
                                " does not fit patch " + std::to_string(p) + " / size " + std::to_string(s));
  }
}

TensorF Encoder::patchify(const Image& image) const {
  check_image(image);
  const std::size_t p = config_.patch_size;
  const std::size_t gh = image.height / p, gw = image.width / p;
  const std::size_t patch_dim = 3 * p * p;
  std::vector<float> out(gh * gw * patch_dim);
  for (std::size_t r = 0; r < gh; ++r)
    for (std::size_t c = 0; c < gw; ++c) {
      float* dst = out.data() + (r * gw + c) * patch_dim;
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x) *dst++ = image.at(ch, r * p + y, c * p + x);
    }
  return TensorF::from_data({gh * gw, patch_dim}, std::move(out));
}

StageA Encoder::forward_a(const Image& image) const {
  const TensorF patches = patchify(image);
  const std::size_t p = config_.patch_size, g = config_.grid();
  const std::size_t gh = image.height / p, gw = image.width / p;
  // Positional embeddings tile with period equal to the trained grid, which
  // covers both smaller inputs and side-by-side concatenations.
  std::vector<std::size_t> pos_index(gh * gw);
  for (std::size_t r = 0; r < gh; ++r)
    for (std::size_t c = 0; c < gw; ++c) pos_index[r * gw + c] = (r % g) * g + (c % g);

  TensorF tokens = num::add(num::linear(patches, patch_w_, patch_b_), num::gather_rows(pos_, pos_index));
  TensorF x = num::concat_rows<float>({cls_, tokens});

  StageA out;
  auto take_tap = [&](std::size_t after_blocks, const TensorF& stream) {
    if (after_blocks == config_.tap_l1) out.tap1 = num::slice_rows(stream, 1, stream.rows());
    if (after_blocks == config_.tap_l2) out.tap2 = num::slice_rows(stream, 1, stream.rows());
  };
  take_tap(0, x);
  for (std::size_t i = 0; i < early_.size(); ++i) {
    x = early_[i].forward(x, config_.heads);
    take_tap(i + 1, x);
  }
  out.features.cls = num::slice_rows(x, 0, 1);
  out.features.tokens = num::slice_rows(x, 1, x.rows());
  out.features.grid_h = gh;
  out.features.grid_w = gw;
  return out;
}

FeatureMap Encoder::forward_b(const FeatureMap& features, ForwardTrace* trace) const {
  if (!features.has_cls() || features.dim() != config_.dim || features.length() != features.tokens.rows()) {
    throw std::invalid_argument("forward_b: feature map does not come from a stage A of this configuration");
  }
  return late_.forward(features, trace);
}

FeatureMap Encoder::forward(const Image& image, ForwardTrace* trace) const {
  return forward_b(forward_a(image).features, trace);
}

Encoder Encoder::clone() const {
  Encoder e;
  e.config_ = config_;
  e.patch_w_ = patch_w_.clone();
  e.patch_b_ = patch_b_.clone();
  e.cls_ = cls_.clone();
  e.pos_ = pos_.clone();
  for (const auto& b : early_) e.early_.push_back(b.clone());
  e.late_ = late_.clone();
  e.frozen_ = frozen_;
  return e;
}

num::ParameterList Encoder::parameters() const {
  num::ParameterList out;
  out.push_back({"vit.patch.w", patch_w_, true});
  out.push_back({"vit.patch.b", patch_b_, false});
  out.push_back({"vit.cls", cls_, false});
  out.push_back({"vit.pos", pos_, false});
  for (std::size_t i = 0; i < early_.size(); ++i) early_[i].collect("vit.block" + std::to_string(i), out);
  auto late = late_.parameters("vit", early_.size());
  out.insert(out.end(), late.begin(), late.end());
  return out;
}

void Encoder::set_frozen(bool frozen) {
  frozen_ = frozen;
  set_trainable(parameters(), !frozen);
}

}  // namespace scd::vit
