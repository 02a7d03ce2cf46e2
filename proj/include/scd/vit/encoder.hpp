#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "scd/image.hpp"
#include "scd/numerics/tensor.hpp"
#include "scd/rng.hpp"

namespace scd::vit {

using num::TensorF;

struct EncoderConfig {
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t dim = 32;
  std::size_t depth = 6;
  std::size_t heads = 4;
  /// Number of late blocks forming stage B.
  std::size_t split_k = 2;
  /// Tap indices count blocks: tap l is the residual stream after block l
  /// (tap 0 is the patch embedding).
  std::size_t tap_l1 = 2;
  std::size_t tap_l2 = 4;
  std::size_t mlp_ratio = 4;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t tokens() const { return grid() * grid(); }
  std::size_t mlp_hidden() const { return dim * mlp_ratio; }

  /// Throws std::invalid_argument on inconsistent settings. A depth-0
  /// encoder (patch embedding only) requires split_k = 0 and taps (0, 0).
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Per-image token field: optional class token plus a row-major grid of
/// D-dimensional patch tokens.
struct FeatureMap {
  TensorF cls;     // [1 × D], undefined when absent
  TensorF tokens;  // [grid_h·grid_w × D]
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;

  bool has_cls() const { return cls.defined(); }
  std::size_t length() const { return grid_h * grid_w; }
  std::size_t dim() const { return tokens.cols(); }
};

/// Stage-A output with the intermediate taps the refiner consumes.
struct StageA {
  FeatureMap features;
  TensorF tap1;  // patch tokens after block tap_l1
  TensorF tap2;  // patch tokens after block tap_l2
};

/// Optional side outputs of a forward pass.
struct ForwardTrace {
  /// Attention probabilities of the final block, one [T × T] map per head
  /// (T = 1 + patch tokens).
  std::vector<TensorF> last_attention;
};

/// Pre-norm transformer block: x += Attn(LN(x)); x += MLP(LN(x)).
struct Block {
  TensorF ln1_g, ln1_b;
  TensorF wqkv, bqkv;
  TensorF wo, bo;
  TensorF ln2_g, ln2_b;
  TensorF w1, b1;
  TensorF w2, b2;

  static Block init(Rng& rng, std::size_t dim, std::size_t hidden, bool trainable);
  TensorF forward(const TensorF& x, std::size_t heads, std::vector<TensorF>* attention = nullptr) const;
  Block clone() const;
  void collect(const std::string& prefix, num::ParameterList& out) const;
};

/// A run of blocks followed by the output LayerNorm: stage B of an encoder
/// and the trunk of a refiner.
class BlockStack {
 public:
  BlockStack() = default;
  BlockStack(std::vector<Block> blocks, TensorF norm_g, TensorF norm_b, std::size_t heads);

  /// Fresh randomly initialized stack (used for refiner ablations).
  static BlockStack random(Rng& rng, std::size_t count, std::size_t dim, std::size_t hidden, std::size_t heads,
                           bool trainable);

  /// Runs [cls; tokens] (cls optional) through the blocks and the output norm.
  FeatureMap forward(const FeatureMap& in, ForwardTrace* trace = nullptr) const;
  /// Deep copy with independent storage.
  BlockStack clone() const;
  /// Parameters named <prefix>.block{first_index + i}.* and <prefix>.norm.*.
  num::ParameterList parameters(const std::string& prefix, std::size_t first_index = 0) const;
  std::size_t size() const { return blocks_.size(); }
  std::size_t heads() const { return heads_; }

 private:
  std::vector<Block> blocks_;
  TensorF norm_g_, norm_b_;
  std::size_t heads_ = 1;
};

/// Miniature ViT encoder split as stage B ∘ stage A, where stage B is the
/// final split_k blocks plus the output norm.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }

  FeatureMap forward(const Image& image, ForwardTrace* trace = nullptr) const;
  StageA forward_a(const Image& image) const;
  FeatureMap forward_b(const FeatureMap& features, ForwardTrace* trace = nullptr) const;

  /// Flattened patches [L × 3·p²] in (channel, row, col) order per patch.
  TensorF patchify(const Image& image) const;
  BlockStack clone_late_blocks() const { return late_.clone(); }
  /// Deep copy of the whole encoder (student initialization).
  Encoder clone() const;

  /// All parameters under the "vit." prefix, in a stable order.
  num::ParameterList parameters() const;
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }

 private:
  Encoder() = default;
  void check_image(const Image& image) const;

  EncoderConfig config_;
  TensorF patch_w_, patch_b_;
  TensorF cls_, pos_;
  std::vector<Block> early_;
  BlockStack late_;
  bool frozen_ = false;
};

}  // namespace scd::vit
