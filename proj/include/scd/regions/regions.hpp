#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "scd/image.hpp"
#include "scd/numerics/ops.hpp"
#include "scd/rng.hpp"
#include "scd/vit/encoder.hpp"

namespace scd::regions {

using vit::FeatureMap;

/// Axis-aligned region in normalized image coordinates ([0,1] on both axes).
struct Box {
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;

  static Box whole() { return {}; }
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool valid() const { return 0 <= x0 && x0 < x1 && x1 <= 1 && 0 <= y0 && y0 < y1 && y1 <= 1; }
  bool operator==(const Box&) const = default;
};

enum class ProposalSource { ground_truth, random, whole_image };

struct ProposalBatch {
  std::vector<Box> boxes;
  ProposalSource source = ProposalSource::random;
};

struct Range {
  double lo = 0, hi = 0;
};

/// Throws std::invalid_argument naming the caller when the box is invalid.
void require_valid(const Box& box, const std::string& who);

/// Token-grid sample sites used by roi_align: one per output cell centre.
/// Throws on degenerate boxes.
std::vector<num::SamplePoint> roi_sample_points(const Box& box, std::size_t grid_h, std::size_t grid_w,
                                                std::size_t out_h, std::size_t out_w);

/// Bilinear sample of the token grid at the centre of each of out_h × out_w
/// cells covering the box, treating token centres as sample sites. Output
/// carries no class token. Differentiable w.r.t. the feature tokens.
FeatureMap roi_align(const FeatureMap& feat, const Box& box, std::size_t out_h, std::size_t out_w);

/// Mean of roi_align(feat, box, (r, r)) cells → [1 × D].
vit::TensorF roi_pool(const FeatureMap& feat, const Box& box, std::size_t resolution = 4);

/// `count` boxes with area ratio in `scale`, aspect (w/h) log-uniform in
/// `aspect`, fully inside the image. Throws std::runtime_error when 1000
/// consecutive draws fail the constraints.
ProposalBatch sample_proposals(Rng& rng, std::size_t count, Range scale, Range aspect);

/// Pixel crop of `box`, bilinearly resized to out_h × out_w.
Image crop_image(const Image& image, const Box& box, std::size_t out_h, std::size_t out_w);

struct Composition {
  Image image;
  Box placement;
};

/// Pastes `target` into `context` at a random patch-aligned offset.
Composition compose_context(const Image& target, const Image& context, Rng& rng, std::size_t patch_size);

/// Box whose edges lie on the token grid: rows [r0, r1) and cols [c0, c1) of
/// a grid_h × grid_w grid.
Box grid_box(std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1, std::size_t grid_h, std::size_t grid_w);

}  // namespace scd::regions
