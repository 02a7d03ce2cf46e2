#include "scd/regions/regions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "scd/numerics/ops.hpp"

namespace scd::regions {

void require_valid(const Box& box, const std::string& who) {
  if (!box.valid()) {
    throw std::invalid_argument(who + ": invalid box (" + std::to_string(box.x0) + ", " + std::to_string(box.y0) +
                                ", " + std::to_string(box.x1) + ", " + std::to_string(box.y1) + ")");
  }
}

std::vector<num::SamplePoint> roi_sample_points(const Box& box, std::size_t grid_h, std::size_t grid_w,
                                                std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("roi_align: output dims must be >= 1");
  const double x0 = std::clamp(box.x0, 0.0, 1.0), x1 = std::clamp(box.x1, 0.0, 1.0);
  const double y0 = std::clamp(box.y0, 0.0, 1.0), y1 = std::clamp(box.y1, 0.0, 1.0);
  const auto gh = static_cast<double>(grid_h), gw = static_cast<double>(grid_w);
  if (x1 <= x0 || y1 <= y0 || (x1 - x0) * gw * (y1 - y0) * gh < 1.0 - 1e-9) {
    throw std::invalid_argument("roi_align: degenerate box (covers less than one token cell)");
  }
  std::vector<num::SamplePoint> points;
  points.reserve(out_h * out_w);
  for (std::size_t i = 0; i < out_h; ++i) {
    const double ny = y0 + (static_cast<double>(i) + 0.5) / static_cast<double>(out_h) * (y1 - y0);
    for (std::size_t j = 0; j < out_w; ++j) {
      const double nx = x0 + (static_cast<double>(j) + 0.5) / static_cast<double>(out_w) * (x1 - x0);
      points.push_back({ny * gh - 0.5, nx * gw - 0.5});
    }
  }
  return points;
}

FeatureMap roi_align(const FeatureMap& feat, const Box& box, std::size_t out_h, std::size_t out_w) {
  const auto points = roi_sample_points(box, feat.grid_h, feat.grid_w, out_h, out_w);
  FeatureMap out;
  out.tokens = num::bilinear_sample(feat.tokens, feat.grid_h, feat.grid_w, points);
  out.grid_h = out_h;
  out.grid_w = out_w;
  return out;
}

vit::TensorF roi_pool(const FeatureMap& feat, const Box& box, std::size_t resolution) {
  return num::mean_axis(roi_align(feat, box, resolution, resolution).tokens, 0);
}

ProposalBatch sample_proposals(Rng& rng, std::size_t count, Range scale, Range aspect) {
  if (!(0 < scale.lo && scale.lo <= scale.hi && scale.hi <= 1)) {
    throw std::invalid_argument("sample_proposals: require 0 < smin <= smax <= 1");
  }
  if (!(0 < aspect.lo && aspect.lo <= aspect.hi)) {
    throw std::invalid_argument("sample_proposals: require 0 < aspect_min <= aspect_max");
  }
  ProposalBatch batch;
  batch.source = ProposalSource::random;
  const double log_lo = std::log(aspect.lo), log_hi = std::log(aspect.hi);
  for (std::size_t n = 0; n < count; ++n) {
    bool placed = false;
    for (int trial = 0; trial < 1000 && !placed; ++trial) {
      const double s = rng.uniform(scale.lo, scale.hi);
      const double a = std::exp(rng.uniform(log_lo, log_hi));
      const double w = std::sqrt(s * a), h = std::sqrt(s / a);
      if (w > 1.0 || h > 1.0) continue;
      const double x0 = rng.uniform(0.0, 1.0 - w);
      const double y0 = rng.uniform(0.0, 1.0 - h);
      batch.boxes.push_back({x0, y0, std::min(1.0, x0 + w), std::min(1.0, y0 + h)});
      placed = true;
    }
    if (!placed) throw std::runtime_error("sample_proposals: constraints infeasible after 1000 trials");
  }
  return batch;
}

Image crop_image(const Image& image, const Box& box, std::size_t out_h, std::size_t out_w) {
  require_valid(box, "crop_image");
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("crop_image: output dims must be >= 1");
  Image out(image.channels, out_h, out_w);
  const auto H = static_cast<double>(image.height), W = static_cast<double>(image.width);
  const double bh = box.height() * H, bw = box.width() * W;
  for (std::size_t i = 0; i < out_h; ++i) {
    const double sy = std::clamp(box.y0 * H + (static_cast<double>(i) + 0.5) * bh / static_cast<double>(out_h) - 0.5,
                                 0.0, H - 1);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t j = 0; j < out_w; ++j) {
      const double sx = std::clamp(
          box.x0 * W + (static_cast<double>(j) + 0.5) * bw / static_cast<double>(out_w) - 0.5, 0.0, W - 1);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double v = (1 - fy) * ((1 - fx) * image.at(c, y0, x0) + fx * image.at(c, y0, x1)) +
                         fy * ((1 - fx) * image.at(c, y1, x0) + fx * image.at(c, y1, x1));
        out.at(c, i, j) = static_cast<float>(v);
      }
    }
  }
  return out;
}

Composition compose_context(const Image& target, const Image& context, Rng& rng, std::size_t patch_size) {
  if (target.channels != context.channels) throw std::invalid_argument("compose_context: channel mismatch");
  if (target.height % patch_size != 0 || target.width % patch_size != 0) {
    throw std::invalid_argument("compose_context: target dims must be multiples of the patch size");
  }
  if (target.height >= context.height || target.width >= context.width) {
    throw std::invalid_argument("compose_context: target too large for context");
  }
  const auto rows = static_cast<std::int64_t>((context.height - target.height) / patch_size);
  const auto cols = static_cast<std::int64_t>((context.width - target.width) / patch_size);
  const auto oy = static_cast<std::size_t>(rng.uniform_int(0, rows)) * patch_size;
  const auto ox = static_cast<std::size_t>(rng.uniform_int(0, cols)) * patch_size;

  Composition out{context, {}};
  for (std::size_t c = 0; c < target.channels; ++c)
    for (std::size_t y = 0; y < target.height; ++y)
      for (std::size_t x = 0; x < target.width; ++x) out.image.at(c, oy + y, ox + x) = target.at(c, y, x);
  const auto H = static_cast<double>(context.height), W = static_cast<double>(context.width);
  out.placement = {static_cast<double>(ox) / W, static_cast<double>(oy) / H,
                   static_cast<double>(ox + target.width) / W, static_cast<double>(oy + target.height) / H};
  return out;
}

Box grid_box(std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1, std::size_t grid_h, std::size_t grid_w) {
  return {static_cast<double>(c0) / static_cast<double>(grid_w), static_cast<double>(r0) / static_cast<double>(grid_h),
          static_cast<double>(c1) / static_cast<double>(grid_w), static_cast<double>(r1) / static_cast<double>(grid_h)};
}

}  // namespace scd::regions
