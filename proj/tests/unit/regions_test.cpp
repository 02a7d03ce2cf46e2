#include <gtest/gtest.h>

#include <cmath>

#include "scd/numerics/grad_check.hpp"
#include "scd/numerics/ops.hpp"
#include "scd/regions/regions.hpp"
#include "scd/vit/encoder.hpp"
#include "test_support.hpp"

using namespace scd;
using num::TensorD;
using num::TensorF;
using regions::Box;
using scd::testing::random_image;
using scd::testing::random_tensor;
using vit::FeatureMap;

namespace {

FeatureMap make_map(const TensorF& tokens, std::size_t gh, std::size_t gw) {
  FeatureMap f;
  f.tokens = tokens;
  f.grid_h = gh;
  f.grid_w = gw;
  return f;
}

// Random box covering at least one token cell.
Box random_box(Rng& rng, std::size_t gh, std::size_t gw) {
  const double w = rng.uniform(1.0 / static_cast<double>(gw), 1.0);
  const double h = rng.uniform(1.0 / static_cast<double>(gh), 1.0);
  const double x0 = rng.uniform(0.0, 1.0 - w), y0 = rng.uniform(0.0, 1.0 - h);
  return {x0, y0, std::min(1.0, x0 + w), std::min(1.0, y0 + h)};
}

std::vector<double> as_double(std::span<const float> v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(RoiAlign, WholeBoxAtGridResolutionIsIdentity) {
  Rng rng(1);
  auto t = random_tensor<float>(rng, {64, 5});
  auto out = regions::roi_align(make_map(t, 8, 8), Box::whole(), 8, 8);
  ASSERT_EQ(out.tokens.shape(), t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(out.tokens.data()[i], t.data()[i]);
  EXPECT_FALSE(out.has_cls());
}

TEST(RoiAlign, ConstantFieldStaysConstant) {
  auto t = TensorF::full({12, 3}, 0.75f);
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    auto out = regions::roi_align(make_map(t, 3, 4), random_box(rng, 3, 4), 3, 5);
    for (float v : out.tokens.data()) EXPECT_FLOAT_EQ(v, 0.75f);
  }
}

TEST(RoiAlign, RampLeftHalfMatchesOracle) {
  std::vector<float> ramp(16);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) ramp[r * 4 + c] = static_cast<float>(c);
  auto out = regions::roi_align(make_map(TensorF::from_data({16, 1}, ramp), 4, 4), {0, 0, 0.5, 1}, 2, 2);
  auto want = scd::testing::naive_roi_align({ramp.begin(), ramp.end()}, 4, 4, 1, 0, 0, 0.5, 1, 2, 2);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.tokens.data()[i], want[i], 1e-6);
  // Column centres at token x = 0.0 and 1.0.
  EXPECT_NEAR(out.tokens.data()[0], 0.0, 1e-6);
  EXPECT_NEAR(out.tokens.data()[1], 1.0, 1e-6);
}

TEST(RoiAlign, RandomCasesMatchOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto gh = static_cast<std::size_t>(rng.uniform_int(1, 8));
    const auto gw = static_cast<std::size_t>(rng.uniform_int(1, 8));
    const auto oh = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto ow = static_cast<std::size_t>(rng.uniform_int(1, 6));
    auto t = random_tensor<float>(rng, {gh * gw, 3});
    const Box b = random_box(rng, gh, gw);
    auto out = regions::roi_align(make_map(t, gh, gw), b, oh, ow);
    auto want = scd::testing::naive_roi_align(as_double(t.data()), gh, gw, 3, b.x0, b.y0, b.x1, b.y1, oh, ow);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(out.tokens.data()[i], want[i], 1e-6);
  }
}

TEST(RoiAlign, IsLinearInTheField) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = random_tensor<float>(rng, {30, 4});
    auto g = random_tensor<float>(rng, {30, 4});
    const Box b = random_box(rng, 5, 6);
    const float a = 0.7f, c = -1.3f;
    auto mix = num::add(num::mul_scalar(f, a), num::mul_scalar(g, c));
    auto lhs = regions::roi_align(make_map(mix, 5, 6), b, 3, 3).tokens;
    auto rf = regions::roi_align(make_map(f, 5, 6), b, 3, 3).tokens;
    auto rg = regions::roi_align(make_map(g, 5, 6), b, 3, 3).tokens;
    for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs.data()[i], a * rf.data()[i] + c * rg.data()[i], 1e-6);
  }
}

TEST(RoiAlign, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto gh = static_cast<std::size_t>(rng.uniform_int(1, 5));
    const auto gw = static_cast<std::size_t>(rng.uniform_int(1, 5));
    const Box b = random_box(rng, gh, gw);
    const auto pts = regions::roi_sample_points(b, gh, gw, 3, 2);
    auto c = random_tensor<double>(rng, {6, 2});
    auto field = random_tensor<double>(rng, {gh * gw, 2});
    auto rep = num::grad_check(
        [&](const TensorD& x) { return num::sum(num::mul(num::bilinear_sample(x, gh, gw, pts), c)); }, field);
    EXPECT_LT(rep.max_rel_error, 1e-4);
  }
}

TEST(RoiAlign, RejectsDegenerateBoxes) {
  auto f = make_map(TensorF::zeros({64, 2}), 8, 8);
  EXPECT_THROW(regions::roi_align(f, {0.5, 0.5, 0.5, 0.9}, 2, 2), std::invalid_argument);
  EXPECT_THROW(regions::roi_align(f, {0.1, 0.1, 0.15, 0.15}, 2, 2), std::invalid_argument);
  EXPECT_THROW(regions::roi_align(f, Box::whole(), 0, 2), std::invalid_argument);
  EXPECT_NO_THROW(regions::roi_align(f, {0, 0, 0.125, 0.125}, 2, 2));
}

TEST(RoiPool, ConstantAndWholeGridMean) {
  EXPECT_FLOAT_EQ(regions::roi_pool(make_map(TensorF::full({9, 2}, 2.5f), 3, 3), {0.2, 0.1, 0.9, 0.8}).data()[1], 2.5f);
  auto t = TensorF::from_data({4, 1}, {1, 2, 3, 10});
  EXPECT_NEAR(regions::roi_pool(make_map(t, 2, 2), Box::whole()).item(), 4.0, 1e-6);
}

TEST(RoiPool, MatchesOracleMean) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto t = random_tensor<float>(rng, {48, 3});
    const Box b = random_box(rng, 6, 8);
    auto pooled = regions::roi_pool(make_map(t, 6, 8), b, 4);
    auto cells = scd::testing::naive_roi_align(as_double(t.data()), 6, 8, 3, b.x0, b.y0, b.x1, b.y1, 4, 4);
    for (std::size_t k = 0; k < 3; ++k) {
      double m = 0;
      for (std::size_t i = 0; i < 16; ++i) m += cells[i * 3 + k] / 16;
      EXPECT_NEAR(pooled.data()[k], m, 1e-6);
    }
  }
}

TEST(Proposals, RespectScaleAndBounds) {
  Rng rng(7);
  auto batch = regions::sample_proposals(rng, 4, {0.3, 0.7}, {0.5, 2.0});
  ASSERT_EQ(batch.boxes.size(), 4u);
  EXPECT_EQ(batch.source, regions::ProposalSource::random);
  for (const auto& b : batch.boxes) {
    EXPECT_TRUE(b.valid());
    EXPECT_GE(b.area(), 0.3 - 1e-12);
    EXPECT_LE(b.area(), 0.7 + 1e-12);
    EXPECT_GE(b.width() / b.height(), 0.5 - 1e-9);
    EXPECT_LE(b.width() / b.height(), 2.0 + 1e-9);
  }
}

TEST(Proposals, UnitScaleGivesWholeImage) {
  Rng rng(8);
  auto batch = regions::sample_proposals(rng, 2, {1, 1}, {1, 1});
  for (const auto& b : batch.boxes) EXPECT_EQ(b, Box::whole());
}

TEST(Proposals, DeterministicAndInfeasibleThrows) {
  Rng a(9), b(9);
  auto ba = regions::sample_proposals(a, 8, {0.3, 0.7}, {0.5, 2});
  auto bb = regions::sample_proposals(b, 8, {0.3, 0.7}, {0.5, 2});
  EXPECT_EQ(ba.boxes, bb.boxes);
  Rng c(10);
  EXPECT_THROW(regions::sample_proposals(c, 1, {0.9, 1.0}, {4, 8}), std::runtime_error);
  EXPECT_THROW(regions::sample_proposals(c, 1, {0.0, 1.0}, {1, 1}), std::invalid_argument);
}

TEST(CropImage, WholeBoxSameSizeIsIdentity) {
  Rng rng(11);
  const Image img = random_image(rng);
  EXPECT_EQ(regions::crop_image(img, Box::whole(), 64, 64), img);
}

TEST(CropImage, PatchAlignedBoxWithoutResizeIsExactSubarray) {
  Rng rng(12);
  const Image img = random_image(rng);
  const Box b = regions::grid_box(1, 2, 5, 4, 8, 8);  // rows 8..39, cols 16..31
  const Image crop = regions::crop_image(img, b, 32, 16);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 16; ++x) ASSERT_EQ(crop.at(c, y, x), img.at(c, 8 + y, 16 + x));
}

TEST(CropImage, ResizeMatchesNaiveOracle) {
  Rng rng(13);
  const Image img = random_image(rng, 16, 16);
  for (int trial = 0; trial < 10; ++trial) {
    const Box b = random_box(rng, 4, 4);
    const Image crop = regions::crop_image(img, b, 8, 8);
    std::vector<double> field(16 * 16 * 3);
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x)
        for (std::size_t c = 0; c < 3; ++c) field[(y * 16 + x) * 3 + c] = img.at(c, y, x);
    auto want = scd::testing::naive_roi_align(field, 16, 16, 3, b.x0, b.y0, b.x1, b.y1, 8, 8);
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(crop.at(c, y, x), want[(y * 8 + x) * 3 + c], 1e-6);
  }
  EXPECT_THROW(regions::crop_image(img, {0.5, 0, 0.4, 1}, 8, 8), std::invalid_argument);
}

TEST(ComposeContext, PastesTargetAtPatchAlignedOffset) {
  Rng rng(14);
  const Image target = random_image(rng, 24, 16);
  const Image context = random_image(rng, 64, 64);
  for (int trial = 0; trial < 20; ++trial) {
    auto comp = regions::compose_context(target, context, rng, 8);
    const Box& p = comp.placement;
    EXPECT_TRUE(p.valid());
    const auto oy = static_cast<std::size_t>(std::lround(p.y0 * 64));
    const auto ox = static_cast<std::size_t>(std::lround(p.x0 * 64));
    EXPECT_EQ(oy % 8, 0u);
    EXPECT_EQ(ox % 8, 0u);
    EXPECT_DOUBLE_EQ(p.width() * 64, 16.0);
    EXPECT_DOUBLE_EQ(p.height() * 64, 24.0);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x < 64; ++x) {
          const bool inside = y >= oy && y < oy + 24 && x >= ox && x < ox + 16;
          ASSERT_EQ(comp.image.at(c, y, x), inside ? target.at(c, y - oy, x - ox) : context.at(c, y, x));
        }
  }
  EXPECT_THROW(regions::compose_context(context, target, rng, 8), std::invalid_argument);
  EXPECT_THROW(regions::compose_context(random_image(rng, 12, 16), context, rng, 8), std::invalid_argument);
}

TEST(ComposeContext, SubmapGridMatchesTargetGrid) {
  vit::Encoder enc(vit::EncoderConfig{}, 3);
  enc.set_frozen(true);
  Rng rng(15);
  const Image target = random_image(rng, 32, 32);
  auto comp = regions::compose_context(target, random_image(rng), rng, 8);
  auto whole = enc.forward(comp.image);
  auto alone = enc.forward(target);
  auto sub = regions::roi_align(whole, comp.placement, alone.grid_h, alone.grid_w);
  EXPECT_EQ(sub.grid_h, 4u);
  EXPECT_EQ(sub.grid_w, 4u);
  EXPECT_EQ(sub.tokens.shape(), alone.tokens.shape());
}

TEST(ComposeContext, DepthZeroEncoderSubmapEqualsTargetTokens) {
  vit::EncoderConfig cfg;
  cfg.depth = 0;
  cfg.split_k = cfg.tap_l1 = cfg.tap_l2 = 0;
  vit::Encoder enc(cfg, 3);
  for (auto& p : enc.parameters()) {
    if (p.name == "vit.pos") {
      for (auto& v : p.tensor.mutable_data()) v = 0.0f;
    }
  }
  enc.set_frozen(true);
  Rng rng(16);
  const Image target = random_image(rng, 32, 32);
  for (int trial = 0; trial < 5; ++trial) {
    auto comp = regions::compose_context(target, random_image(rng), rng, 8);
    auto sub = regions::roi_align(enc.forward(comp.image), comp.placement, 4, 4);
    auto alone = enc.forward(target);
    for (std::size_t i = 0; i < sub.tokens.numel(); ++i) ASSERT_EQ(sub.tokens.data()[i], alone.tokens.data()[i]);
  }
}
