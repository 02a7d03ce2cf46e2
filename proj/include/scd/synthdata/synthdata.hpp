#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "scd/image.hpp"
#include "scd/numerics/tensor.hpp"
#include "scd/regions/regions.hpp"

namespace scd::data {

enum class ShapeKind : std::uint8_t { circle, square, triangle, cross };
enum class Texture : std::uint8_t { stripes, checker, noise, gradient };

inline constexpr std::size_t kShapeKinds = 4;
inline constexpr std::size_t kColorBuckets = 3;
inline constexpr std::size_t kThingClasses = kShapeKinds * kColorBuckets;
inline constexpr std::size_t kStuffClasses = 4;
inline constexpr std::size_t kNumClasses = kThingClasses + kStuffClasses;

/// Thing ids are shape·3 + color (0..11); stuff ids follow (12..15).
inline std::uint8_t thing_class(ShapeKind s, std::size_t color) {
  return static_cast<std::uint8_t>(static_cast<std::size_t>(s) * kColorBuckets + color);
}
inline std::uint8_t stuff_class(Texture t) { return static_cast<std::uint8_t>(kThingClasses + static_cast<std::size_t>(t)); }
inline bool is_stuff(std::size_t label) { return label >= kThingClasses; }

struct Instance {
  regions::Box box;
  std::uint8_t label = 0;
};

struct Scene {
  Image image;                             // 3 × S × S, values k/255
  std::vector<std::uint8_t> pixel_labels;  // S × S
  std::vector<std::uint8_t> patch_labels;  // G × G, majority of pixel labels
  std::vector<Instance> instances;
  std::vector<float> histogram;  // patch-label frequencies, length kNumClasses
  std::uint8_t background = 0;   // stuff class of the texture

  std::size_t grid() const;
};

struct GeneratorParams {
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t min_shapes = 2;
  std::size_t max_shapes = 5;
  std::size_t min_extent = 2;  // shape side in patches
  std::size_t max_extent = 3;
  double val_fraction = 0.1;
  double test_fraction = 0.1;

  void validate() const;
};

struct Dataset {
  std::vector<Scene> train, val, test;
};

/// Renders one scene. Returns false when some shape could not be placed in
/// 100 trials.
bool render_scene(Rng& rng, const GeneratorParams& params, Scene& out);

/// `count` scenes split train/val/test by index order. Scene i draws from
/// its own sub-seed; unplaceable scenes retry with the next sub-seed.
Dataset generate(std::uint64_t seed, std::size_t count, const GeneratorParams& params = {});

/// Majority pixel label per patch; ties go to the smaller id.
std::vector<std::uint8_t> majority_patch_labels(const std::vector<std::uint8_t>& pixel_labels, std::size_t image_size,
                                                std::size_t patch_size);

/// Class of a single pixel recoverable from its colour: 0..2 for the colour
/// bucket of a thing, -1 for gray background.
int decode_color_bucket(const Image& image, std::size_t y, std::size_t x);

std::vector<float> histogram(const std::vector<std::uint8_t>& patch_labels);

/// K unit vectors in D dims with pairwise |cos| < 0.3.
struct ClassPrototypes {
  std::size_t k = 0, d = 0;
  std::vector<float> values;  // k × d

  num::TensorF matrix() const { return num::TensorF::from_data({k, d}, values); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * d, d}; }
};

inline constexpr double kPrototypeMaxCos = 0.3;

/// Throws std::runtime_error after 10,000 rejected draws.
ClassPrototypes prototypes(std::uint64_t seed, std::size_t k, std::size_t d);

}  // namespace scd::data
