#include "scd/synthdata/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace scd::data {

namespace {

constexpr std::array<std::array<float, 3>, kColorBuckets> kBucketColors{{
    {0.85f, 0.15f, 0.15f},
    {0.15f, 0.80f, 0.20f},
    {0.20f, 0.25f, 0.90f},
}};

constexpr int kPlacementTrials = 100;

float quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::lround(c * 255.0)) / 255.0f;
}

// Inside-test for a shape occupying a side×side pixel square, at pixel
// centre (u, v) relative to its top-left corner.
bool covers(ShapeKind kind, double u, double v, double side) {
  const double c = side / 2.0;
  switch (kind) {
    case ShapeKind::circle: {
      const double r = c - 1.0;
      return (u - c) * (u - c) + (v - c) * (v - c) <= r * r;
    }
    case ShapeKind::square:
      return u >= 1.0 && u <= side - 1.0 && v >= 1.0 && v <= side - 1.0;
    case ShapeKind::triangle: {
      // Apex at top centre, base along the bottom edge.
      if (v < 1.0 || v > side - 1.0) return false;
      const double half = (v - 1.0) / (side - 2.0) * (c - 1.0);
      return std::abs(u - c) <= half;
    }
    case ShapeKind::cross: {
      const double arm = side / 6.0;
      return std::abs(u - c) <= arm || std::abs(v - c) <= arm;
    }
  }
  return false;
}

double texture_value(Texture t, std::size_t y, std::size_t x, double phase, double period, double angle, Rng& rng) {
  switch (t) {
    case Texture::stripes:
      return std::fmod(static_cast<double>(y) + phase, period) < period / 2 ? 0.35 : 0.65;
    case Texture::checker: {
      const auto cell = static_cast<std::size_t>(period / 2);
      return ((y / cell + x / cell) % 2 == 0) ? 0.38 : 0.62;
    }
    case Texture::noise:
      return rng.uniform(0.3, 0.7);
    case Texture::gradient: {
      const double p = (std::cos(angle) * static_cast<double>(x) + std::sin(angle) * static_cast<double>(y)) / 90.0;
      return 0.5 + 0.2 * std::sin(p * 3.14159265358979 + phase);
    }
  }
  return 0.5;
}

}  // namespace

std::size_t Scene::grid() const {
  const auto n = patch_labels.size();
  return static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
}

void GeneratorParams::validate() const {
  if (patch_size == 0 || image_size % patch_size != 0) throw std::invalid_argument("generator: bad image/patch size");
  if (min_shapes > max_shapes || min_extent == 0 || min_extent > max_extent ||
      max_extent > image_size / patch_size) {
    throw std::invalid_argument("generator: bad shape count or extent range");
  }
  if (val_fraction < 0 || test_fraction < 0 || val_fraction + test_fraction >= 1) {
    throw std::invalid_argument("generator: split fractions must be >= 0 and sum below 1");
  }
}

std::vector<std::uint8_t> majority_patch_labels(const std::vector<std::uint8_t>& pixel_labels, std::size_t image_size,
                                                std::size_t patch_size) {
  const std::size_t g = image_size / patch_size;
  std::vector<std::uint8_t> out(g * g);
  for (std::size_t r = 0; r < g; ++r)
    for (std::size_t c = 0; c < g; ++c) {
      std::array<int, 256> counts{};
      for (std::size_t y = 0; y < patch_size; ++y)
        for (std::size_t x = 0; x < patch_size; ++x)
          ++counts[pixel_labels[(r * patch_size + y) * image_size + c * patch_size + x]];
      out[r * g + c] = static_cast<std::uint8_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
  return out;
}

std::vector<float> histogram(const std::vector<std::uint8_t>& patch_labels) {
  std::vector<float> h(kNumClasses, 0.0f);
  for (auto l : patch_labels) h[l] += 1.0f;
  for (auto& v : h) v /= static_cast<float>(patch_labels.size());
  return h;
}

int decode_color_bucket(const Image& image, std::size_t y, std::size_t x) {
  const float r = image.at(0, y, x), g = image.at(1, y, x), b = image.at(2, y, x);
  const float hi = std::max({r, g, b}), lo = std::min({r, g, b});
  if (hi - lo < 0.3f) return -1;
  if (hi == r) return 0;
  return hi == g ? 1 : 2;
}

bool render_scene(Rng& rng, const GeneratorParams& params, Scene& out) {
  const std::size_t s = params.image_size, p = params.patch_size, g = s / p;
  out = Scene{};
  out.image = Image(3, s, s);
  const auto texture = static_cast<Texture>(rng.uniform_int(0, kStuffClasses - 1));
  out.background = stuff_class(texture);
  out.pixel_labels.assign(s * s, out.background);

  const double phase = rng.uniform(0, 8), period = static_cast<double>(rng.uniform_int(2, 4) * 2);
  const double angle = rng.uniform(0, 6.283185307179586);
  const double tint = rng.uniform(-0.03, 0.03);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const double v = texture_value(texture, y, x, phase, period, angle, rng);
      for (std::size_t c = 0; c < 3; ++c) out.image.at(c, y, x) = static_cast<float>(v + (c == 0 ? tint : 0.0));
    }

  const auto n_shapes =
      static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(params.min_shapes),
                                               static_cast<std::int64_t>(params.max_shapes)));
  struct Cell {
    std::size_t r0, c0, side;
  };
  std::vector<Cell> placed;
  for (std::size_t k = 0; k < n_shapes; ++k) {
    const auto kind = static_cast<ShapeKind>(rng.uniform_int(0, kShapeKinds - 1));
    const auto color = static_cast<std::size_t>(rng.uniform_int(0, kColorBuckets - 1));
    const auto side = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(params.min_extent),
                                                               static_cast<std::int64_t>(params.max_extent)));
    bool ok = false;
    Cell cell{};
    for (int trial = 0; trial < kPlacementTrials && !ok; ++trial) {
      cell = {static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(g - side))),
              static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(g - side))), side};
      ok = std::none_of(placed.begin(), placed.end(), [&](const Cell& o) {
        return cell.r0 < o.r0 + o.side && o.r0 < cell.r0 + cell.side && cell.c0 < o.c0 + o.side &&
               o.c0 < cell.c0 + cell.side;
      });
    }
    if (!ok) return false;
    placed.push_back(cell);

    const std::uint8_t label = thing_class(kind, color);
    const auto& base = kBucketColors[color];
    std::array<double, 3> rgb{};
    for (std::size_t c = 0; c < 3; ++c) rgb[c] = base[c] + rng.uniform(-0.06, 0.06);
    const double side_px = static_cast<double>(side * p);
    for (std::size_t y = 0; y < side * p; ++y)
      for (std::size_t x = 0; x < side * p; ++x) {
        if (!covers(kind, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5, side_px)) continue;
        const std::size_t py = cell.r0 * p + y, px = cell.c0 * p + x;
        for (std::size_t c = 0; c < 3; ++c) out.image.at(c, py, px) = static_cast<float>(rgb[c]);
        out.pixel_labels[py * s + px] = label;
      }
    out.instances.push_back({regions::grid_box(cell.r0, cell.c0, cell.r0 + side, cell.c0 + side, g, g), label});
  }

  for (auto& v : out.image.pixels) v = quantize(v + rng.uniform(-0.02, 0.02));
  out.patch_labels = majority_patch_labels(out.pixel_labels, s, p);
  out.histogram = histogram(out.patch_labels);
  return true;
}

Dataset generate(std::uint64_t seed, std::size_t count, const GeneratorParams& params) {
  params.validate();
  if (count == 0) throw std::invalid_argument("generate: count must be >= 1");
  std::vector<Scene> scenes(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t attempt = 0;; ++attempt) {
      Rng rng(derive_seed(seed, "scene/" + std::to_string(i) + "/" + std::to_string(attempt)));
      if (render_scene(rng, params, scenes[i])) break;
    }
  }
  const auto n_test = static_cast<std::size_t>(std::floor(params.test_fraction * static_cast<double>(count)));
  const auto n_val = static_cast<std::size_t>(std::floor(params.val_fraction * static_cast<double>(count)));
  const std::size_t n_train = count - n_test - n_val;
  Dataset d;
  d.train.assign(scenes.begin(), scenes.begin() + static_cast<std::ptrdiff_t>(n_train));
  d.val.assign(scenes.begin() + static_cast<std::ptrdiff_t>(n_train),
               scenes.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  d.test.assign(scenes.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), scenes.end());
  return d;
}

ClassPrototypes prototypes(std::uint64_t seed, std::size_t k, std::size_t d) {
  if (k == 0 || d == 0) throw std::invalid_argument("prototypes: K and D must be >= 1");
  Rng rng(seed);
  ClassPrototypes out{k, d, {}};
  out.values.reserve(k * d);
  std::vector<std::vector<double>> accepted;
  int trials = 0;
  while (accepted.size() < k) {
    if (++trials > 10000) {
      throw std::runtime_error("prototypes: could not draw " + std::to_string(k) + " near-orthogonal vectors in " +
                               std::to_string(d) + " dims");
    }
    std::vector<double> v(d);
    double n = 0;
    for (auto& x : v) {
      x = rng.normal();
      n += x * x;
    }
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    const bool ok = std::all_of(accepted.begin(), accepted.end(), [&](const std::vector<double>& u) {
      double c = 0;
      for (std::size_t i = 0; i < d; ++i) c += u[i] * v[i];
      return std::abs(c) < kPrototypeMaxCos;
    });
    if (ok) accepted.push_back(std::move(v));
  }
  for (const auto& v : accepted)
    for (double x : v) out.values.push_back(static_cast<float>(x));
  return out;
}

}  // namespace scd::data
