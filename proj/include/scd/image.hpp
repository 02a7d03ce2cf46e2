#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace scd {

/// Channel-first float image with values in [0, 1].
struct Image {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  // [channels][height][width]

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), pixels(c * h * w, 0.0f) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  bool operator==(const Image&) const = default;
};

/// Places `left` and `right` side by side; heights must match.
inline Image concat_width(const Image& left, const Image& right) {
  if (left.height != right.height || left.channels != right.channels) {
    throw std::invalid_argument("concat_width: image heights differ (" + std::to_string(left.height) + " vs " +
                                std::to_string(right.height) + ")");
  }
  Image out(left.channels, left.height, left.width + right.width);
  for (std::size_t c = 0; c < out.channels; ++c)
    for (std::size_t y = 0; y < out.height; ++y) {
      for (std::size_t x = 0; x < left.width; ++x) out.at(c, y, x) = left.at(c, y, x);
      for (std::size_t x = 0; x < right.width; ++x) out.at(c, y, left.width + x) = right.at(c, y, x);
    }
  return out;
}

}  // namespace scd
