#include "scd/io/outputs.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "scd/io/container.hpp"

namespace scd::io {

namespace {

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, mode);
  if (!os) throw IoError(path.string() + ": cannot open for writing");
  return os;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, std::span<const float> values, std::size_t height, std::size_t width) {
  if (values.size() != height * width) throw IoError("write_pgm: value count does not match dimensions");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const float lo = values.empty() ? 0.0f : *lo_it, hi = values.empty() ? 0.0f : *hi_it;
  std::vector<unsigned char> pixels(values.size(), 0);
  if (hi > lo) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      pixels[i] = static_cast<unsigned char>(std::lround((values[i] - lo) / (hi - lo) * 255.0f));
    }
  }
  auto os = open_out(path, std::ios::binary | std::ios::trunc);
  os << "P5\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  auto os = open_out(path, std::ios::trunc);
  os << doc.dump(2) << "\n";
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path) : os_(open_out(path, std::ios::trunc)) {}

void JsonlWriter::write(const nlohmann::json& record) {
  os_ << record.dump() << "\n";
  os_.flush();
}

}  // namespace scd::io
