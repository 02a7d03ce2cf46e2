#pragma once

#include <filesystem>
#include <fstream>
#include <span>

#include <json.hpp>

namespace scd::io {

/// Binary PGM (P5, maxval 255), min–max normalized; a constant map is
/// written as all zeros.
void write_pgm(const std::filesystem::path& path, std::span<const float> values, std::size_t height, std::size_t width);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

/// Appends one JSON object per line, flushing after each.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path);
  void write(const nlohmann::json& record);

 private:
  std::ofstream os_;
};

}  // namespace scd::io
