#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "scd/numerics/tensor.hpp"

namespace scd::io {

/// File-level failure (missing file, bad magic, truncated payload, mismatch
/// between a file and the model it is loaded into).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

enum class DType : std::uint8_t { f32, u8 };

const char* dtype_name(DType t);
std::size_t dtype_size(DType t);

/// One named array in an SCDK container. Payload bytes are little-endian.
struct Entry {
  std::string name;
  num::Shape shape;
  DType dtype = DType::f32;
  std::vector<std::uint8_t> bytes;

  static Entry from_floats(std::string name, num::Shape shape, std::span<const float> values);
  static Entry from_u8(std::string name, num::Shape shape, std::vector<std::uint8_t> values);
  std::vector<float> floats() const;
};

inline constexpr std::uint32_t kContainerVersion = 1;

/// Layout: "SCDK", u32 version, u64 manifest length, UTF-8 JSON manifest
/// (array of {name, shape, dtype, byte_offset}), then the concatenated
/// payload. byte_offset is relative to the start of the payload.
void write_container(const std::filesystem::path& path, const std::vector<Entry>& entries);
std::vector<Entry> read_container(const std::filesystem::path& path);

/// Checkpoints are containers whose entries are all f32 parameters.
void save_parameters(const std::filesystem::path& path, const num::ParameterList& params);
/// Loads values into existing parameters by name. Every parameter must be
/// present with the identical shape, and the file may not carry extras.
void load_parameters(const std::filesystem::path& path, num::ParameterList& params);

}  // namespace scd::io
