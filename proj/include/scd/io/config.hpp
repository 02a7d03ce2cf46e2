#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace scd::io {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Flat key=value configuration over a fixed schema. Lines are
/// "key = value"; "#" starts a comment. Keys outside the schema are errors.
class Config {
 public:
  using Schema = std::vector<std::pair<std::string, std::string>>;  // key, default

  explicit Config(Schema schema);

  void parse(std::string_view text, const std::string& origin = "<string>");
  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Fully resolved document in schema order.
  std::string dump() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::size_t index_of(const std::string& key) const;
  Schema entries_;
};

}  // namespace scd::io
