#include "scd/io/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace scd::io {

namespace {

static_assert(std::endian::native == std::endian::little, "container IO assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'C', 'D', 'K'};

template <typename U>
void put_le(std::ostream& os, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, sizeof(U));
}

template <typename U>
U get_le(std::istream& is, const std::string& path) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw IoError(path + ": truncated header");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

DType parse_dtype(const std::string& s, const std::string& path) {
  if (s == "f32") return DType::f32;
  if (s == "u8") return DType::u8;
  throw IoError(path + ": unknown dtype '" + s + "'");
}

}  // namespace

const char* dtype_name(DType t) { return t == DType::f32 ? "f32" : "u8"; }
std::size_t dtype_size(DType t) { return t == DType::f32 ? 4 : 1; }

Entry Entry::from_floats(std::string name, num::Shape shape, std::span<const float> values) {
  if (num::shape_numel(shape) != values.size()) throw IoError("entry " + name + ": shape/data size mismatch");
  Entry e{std::move(name), std::move(shape), DType::f32, std::vector<std::uint8_t>(values.size() * 4)};
  std::memcpy(e.bytes.data(), values.data(), e.bytes.size());
  return e;
}

Entry Entry::from_u8(std::string name, num::Shape shape, std::vector<std::uint8_t> values) {
  if (num::shape_numel(shape) != values.size()) throw IoError("entry " + name + ": shape/data size mismatch");
  return {std::move(name), std::move(shape), DType::u8, std::move(values)};
}

std::vector<float> Entry::floats() const {
  if (dtype != DType::f32) throw IoError("entry " + name + " is not f32");
  std::vector<float> out(bytes.size() / 4);
  std::memcpy(out.data(), bytes.data(), out.size() * 4);
  return out;
}

void write_container(const std::filesystem::path& path, const std::vector<Entry>& entries) {
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    if (e.bytes.size() != num::shape_numel(e.shape) * dtype_size(e.dtype)) {
      throw IoError("entry " + e.name + ": payload size does not match shape");
    }
    manifest.push_back({{"name", e.name}, {"shape", e.shape}, {"dtype", dtype_name(e.dtype)}, {"byte_offset", offset}});
    offset += e.bytes.size();
  }
  const std::string text = manifest.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(path.string() + ": cannot open for writing");
  os.write(kMagic, 4);
  put_le<std::uint32_t>(os, kContainerVersion);
  put_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : entries) os.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
  if (!os) throw IoError(path.string() + ": write failed");
}

std::vector<Entry> read_container(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(p + ": cannot open");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError(p + ": not an SCDK container");
  const auto version = get_le<std::uint32_t>(is, p);
  if (version != kContainerVersion) throw IoError(p + ": unsupported version " + std::to_string(version));
  const auto len = get_le<std::uint64_t>(is, p);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw IoError(p + ": truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(p + ": malformed manifest (" + e.what() + ")");
  }
  if (!manifest.is_array()) throw IoError(p + ": manifest is not an array");
  const std::string payload((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  std::vector<Entry> out;
  for (const auto& m : manifest) {
    Entry e;
    e.name = m.at("name").get<std::string>();
    e.shape = m.at("shape").get<num::Shape>();
    e.dtype = parse_dtype(m.at("dtype").get<std::string>(), p);
    const auto off = m.at("byte_offset").get<std::uint64_t>();
    const std::size_t n = num::shape_numel(e.shape) * dtype_size(e.dtype);
    if (off + n > payload.size()) throw IoError(p + ": entry " + e.name + " exceeds payload");
    e.bytes.assign(payload.begin() + static_cast<std::ptrdiff_t>(off),
                   payload.begin() + static_cast<std::ptrdiff_t>(off + n));
    out.push_back(std::move(e));
  }
  return out;
}

void save_parameters(const std::filesystem::path& path, const num::ParameterList& params) {
  num::check_unique_names(params);
  std::vector<Entry> entries;
  for (const auto& p : params) entries.push_back(Entry::from_floats(p.name, p.tensor.shape(), p.tensor.data()));
  write_container(path, entries);
}

void load_parameters(const std::filesystem::path& path, num::ParameterList& params) {
  std::map<std::string, Entry> by_name;
  for (auto& e : read_container(path)) by_name.emplace(e.name, std::move(e));
  if (by_name.size() != params.size()) {
    throw IoError(path.string() + ": checkpoint holds " + std::to_string(by_name.size()) + " tensors, model expects " +
                  std::to_string(params.size()));
  }
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw IoError(path.string() + ": missing parameter " + p.name);
    if (it->second.shape != p.tensor.shape()) {
      throw IoError(path.string() + ": parameter " + p.name + " has shape " + num::shape_str(it->second.shape) +
                    ", model expects " + num::shape_str(p.tensor.shape()));
    }
    const auto values = it->second.floats();
    auto dst = p.tensor.mutable_data();
    std::copy(values.begin(), values.end(), dst.begin());
  }
}

}  // namespace scd::io
