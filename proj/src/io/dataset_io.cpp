#include "scd/io/dataset_io.hpp"

#include <cmath>
#include <map>

#include "scd/io/container.hpp"

namespace scd::io {

void save_split(const std::filesystem::path& path, const std::vector<data::Scene>& scenes) {
  if (scenes.empty()) throw IoError("save_split: empty split " + path.string());
  const std::size_t s = scenes[0].image.height, g = scenes[0].grid();
  std::vector<std::uint8_t> images, pixel_labels, patch_labels, backgrounds;
  std::vector<float> boxes;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& sc = scenes[i];
    if (sc.image.height != s || sc.image.width != s || sc.grid() != g) throw IoError("save_split: mixed scene sizes");
    for (float v : sc.image.pixels) images.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
    pixel_labels.insert(pixel_labels.end(), sc.pixel_labels.begin(), sc.pixel_labels.end());
    patch_labels.insert(patch_labels.end(), sc.patch_labels.begin(), sc.patch_labels.end());
    backgrounds.push_back(sc.background);
    for (const auto& inst : sc.instances) {
      boxes.insert(boxes.end(), {static_cast<float>(i), static_cast<float>(inst.label), static_cast<float>(inst.box.x0),
                                 static_cast<float>(inst.box.y0), static_cast<float>(inst.box.x1),
                                 static_cast<float>(inst.box.y1)});
    }
  }
  const std::size_t n = scenes.size();
  write_container(path, {Entry::from_u8("images", {n, 3, s, s}, std::move(images)),
                         Entry::from_u8("pixel_labels", {n, s, s}, std::move(pixel_labels)),
                         Entry::from_u8("patch_labels", {n, g, g}, std::move(patch_labels)),
                         Entry::from_u8("backgrounds", {n}, std::move(backgrounds)),
                         Entry::from_floats("boxes", {boxes.size() / 6, 6}, boxes)});
}

std::vector<data::Scene> load_split(const std::filesystem::path& path) {
  std::map<std::string, Entry> e;
  for (auto& x : read_container(path)) e.emplace(x.name, std::move(x));
  for (const char* k : {"images", "pixel_labels", "patch_labels", "backgrounds", "boxes"}) {
    if (!e.count(k)) throw IoError(path.string() + ": dataset container lacks '" + k + "'");
  }
  const auto& img = e["images"];
  if (img.shape.size() != 4 || img.shape[1] != 3) throw IoError(path.string() + ": bad images shape");
  const std::size_t n = img.shape[0], s = img.shape[2], g = e["patch_labels"].shape.at(1);
  std::vector<data::Scene> scenes(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& sc = scenes[i];
    sc.image = Image(3, s, s);
    for (std::size_t k = 0; k < 3 * s * s; ++k) sc.image.pixels[k] = static_cast<float>(img.bytes[i * 3 * s * s + k]) / 255.0f;
    const auto& pl = e["pixel_labels"].bytes;
    sc.pixel_labels.assign(pl.begin() + static_cast<std::ptrdiff_t>(i * s * s),
                           pl.begin() + static_cast<std::ptrdiff_t>((i + 1) * s * s));
    const auto& tl = e["patch_labels"].bytes;
    sc.patch_labels.assign(tl.begin() + static_cast<std::ptrdiff_t>(i * g * g),
                           tl.begin() + static_cast<std::ptrdiff_t>((i + 1) * g * g));
    sc.background = e["backgrounds"].bytes.at(i);
    sc.histogram = data::histogram(sc.patch_labels);
  }
  const auto boxes = e["boxes"].floats();
  for (std::size_t r = 0; r + 6 <= boxes.size(); r += 6) {
    const auto scene = static_cast<std::size_t>(boxes[r]);
    if (scene >= n) throw IoError(path.string() + ": box refers to missing scene");
    scenes[scene].instances.push_back(
        {{boxes[r + 2], boxes[r + 3], boxes[r + 4], boxes[r + 5]}, static_cast<std::uint8_t>(boxes[r + 1])});
  }
  return scenes;
}

void save_dataset(const std::filesystem::path& dir, const data::Dataset& dataset) {
  save_split(dir / "train.scdk", dataset.train);
  if (!dataset.val.empty()) save_split(dir / "val.scdk", dataset.val);
  save_split(dir / "test.scdk", dataset.test);
}

data::Dataset load_dataset(const std::filesystem::path& dir) {
  data::Dataset d;
  d.train = load_split(dir / "train.scdk");
  if (std::filesystem::exists(dir / "val.scdk")) d.val = load_split(dir / "val.scdk");
  d.test = load_split(dir / "test.scdk");
  return d;
}

}  // namespace scd::io
