#pragma once

#include <filesystem>
#include <vector>

#include "scd/synthdata/synthdata.hpp"

namespace scd::io {

/// One split per file: images [N×3×S×S] u8, pixel_labels [N×S×S] u8,
/// patch_labels [N×G×G] u8, backgrounds [N] u8 and boxes [M×6] f32 rows of
/// (scene, class, x0, y0, x1, y1).
void save_split(const std::filesystem::path& path, const std::vector<data::Scene>& scenes);
std::vector<data::Scene> load_split(const std::filesystem::path& path);

/// train.scdk / val.scdk / test.scdk under `dir`.
void save_dataset(const std::filesystem::path& dir, const data::Dataset& dataset);
data::Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace scd::io
