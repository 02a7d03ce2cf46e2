#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "scd/io/config.hpp"
#include "scd/pipeline/distill.hpp"
#include "scd/pipeline/evaluate.hpp"
#include "scd/pipeline/teacher.hpp"
#include "scd/refiner/refiner.hpp"
#include "scd/synthdata/synthdata.hpp"
#include "scd/vit/encoder.hpp"

namespace scd::pipeline {

/// The full key=value schema with defaults (seed, out_dir, data.*, vit.*,
/// teacher.*, refiner.*, loss.*, pipeline.*, eval.*).
io::Config default_config();

vit::EncoderConfig encoder_config(const io::Config& c);
TeacherConfig teacher_config(const io::Config& c);
refiner::RefinerConfig refiner_config(const io::Config& c);
refiner::RefinerTrainConfig refiner_train_config(const io::Config& c);
DistillConfig distill_config(const io::Config& c);
EvalConfig eval_config(const io::Config& c);

loss::AlignMode parse_align_mode(const std::string& s);
const char* align_mode_name(loss::AlignMode m);

/// Consumer seeds split from the root seed.
std::uint64_t seed_for(const io::Config& c, const std::string& consumer);

/// Prototypes live beside the dataset splits.
inline constexpr const char* kPrototypeFile = "prototypes.scdk";
void save_prototypes(const std::filesystem::path& path, const data::ClassPrototypes& p);
data::ClassPrototypes load_prototypes(const std::filesystem::path& path);

/// Config snapshot, per-step losses, checkpoint paths and seed of a
/// distillation run.
struct RunRecord {
  std::string config;
  std::uint64_t seed = 0;
  std::vector<DistillStep> steps;
  std::map<std::string, std::string> checkpoints;
  bool aborted = false;
  std::string abort_reason;

  nlohmann::json to_json() const;
};

nlohmann::json step_json(const DistillStep& s, bool e2e);

}  // namespace scd::pipeline
