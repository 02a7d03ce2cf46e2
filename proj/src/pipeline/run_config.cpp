#include "scd/pipeline/run_config.hpp"

#include <algorithm>
#include <stdexcept>

#include "scd/io/container.hpp"

namespace scd::pipeline {

io::Config default_config() {
  return io::Config({
      {"seed", "0"},
      {"out_dir", "run"},
      {"data.dir", "data"},
      {"data.count", "2000"},

      {"vit.image_size", "64"},
      {"vit.patch_size", "8"},
      {"vit.dim", "32"},
      {"vit.depth", "6"},
      {"vit.heads", "4"},
      {"vit.split_k", "2"},
      {"vit.tap_l1", "2"},
      {"vit.tap_l2", "4"},
      {"vit.mlp_ratio", "4"},

      {"teacher.eta", "0.5"},
      {"teacher.epochs", "8"},
      {"teacher.batch", "8"},
      {"teacher.lr", "3e-3"},
      {"teacher.weight_decay", "0.05"},
      {"teacher.probe_temperature", "0.1"},
      {"teacher.augment_prob", "0.5"},
      {"teacher.crop_scale_min", "0.25"},
      {"teacher.crop_scale_max", "0.8"},
      {"teacher.concat_prob", "0.25"},
      {"teacher.min_accuracy", "0.6"},

      {"refiner.depth_k", "2"},
      {"refiner.init", "clone"},
      {"refiner.hidden", "128"},
      {"refiner.late_variant", "false"},
      {"refiner.aux_heads", "true"},
      {"refiner.epochs", "4"},
      {"refiner.batch", "8"},
      {"refiner.crops", "4"},
      {"refiner.scale_min", "0.3"},
      {"refiner.scale_max", "0.7"},
      {"refiner.loss", "infonce"},
      {"refiner.temperature", "0.1"},
      {"refiner.optimizer", "adamw"},
      {"refiner.lr", "1e-4"},
      {"refiner.weight_decay", "0.05"},
      {"refiner.direction", "g2l"},

      {"loss.lambda", "0.2"},
      {"loss.tau_s", "0.2"},
      {"loss.tau_t", "0.2"},
      {"loss.rla_align", "cosine"},
      {"loss.rla_temperature", "0.07"},
      {"loss.scd_variant", "correlation"},

      {"pipeline.rla_mode", "regiontext"},
      {"pipeline.scd_target", "teacher"},
      {"pipeline.proposals", "8"},
      {"pipeline.region_size", "4"},
      {"pipeline.proposal_scale_min", "0.1"},
      {"pipeline.proposal_scale_max", "0.5"},
      {"pipeline.epochs", "6"},
      {"pipeline.batch", "8"},
      {"pipeline.lr", "2e-5"},
      {"pipeline.weight_decay", "0.05"},
      {"pipeline.global_scd", "false"},
      {"pipeline.e2e", "false"},

      {"eval.cr_pairs", "32"},
      {"eval.divergence_regions", "8"},
  });
}

namespace {

std::size_t size(const io::Config& c, const std::string& key) {
  const auto v = c.get_int(key);
  if (v < 0) throw io::ConfigError(key + ": must be >= 0");
  return static_cast<std::size_t>(v);
}

// Enum parsers throw std::invalid_argument; report them against the key.
template <typename F>
auto parse_key(const io::Config& c, const std::string& key, F parse) {
  try {
    return parse(c.get(key));
  } catch (const std::invalid_argument& e) {
    throw io::ConfigError(key + ": " + e.what());
  }
}

}  // namespace

loss::AlignMode parse_align_mode(const std::string& s) {
  if (s == "cosine") return loss::AlignMode::cosine;
  if (s == "infonce") return loss::AlignMode::infonce;
  throw std::invalid_argument("unknown alignment '" + s + "' (cosine | infonce)");
}

const char* align_mode_name(loss::AlignMode m) { return m == loss::AlignMode::cosine ? "cosine" : "infonce"; }

std::uint64_t seed_for(const io::Config& c, const std::string& consumer) { return derive_seed(c.get_u64("seed"), consumer); }

vit::EncoderConfig encoder_config(const io::Config& c) {
  vit::EncoderConfig e;
  e.image_size = size(c, "vit.image_size");
  e.patch_size = size(c, "vit.patch_size");
  e.dim = size(c, "vit.dim");
  e.depth = size(c, "vit.depth");
  e.heads = size(c, "vit.heads");
  e.split_k = size(c, "vit.split_k");
  e.tap_l1 = size(c, "vit.tap_l1");
  e.tap_l2 = size(c, "vit.tap_l2");
  e.mlp_ratio = size(c, "vit.mlp_ratio");
  try {
    e.validate();
  } catch (const std::invalid_argument& err) {
    throw io::ConfigError(std::string("vit: ") + err.what());
  }
  return e;
}

TeacherConfig teacher_config(const io::Config& c) {
  TeacherConfig t;
  t.eta = c.get_double("teacher.eta");
  t.epochs = size(c, "teacher.epochs");
  t.batch = size(c, "teacher.batch");
  t.lr = c.get_double("teacher.lr");
  t.weight_decay = c.get_double("teacher.weight_decay");
  t.probe_temperature = c.get_double("teacher.probe_temperature");
  t.augment_prob = c.get_double("teacher.augment_prob");
  t.crop_scale = {c.get_double("teacher.crop_scale_min"), c.get_double("teacher.crop_scale_max")};
  t.concat_prob = c.get_double("teacher.concat_prob");
  t.min_accuracy = c.get_double("teacher.min_accuracy");
  t.seed = seed_for(c, "teacher");
  if (t.eta < 0 || t.probe_temperature <= 0) throw io::ConfigError("teacher: eta must be >= 0 and temperature > 0");
  return t;
}

refiner::RefinerConfig refiner_config(const io::Config& c) {
  refiner::RefinerConfig r;
  r.depth_k = size(c, "refiner.depth_k");
  r.init = parse_key(c, "refiner.init", refiner::parse_init);
  r.hidden = size(c, "refiner.hidden");
  r.late_variant = c.get_bool("refiner.late_variant");
  r.aux_heads = c.get_bool("refiner.aux_heads");
  return r;
}

refiner::RefinerTrainConfig refiner_train_config(const io::Config& c) {
  refiner::RefinerTrainConfig r;
  r.epochs = size(c, "refiner.epochs");
  r.batch = size(c, "refiner.batch");
  r.crops = size(c, "refiner.crops");
  r.scale = {c.get_double("refiner.scale_min"), c.get_double("refiner.scale_max")};
  r.mode = parse_key(c, "refiner.loss", parse_align_mode);
  r.temperature = c.get_double("refiner.temperature");
  const std::string opt = c.get("refiner.optimizer");
  if (opt == "adamw") {
    r.optimizer = refiner::OptimizerKind::adamw;
  } else if (opt == "sgd") {
    r.optimizer = refiner::OptimizerKind::sgd;
  } else {
    throw io::ConfigError("refiner.optimizer: unknown optimizer '" + opt + "' (adamw | sgd)");
  }
  r.lr = c.get_double("refiner.lr");
  r.weight_decay = c.get_double("refiner.weight_decay");
  const std::string dir = c.get("refiner.direction");
  if (dir == "g2l") {
    r.direction = refiner::Direction::global_to_local;
  } else if (dir == "l2g") {
    r.direction = refiner::Direction::local_to_global;
  } else {
    throw io::ConfigError("refiner.direction: unknown direction '" + dir + "' (g2l | l2g)");
  }
  r.seed = seed_for(c, "refiner/train");
  return r;
}

DistillConfig distill_config(const io::Config& c) {
  DistillConfig d;
  d.rla_mode = parse_key(c, "pipeline.rla_mode", parse_rla_mode);
  d.rla_align = parse_key(c, "loss.rla_align", parse_align_mode);
  d.rla_temperature = c.get_double("loss.rla_temperature");
  d.scd_target = parse_key(c, "pipeline.scd_target", parse_scd_target);
  d.scd_variant = parse_key(c, "loss.scd_variant", parse_scd_variant);
  d.weights = {c.get_double("loss.lambda"), c.get_double("loss.tau_s"), c.get_double("loss.tau_t")};
  d.proposals = size(c, "pipeline.proposals");
  d.region_size = size(c, "pipeline.region_size");
  d.proposal_scale = {c.get_double("pipeline.proposal_scale_min"), c.get_double("pipeline.proposal_scale_max")};
  d.epochs = size(c, "pipeline.epochs");
  d.batch = size(c, "pipeline.batch");
  d.lr = c.get_double("pipeline.lr");
  d.weight_decay = c.get_double("pipeline.weight_decay");
  d.global_scd = c.get_bool("pipeline.global_scd");
  d.e2e = c.get_bool("pipeline.e2e");
  d.refiner_train = refiner_train_config(c);
  d.seed = seed_for(c, "distill");
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw io::ConfigError(e.what());
  }
  return d;
}

EvalConfig eval_config(const io::Config& c) {
  EvalConfig e;
  e.cr_pairs = size(c, "eval.cr_pairs");
  e.divergence_regions = size(c, "eval.divergence_regions");
  e.region_size = size(c, "pipeline.region_size");
  e.seed = seed_for(c, "eval");
  return e;
}

void save_prototypes(const std::filesystem::path& path, const data::ClassPrototypes& p) {
  io::write_container(path, {io::Entry::from_floats("prototypes", {p.k, p.d}, p.values)});
}

data::ClassPrototypes load_prototypes(const std::filesystem::path& path) {
  const auto entries = io::read_container(path);
  if (entries.size() != 1 || entries[0].name != "prototypes" || entries[0].shape.size() != 2) {
    throw io::IoError(path.string() + ": expected a single [K x D] 'prototypes' entry");
  }
  data::ClassPrototypes p;
  p.k = entries[0].shape[0];
  p.d = entries[0].shape[1];
  p.values = entries[0].floats();
  return p;
}

nlohmann::json step_json(const DistillStep& s, bool e2e) {
  nlohmann::json j = {{"step", s.step}, {"l_rla", s.l_rla}, {"l_scd", s.l_scd}, {"total", s.total}, {"lr", s.lr}};
  if (e2e) j["l_refiner"] = s.l_refiner;
  return j;
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json steps_json = nlohmann::json::array();
  const bool e2e = std::any_of(steps.begin(), steps.end(), [](const DistillStep& s) { return s.l_refiner != 0; });
  for (const auto& s : steps) steps_json.push_back(step_json(s, e2e));
  nlohmann::json j = {{"seed", seed}, {"config", config}, {"checkpoints", checkpoints}, {"steps", steps_json}};
  if (aborted) j["aborted"] = abort_reason;
  return j;
}

}  // namespace scd::pipeline
