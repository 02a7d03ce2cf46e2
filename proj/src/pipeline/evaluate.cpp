#include "scd/pipeline/evaluate.hpp"

#include <stdexcept>

#include "scd/pipeline/distill.hpp"

namespace scd::pipeline {

namespace {

nlohmann::json zero_shot_json(const diag::ZeroShotResult& r) {
  return {{"evaluated", r.evaluated}, {"skipped", r.skipped}, {"top1", r.top1_accuracy()}, {"top5", r.top5_accuracy()}};
}

std::vector<std::pair<Image, Image>> cr_pairs(const std::vector<data::Scene>& scenes, std::size_t count) {
  std::vector<std::pair<Image, Image>> pairs;
  for (std::size_t i = 0; i + 1 < scenes.size() && pairs.size() < count; i += 2) {
    pairs.emplace_back(scenes[i].image, scenes[i + 1].image);
  }
  return pairs;
}

}  // namespace

nlohmann::json PathwayMetrics::to_json() const {
  nlohmann::json cr = {{"value", coupling.cr},
                       {"pairs", coupling.pairs},
                       {"tokens", coupling.tokens},
                       {"skipped", coupling.skipped},
                       {"reportable", coupling.reportable()}};
  return {{"zero_shot", {{"boxes", zero_shot_json(boxes)}, {"things", zero_shot_json(things)}, {"stuff", zero_shot_json(stuff)}}},
          {"segmentation_miou", miou},
          {"coupling_ratio", cr}};
}

nlohmann::json EvalMetrics::to_json() const {
  nlohmann::json j = {{"student", student.to_json()}, {"correlation_divergence", correlation_divergence}};
  if (refined) j["refined_teacher"] = refined->to_json();
  return j;
}

PathwayMetrics evaluate_pathway(const FieldFn& field, const diag::DensePathway& dense,
                                const std::vector<data::Scene>& scenes, const data::ClassPrototypes& prototypes,
                                const EvalConfig& cfg) {
  const num::TensorF protos = prototypes.matrix();
  PathwayMetrics m;
  diag::SegmentStats seg(prototypes.k);
  for (const auto& scene : scenes) {
    const vit::FeatureMap feat = field(scene.image);
    const auto regions = diag::scene_regions(scene);
    m.boxes += diag::zero_shot_classify(feat, regions.boxes, protos, diag::Pooling::box);
    m.things += diag::zero_shot_classify(feat, regions.thing_masks, protos, diag::Pooling::mask);
    m.stuff += diag::zero_shot_classify(feat, regions.stuff_masks, protos, diag::Pooling::mask);
    seg += diag::per_token_segment(feat, protos, scene.patch_labels);
  }
  m.miou = seg.miou();
  m.coupling = diag::coupling_ratio(dense, cr_pairs(scenes, cfg.cr_pairs), scenes.empty() ? 0 : scenes.front().grid());
  return m;
}

EvalMetrics evaluate_run(const vit::Encoder& student, const vit::Encoder& teacher, const refiner::Refiner* refiner,
                         const std::vector<data::Scene>& scenes, const data::ClassPrototypes& prototypes,
                         const EvalConfig& cfg) {
  if (!(student.config() == teacher.config())) {
    throw std::invalid_argument("evaluate_run: student and teacher configurations differ");
  }
  if (scenes.empty()) throw std::invalid_argument("evaluate_run: no scenes");
  EvalMetrics out;
  out.student = evaluate_pathway([&](const Image& img) { return student.forward(img); }, diag::encoder_pathway(student),
                                 scenes, prototypes, cfg);

  DistillConfig region_cfg;
  region_cfg.proposals = cfg.divergence_regions;
  Rng rng(derive_seed(cfg.seed, "evaluate/regions"));
  std::vector<Image> images;
  std::vector<std::vector<regions::Box>> boxes;
  for (const auto& scene : scenes) {
    images.push_back(scene.image);
    boxes.push_back(scd_regions(scene, rng, region_cfg));
  }
  out.correlation_divergence = diag::correlation_divergence(diag::encoder_pathway(student), diag::encoder_pathway(teacher),
                                                            images, boxes, cfg.region_size);

  if (refiner) {
    const std::size_t g = teacher.config().grid();
    out.refined = evaluate_pathway(
        [&](const Image& img) { return refiner->refine(teacher, img, regions::Box::whole(), g, g); },
        diag::refiner_pathway(*refiner, teacher), scenes, prototypes, cfg);
  }
  return out;
}

}  // namespace scd::pipeline
