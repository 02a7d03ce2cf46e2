#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "scd/diagnostics/diagnostics.hpp"
#include "scd/refiner/refiner.hpp"
#include "scd/synthdata/synthdata.hpp"
#include "scd/vit/encoder.hpp"

namespace scd::pipeline {

struct EvalConfig {
  /// Scene pairs (consecutive test scenes) for the coupling ratio.
  std::size_t cr_pairs = 32;
  /// Regions per scene for the correlation divergence (instance boxes, then
  /// random proposals).
  std::size_t divergence_regions = 8;
  std::size_t region_size = 4;
  std::uint64_t seed = 0;
};

/// Dense-recognition and spatial metrics of one feature pathway.
struct PathwayMetrics {
  diag::ZeroShotResult boxes, things, stuff;
  double miou = 0;
  diag::CouplingReport coupling;

  nlohmann::json to_json() const;
};

struct EvalMetrics {
  PathwayMetrics student;
  double correlation_divergence = 0;
  /// Refined-teacher features (whole-image refinement) when a refiner is given.
  std::optional<PathwayMetrics> refined;

  nlohmann::json to_json() const;
};

/// Whole-image feature map of an encoder or a refiner.
using FieldFn = std::function<vit::FeatureMap(const Image&)>;

PathwayMetrics evaluate_pathway(const FieldFn& field, const diag::DensePathway& dense,
                                const std::vector<data::Scene>& scenes, const data::ClassPrototypes& prototypes,
                                const EvalConfig& cfg);

/// Throws std::invalid_argument when the student and teacher configs differ.
EvalMetrics evaluate_run(const vit::Encoder& student, const vit::Encoder& teacher, const refiner::Refiner* refiner,
                         const std::vector<data::Scene>& scenes, const data::ClassPrototypes& prototypes,
                         const EvalConfig& cfg);

}  // namespace scd::pipeline
