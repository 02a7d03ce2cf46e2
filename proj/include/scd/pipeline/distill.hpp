#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scd/losses/losses.hpp"
#include "scd/refiner/refiner.hpp"
#include "scd/regions/regions.hpp"
#include "scd/synthdata/synthdata.hpp"
#include "scd/vit/encoder.hpp"

namespace scd::pipeline {

enum class RlaMode { regiontext, clipself, none };
enum class ScdTarget { teacher, refined };
/// Correlation-transfer objective: the softmax correlation loss, or one of
/// the ablations (Frobenius on raw correlations, inter-instance correlations
/// of pooled regions, last-block attention maps).
enum class ScdVariant { correlation, frobenius, inter_instance, attention };

RlaMode parse_rla_mode(const std::string& s);
const char* rla_mode_name(RlaMode m);
ScdTarget parse_scd_target(const std::string& s);
const char* scd_target_name(ScdTarget t);
ScdVariant parse_scd_variant(const std::string& s);
const char* scd_variant_name(ScdVariant v);

struct DistillConfig {
  RlaMode rla_mode = RlaMode::regiontext;
  loss::AlignMode rla_align = loss::AlignMode::cosine;
  double rla_temperature = loss::kRlaTemperature;
  ScdTarget scd_target = ScdTarget::teacher;
  ScdVariant scd_variant = ScdVariant::correlation;
  loss::LossWeights weights;
  /// Regions per image for SCD: ground-truth instance boxes fill up to half,
  /// random proposals the rest.
  std::size_t proposals = 8;
  regions::Range proposal_scale{0.1, 0.5};
  regions::Range proposal_aspect{0.5, 2.0};
  /// RoIAlign output side; L = region_size².
  std::size_t region_size = 4;
  std::size_t epochs = 6;
  std::size_t batch = 8;
  double lr = 2e-5;
  double weight_decay = 0.05;
  /// Distil correlations of the whole token field instead of regions.
  bool global_scd = false;
  /// Train the refiner jointly on its own loss.
  bool e2e = false;
  refiner::RefinerTrainConfig refiner_train;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  /// λ applied to L_SCD: 1 without an RLA term.
  double effective_lambda() const { return rla_mode == RlaMode::none ? 1.0 : weights.lambda; }
};

struct DistillStep {
  std::size_t step = 0;
  double l_rla = 0;
  double l_scd = 0;
  double total = 0;
  double lr = 0;
  /// Refiner loss of the joint step (e2e only).
  double l_refiner = 0;
};

/// Student and its training log. A non-finite loss stops training with
/// `aborted` set; the student then holds the parameters of the last finite
/// step.
struct DistillResult {
  vit::Encoder student;
  std::vector<DistillStep> steps;
  bool aborted = false;
  std::string abort_reason;
};

/// Student initialized from the teacher and trained on
///   L = L_RLA + λ·L_SCD
/// over `scenes`. The teacher (and the refiner unless e2e) must be frozen;
/// `refiner` is required for refined SCD targets and for e2e.
DistillResult distill(const vit::Encoder& teacher, refiner::Refiner* refiner,
                      const std::vector<data::Scene>& scenes, const data::ClassPrototypes& prototypes,
                      const DistillConfig& cfg, const std::function<void(const DistillStep&)>& on_step = {});

/// SCD regions of one scene for one step: ground-truth boxes first, then
/// random proposals.
std::vector<regions::Box> scd_regions(const data::Scene& scene, Rng& rng, const DistillConfig& cfg);

}  // namespace scd::pipeline
