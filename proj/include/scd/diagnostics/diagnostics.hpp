#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "scd/image.hpp"
#include "scd/refiner/refiner.hpp"
#include "scd/regions/regions.hpp"
#include "scd/synthdata/synthdata.hpp"
#include "scd/vit/encoder.hpp"

namespace scd::diag {

using regions::Box;
using vit::FeatureMap;
using vit::TensorF;

/// Dense tokens [out_h·out_w × D] of `box` in `image` under some model.
using DensePathway = std::function<TensorF(const Image&, const Box&, std::size_t, std::size_t)>;

/// RoIAlign of the encoder's output token field.
DensePathway encoder_pathway(const vit::Encoder& encoder);
/// Refined region tokens.
DensePathway refiner_pathway(const refiner::Refiner& refiner, const vit::Encoder& encoder);

// --- coupling ratio -------------------------------------------------------

inline constexpr double kCouplingMinDenominator = 1e-3;
inline constexpr std::size_t kCouplingMinPairs = 30;

struct CouplingReport {
  double cr = 0;
  std::vector<double> per_pair;
  std::size_t pairs = 0;
  std::size_t tokens = 0;
  /// Tokens dropped for a near-zero standalone cosine.
  std::size_t skipped = 0;

  bool reportable() const { return pairs >= kCouplingMinPairs; }
};

/// Token-level CR of one image pair from the four token sets: halves of the
/// concatenated image and the standalone images.
struct PairCoupling {
  double mean = 0;
  std::size_t used = 0;
  std::size_t skipped = 0;
};
PairCoupling pair_coupling(const TensorF& a_in_ab, const TensorF& b_in_ab, const TensorF& a, const TensorF& b);

/// For each pair, X_A|X_B side by side; every token i of A's half is matched
/// to its most similar token j of B's half, contributing
/// cos(Z_A|AB[i], Z_B|AB[j]) / cos(Z_A[i], Z_B[j]). The CR is the mean of
/// per-pair means. Pairs whose tokens are all skipped do not contribute.
CouplingReport coupling_ratio(const DensePathway& pathway, const std::vector<std::pair<Image, Image>>& pairs,
                              std::size_t grid);

// --- aggregation ----------------------------------------------------------

struct AggregationResult {
  std::vector<std::size_t> n_values;
  std::vector<double> deviation;
  /// Z̄_N for every N, each [L × D].
  std::vector<TensorF> aggregates;
  std::size_t grid_h = 0, grid_w = 0;
};

/// Z̄_N = mean over the first N contexts of the target's submap after
/// pasting it into that context. Deviation is the mean token L2 distance
/// between Z̄_N and Z̄ at the largest N.
AggregationResult aggregate_experiment(const vit::Encoder& encoder, const Image& target,
                                       const std::vector<Image>& contexts, const std::vector<std::size_t>& n_values,
                                       std::uint64_t seed);

// --- affinity -------------------------------------------------------------

struct AffinityMap {
  std::size_t query_r = 0, query_c = 0;
  std::size_t grid_h = 0, grid_w = 0;
  std::vector<double> values;  // row-major, in [−1, 1]
};

/// Cosine of the query token against every token. Throws on zero-norm tokens
/// or an out-of-grid query.
AffinityMap affinity_map(const FeatureMap& feat, std::size_t r, std::size_t c);

// --- zero-shot classification ----------------------------------------------

enum class Pooling { box, mask };

struct LabeledRegion {
  Box box;
  /// Token mask (grid_h·grid_w), used with mask pooling.
  std::vector<std::uint8_t> mask;
  std::size_t label = 0;
};

struct ZeroShotResult {
  std::size_t evaluated = 0;
  std::size_t top1 = 0;
  std::size_t top5 = 0;
  std::size_t skipped = 0;

  double top1_accuracy() const { return evaluated ? static_cast<double>(top1) / static_cast<double>(evaluated) : 0.0; }
  double top5_accuracy() const { return evaluated ? static_cast<double>(top5) / static_cast<double>(evaluated) : 0.0; }
  ZeroShotResult& operator+=(const ZeroShotResult& o);
};

/// Pools each region (roi_pool for boxes, masked token mean for masks) and
/// ranks the classes by cosine against the prototypes [K × D]. Empty masks
/// are skipped and counted.
ZeroShotResult zero_shot_classify(const FeatureMap& feat, const std::vector<LabeledRegion>& regions,
                                  const TensorF& prototypes, Pooling pooling);

/// Region sets of a scene: instance boxes, instance masks (patches of the
/// instance label inside its box) and the stuff mask (patches outside every
/// instance box, labelled with the background class).
struct SceneRegions {
  std::vector<LabeledRegion> boxes;
  std::vector<LabeledRegion> thing_masks;
  std::vector<LabeledRegion> stuff_masks;
};
SceneRegions scene_regions(const data::Scene& scene);

// --- per-token segmentation ---------------------------------------------------

struct SegmentStats {
  std::vector<std::size_t> intersection, uni, present;

  explicit SegmentStats(std::size_t classes = 0) : intersection(classes), uni(classes), present(classes) {}
  /// Mean IoU over classes that occur in the labels.
  double miou() const;
  SegmentStats& operator+=(const SegmentStats& o);
};

/// Classifies every token by its nearest prototype (cosine).
SegmentStats per_token_segment(const FeatureMap& feat, const TensorF& prototypes,
                               const std::vector<std::uint8_t>& labels);

// --- correlation divergence ---------------------------------------------------

inline constexpr double kDivergenceTemperature = 0.2;

/// Row-wise Jensen–Shannon divergence between two row-stochastic matrices,
/// averaged over rows.
double mean_row_js(const TensorF& p, const TensorF& q);

/// Mean row JS divergence between softmax(Z·Zᵀ/τ) of student and teacher
/// region tokens (region_size × region_size RoIAlign) over all images and
/// their boxes.
double correlation_divergence(const DensePathway& student, const DensePathway& teacher,
                              const std::vector<Image>& images, const std::vector<std::vector<Box>>& boxes,
                              std::size_t region_size, double tau = kDivergenceTemperature);

}  // namespace scd::diag
