#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scd/synthdata/synthdata.hpp"
#include "scd/vit/encoder.hpp"

namespace scd::pipeline {

/// Training stopped because a sanity gate failed (accuracy floor, non-finite
/// loss). `code` is a short machine-readable tag.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::string code, const std::string& what) : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct TeacherConfig {
  /// Weight of the scene-histogram regression; 0 gives a context-free teacher.
  double eta = 0.5;
  std::size_t epochs = 8;
  std::size_t batch = 8;
  double lr = 3e-3;
  double weight_decay = 0.05;
  /// Temperature of the fixed-prototype probe.
  double probe_temperature = 0.1;
  /// Probability of replacing a training scene by a random crop of it.
  double augment_prob = 0.5;
  regions::Range crop_scale{0.25, 0.8};
  /// Probability of training on two scenes placed side by side; patch labels
  /// stay local while the histogram target covers the composite.
  double concat_prob = 0.25;
  double min_accuracy = 0.6;
  std::uint64_t seed = 0;
};

struct TeacherStep {
  std::size_t step = 0;
  double loss = 0;
  double l_patch = 0;
  double l_hist = 0;
  double l_cls = 0;
  double lr = 0;
};

struct TeacherResult {
  std::vector<TeacherStep> steps;
  double val_accuracy = 0;
};

/// Scene view used for training: image with labels re-derived for the view.
struct LabeledView {
  Image image;
  std::vector<std::uint8_t> patch_labels;
  std::vector<float> histogram;
};

/// Crop of `scene` resized back to full size; pixel labels are resampled by
/// nearest neighbour and patch labels recomputed by majority.
LabeledView crop_view(const data::Scene& scene, const regions::Box& box);

/// Two views side by side on a grid twice as wide.
LabeledView concat_views(const LabeledView& left, const LabeledView& right, std::size_t grid);

/// Token objective on one view:
///   patch: CE(normalize(z)·Pᵀ/t, label)
///   hist:  Σ_k (normalize(z)·Pᵀ − h)² averaged over tokens
///   cls:   CE(normalize(cls)·Pᵀ/t, argmax h)
struct TeacherLoss {
  num::TensorF total, patch, hist, cls;
};
TeacherLoss teacher_loss(const vit::FeatureMap& feat, const LabeledView& view, const num::TensorF& prototypes,
                         double eta, double temperature);

/// Fraction of patches whose nearest prototype (cosine) is the patch label.
double patch_accuracy(const vit::Encoder& encoder, const std::vector<data::Scene>& scenes,
                      const data::ClassPrototypes& prototypes);

/// Trains `encoder` in place on dataset.train and reports accuracy on
/// dataset.val. Throws TrainingAborted when validation accuracy ends below
/// cfg.min_accuracy or the loss turns non-finite.
TeacherResult pretrain_teacher(vit::Encoder& encoder, const data::Dataset& dataset,
                               const data::ClassPrototypes& prototypes, const TeacherConfig& cfg,
                               const std::function<void(const TeacherStep&)>& on_step = {});

}  // namespace scd::pipeline
