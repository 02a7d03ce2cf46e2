#include "scd/pipeline/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scd/numerics/ops.hpp"
#include "scd/numerics/optim.hpp"

namespace scd::pipeline {

using num::TensorF;

LabeledView crop_view(const data::Scene& scene, const regions::Box& box) {
  regions::require_valid(box, "crop_view");
  const std::size_t s = scene.image.height;
  const std::size_t p = s / scene.grid();
  LabeledView v;
  v.image = regions::crop_image(scene.image, box, s, s);
  std::vector<std::uint8_t> pixels(s * s);
  auto src = [s](double lo, double extent, std::size_t i) {
    const double u = (lo + extent * (static_cast<double>(i) + 0.5) / static_cast<double>(s)) * static_cast<double>(s);
    return std::min(s - 1, static_cast<std::size_t>(std::max(0.0, std::floor(u))));
  };
  for (std::size_t y = 0; y < s; ++y) {
    const std::size_t sy = src(box.y0, box.height(), y);
    for (std::size_t x = 0; x < s; ++x) pixels[y * s + x] = scene.pixel_labels[sy * s + src(box.x0, box.width(), x)];
  }
  v.patch_labels = data::majority_patch_labels(pixels, s, p);
  v.histogram = data::histogram(v.patch_labels);
  return v;
}

LabeledView concat_views(const LabeledView& left, const LabeledView& right, std::size_t grid) {
  if (left.patch_labels.size() != grid * grid || right.patch_labels.size() != grid * grid) {
    throw std::invalid_argument("concat_views: label grids must be " + std::to_string(grid) + "x" + std::to_string(grid));
  }
  LabeledView v;
  v.image = concat_width(left.image, right.image);
  v.patch_labels.reserve(2 * grid * grid);
  for (std::size_t r = 0; r < grid; ++r) {
    v.patch_labels.insert(v.patch_labels.end(), left.patch_labels.begin() + r * grid, left.patch_labels.begin() + (r + 1) * grid);
    v.patch_labels.insert(v.patch_labels.end(), right.patch_labels.begin() + r * grid, right.patch_labels.begin() + (r + 1) * grid);
  }
  v.histogram = data::histogram(v.patch_labels);
  return v;
}

TeacherLoss teacher_loss(const vit::FeatureMap& feat, const LabeledView& view, const TensorF& prototypes,
                         double eta, double temperature) {
  const std::size_t l = feat.length();
  const std::size_t k = prototypes.rows();
  if (view.patch_labels.size() != l || view.histogram.size() != k) {
    throw num::ShapeError("teacher_loss", std::to_string(l) + " tokens, " + std::to_string(view.patch_labels.size()) +
                                              " labels, " + std::to_string(view.histogram.size()) + " histogram bins");
  }
  const float inv_t = static_cast<float>(1.0 / temperature);
  const TensorF proj = num::matmul_nt(num::l2_normalize_rows(feat.tokens), prototypes);  // [L × K]

  std::vector<std::size_t> labels(view.patch_labels.begin(), view.patch_labels.end());
  TeacherLoss out;
  out.patch = num::mul_scalar(num::mean(num::pick(num::log_softmax_rows(num::mul_scalar(proj, inv_t)), labels)), -1.0f);

  std::vector<float> neg_h(k);
  for (std::size_t i = 0; i < k; ++i) neg_h[i] = -view.histogram[i];
  const TensorF diff = num::add_rowvec(proj, TensorF::from_data({1, k}, neg_h));
  out.hist = num::mul_scalar(num::sum(num::mul(diff, diff)), 1.0f / static_cast<float>(l));

  const auto dominant = static_cast<std::size_t>(
      std::max_element(view.histogram.begin(), view.histogram.end()) - view.histogram.begin());
  const TensorF cls_logits = num::mul_scalar(num::matmul_nt(num::l2_normalize_rows(feat.cls), prototypes), inv_t);
  out.cls = num::mul_scalar(num::mean(num::pick(num::log_softmax_rows(cls_logits), {dominant})), -1.0f);

  out.total = num::add(num::add(out.patch, num::mul_scalar(out.hist, static_cast<float>(eta))), out.cls);
  return out;
}

double patch_accuracy(const vit::Encoder& encoder, const std::vector<data::Scene>& scenes,
                      const data::ClassPrototypes& prototypes) {
  if (scenes.empty()) return 0.0;
  const TensorF p = prototypes.matrix();
  std::size_t correct = 0, total = 0;
  for (const auto& scene : scenes) {
    const auto feat = encoder.forward(scene.image);
    const TensorF sims = num::matmul_nt(feat.tokens.detach(), p);
    const std::size_t k = sims.cols();
    const auto v = sims.data();
    for (std::size_t i = 0; i < feat.length(); ++i) {
      const auto row = v.subspan(i * k, k);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += best == scene.patch_labels[i];
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

TeacherResult pretrain_teacher(vit::Encoder& encoder, const data::Dataset& dataset,
                               const data::ClassPrototypes& prototypes, const TeacherConfig& cfg,
                               const std::function<void(const TeacherStep&)>& on_step) {
  if (dataset.train.empty() || cfg.batch == 0) throw std::invalid_argument("pretrain_teacher: empty data or batch");
  if (prototypes.d != encoder.config().dim || prototypes.k != data::kNumClasses) {
    throw std::invalid_argument("pretrain_teacher: prototypes must be kNumClasses × encoder dim");
  }
  encoder.set_frozen(false);
  const TensorF p = prototypes.matrix();
  num::AdamWConfig ac;
  ac.lr = cfg.lr;
  ac.weight_decay = cfg.weight_decay;
  num::AdamW opt(encoder.parameters(), ac);

  const std::size_t n = dataset.train.size();
  const std::size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  Rng aug(derive_seed(cfg.seed, "teacher/augment"));
  auto make_view = [&](const data::Scene& scene) {
    if (aug.uniform() < cfg.augment_prob) {
      return crop_view(scene, regions::sample_proposals(aug, 1, cfg.crop_scale, {0.75, 4.0 / 3.0}).boxes[0]);
    }
    return LabeledView{scene.image, scene.patch_labels, scene.histogram};
  };
  std::vector<std::size_t> order(n);
  TeacherResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle(derive_seed(cfg.seed, "teacher/epoch/" + std::to_string(epoch)));
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
    }
    for (std::size_t start = 0; start < n; start += cfg.batch) {
      const std::size_t end = std::min(n, start + cfg.batch);
      // Cosine decay to zero over the run.
      const double lr = 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
      opt.set_lr(lr);
      TensorF total, lp, lh, lc;
      for (std::size_t b = start; b < end; ++b) {
        LabeledView view = make_view(dataset.train[order[b]]);
        if (aug.uniform() < cfg.concat_prob) {
          const auto partner = static_cast<std::size_t>(aug.uniform_int(0, static_cast<std::int64_t>(n - 1)));
          view = concat_views(view, make_view(dataset.train[partner]), dataset.train[partner].grid());
        }
        const auto parts = teacher_loss(encoder.forward(view.image), view, p, cfg.eta, cfg.probe_temperature);
        auto acc = [](TensorF& a, const TensorF& x) { a = a.defined() ? num::add(a, x) : x; };
        acc(total, parts.total);
        acc(lp, parts.patch.detach());
        acc(lh, parts.hist.detach());
        acc(lc, parts.cls.detach());
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      total = num::mul_scalar(total, inv);
      const double value = total.item();
      if (!std::isfinite(value)) {
        throw TrainingAborted("non_finite", "pretrain_teacher: non-finite loss at step " + std::to_string(step));
      }
      opt.zero_grad();
      total.backward();
      opt.step();
      TeacherStep rec{step++, value, lp.item() * inv, lh.item() * inv, lc.item() * inv, lr};
      result.steps.push_back(rec);
      if (on_step) on_step(rec);
    }
  }
  encoder.set_frozen(true);
  const auto& eval = dataset.val.empty() ? dataset.train : dataset.val;
  result.val_accuracy = patch_accuracy(encoder, eval, prototypes);
  if (result.val_accuracy < cfg.min_accuracy) {
    throw TrainingAborted("teacher_accuracy", "pretrain_teacher: held-out patch accuracy " +
                                                  std::to_string(result.val_accuracy) + " below " +
                                                  std::to_string(cfg.min_accuracy));
  }
  return result;
}

}  // namespace scd::pipeline
