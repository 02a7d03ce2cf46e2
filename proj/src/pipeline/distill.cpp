#include "scd/pipeline/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "scd/numerics/ops.hpp"
#include "scd/numerics/optim.hpp"

namespace scd::pipeline {

using num::TensorF;
using regions::Box;

RlaMode parse_rla_mode(const std::string& s) {
  if (s == "regiontext") return RlaMode::regiontext;
  if (s == "clipself") return RlaMode::clipself;
  if (s == "none") return RlaMode::none;
  throw std::invalid_argument("unknown rla mode '" + s + "' (regiontext | clipself | none)");
}

const char* rla_mode_name(RlaMode m) {
  switch (m) {
    case RlaMode::regiontext: return "regiontext";
    case RlaMode::clipself: return "clipself";
    case RlaMode::none: return "none";
  }
  return "?";
}

ScdTarget parse_scd_target(const std::string& s) {
  if (s == "teacher") return ScdTarget::teacher;
  if (s == "refined") return ScdTarget::refined;
  throw std::invalid_argument("unknown scd target '" + s + "' (teacher | refined)");
}

const char* scd_target_name(ScdTarget t) { return t == ScdTarget::teacher ? "teacher" : "refined"; }

ScdVariant parse_scd_variant(const std::string& s) {
  if (s == "correlation") return ScdVariant::correlation;
  if (s == "frobenius") return ScdVariant::frobenius;
  if (s == "inter_instance") return ScdVariant::inter_instance;
  if (s == "attention") return ScdVariant::attention;
  throw std::invalid_argument("unknown scd variant '" + s + "' (correlation | frobenius | inter_instance | attention)");
}

const char* scd_variant_name(ScdVariant v) {
  switch (v) {
    case ScdVariant::correlation: return "correlation";
    case ScdVariant::frobenius: return "frobenius";
    case ScdVariant::inter_instance: return "inter_instance";
    case ScdVariant::attention: return "attention";
  }
  return "?";
}

void DistillConfig::validate() const {
  weights.validate();
  if (rla_temperature <= 0) throw std::invalid_argument("distill: rla temperature must be > 0");
  if (proposals == 0 || region_size == 0 || batch == 0) {
    throw std::invalid_argument("distill: proposals, region size and batch must be >= 1");
  }
  if (lr < 0 || weight_decay < 0) throw std::invalid_argument("distill: lr and weight decay must be >= 0");
}

std::vector<Box> scd_regions(const data::Scene& scene, Rng& rng, const DistillConfig& cfg) {
  std::vector<Box> boxes;
  const std::size_t gt = std::min(scene.instances.size(), cfg.proposals / 2);
  for (std::size_t i = 0; i < gt; ++i) boxes.push_back(scene.instances[i].box);
  const auto random = regions::sample_proposals(rng, cfg.proposals - gt, cfg.proposal_scale, cfg.proposal_aspect);
  boxes.insert(boxes.end(), random.boxes.begin(), random.boxes.end());
  return boxes;
}

namespace {

void accumulate(TensorF& acc, const TensorF& x) { acc = acc.defined() ? num::add(acc, x) : x; }

std::vector<std::vector<float>> snapshot(const num::ParameterList& params) {
  std::vector<std::vector<float>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore(const num::ParameterList& params, const std::vector<std::vector<float>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    num::TensorF t = params[i].tensor;
    std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
  }
}

bool all_finite(const num::ParameterList& params) {
  for (const auto& p : params)
    for (float v : p.tensor.data())
      if (!std::isfinite(v)) return false;
  return true;
}

// Per-batch inputs to the correlation objective.
struct ScdBatch {
  std::vector<TensorF> student, teacher;
  std::size_t images = 0;
  TensorF attention_sum;
};

TensorF scd_term(const ScdBatch& b, const DistillConfig& cfg) {
  const auto ts = static_cast<float>(cfg.weights.tau_s), tt = static_cast<float>(cfg.weights.tau_t);
  switch (cfg.scd_variant) {
    case ScdVariant::correlation:
      return loss::scd_loss(b.student, b.teacher, ts, tt);
    case ScdVariant::frobenius: {
      TensorF sum;
      for (std::size_t i = 0; i < b.student.size(); ++i) {
        accumulate(sum, loss::frobenius_loss(loss::correlation(b.student[i]).values,
                                             loss::correlation(b.teacher[i].detach()).values));
      }
      return num::mul_scalar(sum, 1.0f / static_cast<float>(b.student.size()));
    }
    case ScdVariant::inter_instance: {
      std::vector<TensorF> ps, pt;
      for (std::size_t i = 0; i < b.student.size(); ++i) {
        ps.push_back(num::mean_axis(b.student[i], 0));
        pt.push_back(num::mean_axis(b.teacher[i], 0));
      }
      return loss::inter_instance_loss(num::concat_rows(ps), num::concat_rows(pt), ts, tt);
    }
    case ScdVariant::attention:
      return num::mul_scalar(b.attention_sum, 1.0f / static_cast<float>(b.images));
  }
  throw std::logic_error("scd_term: unhandled variant");
}

}  // namespace

DistillResult distill(const vit::Encoder& teacher, refiner::Refiner* refiner, const std::vector<data::Scene>& scenes,
                      const data::ClassPrototypes& prototypes, const DistillConfig& cfg,
                      const std::function<void(const DistillStep&)>& on_step) {
  cfg.validate();
  if (!teacher.frozen()) throw std::invalid_argument("distill: teacher must be frozen");
  if (scenes.empty()) throw std::invalid_argument("distill: no training scenes");
  const bool need_refiner = cfg.scd_target == ScdTarget::refined || cfg.e2e;
  if (need_refiner && refiner == nullptr) {
    throw std::invalid_argument("distill: refined SCD targets and e2e training need a refiner");
  }
  if (refiner && !cfg.e2e && !refiner->frozen()) {
    throw std::invalid_argument("distill: refiner must be frozen unless e2e");
  }
  if (cfg.rla_mode == RlaMode::regiontext && (prototypes.k != data::kNumClasses || prototypes.d != teacher.config().dim)) {
    throw std::invalid_argument("distill: prototypes must be kNumClasses × encoder dim");
  }

  DistillResult result{teacher.clone(), {}, false, {}};
  vit::Encoder& student = result.student;
  student.set_frozen(false);
  const auto params = student.parameters();
  num::AdamWConfig ac;
  ac.lr = cfg.lr;
  ac.weight_decay = cfg.weight_decay;
  num::AdamW opt(params, ac);

  std::unique_ptr<num::Optimizer> refiner_opt;
  if (cfg.e2e) {
    refiner->set_frozen(false);
    refiner_opt = refiner::make_optimizer(refiner->parameters(), cfg.refiner_train);
  }

  const TensorF protos = cfg.rla_mode == RlaMode::regiontext ? prototypes.matrix() : TensorF{};
  const std::size_t size = teacher.config().image_size;
  const std::size_t grid = teacher.config().grid();
  const std::size_t n = scenes.size();
  const std::size_t total_steps = cfg.epochs * ((n + cfg.batch - 1) / cfg.batch);
  Rng proposal_rng(derive_seed(cfg.seed, "distill/proposals"));
  Rng crop_rng(derive_seed(cfg.seed, "distill/refiner_crops"));
  std::vector<std::size_t> order(n);
  std::vector<std::vector<float>> last_good = snapshot(params);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs && !result.aborted; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle(derive_seed(cfg.seed, "distill/epoch/" + std::to_string(epoch)));
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
    }
    for (std::size_t start = 0; start < n; start += cfg.batch) {
      const std::size_t end = std::min(n, start + cfg.batch);
      const double lr =
          0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
      opt.set_lr(lr);

      TensorF l_scd, l_rla, total, refiner_total;
      try {
        ScdBatch scd;
        std::vector<TensorF> region_feats, supervision;
        for (std::size_t b = start; b < end; ++b) {
          const data::Scene& scene = scenes[order[b]];
          const bool attention = cfg.scd_variant == ScdVariant::attention;
          vit::ForwardTrace trace_s, trace_t;
          const vit::FeatureMap fs = student.forward(scene.image, attention ? &trace_s : nullptr);
          const vit::FeatureMap ft = teacher.forward(scene.image, attention ? &trace_t : nullptr);
          if (attention) accumulate(scd.attention_sum, loss::attention_loss(trace_s.last_attention, trace_t.last_attention));
          ++scd.images;

          std::vector<Box> boxes;
          std::size_t oh = cfg.region_size, ow = cfg.region_size;
          if (cfg.global_scd) {
            boxes.push_back(Box::whole());
            oh = ow = grid;
          } else {
            boxes = scd_regions(scene, proposal_rng, cfg);
          }
          vit::StageA base;
          if (cfg.scd_target == ScdTarget::refined) base = refiner->base(teacher, scene.image);
          for (const auto& box : boxes) {
            scd.student.push_back(regions::roi_align(fs, box, oh, ow).tokens);
            scd.teacher.push_back(cfg.scd_target == ScdTarget::teacher ? regions::roi_align(ft, box, oh, ow).tokens
                                                                       : refiner->refine(base, box, oh, ow).tokens.detach());
          }

          if (cfg.rla_mode != RlaMode::none) {
            for (const auto& inst : scene.instances) {
              region_feats.push_back(regions::roi_pool(fs, inst.box));
              if (cfg.rla_mode == RlaMode::regiontext) {
                supervision.push_back(num::slice_rows(protos, std::size_t{inst.label}, std::size_t{inst.label} + 1));
              } else {
                supervision.push_back(teacher.forward(regions::crop_image(scene.image, inst.box, size, size)).cls);
              }
            }
          }
          if (cfg.e2e) accumulate(refiner_total, refiner::image_loss(*refiner, teacher, scene.image, crop_rng, cfg.refiner_train));
        }

        l_scd = scd_term(scd, cfg);
        if (cfg.rla_mode == RlaMode::none) {
          total = l_scd;
        } else {
          l_rla = loss::rla_loss(num::concat_rows(region_feats), num::concat_rows(supervision), cfg.rla_align,
                                 static_cast<float>(cfg.rla_temperature));
          total = loss::sc_rla_loss(l_rla, l_scd, static_cast<float>(cfg.weights.lambda));
        }
      } catch (const std::exception& e) {
        // Degenerate features after an update count as divergence.
        const bool degenerate = dynamic_cast<const num::NonFiniteError*>(&e) || dynamic_cast<const std::invalid_argument*>(&e);
        if (step == 0 || !degenerate) throw;
        restore(params, last_good);
        result.aborted = true;
        result.abort_reason = "distill: step " + std::to_string(step) + " failed after divergence: " + e.what();
        break;
      }
      const double value = total.item();
      if (!std::isfinite(value)) {
        restore(params, last_good);
        result.aborted = true;
        result.abort_reason = "distill: non-finite loss at step " + std::to_string(step);
        break;
      }
      last_good = snapshot(params);
      opt.zero_grad();
      total.backward();
      opt.step();

      DistillStep rec{step, l_rla.defined() ? l_rla.item() : 0.0, l_scd.item(), value, lr, 0.0};
      if (cfg.e2e) {
        refiner_total = num::mul_scalar(refiner_total, 1.0f / static_cast<float>((end - start) * cfg.refiner_train.crops));
        rec.l_refiner = refiner_total.item();
        if (!std::isfinite(rec.l_refiner)) {
          restore(params, last_good);
          result.aborted = true;
          result.abort_reason = "distill: non-finite refiner loss at step " + std::to_string(step);
          break;
        }
        refiner_opt->zero_grad();
        refiner_total.backward();
        refiner_opt->step();
      }
      ++step;
      result.steps.push_back(rec);
      if (on_step) on_step(rec);
      if (!all_finite(params)) {
        restore(params, last_good);
        result.aborted = true;
        result.abort_reason = "distill: non-finite parameters after step " + std::to_string(step - 1);
        break;
      }
    }
  }
  student.set_frozen(true);
  if (cfg.e2e) refiner->set_frozen(true);
  return result;
}

}  // namespace scd::pipeline
