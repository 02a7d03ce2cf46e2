#include "scd/diagnostics/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "scd/losses/losses.hpp"
#include "scd/numerics/ops.hpp"

namespace scd::diag {

namespace {

std::vector<double> unit_rows(const TensorF& t) {
  const std::size_t n = t.rows(), d = t.cols();
  const auto v = t.data();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < d; ++k) s += static_cast<double>(v[i * d + k]) * v[i * d + k];
    const double inv = s > 0 ? 1.0 / std::sqrt(s) : 0.0;
    for (std::size_t k = 0; k < d; ++k) out[i * d + k] = v[i * d + k] * inv;
  }
  return out;
}

double dot(const double* a, const double* b, std::size_t d) {
  double s = 0;
  for (std::size_t k = 0; k < d; ++k) s += a[k] * b[k];
  return s;
}

void require_same_shape(const char* who, const TensorF& a, const TensorF& b) {
  if (a.shape() != b.shape()) {
    throw num::ShapeError(who, num::shape_str(a.shape()) + " vs " + num::shape_str(b.shape()));
  }
}

}  // namespace

DensePathway encoder_pathway(const vit::Encoder& encoder) {
  return [&encoder](const Image& image, const Box& box, std::size_t oh, std::size_t ow) {
    return regions::roi_align(encoder.forward(image), box, oh, ow).tokens;
  };
}

DensePathway refiner_pathway(const refiner::Refiner& refiner, const vit::Encoder& encoder) {
  return [&refiner, &encoder](const Image& image, const Box& box, std::size_t oh, std::size_t ow) {
    return refiner.refine(encoder, image, box, oh, ow).tokens;
  };
}

// --- coupling ratio -------------------------------------------------------

PairCoupling pair_coupling(const TensorF& a_in_ab, const TensorF& b_in_ab, const TensorF& a, const TensorF& b) {
  require_same_shape("pair_coupling", a_in_ab, a);
  require_same_shape("pair_coupling", b_in_ab, b);
  if (a.cols() != b.cols()) throw num::ShapeError("pair_coupling", "token widths differ");
  const std::size_t d = a.cols();
  const auto uab = unit_rows(a_in_ab), ubab = unit_rows(b_in_ab), ua = unit_rows(a), ub = unit_rows(b);
  PairCoupling out;
  double sum = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::size_t best = 0;
    double best_cos = -2;
    for (std::size_t k = 0; k < b.rows(); ++k) {
      const double c = dot(&uab[i * d], &ubab[k * d], d);
      if (c > best_cos) {
        best_cos = c;
        best = k;
      }
    }
    const double den = dot(&ua[i * d], &ub[best * d], d);
    if (std::abs(den) < kCouplingMinDenominator) {
      ++out.skipped;
      continue;
    }
    sum += best_cos / den;
    ++out.used;
  }
  out.mean = out.used ? sum / static_cast<double>(out.used) : 0.0;
  return out;
}

CouplingReport coupling_ratio(const DensePathway& pathway, const std::vector<std::pair<Image, Image>>& pairs,
                              std::size_t grid) {
  CouplingReport rep;
  const Box left{0, 0, 0.5, 1}, right{0.5, 0, 1, 1};
  for (const auto& [xa, xb] : pairs) {
    if (xa.height != xb.height || xa.width != xb.width) {
      throw std::invalid_argument("coupling_ratio: pair images differ in size");
    }
    const Image ab = concat_width(xa, xb);
    const auto pc = pair_coupling(pathway(ab, left, grid, grid), pathway(ab, right, grid, grid),
                                  pathway(xa, Box::whole(), grid, grid), pathway(xb, Box::whole(), grid, grid));
    rep.skipped += pc.skipped;
    rep.tokens += pc.used;
    if (pc.used == 0) continue;
    rep.per_pair.push_back(pc.mean);
  }
  rep.pairs = rep.per_pair.size();
  double s = 0;
  for (double v : rep.per_pair) s += v;
  rep.cr = rep.pairs ? s / static_cast<double>(rep.pairs) : 0.0;
  return rep;
}

// --- aggregation ----------------------------------------------------------

AggregationResult aggregate_experiment(const vit::Encoder& encoder, const Image& target,
                                       const std::vector<Image>& contexts, const std::vector<std::size_t>& n_values,
                                       std::uint64_t seed) {
  if (n_values.empty()) throw std::invalid_argument("aggregate_experiment: no N values");
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    if (n_values[i] == 0 || (i && n_values[i] <= n_values[i - 1])) {
      throw std::invalid_argument("aggregate_experiment: N values must be positive and ascending");
    }
  }
  const std::size_t n_max = n_values.back();
  if (n_max > contexts.size()) {
    throw std::invalid_argument("aggregate_experiment: N_max " + std::to_string(n_max) + " exceeds " +
                                std::to_string(contexts.size()) + " contexts");
  }
  const std::size_t p = encoder.config().patch_size;
  AggregationResult res;
  res.n_values = n_values;
  res.grid_h = target.height / p;
  res.grid_w = target.width / p;

  Rng rng(seed);
  std::vector<double> sum;
  std::vector<std::vector<double>> means;
  std::size_t next = 0;
  for (std::size_t i = 0; i < n_max; ++i) {
    const auto comp = regions::compose_context(target, contexts[i], rng, p);
    const auto sub = regions::roi_align(encoder.forward(comp.image), comp.placement, res.grid_h, res.grid_w).tokens;
    if (sum.empty()) sum.assign(sub.numel(), 0.0);
    const auto v = sub.data();
    for (std::size_t k = 0; k < v.size(); ++k) sum[k] += v[k];
    if (i + 1 == n_values[next]) {
      std::vector<double> m(sum.size());
      for (std::size_t k = 0; k < sum.size(); ++k) m[k] = sum[k] / static_cast<double>(i + 1);
      means.push_back(std::move(m));
      ++next;
    }
  }
  const std::size_t l = res.grid_h * res.grid_w;
  const std::size_t d = sum.size() / l;
  const auto& ref = means.back();
  for (const auto& m : means) {
    double dev = 0;
    for (std::size_t t = 0; t < l; ++t) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += (m[t * d + k] - ref[t * d + k]) * (m[t * d + k] - ref[t * d + k]);
      dev += std::sqrt(s);
    }
    res.deviation.push_back(dev / static_cast<double>(l));
    res.aggregates.push_back(TensorF::from_data({l, d}, std::vector<float>(m.begin(), m.end())));
  }
  return res;
}

// --- affinity -------------------------------------------------------------

AffinityMap affinity_map(const FeatureMap& feat, std::size_t r, std::size_t c) {
  if (r >= feat.grid_h || c >= feat.grid_w) {
    throw std::invalid_argument("affinity_map: query (" + std::to_string(r) + "," + std::to_string(c) +
                                ") outside " + std::to_string(feat.grid_h) + "x" + std::to_string(feat.grid_w) +
                                " grid");
  }
  const std::size_t l = feat.length(), d = feat.dim();
  const auto v = feat.tokens.data();
  for (std::size_t i = 0; i < l; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < d; ++k) s += static_cast<double>(v[i * d + k]) * v[i * d + k];
    if (!(s > 0)) throw std::invalid_argument("affinity_map: zero-norm token " + std::to_string(i));
  }
  const auto u = unit_rows(feat.tokens);
  AffinityMap out{r, c, feat.grid_h, feat.grid_w, std::vector<double>(l)};
  const std::size_t q = r * feat.grid_w + c;
  for (std::size_t i = 0; i < l; ++i) out.values[i] = std::clamp(dot(&u[q * d], &u[i * d], d), -1.0, 1.0);
  return out;
}

// --- zero-shot classification ----------------------------------------------

ZeroShotResult& ZeroShotResult::operator+=(const ZeroShotResult& o) {
  evaluated += o.evaluated;
  top1 += o.top1;
  top5 += o.top5;
  skipped += o.skipped;
  return *this;
}

ZeroShotResult zero_shot_classify(const FeatureMap& feat, const std::vector<LabeledRegion>& regions,
                                  const TensorF& prototypes, Pooling pooling) {
  const std::size_t d = feat.dim(), k = prototypes.rows();
  if (prototypes.cols() != d) throw num::ShapeError("zero_shot_classify", "prototype width differs from features");
  const auto protos = unit_rows(prototypes);
  const auto v = feat.tokens.data();
  ZeroShotResult res;
  std::vector<double> pooled(d);
  for (const auto& region : regions) {
    if (region.label >= k) throw std::invalid_argument("zero_shot_classify: label outside prototype set");
    if (pooling == Pooling::box) {
      const auto p = regions::roi_pool(feat, region.box);
      for (std::size_t j = 0; j < d; ++j) pooled[j] = p.data()[j];
    } else {
      if (region.mask.size() != feat.length()) throw num::ShapeError("zero_shot_classify", "mask size differs from grid");
      std::fill(pooled.begin(), pooled.end(), 0.0);
      std::size_t count = 0;
      for (std::size_t t = 0; t < feat.length(); ++t) {
        if (!region.mask[t]) continue;
        for (std::size_t j = 0; j < d; ++j) pooled[j] += v[t * d + j];
        ++count;
      }
      if (count == 0) {
        ++res.skipped;
        continue;
      }
      for (auto& x : pooled) x /= static_cast<double>(count);
    }
    const double norm = std::sqrt(dot(pooled.data(), pooled.data(), d));
    std::vector<double> score(k);
    for (std::size_t c = 0; c < k; ++c) score[c] = norm > 0 ? dot(pooled.data(), &protos[c * d], d) / norm : 0.0;
    // Rank of the true class; ties resolve towards the smaller class id.
    std::size_t rank = 0;
    const double s = score[region.label];
    for (std::size_t c = 0; c < k; ++c) {
      if (score[c] > s || (score[c] == s && c < region.label)) ++rank;
    }
    ++res.evaluated;
    res.top1 += rank == 0;
    res.top5 += rank < 5;
  }
  return res;
}

SceneRegions scene_regions(const data::Scene& scene) {
  const std::size_t g = scene.grid();
  SceneRegions out;
  std::vector<std::uint8_t> covered(g * g, 0);
  auto centre_inside = [g](const Box& b, std::size_t r, std::size_t c) {
    const double y = (static_cast<double>(r) + 0.5) / static_cast<double>(g);
    const double x = (static_cast<double>(c) + 0.5) / static_cast<double>(g);
    return b.x0 <= x && x < b.x1 && b.y0 <= y && y < b.y1;
  };
  for (const auto& inst : scene.instances) {
    out.boxes.push_back({inst.box, {}, inst.label});
    LabeledRegion m{inst.box, std::vector<std::uint8_t>(g * g, 0), inst.label};
    for (std::size_t r = 0; r < g; ++r)
      for (std::size_t c = 0; c < g; ++c) {
        if (!centre_inside(inst.box, r, c)) continue;
        covered[r * g + c] = 1;
        if (scene.patch_labels[r * g + c] == inst.label) m.mask[r * g + c] = 1;
      }
    out.thing_masks.push_back(std::move(m));
  }
  LabeledRegion stuff{Box::whole(), std::vector<std::uint8_t>(g * g, 0), scene.background};
  for (std::size_t t = 0; t < g * g; ++t) stuff.mask[t] = !covered[t] && scene.patch_labels[t] == scene.background;
  out.stuff_masks.push_back(std::move(stuff));
  return out;
}

// --- per-token segmentation ---------------------------------------------------

double SegmentStats::miou() const {
  double s = 0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < present.size(); ++c) {
    if (!present[c]) continue;
    s += static_cast<double>(intersection[c]) / static_cast<double>(uni[c]);
    ++n;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

SegmentStats& SegmentStats::operator+=(const SegmentStats& o) {
  if (o.present.size() != present.size()) throw std::invalid_argument("SegmentStats: class counts differ");
  for (std::size_t c = 0; c < present.size(); ++c) {
    intersection[c] += o.intersection[c];
    uni[c] += o.uni[c];
    present[c] += o.present[c];
  }
  return *this;
}

SegmentStats per_token_segment(const FeatureMap& feat, const TensorF& prototypes,
                               const std::vector<std::uint8_t>& labels) {
  if (labels.size() != feat.length()) throw num::ShapeError("per_token_segment", "label grid differs from token grid");
  const std::size_t d = feat.dim(), k = prototypes.rows();
  if (prototypes.cols() != d) throw num::ShapeError("per_token_segment", "prototype width differs from features");
  const auto protos = unit_rows(prototypes);
  const auto u = unit_rows(feat.tokens);
  SegmentStats st(k);
  for (std::size_t t = 0; t < feat.length(); ++t) {
    std::size_t pred = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double s = dot(&u[t * d], &protos[c * d], d);
      if (s > best) {
        best = s;
        pred = c;
      }
    }
    const std::size_t y = labels[t];
    if (y >= k) throw std::invalid_argument("per_token_segment: label outside prototype set");
    ++st.present[y];
    if (pred == y) {
      ++st.intersection[y];
      ++st.uni[y];
    } else {
      ++st.uni[y];
      ++st.uni[pred];
    }
  }
  return st;
}

// --- correlation divergence ---------------------------------------------------

double mean_row_js(const TensorF& p, const TensorF& q) {
  require_same_shape("mean_row_js", p, q);
  const std::size_t n = p.rows(), m = p.cols();
  const auto pv = p.data(), qv = q.data();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double js = 0;
    for (std::size_t k = 0; k < m; ++k) {
      const double a = pv[i * m + k], b = qv[i * m + k];
      const double mid = 0.5 * (a + b);
      const double ta = a > 0 ? a * std::log(a / mid) : 0.0;
      const double tb = b > 0 ? b * std::log(b / mid) : 0.0;
      js += 0.5 * (ta + tb);
    }
    total += js;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

double correlation_divergence(const DensePathway& student, const DensePathway& teacher,
                              const std::vector<Image>& images, const std::vector<std::vector<Box>>& boxes,
                              std::size_t region_size, double tau) {
  if (images.size() != boxes.size()) throw std::invalid_argument("correlation_divergence: one box list per image");
  const auto t = static_cast<float>(tau);
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (const auto& b : boxes[i]) {
      const TensorF zs = student(images[i], b, region_size, region_size).detach();
      const TensorF zt = teacher(images[i], b, region_size, region_size).detach();
      sum += mean_row_js(loss::normalize(loss::correlation(zs), t).values,
                         loss::normalize(loss::correlation(zt), t).values);
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace scd::diag
