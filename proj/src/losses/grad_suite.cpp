#include "scd/losses/grad_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "scd/losses/losses.hpp"
#include "scd/numerics/grad_check.hpp"
#include "scd/numerics/ops.hpp"
#include "scd/regions/regions.hpp"
#include "scd/rng.hpp"

namespace scd::loss {

using num::TensorD;

namespace {

// Entries N(0, 1/cols): rows have unit expected norm, like encoder tokens.
TensorD random(Rng& rng, num::Shape shape) {
  std::vector<double> v(num::shape_numel(shape));
  const double scale = 1.0 / std::sqrt(static_cast<double>(shape.back()));
  for (auto& x : v) x = scale * rng.normal();
  return TensorD::from_data(std::move(shape), std::move(v));
}

// One random instance: the function under test and the point to check at.
struct Problem {
  std::function<TensorD(const TensorD&)> f;
  TensorD x;
};

using Builder = std::function<Problem(Rng&, std::size_t l, std::size_t d)>;

std::vector<TensorD> attention_maps(const TensorD& logits, std::size_t heads, std::size_t t) {
  std::vector<TensorD> out;
  for (std::size_t h = 0; h < heads; ++h) out.push_back(num::softmax_rows(num::slice_rows(logits, h * t, (h + 1) * t)));
  return out;
}

std::vector<std::pair<std::string, Builder>> builders() {
  std::vector<std::pair<std::string, Builder>> b;
  b.emplace_back("rla_cosine", [](Rng& rng, std::size_t l, std::size_t d) {
    TensorD sup = random(rng, {l, d});
    return Problem{[sup](const TensorD& x) { return rla_loss(x, sup, AlignMode::cosine); }, random(rng, {l, d})};
  });
  b.emplace_back("rla_infonce", [](Rng& rng, std::size_t l, std::size_t d) {
    TensorD sup = random(rng, {l, d});
    return Problem{[sup](const TensorD& x) { return rla_loss(x, sup, AlignMode::infonce); }, random(rng, {l, d})};
  });
  b.emplace_back("scd", [](Rng& rng, std::size_t l, std::size_t d) {
    TensorD zt = random(rng, {l, d});
    return Problem{[zt](const TensorD& x) { return scd_loss<double>({x}, {zt}, 0.2, 0.2); }, random(rng, {l, d})};
  });
  b.emplace_back("refiner_infonce", [](Rng& rng, std::size_t l, std::size_t d) {
    TensorD local = random(rng, {l, d});
    return Problem{[local](const TensorD& x) { return refiner_loss(x, local, AlignMode::infonce); }, random(rng, {l, d})};
  });
  b.emplace_back("refiner_cosine", [](Rng& rng, std::size_t l, std::size_t d) {
    TensorD local = random(rng, {l, d});
    return Problem{[local](const TensorD& x) { return refiner_loss(x, local, AlignMode::cosine); }, random(rng, {l, d})};
  });
  b.emplace_back("frobenius", [](Rng& rng, std::size_t l, std::size_t d) {
    TensorD ct = correlation(random(rng, {l, d})).values;
    return Problem{[ct](const TensorD& x) { return frobenius_loss(correlation(x).values, ct); }, random(rng, {l, d})};
  });
  b.emplace_back("inter_instance", [](Rng& rng, std::size_t l, std::size_t d) {
    TensorD pt = random(rng, {l, d});
    return Problem{[pt](const TensorD& x) { return inter_instance_loss(x, pt, 0.2, 0.2); }, random(rng, {l, d})};
  });
  b.emplace_back("attention", [](Rng& rng, std::size_t l, std::size_t) {
    const std::size_t heads = 2;
    const auto teacher = attention_maps(random(rng, {heads * l, l}), heads, l);
    return Problem{[teacher, l](const TensorD& x) { return attention_loss(attention_maps(x, 2, l), teacher); },
                   random(rng, {heads * l, l})};
  });
  b.emplace_back("roi_align", [](Rng& rng, std::size_t l, std::size_t d) {
    const std::size_t gh = std::max<std::size_t>(2, l / 2), gw = std::max<std::size_t>(2, l / gh);
    const double x0 = rng.uniform(0, 0.5), y0 = rng.uniform(0, 0.5);
    const double x1 = rng.uniform(x0 + 0.5, 1.0), y1 = rng.uniform(y0 + 0.5, 1.0);
    const std::size_t oh = static_cast<std::size_t>(rng.uniform_int(1, 3)), ow = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const auto pts = regions::roi_sample_points({x0, y0, x1, y1}, gh, gw, oh, ow);
    TensorD c = random(rng, {oh * ow, d});
    return Problem{[pts, gh, gw, c](const TensorD& x) { return num::sum(num::mul(num::bilinear_sample(x, gh, gw, pts), c)); },
                   random(rng, {gh * gw, d})};
  });
  return b;
}

}  // namespace

std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed, std::size_t instances) {
  std::vector<GradSuiteEntry> out;
  for (const auto& [name, build] : builders()) {
    Rng rng(derive_seed(seed, "grad_suite/" + name));
    GradSuiteEntry e{name, instances};
    for (std::size_t i = 0; i < instances; ++i) {
      const auto l = static_cast<std::size_t>(rng.uniform_int(2, 16));
      const auto d = static_cast<std::size_t>(rng.uniform_int(2, 8));
      const Problem p = build(rng, l, d);
      const auto rep = num::grad_check(p.f, p.x);
      if (rep.max_rel_error >= e.max_rel_error) {
        e.max_rel_error = rep.max_rel_error;
        e.analytic = rep.analytic_at_worst;
        e.numeric = rep.numeric_at_worst;
      }
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace scd::loss
