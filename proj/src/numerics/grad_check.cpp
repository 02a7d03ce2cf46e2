#include "scd/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace scd::num {

GradCheckReport grad_check(const std::function<TensorD(const TensorD&)>& f, const TensorD& point, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-3]");

  TensorD x = TensorD::from_data(point.shape(), std::vector<double>(point.data().begin(), point.data().end()), true);
  TensorD y = f(x);
  if (y.numel() != 1) throw ShapeError("grad_check", "function must return a scalar, got " + shape_str(y.shape()));
  y.backward();
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());

  GradCheckReport report;
  std::vector<double> probe(point.data().begin(), point.data().end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    double fv[4];
    const double offsets[4] = {2 * eps, eps, -eps, -2 * eps};
    for (int k = 0; k < 4; ++k) {
      probe[i] = orig + offsets[k];
      fv[k] = f(TensorD::from_data(point.shape(), probe)).item();
      if (!std::isfinite(fv[k])) throw NonFiniteError("grad_check: non-finite function value");
    }
    probe[i] = orig;
    const double numeric = (-fv[0] + 8 * fv[1] - 8 * fv[2] + fv[3]) / (12 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kGradFloor});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (i == 0 || rel > report.max_rel_error) report = {rel, i, analytic[i], numeric};
  }
  return report;
}

}  // namespace scd::num
