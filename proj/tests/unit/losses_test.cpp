#include <gtest/gtest.h>

#include <cmath>

#include "scd/losses/losses.hpp"
#include "scd/numerics/grad_check.hpp"
#include "scd/numerics/ops.hpp"
#include "test_support.hpp"

using namespace scd;
using num::TensorD;
using scd::testing::random_tensor;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const TensorD& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> unit(std::vector<double> v) {
  const double n = std::sqrt(dot(v, v));
  for (auto& x : v) x /= n;
  return v;
}

Mat naive_gram(const Mat& z) {
  Mat c(z.size(), std::vector<double>(z.size()));
  for (std::size_t i = 0; i < z.size(); ++i)
    for (std::size_t j = 0; j < z.size(); ++j) c[i][j] = dot(z[i], z[j]);
  return c;
}

std::vector<double> naive_softmax(const std::vector<double>& row, double tau) {
  double mx = -1e300, s = 0;
  for (double v : row) mx = std::max(mx, v / tau);
  std::vector<double> out;
  for (double v : row) s += std::exp(v / tau - mx);
  for (double v : row) out.push_back(std::exp(v / tau - mx) / s);
  return out;
}

double naive_scd(const Mat& zs, const Mat& zt, double ts, double tt) {
  const Mat cs = naive_gram(zs), ct = naive_gram(zt);
  double total = 0;
  for (std::size_t j = 0; j < cs.size(); ++j) {
    auto ps = naive_softmax(cs[j], ts), pt = naive_softmax(ct[j], tt);
    for (std::size_t k = 0; k < ps.size(); ++k) total -= pt[k] * std::log(ps[k]);
  }
  return total / static_cast<double>(cs.size());
}

// −mean_j log softmax_k(a_j · b_k / temp)[j] on normalized rows.
double naive_nce(const Mat& a, const Mat& b, double temp) {
  double total = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    std::vector<double> logits;
    for (std::size_t k = 0; k < b.size(); ++k) logits.push_back(dot(unit(a[j]), unit(b[k])));
    total -= std::log(naive_softmax(logits, temp)[j]);
  }
  return total / static_cast<double>(a.size());
}


double row_entropy_mean(const TensorD& p) {
  double h = 0;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) h -= p.at(i, j) * std::log(p.at(i, j));
  return h / static_cast<double>(p.rows());
}

TensorD random_orthogonal(Rng& rng, std::size_t d) {
  // Gram–Schmidt on a random matrix.
  Mat q;
  while (q.size() < d) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    for (const auto& u : q) {
      const double p = dot(v, u);
      for (std::size_t i = 0; i < d; ++i) v[i] -= p * u[i];
    }
    if (dot(v, v) > 1e-6) q.push_back(unit(v));
  }
  std::vector<double> flat;
  for (const auto& r : q) flat.insert(flat.end(), r.begin(), r.end());
  return TensorD::from_data({d, d}, flat);
}

}  // namespace

TEST(Correlation, OrthonormalRowsGiveIdentity) {
  auto c = loss::correlation(TensorD::from_data({2, 3}, {1, 0, 0, 0, 0, 1})).values;
  EXPECT_EQ(c.at(0, 0), 1.0);
  EXPECT_EQ(c.at(0, 1), 0.0);
  EXPECT_EQ(c.at(1, 1), 1.0);
}

TEST(Correlation, EqualRowsGiveConstantMatrix) {
  auto c = loss::correlation(TensorD::from_data({3, 2}, {1, 2, 1, 2, 1, 2})).values;
  for (double v : c.data()) EXPECT_EQ(v, 5.0);
}

TEST(Correlation, MatchesNaiveLoopAndIsSymmetric) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto z = random_tensor<double>(rng, {3, 2});
    auto c = loss::correlation(z);
    EXPECT_FALSE(c.normalized);
    auto want = naive_gram(to_mat(z));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_NEAR(c.values.at(i, j), want[i][j], 1e-12);
        EXPECT_NEAR(c.values.at(i, j), c.values.at(j, i), 1e-5);
      }
  }
  EXPECT_THROW(loss::correlation(TensorD::zeros({0, 3})), num::ShapeError);
}

TEST(Normalize, Anchors) {
  auto u = loss::normalize(loss::correlation(TensorD::zeros({4, 2})), 0.2).values;
  for (double v : u.data()) EXPECT_NEAR(v, 0.25, 1e-12);
  loss::CorrelationMatrix<double> c{TensorD::from_data({1, 2}, {1, 0}), false, 1.0};
  auto n = loss::normalize(c, 1.0);
  EXPECT_TRUE(n.normalized);
  EXPECT_NEAR(n.values.at(0, 0), 0.7311, 1e-4);
  EXPECT_NEAR(n.values.at(0, 1), 0.2689, 1e-4);
  EXPECT_THROW(loss::normalize(c, 0.0), std::invalid_argument);
}

TEST(Normalize, ColdTemperatureApproachesArgmax) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto z = random_tensor<double>(rng, {5, 3});
    auto raw = loss::correlation(z);
    auto n = loss::normalize(raw, 1e-3);
    for (std::size_t i = 0; i < 5; ++i) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < 5; ++j)
        if (raw.values.at(i, j) > raw.values.at(i, arg)) arg = j;
      double s = 0;
      bool tied = false;
      for (std::size_t j = 0; j < 5; ++j) {
        s += n.values.at(i, j);
        tied = tied || (j != arg && raw.values.at(i, arg) - raw.values.at(i, j) < 1e-2);
      }
      // Near-tied rows have no one-hot limit at this temperature.
      if (!tied) {
        for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(n.values.at(i, j), j == arg ? 1.0 : 0.0, 1e-3);
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(ScdLoss, UniformCaseIsLogL) {
  for (std::size_t l : {1u, 3u, 16u}) {
    auto z = TensorD::zeros({l, 4});
    EXPECT_NEAR(loss::scd_loss<double>({z}, {z}, 0.2, 0.2).item(), std::log(static_cast<double>(l)), 1e-6);
  }
}

TEST(ScdLoss, OneHotTargetAgainstUniformStudent) {
  auto h = loss::soft_cross_entropy(TensorD::from_data({1, 2}, {1, 0}), TensorD::from_data({1, 2}, {0, 0}));
  EXPECT_NEAR(h.item(), 0.6931, 1e-4);
}

TEST(ScdLoss, MatchesNaiveOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TensorD> zs, zt;
    double want = 0;
    for (int r = 0; r < 3; ++r) {
      zs.push_back(random_tensor<double>(rng, {4, 3}));
      zt.push_back(random_tensor<double>(rng, {4, 3}));
      want += naive_scd(to_mat(zs.back()), to_mat(zt.back()), 0.2, 0.3) / 3;
    }
    EXPECT_NEAR(loss::scd_loss(zs, zt, 0.2, 0.3).item(), want, 1e-6);
  }
}

TEST(ScdLoss, BoundedBelowByTeacherEntropy) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto zs = random_tensor<double>(rng, {6, 4}, false, 0.5);
    auto zt = random_tensor<double>(rng, {6, 4}, false, 0.5);
    const double h = row_entropy_mean(loss::normalize(loss::correlation(zt), 0.2).values);
    EXPECT_GE(loss::scd_loss<double>({zs}, {zt}, 0.2, 0.2).item() - h, -1e-6);
    EXPECT_NEAR(loss::scd_loss<double>({zt}, {zt}, 0.2, 0.2).item(), h, 1e-6);
  }
}

TEST(ScdLoss, InvariantToOrthogonalRotation) {
  Rng rng(5);
  for (int seed = 0; seed < 100; ++seed) {
    auto zs = random_tensor<double>(rng, {5, 4}, false, 0.5);
    auto zt = random_tensor<double>(rng, {5, 4}, false, 0.5);
    auto r = random_orthogonal(rng, 4);
    const double base = loss::scd_loss<double>({zs}, {zt}, 0.2, 0.2).item();
    const double rot = loss::scd_loss<double>({num::matmul(zs, r)}, {num::matmul(zt, r)}, 0.2, 0.2).item();
    EXPECT_NEAR(base, rot, 1e-5);
  }
}

TEST(ScdLoss, ErrorsAndTeacherGetsNoGradient) {
  EXPECT_THROW(loss::scd_loss<double>({TensorD::zeros({3, 2})}, {TensorD::zeros({4, 2})}, 0.2, 0.2), num::ShapeError);
  EXPECT_THROW(loss::scd_loss<double>({}, {}, 0.2, 0.2), num::ShapeError);
  Rng rng(6);
  auto zs = random_tensor<double>(rng, {4, 3}, true);
  auto zt = random_tensor<double>(rng, {4, 3}, true);
  loss::scd_loss<double>({zs}, {zt}, 0.2, 0.2).backward();
  for (double g : zt.grad()) EXPECT_EQ(g, 0.0);
  double norm = 0;
  for (double g : zs.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
}

TEST(ScdLoss, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto zt = random_tensor<double>(rng, {4, 3});
    auto rep = num::grad_check(
        [zt](const TensorD& x) { return loss::scd_loss<double>({x}, {zt}, 0.2, 0.2); },
        random_tensor<double>(rng, {4, 3}));
    EXPECT_LT(rep.max_rel_error, 1e-4);
  }
}

TEST(RlaLoss, CosineAnchors) {
  auto a = TensorD::from_data({2, 2}, {1, 2, -3, 1});
  EXPECT_NEAR(loss::rla_loss(a, a, loss::AlignMode::cosine).item(), 0.0, 1e-12);
  auto b = TensorD::from_data({2, 2}, {-2, 1, 1, 3});
  EXPECT_NEAR(loss::rla_loss(a, b, loss::AlignMode::cosine).item(), 1.0, 1e-12);
}

TEST(RlaLoss, InfoNceTwoOrthonormalPairs) {
  auto e = TensorD::from_data({2, 2}, {1, 0, 0, 1});
  const double want = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  EXPECT_NEAR(loss::rla_loss(e, e, loss::AlignMode::infonce, 1.0).item(), want, 1e-3);
  EXPECT_NEAR(want, 0.3133, 1e-3);
}

TEST(RlaLoss, InfoNceMatchesNaiveSymmetricOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_tensor<double>(rng, {5, 4});
    auto b = random_tensor<double>(rng, {5, 4});
    const double want = 0.5 * (naive_nce(to_mat(a), to_mat(b), 0.07) + naive_nce(to_mat(b), to_mat(a), 0.07));
    EXPECT_NEAR(loss::rla_loss(a, b, loss::AlignMode::infonce).item(), want, 1e-6);
  }
}

TEST(RlaLoss, Errors) {
  auto z = TensorD::from_data({2, 2}, {0, 0, 1, 1});
  auto ok = TensorD::from_data({2, 2}, {1, 0, 1, 1});
  EXPECT_THROW(loss::rla_loss(z, ok, loss::AlignMode::cosine), std::invalid_argument);
  EXPECT_THROW(loss::rla_loss(ok, z, loss::AlignMode::infonce), std::invalid_argument);
  auto one = TensorD::from_data({1, 2}, {1, 0});
  EXPECT_THROW(loss::rla_loss(one, one, loss::AlignMode::infonce), std::invalid_argument);
  EXPECT_NO_THROW(loss::rla_loss(one, one, loss::AlignMode::cosine));
  EXPECT_THROW(loss::rla_loss(ok, one, loss::AlignMode::cosine), num::ShapeError);
}

TEST(RefinerLoss, Anchors) {
  auto one = TensorD::from_data({1, 3}, {0.3, -1, 2});
  EXPECT_NEAR(loss::refiner_loss(one, one, loss::AlignMode::infonce).item(), 0.0, 1e-12);
  std::vector<double> eye(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  auto e = TensorD::from_data({4, 4}, eye);
  EXPECT_NEAR(loss::refiner_loss(e, e, loss::AlignMode::infonce, 1.0).item(), 0.7437, 1e-3);
  EXPECT_NEAR(loss::refiner_loss(e, e, loss::AlignMode::cosine).item(), 0.0, 1e-12);
  EXPECT_THROW(loss::refiner_loss(e, one, loss::AlignMode::infonce), num::ShapeError);
}

TEST(RefinerLoss, MatchesNaiveOracle) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_tensor<double>(rng, {6, 4});
    auto b = random_tensor<double>(rng, {6, 4});
    EXPECT_NEAR(loss::refiner_loss(a, b, loss::AlignMode::infonce).item(), naive_nce(to_mat(a), to_mat(b), 0.1), 1e-6);
    double cos_mean = 0;
    auto ma = to_mat(a), mb = to_mat(b);
    for (std::size_t j = 0; j < 6; ++j) cos_mean += (1 - dot(unit(ma[j]), unit(mb[j]))) / 6;
    EXPECT_NEAR(loss::refiner_loss(a, b, loss::AlignMode::cosine).item(), cos_mean, 1e-6);
  }
}

TEST(RefinerLoss, LocalTargetsAreDetached) {
  Rng rng(10);
  auto a = random_tensor<double>(rng, {4, 3}, true);
  auto b = random_tensor<double>(rng, {4, 3}, true);
  loss::refiner_loss(a, b, loss::AlignMode::infonce).backward();
  for (double g : b.grad()) EXPECT_EQ(g, 0.0);
}

TEST(ScRlaLoss, CombinesParts) {
  auto rla = TensorD::scalar(0.5), scd = TensorD::scalar(1.0);
  EXPECT_NEAR(loss::sc_rla_loss(rla, scd, 0.2).item(), 0.7, 1e-12);
  EXPECT_EQ(loss::sc_rla_loss(rla, scd, 0.0).item(), 0.5);
  EXPECT_THROW(loss::sc_rla_loss(rla, scd, -0.1), std::invalid_argument);
}

TEST(ScRlaLoss, GradientIsSumOfPartGradients) {
  Rng rng(11);
  auto sup = random_tensor<double>(rng, {4, 3});
  auto zt = random_tensor<double>(rng, {4, 3});
  auto point = random_tensor<double>(rng, {4, 3});
  auto grad_of = [&](auto fn) {
    auto x = point.clone();
    x.set_requires_grad(true);
    fn(x).backward();
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  auto rla = [&](const TensorD& x) { return loss::rla_loss(x, sup, loss::AlignMode::infonce); };
  auto scd = [&](const TensorD& x) { return loss::scd_loss<double>({x}, {zt}, 0.2, 0.2); };
  auto g_total = grad_of([&](const TensorD& x) { return loss::sc_rla_loss(rla(x), scd(x), 0.2); });
  auto g_rla = grad_of(rla), g_scd = grad_of(scd);
  for (std::size_t i = 0; i < g_total.size(); ++i) EXPECT_NEAR(g_total[i], g_rla[i] + 0.2 * g_scd[i], 1e-6);
  EXPECT_EQ(loss::sc_rla_loss(rla(point), scd(point), 0.0).item(), rla(point).item());
}

TEST(AblationLosses, Frobenius) {
  Rng rng(12);
  auto c = random_tensor<double>(rng, {3, 3});
  EXPECT_EQ(loss::frobenius_loss(c, c).item(), 0.0);
  auto ones = TensorD::full({2, 2}, 1.0);
  EXPECT_NEAR(loss::frobenius_loss(ones, TensorD::zeros({2, 2})).item(), 1.0, 1e-12);
  auto a = random_tensor<double>(rng, {4, 4}), b = random_tensor<double>(rng, {4, 4});
  double want = 0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) want += std::pow(a.at(i, j) - b.at(i, j), 2) / 16;
  EXPECT_NEAR(loss::frobenius_loss(a, b).item(), want, 1e-6);
  EXPECT_THROW(loss::frobenius_loss(a, c), num::ShapeError);
}

TEST(AblationLosses, InterInstanceIsScdOnPooledCorrelation) {
  Rng rng(13);
  auto ps = random_tensor<double>(rng, {5, 4}), pt = random_tensor<double>(rng, {5, 4});
  EXPECT_NEAR(loss::inter_instance_loss(ps, pt, 0.2, 0.2).item(), naive_scd(to_mat(ps), to_mat(pt), 0.2, 0.2), 1e-6);
  EXPECT_THROW(loss::inter_instance_loss(ps, random_tensor<double>(rng, {4, 4}), 0.2, 0.2), num::ShapeError);
}

TEST(AblationLosses, AttentionCrossEntropy) {
  Rng rng(14);
  std::vector<TensorD> s, t;
  double want = 0;
  for (int h = 0; h < 2; ++h) {
    s.push_back(num::softmax_rows(random_tensor<double>(rng, {3, 3})));
    t.push_back(num::softmax_rows(random_tensor<double>(rng, {3, 3})));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) want -= t.back().at(i, j) * std::log(s.back().at(i, j)) / 6;
  }
  EXPECT_NEAR(loss::attention_loss(s, t).item(), want, 1e-6);
  EXPECT_THROW(loss::attention_loss(s, {t[0]}), num::ShapeError);
}

TEST(LossWeights, Validation) {
  loss::LossWeights w;
  EXPECT_NO_THROW(w.validate());
  EXPECT_DOUBLE_EQ(w.lambda, 0.2);
  EXPECT_DOUBLE_EQ(w.tau_s, 0.2);
  w.tau_t = 0;
  EXPECT_THROW(w.validate(), std::invalid_argument);
}
