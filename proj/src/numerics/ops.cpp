#include "scd/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace scd::num {
namespace {

template <typename T>
using NodeT = detail::Node<T>;

template <typename T>
using BackwardFn = std::function<void(NodeT<T>&)>;

std::string dims(const Shape& s) { return shape_str(s); }

template <typename T>
void require_rank2(const char* op, const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError(op, "expected rank 2, got " + dims(a.shape()));
}

template <typename T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, dims(a.shape()) + " vs " + dims(b.shape()));
}

// Builds the result node. The graph edge and backward closure are attached
// only when an input needs a gradient.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                      BackwardFn<T> backward) {
  if constexpr (kVerificationMode<T>) {
    for (T v : value) {
      if (!std::isfinite(v)) throw NonFiniteError(std::string(op) + ": non-finite output");
    }
  }
  auto node = std::make_shared<NodeT<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->leaf = false;
  node->op = op;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->grad.assign(node->value.size(), T(0));
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
NodeT<T>& parent(NodeT<T>& self, std::size_t i) {
  return *self.parents[i];
}

template <typename T>
T gelu_cdf(T x) {
  return T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

}  // namespace

// --- linear algebra -------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw ShapeError("matmul", dims(a.shape()) + " · " + dims(b.shape()));
  std::vector<T> out(m * n, T(0));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T s = pa[i * k + p];
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return make_result<T>("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](NodeT<T>& self) {
    auto& A = parent(self, 0);
    auto& B = parent(self, 1);
    const T* g = self.grad.data();
    if (A.requires_grad) {
      std::vector<T> bt(n * k);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B.value[p * n + j];
      for (std::size_t i = 0; i < m; ++i) {
        T* arow = A.grad.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
          const T s = g[i * n + j];
          const T* btrow = bt.data() + j * k;
          for (std::size_t p = 0; p < k; ++p) arow[p] += s * btrow[p];
        }
      }
    }
    if (B.requires_grad) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const T s = A.value[i * k + p];
          T* brow = B.grad.data() + p * n;
          const T* grow = g + i * n;
          for (std::size_t j = 0; j < n; ++j) brow[j] += s * grow[j];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2("matmul_nt", a);
  require_rank2("matmul_nt", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) throw ShapeError("matmul_nt", dims(a.shape()) + " · " + dims(b.shape()) + "ᵀ");
  std::vector<T> out(m * n, T(0));
  const T* pa = a.data().data();
  std::vector<T> bt(k * n);
  const auto bv = b.data();
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = bv[j * k + p];
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T s = pa[i * k + p];
      const T* btrow = bt.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * btrow[j];
    }
  }
  return make_result<T>("matmul_nt", {m, n}, std::move(out), {a, b}, [m, k, n](NodeT<T>& self) {
    auto& A = parent(self, 0);
    auto& B = parent(self, 1);
    const T* g = self.grad.data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const T gij = g[i * n + j];
        if (gij == T(0)) continue;
        if (A.requires_grad) {
          T* ga = A.grad.data() + i * k;
          const T* vb = B.value.data() + j * k;
          for (std::size_t p = 0; p < k; ++p) ga[p] += gij * vb[p];
        }
        if (B.requires_grad) {
          T* gb = B.grad.data() + j * k;
          const T* va = A.value.data() + i * k;
          for (std::size_t p = 0; p < k; ++p) gb[p] += gij * va[p];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank2("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(m * n);
  const auto in = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  return make_result<T>("transpose", {n, m}, std::move(out), {a}, [m, n](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) A.grad[i * n + j] += self.grad[j * m + i];
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return add_rowvec(matmul(x, w), b);
}

// --- elementwise ----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("add", a, b);
  std::vector<T> out(a.numel());
  const auto va = a.data(), vb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  return make_result<T>("add", a.shape(), std::move(out), {a, b}, [](NodeT<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = parent(self, k);
      if (!p.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("sub", a, b);
  std::vector<T> out(a.numel());
  const auto va = a.data(), vb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  return make_result<T>("sub", a.shape(), std::move(out), {a, b}, [](NodeT<T>& self) {
    auto& A = parent(self, 0);
    auto& B = parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (A.requires_grad) A.grad[i] += self.grad[i];
      if (B.requires_grad) B.grad[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("mul", a, b);
  std::vector<T> out(a.numel());
  const auto va = a.data(), vb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  return make_result<T>("mul", a.shape(), std::move(out), {a, b}, [](NodeT<T>& self) {
    auto& A = parent(self, 0);
    auto& B = parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (A.requires_grad) A.grad[i] += self.grad[i] * B.value[i];
      if (B.requires_grad) B.grad[i] += self.grad[i] * A.value[i];
    }
  });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("div", a, b);
  std::vector<T> out(a.numel());
  const auto va = a.data(), vb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] / vb[i];
  return make_result<T>("div", a.shape(), std::move(out), {a, b}, [](NodeT<T>& self) {
    auto& A = parent(self, 0);
    auto& B = parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T inv = T(1) / B.value[i];
      if (A.requires_grad) A.grad[i] += self.grad[i] * inv;
      if (B.requires_grad) B.grad[i] -= self.grad[i] * A.value[i] * inv * inv;
    }
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += s;
  return make_result<T>("add_scalar", a.shape(), std::move(out), {a}, [](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return make_result<T>("mul_scalar", a.shape(), std::move(out), {a}, [s](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] * s;
  });
}

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& v) {
  require_rank2("add_rowvec", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (v.numel() != n) throw ShapeError("add_rowvec", dims(a.shape()) + " + row " + dims(v.shape()));
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto vv = v.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += vv[j];
  return make_result<T>("add_rowvec", a.shape(), std::move(out), {a, v}, [m, n](NodeT<T>& self) {
    auto& A = parent(self, 0);
    auto& V = parent(self, 1);
    if (A.requires_grad)
      for (std::size_t i = 0; i < m * n; ++i) A.grad[i] += self.grad[i];
    if (V.requires_grad)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) V.grad[j] += self.grad[i * n + j];
  });
}

template <typename T>
Tensor<T> mul_rowvec(const Tensor<T>& a, const Tensor<T>& v) {
  require_rank2("mul_rowvec", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (v.numel() != n) throw ShapeError("mul_rowvec", dims(a.shape()) + " * row " + dims(v.shape()));
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto vv = v.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= vv[j];
  return make_result<T>("mul_rowvec", a.shape(), std::move(out), {a, v}, [m, n](NodeT<T>& self) {
    auto& A = parent(self, 0);
    auto& V = parent(self, 1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const T g = self.grad[i * n + j];
        if (A.requires_grad) A.grad[i * n + j] += g * V.value[j];
        if (V.requires_grad) V.grad[j] += g * A.value[i * n + j];
      }
  });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = std::exp(v);
  return make_result<T>("exp", a.shape(), std::move(out), {a}, [](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] * self.value[i];
  });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = std::log(v);
  return make_result<T>("log", a.shape(), std::move(out), {a}, [](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] / A.value[i];
  });
}

template <typename T>
Tensor<T> pow(const Tensor<T>& a, T exponent) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = std::pow(v, exponent);
  return make_result<T>("pow", a.shape(), std::move(out), {a}, [exponent](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      A.grad[i] += self.grad[i] * exponent * std::pow(A.value[i], exponent - T(1));
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v * gelu_cdf(v);
  return make_result<T>("gelu", a.shape(), std::move(out), {a}, [](NodeT<T>& self) {
    auto& A = parent(self, 0);
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T x = A.value[i];
      const T d = gelu_cdf(x) + x * inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
      A.grad[i] += self.grad[i] * d;
    }
  });
}

// --- reductions -----------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  return make_result<T>("sum", {1}, {acc}, {a}, [](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (auto& g : A.grad) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean", "empty tensor");
  return mul_scalar(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& a, std::size_t axis) {
  require_rank2("sum_axis", a);
  const std::size_t m = a.rows(), n = a.cols();
  const auto in = a.data();
  if (axis == 0) {
    std::vector<T> out(n, T(0));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += in[i * n + j];
    return make_result<T>("sum_axis0", {1, n}, std::move(out), {a}, [m, n](NodeT<T>& self) {
      auto& A = parent(self, 0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) A.grad[i * n + j] += self.grad[j];
    });
  }
  if (axis == 1) {
    std::vector<T> out(m, T(0));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i] += in[i * n + j];
    return make_result<T>("sum_axis1", {m, 1}, std::move(out), {a}, [m, n](NodeT<T>& self) {
      auto& A = parent(self, 0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) A.grad[i * n + j] += self.grad[i];
    });
  }
  throw ShapeError("sum_axis", "axis " + std::to_string(axis) + " of " + dims(a.shape()));
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& a, std::size_t axis) {
  const std::size_t count = a.dim(axis);
  if (count == 0) throw ShapeError("mean_axis", "empty axis of " + dims(a.shape()));
  return mul_scalar(sum_axis(a, axis), T(1) / static_cast<T>(count));
}

// --- normalization --------------------------------------------------------

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  require_rank2("softmax_rows", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    const T mx = *std::max_element(row, row + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= z;
  }
  return make_result<T>("softmax_rows", a.shape(), std::move(out), {a}, [m, n](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      const T* y = self.value.data() + i * n;
      const T* g = self.grad.data() + i * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) A.grad[i * n + j] += y[j] * (g[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& a) {
  require_rank2("log_softmax_rows", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    const T mx = *std::max_element(row, row + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) row[j] -= lse;
  }
  return make_result<T>("log_softmax_rows", a.shape(), std::move(out), {a}, [m, n](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      const T* y = self.value.data() + i * n;
      const T* g = self.grad.data() + i * n;
      T gsum = 0;
      for (std::size_t j = 0; j < n; ++j) gsum += g[j];
      for (std::size_t j = 0; j < n; ++j) A.grad[i * n + j] += g[j] - std::exp(y[j]) * gsum;
    }
  });
}

template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  require_rank2("layer_norm_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.numel() != n || bias.numel() != n) {
    throw ShapeError("layer_norm_rows",
                     dims(x.shape()) + " with gain " + dims(gain.shape()) + ", bias " + dims(bias.shape()));
  }
  std::vector<T> out(m * n);
  std::vector<T> xhat(m * n);
  std::vector<T> rstd(m);
  const auto in = x.data();
  const auto g = gain.data(), b = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = in.data() + i * n;
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    rstd[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * rstd[i];
      out[i * n + j] = xhat[i * n + j] * g[j] + b[j];
    }
  }
  return make_result<T>(
      "layer_norm_rows", x.shape(), std::move(out), {x, gain, bias},
      [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](NodeT<T>& self) {
        auto& X = parent(self, 0);
        auto& G = parent(self, 1);
        auto& B = parent(self, 2);
        std::vector<T> dxhat(n);
        for (std::size_t i = 0; i < m; ++i) {
          const T* gy = self.grad.data() + i * n;
          const T* xh = xhat.data() + i * n;
          if (G.requires_grad)
            for (std::size_t j = 0; j < n; ++j) G.grad[j] += gy[j] * xh[j];
          if (B.requires_grad)
            for (std::size_t j = 0; j < n; ++j) B.grad[j] += gy[j];
          if (!X.requires_grad) continue;
          T s1 = 0, s2 = 0;
          for (std::size_t j = 0; j < n; ++j) {
            dxhat[j] = gy[j] * G.value[j];
            s1 += dxhat[j];
            s2 += dxhat[j] * xh[j];
          }
          const T inv_n = T(1) / static_cast<T>(n);
          for (std::size_t j = 0; j < n; ++j)
            X.grad[i * n + j] += rstd[i] * (dxhat[j] - inv_n * s1 - xh[j] * inv_n * s2);
        }
      });
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& a, T eps) {
  require_rank2("l2_normalize_rows", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(a.data().begin(), a.data().end());
  std::vector<T> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    T s = 0;
    for (std::size_t j = 0; j < n; ++j) s += row[j] * row[j];
    norms[i] = std::max(std::sqrt(s), eps);
    for (std::size_t j = 0; j < n; ++j) row[j] /= norms[i];
  }
  return make_result<T>("l2_normalize_rows", a.shape(), std::move(out), {a},
                        [m, n, eps, norms = std::move(norms)](NodeT<T>& self) {
                          auto& A = parent(self, 0);
                          for (std::size_t i = 0; i < m; ++i) {
                            const T* y = self.value.data() + i * n;
                            const T* g = self.grad.data() + i * n;
                            const T inv = T(1) / norms[i];
                            if (norms[i] <= eps) {
                              for (std::size_t j = 0; j < n; ++j) A.grad[i * n + j] += g[j] * inv;
                              continue;
                            }
                            T dot = 0;
                            for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
                            for (std::size_t j = 0; j < n; ++j) A.grad[i * n + j] += (g[j] - y[j] * dot) * inv;
                          }
                        });
}

template <typename T>
Tensor<T> cosine_similarity_rows(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("cosine_similarity_rows", a, b);
  return sum_axis(mul(l2_normalize_rows(a), l2_normalize_rows(b)), 1);
}

// --- structure ------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) throw ShapeError("reshape", dims(a.shape()) + " -> " + dims(shape));
  std::vector<T> out(a.data().begin(), a.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {a}, [](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows", "no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) throw ShapeError("concat_rows", dims(parts.front().shape()) + " vs " + dims(p.shape()));
    m += p.rows();
  }
  std::vector<T> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result<T>("concat_rows", {m, n}, std::move(out), parts, [](NodeT<T>& self) {
    std::size_t offset = 0;
    for (auto& pp : self.parents) {
      if (pp->requires_grad)
        for (std::size_t i = 0; i < pp->grad.size(); ++i) pp->grad[i] += self.grad[offset + i];
      offset += pp->value.size();
    }
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols", "no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols", dims(parts.front().shape()) + " vs " + dims(p.shape()));
    n += p.cols();
  }
  std::vector<T> out(m * n);
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    const auto src = p.data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(src.data() + i * w, w, out.data() + i * n + c0);
    c0 += w;
  }
  return make_result<T>("concat_cols", {m, n}, std::move(out), parts, [m, n](NodeT<T>& self) {
    std::size_t col = 0;
    for (auto& pp : self.parents) {
      const std::size_t w = pp->shape[1];
      if (pp->requires_grad)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) pp->grad[i * w + j] += self.grad[i * n + col + j];
      col += w;
    }
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  require_rank2("slice_rows", a);
  if (begin >= end || end > a.rows()) {
    throw ShapeError("slice_rows", "[" + std::to_string(begin) + ", " + std::to_string(end) + ") of " + dims(a.shape()));
  }
  const std::size_t n = a.cols();
  std::vector<T> out(a.data().begin() + begin * n, a.data().begin() + end * n);
  return make_result<T>("slice_rows", {end - begin, n}, std::move(out), {a}, [begin, n](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[begin * n + i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  require_rank2("slice_cols", a);
  if (begin >= end || end > a.cols()) {
    throw ShapeError("slice_cols", "[" + std::to_string(begin) + ", " + std::to_string(end) + ") of " + dims(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  std::vector<T> out(m * w);
  const auto in = a.data();
  for (std::size_t i = 0; i < m; ++i) std::copy_n(in.data() + i * n + begin, w, out.data() + i * w);
  return make_result<T>("slice_cols", {m, w}, std::move(out), {a}, [m, n, w, begin](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) A.grad[i * n + begin + j] += self.grad[i * w + j];
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<std::size_t>& index) {
  require_rank2("gather_rows", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (index.empty()) throw ShapeError("gather_rows", "empty index into " + dims(a.shape()));
  std::vector<T> out(index.size() * n);
  const auto in = a.data();
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= m) throw ShapeError("gather_rows", "row " + std::to_string(index[r]) + " of " + dims(a.shape()));
    std::copy_n(in.data() + index[r] * n, n, out.data() + r * n);
  }
  return make_result<T>("gather_rows", {index.size(), n}, std::move(out), {a}, [index, n](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (std::size_t r = 0; r < index.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) A.grad[index[r] * n + j] += self.grad[r * n + j];
  });
}

template <typename T>
Tensor<T> pick(const Tensor<T>& a, const std::vector<std::size_t>& index) {
  require_rank2("pick", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (index.size() != m) {
    throw ShapeError("pick", std::to_string(index.size()) + " indices for " + dims(a.shape()));
  }
  std::vector<T> out(m);
  for (std::size_t r = 0; r < m; ++r) {
    if (index[r] >= n) throw ShapeError("pick", "column " + std::to_string(index[r]) + " of " + dims(a.shape()));
    out[r] = a.data()[r * n + index[r]];
  }
  return make_result<T>("pick", {m, 1}, std::move(out), {a}, [index, n](NodeT<T>& self) {
    auto& A = parent(self, 0);
    for (std::size_t r = 0; r < index.size(); ++r) A.grad[r * n + index[r]] += self.grad[r];
  });
}

namespace {

struct BilinearTap {
  std::size_t i00, i01, i10, i11;
  double w00, w01, w10, w11;
};

BilinearTap bilinear_tap(const SamplePoint& p, std::size_t h, std::size_t w) {
  const double y = std::clamp(p.y, 0.0, static_cast<double>(h - 1));
  const double x = std::clamp(p.x, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  return {y0 * w + x0,           y0 * w + x1,           y1 * w + x0,     y1 * w + x1,
          (1 - fy) * (1 - fx),   (1 - fy) * fx,         fy * (1 - fx),   fy * fx};
}

}  // namespace

template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& field, std::size_t grid_h, std::size_t grid_w,
                          const std::vector<SamplePoint>& points) {
  require_rank2("bilinear_sample", field);
  if (grid_h == 0 || grid_w == 0 || field.rows() != grid_h * grid_w) {
    throw ShapeError("bilinear_sample", dims(field.shape()) + " as grid " + std::to_string(grid_h) + "x" +
                                            std::to_string(grid_w));
  }
  if (points.empty()) throw ShapeError("bilinear_sample", "no sample points");
  const std::size_t d = field.cols();
  std::vector<BilinearTap> taps;
  taps.reserve(points.size());
  for (const auto& p : points) taps.push_back(bilinear_tap(p, grid_h, grid_w));
  std::vector<T> out(points.size() * d);
  const T* in = field.data().data();
  for (std::size_t r = 0; r < taps.size(); ++r) {
    const auto& t = taps[r];
    const T w00 = static_cast<T>(t.w00), w01 = static_cast<T>(t.w01);
    const T w10 = static_cast<T>(t.w10), w11 = static_cast<T>(t.w11);
    for (std::size_t j = 0; j < d; ++j) {
      out[r * d + j] = w00 * in[t.i00 * d + j] + w01 * in[t.i01 * d + j] + w10 * in[t.i10 * d + j] +
                       w11 * in[t.i11 * d + j];
    }
  }
  return make_result<T>("bilinear_sample", {points.size(), d}, std::move(out), {field},
                        [d, taps = std::move(taps)](NodeT<T>& self) {
                          auto& F = parent(self, 0);
                          for (std::size_t r = 0; r < taps.size(); ++r) {
                            const auto& t = taps[r];
                            for (std::size_t j = 0; j < d; ++j) {
                              const T g = self.grad[r * d + j];
                              F.grad[t.i00 * d + j] += static_cast<T>(t.w00) * g;
                              F.grad[t.i01 * d + j] += static_cast<T>(t.w01) * g;
                              F.grad[t.i10 * d + j] += static_cast<T>(t.w10) * g;
                              F.grad[t.i11 * d + j] += static_cast<T>(t.w11) * g;
                            }
                          }
                        });
}

#define SCD_INSTANTIATE_OPS(T)                                                                          \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> transpose(const Tensor<T>&);                                                       \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                   \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                                   \
  template Tensor<T> add_rowvec(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul_rowvec(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> exp(const Tensor<T>&);                                                             \
  template Tensor<T> log(const Tensor<T>&);                                                             \
  template Tensor<T> pow(const Tensor<T>&, T);                                                          \
  template Tensor<T> gelu(const Tensor<T>&);                                                            \
  template Tensor<T> sum(const Tensor<T>&);                                                             \
  template Tensor<T> mean(const Tensor<T>&);                                                            \
  template Tensor<T> sum_axis(const Tensor<T>&, std::size_t);                                           \
  template Tensor<T> mean_axis(const Tensor<T>&, std::size_t);                                          \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                                    \
  template Tensor<T> log_softmax_rows(const Tensor<T>&);                                                \
  template Tensor<T> layer_norm_rows(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);          \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&, T);                                            \
  template Tensor<T> cosine_similarity_rows(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                  \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                                        \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                        \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                            \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                            \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::size_t>&);                    \
  template Tensor<T> pick(const Tensor<T>&, const std::vector<std::size_t>&);                           \
  template Tensor<T> bilinear_sample(const Tensor<T>&, std::size_t, std::size_t,                        \
                                     const std::vector<SamplePoint>&);

SCD_INSTANTIATE_OPS(float)
SCD_INSTANTIATE_OPS(double)

#undef SCD_INSTANTIATE_OPS

}  // namespace scd::num
