#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace scd::num {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when a primitive receives operands whose extents do not conform.
/// The message always names the primitive and the offending extents.
class ShapeError : public std::runtime_error {
 public:
  ShapeError(const std::string& primitive, const std::string& detail);
  const std::string& primitive() const noexcept { return primitive_; }

 private:
  std::string primitive_;
};

/// Raised in verification mode (64-bit tensors) when a primitive produces a
/// NaN or infinity, and by training loops on non-finite losses.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

/// 64-bit tensors run in verification mode: every primitive output is checked
/// for finiteness.
template <typename T>
inline constexpr bool kVerificationMode = std::is_same_v<T, double>;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

}  // namespace detail

/// Dense row-major array participating in reverse-mode differentiation.
///
/// Tensor is a handle: copies share the same storage and graph node. Leaf
/// tensors created with requires_grad accumulate gradients additively across
/// backward() calls until zero_grad() is called. Results of primitives record
/// their inputs only when at least one input requires a gradient, so forward
/// passes through frozen weights build no graph.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T fill, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T v, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  /// Rows/cols of a rank-2 tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const T> data() const;
  /// Mutable access; only permitted on leaves (parameter updates, test setup).
  std::span<T> mutable_data();
  T item() const;
  T at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  /// Toggles gradient tracking on a leaf; allocates or releases the grad buffer.
  void set_requires_grad(bool on);
  bool is_leaf() const;
  /// Empty span when the tensor does not require a gradient.
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Non-leaf gradients are reset at the
  /// start of every sweep; leaf gradients accumulate.
  void backward() const;

  /// New leaf holding a copy of the values, no gradient.
  Tensor detach() const;
  /// Deep copy as a new leaf with the same requires_grad flag.
  Tensor clone() const;

  const char* op() const;

  // Internal: used by primitives.
  using NodePtr = std::shared_ptr<detail::Node<T>>;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

extern template class Tensor<float>;
extern template class Tensor<double>;

/// Named trainable tensor; names encode module ownership ("vit.block3.attn.wqkv").
struct Parameter {
  std::string name;
  TensorF tensor;
  bool decay = true;  // biases, norms and embeddings opt out of weight decay
};

using ParameterList = std::vector<Parameter>;

/// Throws std::invalid_argument if two parameters share a name.
void check_unique_names(const ParameterList& params);

}  // namespace scd::num
