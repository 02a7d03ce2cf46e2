#include "scd/numerics/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace scd::num {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

ShapeError::ShapeError(const std::string& primitive, const std::string& detail)
    : std::runtime_error(primitive + ": " + detail), primitive_(primitive) {}

namespace {

template <typename T>
detail::Node<T>& deref(const std::shared_ptr<detail::Node<T>>& node) {
  if (!node) throw std::logic_error("use of undefined tensor");
  return *node;
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T fill, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<T>(n, fill), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("from_data", "shape " + shape_str(shape) + " holds " +
                                      std::to_string(shape_numel(shape)) + " values, got " +
                                      std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), T(0));
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return deref(node_).shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("dim", "axis " + std::to_string(axis) + " of " + shape_str(s));
  return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return deref(node_).value.size();
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  const auto& s = shape();
  if (s.size() != 2) throw ShapeError("rows", "expected rank 2, got " + shape_str(s));
  return s[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  const auto& s = shape();
  if (s.size() != 2) throw ShapeError("cols", "expected rank 2, got " + shape_str(s));
  return s[1];
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return deref(node_).value;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  auto& n = deref(node_);
  if (!n.leaf) throw std::logic_error("mutable_data on non-leaf tensor produced by " + std::string(n.op));
  return n.value;
}

template <typename T>
T Tensor<T>::item() const {
  const auto& n = deref(node_);
  if (n.value.size() != 1) throw ShapeError("item", "expected one element, got " + shape_str(n.shape));
  return n.value[0];
}

template <typename T>
T Tensor<T>::at(std::size_t r, std::size_t c) const {
  return data()[r * cols() + c];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return deref(node_).requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  auto& n = deref(node_);
  if (!n.leaf) throw std::logic_error("set_requires_grad on non-leaf tensor");
  n.requires_grad = on;
  if (on) {
    n.grad.assign(n.value.size(), T(0));
  } else {
    n.grad.clear();
    n.grad.shrink_to_fit();
  }
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  return deref(node_).leaf;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return deref(node_).grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  return deref(node_).grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  auto& g = deref(node_).grad;
  std::fill(g.begin(), g.end(), T(0));
}

template <typename T>
void Tensor<T>::backward() const {
  auto& root = deref(node_);
  if (root.value.size() != 1) {
    throw ShapeError("backward", "root must be a scalar, got " + shape_str(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS; parents precede children in `order`.
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->leaf) n->grad.assign(n->value.size(), T(0));
  }
  root.grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  const auto& n = deref(node_);
  return from_data(n.shape, n.value, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  const auto& n = deref(node_);
  return from_data(n.shape, n.value, n.requires_grad);
}

template <typename T>
const char* Tensor<T>::op() const {
  return deref(node_).op;
}

template class Tensor<float>;
template class Tensor<double>;

void check_unique_names(const ParameterList& params) {
  std::unordered_set<std::string> names;
  for (const auto& p : params) {
    if (!names.insert(p.name).second) throw std::invalid_argument("duplicate parameter name: " + p.name);
  }
}

}  // namespace scd::num
