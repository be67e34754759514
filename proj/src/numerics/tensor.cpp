#include "usdiff/numerics/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace usdiff::nn {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_recording_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  validate_shape(shape);
  node_->data.assign(static_cast<std::size_t>(nn::numel(shape)), T(0));
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
  validate_shape(shape);
  if (static_cast<std::int64_t>(data.size()) != nn::numel(shape)) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     to_string(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t(std::move(shape));
  std::fill(t.node_->data.begin(), t.node_->data.end(), value);
  return t;
}

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
  const int n = ndim();
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n) throw ShapeError("axis out of range for shape " + to_string(shape()));
  return node_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
T Tensor<T>::item() const {
  if (node_->data.size() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " + to_string(shape()));
  }
  return node_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(node_->shape, node_->data, node_->requires_grad);
}

template <typename T>
void Tensor<T>::backward() const {
  if (node_->data.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + to_string(shape()));
  }
  // Iterative post-order DFS gives a topological order without recursion.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward, const char* op_name) {
#ifndef NDEBUG
  for (const T& v : data) {
    if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite output from ") + op_name);
  }
#else
  (void)op_name;
#endif
  Tensor<T> out(std::move(shape), std::move(data));
  if (!grad_recording_enabled()) return out;
  bool any = false;
  for (const auto* in : inputs) any = any || (in->defined() && in->requires_grad());
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto* in : inputs) {
    if (in->defined()) node.inputs.push_back(in->node());
  }
  node.backward = std::move(backward);
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>, std::vector<const Tensor<float>*>,
                                   std::function<void(Node<float>&)>, const char*);
template Tensor<double> make_result(Shape, std::vector<double>, std::vector<const Tensor<double>*>,
                                    std::function<void(Node<double>&)>, const char*);

}  // namespace usdiff::nn
