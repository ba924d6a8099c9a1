#include "voxmend/ag/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "voxmend/error.hpp"

namespace voxmend::ag {
namespace {

thread_local bool t_grad_enabled = true;

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl<T>>()) {
  if (ag::numel(shape) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                     to_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = ag::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = ag::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(impl_->shape, impl_->data, false);
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return clone();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
                      std::function<void(TensorImpl<T>&)> backward_fn) {
  for (const T& v : data) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value produced by ") + op);
  }
  Tensor<T> out(std::move(shape), std::move(data));
  if (!t_grad_enabled) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const auto& in) { return in && in->requires_grad; });
  if (!needs) return out;
  for (const auto& in : inputs) {
    if (in && in->node && in->node->released) {
      throw StaleGraphError(std::string(op) + ": input belongs to a graph that was already backpropagated");
    }
  }
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward_fn);
  out.impl()->requires_grad = true;
  out.impl()->node = std::move(node);
  return out;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) throw ShapeError("backward: loss must be a scalar");
  auto root = loss.impl();
  if (root->node && root->node->released) throw StaleGraphError("backward: graph was already consumed");
  if (!root->requires_grad) throw Error("backward: loss does not depend on any tensor requiring grad");

  // Iterative post-order DFS gives a topological order. The order holds
  // owning references because releasing a node may drop the last other one.
  std::vector<std::shared_ptr<TensorImpl<T>>> order;
  std::unordered_set<TensorImpl<T>*> visited;
  std::vector<std::pair<std::shared_ptr<TensorImpl<T>>, std::size_t>> stack{{root, 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    const auto* node = top.first->node.get();
    if (node && node->released) throw StaleGraphError("backward: graph was already consumed");
    if (node && top.second < node->inputs.size()) {
      auto child = node->inputs[top.second++];
      if (child && child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(std::move(top.first));
    stack.pop_back();
  }

  root->ensure_grad()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl<T>* impl = it->get();
    auto node = impl->node;
    if (!node) continue;
    if (!impl->grad.empty() && node->backward) node->backward(*impl);
    node->backward = nullptr;
    node->inputs.clear();
    node->released = true;
    std::vector<T>().swap(impl->grad);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);
template Tensor<float> make_result<float>(const char*, Shape, std::vector<float>,
                                          std::vector<std::shared_ptr<TensorImpl<float>>>,
                                          std::function<void(TensorImpl<float>&)>);
template Tensor<double> make_result<double>(const char*, Shape, std::vector<double>,
                                            std::vector<std::shared_ptr<TensorImpl<double>>>,
                                            std::function<void(TensorImpl<double>&)>);

}  // namespace voxmend::ag
