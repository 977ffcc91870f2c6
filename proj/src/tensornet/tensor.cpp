#include "rffi/tensornet/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

#include "rffi/errors.hpp"

namespace rffi::tn {

namespace {
thread_local bool g_grad_enabled = true;

template <class T>
Tensor<T> finish(Shape shape, std::vector<T> value, std::vector<std::shared_ptr<Node<T>>> inputs,
                 std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  if (numel(shape) != value.size()) {
    throw InvalidArgument("tensor shape " + to_string(shape) + " does not match " + std::to_string(value.size()) +
                          " values");
  }
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}
}  // namespace

std::size_t numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <class T>
Tensor<T> Tensor<T>::constant(Shape shape, std::vector<T> values) {
  return finish<T>(std::move(shape), std::move(values), {}, {});
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  std::vector<T> v(numel(shape), T(0));
  return constant(std::move(shape), std::move(v));
}

template <class T>
Tensor<T> Tensor<T>::leaf(Shape shape, std::vector<T> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <class T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <class T>
T Tensor<T>::item() const {
  if (node_->value.size() != 1) throw InvalidArgument("item() on a tensor with " + std::to_string(size()) + " elements");
  return node_->value[0];
}

template <class T>
void Tensor<T>::backward(T seed) const {
  if (node_->value.size() != 1) throw InvalidArgument("backward() requires a scalar tensor");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; recurrent graphs are thousands of nodes deep.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node<T>* child = n->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward) {
  std::vector<std::shared_ptr<Node<T>>> nodes;
  nodes.reserve(inputs.size());
  for (const Tensor<T>* t : inputs) {
    if (t && t->defined()) nodes.push_back(t->handle());
  }
  return finish<T>(std::move(shape), std::move(value), std::move(nodes), std::move(backward));
}

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                      std::function<void(Node<T>&)> backward) {
  std::vector<std::shared_ptr<Node<T>>> nodes;
  nodes.reserve(inputs.size());
  for (const Tensor<T>& t : inputs) nodes.push_back(t.handle());
  return finish<T>(std::move(shape), std::move(value), std::move(nodes), std::move(backward));
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>, std::initializer_list<const Tensor<float>*>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, std::initializer_list<const Tensor<double>*>,
                                    std::function<void(Node<double>&)>);
template Tensor<float> make_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, const std::vector<Tensor<double>>&,
                                    std::function<void(Node<double>&)>);

}  // namespace rffi::tn
