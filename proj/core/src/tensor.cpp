#include "mvam/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "mvam/error.hpp"

namespace mvam {

namespace {
thread_local bool g_grad_mode = true;
}  // namespace

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  for (std::size_t extent : shape) {
    if (extent == 0) {
      throw ShapeError("tensor extents must be positive, got " +
                       to_string(shape));
    }
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  std::vector<double> values(element_count(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  check_shape(shape);
  if (element_count(shape) != values.size()) {
    throw ShapeError("shape " + to_string(shape) + " needs " +
                     std::to_string(element_count(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

detail::Node& Tensor::node() const {
  if (!node_) throw Error("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::size() const { return node().data.size(); }

std::span<const double> Tensor::data() const { return node().data; }

std::span<double> Tensor::mutable_data() { return node().data; }

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " +
                     to_string(shape()));
  }
  return node().data[0];
}

double Tensor::at(std::size_t i) const { return node().data.at(i); }

double Tensor::at(std::size_t row, std::size_t col) const {
  const Shape& s = shape();
  if (s.size() != 2) throw ShapeError("at(row, col) on " + to_string(s));
  return node().data.at(row * s[1] + col);
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool value) { node().requires_grad = value; }

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const double> Tensor::grad() const {
  return node().ensure_grad();
}

std::span<double> Tensor::mutable_grad() { return node().ensure_grad(); }

void Tensor::zero_grad() {
  auto& g = node().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), node().data, false); }

Tensor Tensor::clone() const {
  return from(shape(), node().data, node().requires_grad);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward) {
  Tensor out = from(std::move(shape), std::move(values), false);
  if (!g_grad_mode) return out;
  bool needs = false;
  for (const Tensor& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return out;
  detail::Node& n = *out.node_;
  n.requires_grad = true;
  n.inputs.reserve(inputs.size());
  for (Tensor& in : inputs) n.inputs.push_back(std::move(in.node_));
  n.backward = std::move(backward);
  return out;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }

NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

bool grad_mode_enabled() { return g_grad_mode; }

void backward(const Tensor& loss, BackwardOptions options) {
  detail::Node& root = loss.node();
  if (root.data.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " +
                     to_string(root.shape));
  }
  if (!root.requires_grad) {
    throw Error("loss does not depend on any tensor that requires grad");
  }
  if (root.backward_done && !options.allow_repeat) {
    throw Error("backward() already ran on this graph; zero grads and "
                "rebuild, or pass allow_repeat");
  }

  // Iterative post-order DFS; reversed, this is a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads belong to this sweep only; leaves keep accumulating.
  for (detail::Node* n : order) {
    if (n->backward && !n->grad.empty()) {
      std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
  }
  root.ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  root.backward_done = true;
}

void zero_grads(std::span<const NamedTensor> params) {
  for (const NamedTensor& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace mvam
