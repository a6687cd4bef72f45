#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mvam {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

namespace detail {

// One vertex of the differentiation graph. `backward` reads this node's
// grad and accumulates into the grads of `inputs`.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

// Dense row-major float64 array with reverse-mode differentiation. Tensors
// are handles: copying a Tensor aliases the same storage, use `clone()` or
// `detach()` for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  // Writes bypass the graph; only meaningful for leaves or between steps.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  // Zero-filled view of the right size when no gradient has accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Same values, no graph history, requires_grad = false.
  Tensor detach() const;
  // Same values and requires_grad flag, fresh leaf.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const noexcept {
    return node_ == other.node_;
  }

  // Graph construction hook for ops; not part of the user-facing surface.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward);
  detail::Node& node() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

// Gradient tracking is on by default. While a guard is alive on this thread,
// ops produce plain values without graph history.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

struct BackwardOptions {
  // A graph may be back-propagated once. With `allow_repeat` a second call
  // accumulates into the same grads again instead of throwing.
  bool allow_repeat = false;
};

// Reverse-mode sweep from a scalar loss. Gradients are summed across
// fan-out and into whatever the leaves already hold; call zero_grad()
// between optimisation steps.
void backward(const Tensor& loss, BackwardOptions options = {});

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void zero_grads(std::span<const NamedTensor> params);

}  // namespace mvam
