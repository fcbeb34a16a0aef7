#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace i2md {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves
};

using ImplPtr = std::shared_ptr<TensorImpl>;

// One recorded operation. `seq` is drawn from a global monotonic counter, so
// sorting reachable nodes by seq reproduces the order in which they were
// appended; inputs always carry a smaller seq than the node consuming them.
struct Node {
  std::uint64_t seq = 0;
  const char* op = "";
  std::vector<ImplPtr> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

}  // namespace detail

/// Dense row-major f64 tensor with reverse-mode differentiation.
///
/// `Tensor` is a shared handle: copies alias the same storage, as in most
/// autograd engines. Use `clone()` for an independent copy. An operation
/// records a graph node only when at least one input requires a gradient, so
/// computations over parameters with `requires_grad == false` (the momentum
/// key encoder, memory-bank reads) never build a graph.
///
/// Gradients accumulate into leaves across `backward()` calls; call
/// `zero_grad()` (or `clear_grad()`) between steps.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  explicit Tensor(detail::ImplPtr impl);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad();

  /// Same values, no graph history, no gradient.
  Tensor detach() const;
  /// Deep copy of values and the requires_grad flag; no graph, no gradient.
  Tensor clone() const;

  /// Reverse pass from a single-element tensor. Nodes are visited once, in
  /// reverse creation order. Intermediate gradients are reset at the start
  /// of each pass; leaf gradients accumulate.
  void backward() const;

  const detail::ImplPtr& impl() const { return impl_; }

 private:
  detail::ImplPtr impl_;
};

}  // namespace i2md
