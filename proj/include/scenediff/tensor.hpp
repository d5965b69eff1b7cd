// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace scenediff {

using Shape = std::vector<std::int64_t>;
using Index = std::vector<std::int64_t>;
using IndexPtr = std::shared_ptr<const Index>;
using Mask = std::vector<std::uint8_t>;
using MaskPtr = std::shared_ptr<const Mask>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// One vertex of the compute graph. A node owns its value, its gradient
// accumulator, and the closure that pushes its gradient to its parents.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  bool is_leaf() const { return !backward; }
  // Zero-initialized on first use.
  double* grad_buffer();
};

// Shared handle to a Node. Copies alias the same value; every op returns a
// fresh node, so values are immutable once produced (only leaves may be
// mutated in place, by an optimizer).
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t ndim() const { return static_cast<std::int64_t>(node_->shape.size()); }
  // Negative axes count from the end.
  std::int64_t dim(std::int64_t axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }

  std::span<const double> data() const { return node_->data; }
  // Leaves only.
  std::span<double> mutable_data();
  double item() const;
  double at(std::int64_t flat) const { return node_->data.at(static_cast<std::size_t>(flat)); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  // New leaf holding a copy of the value, detached from any graph.
  Tensor detach() const;

  // Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  // calls; intermediate gradients are recomputed each call.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

// Builds an op result. Parents and the backward closure are kept only when
// some input requires a gradient. Throws NumericError on non-finite output.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, const char* op,
                   std::function<void(Node&)> backward);

void check_finite(const std::vector<double>& data, const char* op);

}  // namespace detail

}  // namespace scenediff
