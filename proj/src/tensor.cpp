// SPDX-License-Identifier: Apache-2.0
#include "scenediff/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "scenediff/errors.hpp"

namespace scenediff {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

double* Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad.data();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto e : shape)
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                     " values");
  detail::check_finite(data, "tensor");
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(shape, std::vector<double>(static_cast<std::size_t>(shape_numel(shape)), 0.0),
                requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(shape, std::vector<double>(static_cast<std::size_t>(shape_numel(shape)), value),
                requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

std::int64_t Tensor::dim(std::int64_t axis) const {
  const auto n = ndim();
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n) throw ShapeError("axis out of range for " + shape_str(shape()));
  return node_->shape[static_cast<std::size_t>(axis)];
}

std::span<double> Tensor::mutable_data() {
  if (!node_->is_leaf()) throw Error("mutable_data on a non-leaf tensor");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

void Tensor::set_requires_grad(bool flag) {
  if (!node_->is_leaf()) throw Error("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = flag;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

void Tensor::backward() const {
  if (numel() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; each node is visited exactly once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order)
    if (!n->is_leaf()) n->grad.clear();
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf() && !n->grad.empty()) n->backward(*n);
  }
}

namespace detail {

void check_finite(const std::vector<double>& data, const char* op) {
  for (double v : data)
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
}

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, const char* op,
                   std::function<void(Node&)> backward) {
  check_finite(data, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool track = false;
  for (const auto& t : inputs) track = track || t.requires_grad();
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace detail
}  // namespace scenediff
