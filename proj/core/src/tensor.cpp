#include "evlab/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "evlab/errors.hpp"

namespace evlab {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::span<double> Node::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, bool requires_grad) {
  check_shape(shape);
  node_ = std::make_shared<detail::Node>();
  node_->data.assign(shape_numel(shape), 0.0);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data.assign(data.begin(), data.end());
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_op(Shape shape, std::vector<double> data,
                       std::vector<Tensor> parents, detail::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data));
  const bool track = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.requires_grad(); });
  if (track) {
    out.node_->requires_grad = true;
    out.node_->backward = std::move(backward);
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
  }
  return out;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("axis out of range for " + shape_str(shape()));
  return shape()[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_->is_leaf()) throw UsageError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = flag;
  if (!flag) node_->grad.clear();
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor out(node_->shape, node_->requires_grad);
  out.node_->data = node_->data;
  return out;
}

Tensor Tensor::detach() const {
  Tensor out(node_->shape, false);
  out.node_->data = node_->data;
  return out;
}

Tensor Tensor::reshape(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_str(shape()) + " to " + shape_str(new_shape));
  }
  return from_op(std::move(new_shape), {node_->data.begin(), node_->data.end()}, {*this}, [](detail::Node& self) {
    auto& parent = *self.parents[0];
    auto g = parent.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw UsageError("backward() requires a scalar, got " + shape_str(shape()));
  }
  if (!requires_grad()) return;

  // Iterative post-order DFS: parents precede children in `order`.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (n->is_leaf()) {
      n->grad_buffer();
    } else {
      n->grad.assign(n->data.size(), 0.0);
    }
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
  for (auto* n : order) {
    if (!n->is_leaf()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

}  // namespace evlab
