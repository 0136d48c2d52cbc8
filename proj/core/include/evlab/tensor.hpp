#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace evlab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Cache-line aligned allocator. Eigen's vectorized reductions split work
/// by address, so a fixed alignment keeps results bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node& self)>;

/// Storage plus the recorded graph edge that produced it.
///
/// `backward` reads `self.grad` and accumulates into the parents that
/// require gradients. Leaves have no backward function.
struct Node {
  Shape shape;
  Buffer data;
  Buffer grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;

  bool is_leaf() const { return !backward; }
  /// Allocates a zero gradient on first use.
  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major tensor of doubles with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage. Use clone() for
/// an independent copy. Operations that take a requires_grad tensor record a
/// graph edge; backward() on a scalar result walks that graph in reverse
/// topological order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);

  /// Builds an op output. The edge is recorded only if a parent requires
  /// gradients; otherwise the result is a plain leaf.
  static Tensor from_op(Shape shape, std::vector<double> data,
                        std::vector<Tensor> parents,
                        detail::BackwardFn backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Deep copy as a fresh leaf that keeps the requires_grad flag.
  Tensor clone() const;
  /// Same values, no graph history, no gradient tracking.
  Tensor detach() const;
  /// Differentiable reshape (copies storage).
  Tensor reshape(Shape shape) const;

  /// Reverse pass from this scalar. Leaf gradients accumulate across calls;
  /// interior gradients are rebuilt on every call.
  void backward() const;

  detail::Node& node() const { return *node_; }
  const detail::NodePtr& node_ptr() const { return node_; }

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  detail::NodePtr node_;
};

}  // namespace evlab
