#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// Every differentiable op records its inputs and a backward rule on the
// result node; `Tensor::backward()` topologically sorts the graph reachable
// from a scalar loss and replays the rules in reverse. Gradients accumulate
// into leaves across calls until `zero_grad()`. Intermediate gradients are
// released once consumed, so only leaves expose `grad()` afterwards.
//
// A graph and all its tensors belong to one thread. Graph recording is
// controlled per thread by `NoGradGuard`.
//
// Convolutions use the cross-correlation convention (no kernel flip).

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace msatr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct Node;

// Leaves elements default-initialized (uninitialized for double) on resize,
// so op outputs are not zero-filled before being overwritten. Storage is
// 64-byte aligned, which keeps vectorized reductions bit-reproducible.
inline constexpr std::size_t kBufferAlignment = 64;

template <class T>
struct DefaultInitAllocator : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  using std::allocator<T>::allocator;
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kBufferAlignment}));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{kBufferAlignment}); }
  template <class U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};
}  // namespace detail

// Storage for tensor values. `Buffer b(n)` is uninitialized; use `Buffer(n, 0.0)` for zeros.
using Buffer = std::vector<double, detail::DefaultInitAllocator<double>>;
using IndexMap = std::shared_ptr<const std::vector<std::size_t>>;

class Tensor {
 public:
  // Receives dLoss/dOutput and the op's own output values; accumulates into
  // the inputs it captured.
  using BackwardFn = std::function<void(std::span<const double> grad_out, std::span<const double> out)>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  // Builds the result of a differentiable op. The backward rule is only
  // attached when recording is enabled and some input requires a gradient.
  static Tensor make_op(std::string_view name, Shape shape, Buffer data, std::vector<Tensor> inputs,
                        BackwardFn backward);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // In-place access for leaves (optimizer updates, test perturbation).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;
  const std::string& op_name() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero gradient on first use.
  std::span<double> grad_buffer();
  void zero_grad();

  Tensor detach() const;
  // Copies the values into a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  // loss must hold exactly one element.
  void backward() const;

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// [B,m,k] x [B,k,n] -> [B,m,n]; with transpose_b the right operand is [B,n,k].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
// x[N,in] * w[in,out] + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// x[C_in,H,W], w[C_out,C_in,kh,kw], bias[C_out] (may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t pad);
// x[C_in,H,W], w[C_in,C_out,kh,kw] -> [C_out,(H-1)*stride+kh,(W-1)*stride+kw].
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride);

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
// Gradient at exactly zero is taken as zero.
Tensor sqrt(const Tensor& x);
// log(1 + e^x), evaluated without overflow.
Tensor softplus(const Tensor& x);
// tanh approximation.
Tensor gelu(const Tensor& x);

// ---- normalization --------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis);
// Normalizes over the last axis; gamma/beta have that axis' length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// ---- layout ---------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
// out[i] = x[index[i]] with the given output shape; backward scatter-adds.
Tensor take(const Tensor& x, Shape shape, IndexMap index);
// Source offsets of a row-major tensor of shape `view` permuted by `axes`.
IndexMap permutation_index(const Shape& view, const std::vector<std::size_t>& axes);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// x[C,H,W] -> [C,H*factor,W*factor]
Tensor upsample_nearest(const Tensor& x, std::size_t factor);
// x[C,H,W] -> [C,height,width] starting at (top,left)
Tensor crop(const Tensor& x, std::size_t top, std::size_t left, std::size_t height, std::size_t width);

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace msatr
