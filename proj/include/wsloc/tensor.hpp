#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsloc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until the backward pass touches this node
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

/// Dense 64-bit tensor. Copies share the underlying buffer (handle semantics);
/// rank 0 with a single element represents a scalar.
class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& value() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at2(std::size_t r, std::size_t c) const {
    return node_->value[r * node_->shape[1] + c];
  }
  /// Value of a scalar (size-1) tensor.
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  /// Gradient buffer; zeros if backward never reached this tensor.
  std::vector<double> grad() const;
  void zero_grad();

  static Tensor variable(Shape shape, std::vector<double> data);
  static Tensor constant(Shape shape, std::vector<double> data);
  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

/// Records operations for reverse-mode differentiation. Constructing a Tape
/// makes it the active tape for the current thread (restored on destruction);
/// operations record themselves while a tape is active and an input requires
/// gradients. One forward/backward at a time per tape; distinct tapes may run
/// on distinct threads.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Runs all recorded backward rules in reverse order, seeding d(loss)/d(loss)
  /// with `seed`. Gradients accumulate additively into every requires_grad
  /// tensor reachable from `loss`.
  void backward(const Tensor& loss, double seed = 1.0);

  void record(std::function<void()> op) { ops_.push_back(std::move(op)); }
  std::size_t num_ops() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  static Tape* active();

  /// Suspends recording for the current thread while alive.
  class Pause {
   public:
    Pause();
    ~Pause();
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Tape* saved_;
  };

 private:
  std::vector<std::function<void()>> ops_;
  Tape* prev_ = nullptr;
};

// ---- primitives --------------------------------------------------------
// Every primitive validates shapes (throwing ShapeError naming the primitive
// and the offending shapes) and registers its backward rule on the active
// tape when an input requires gradients.

/// (m,k)x(k,n) -> (m,n), or (m,k)x(k,) -> (m,).
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise

Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
/// max(a, c) elementwise; subgradient 0 where a <= c.
Tensor max_scalar(const Tensor& a, double c);

/// Softmax over a 1-D tensor, or over `axis` of a 2-D tensor (axis 1 = rows).
Tensor softmax(const Tensor& a);
Tensor softmax(const Tensor& a, std::size_t axis);

/// log(sum(exp(a))) of a 1-D tensor, computed stably.
Tensor logsumexp(const Tensor& a);

/// Scalar pick a[i] from a 1-D tensor.
Tensor at(const Tensor& a, std::size_t i);

Tensor row(const Tensor& m, std::size_t r);
Tensor column(const Tensor& m, std::size_t c);

/// 1-D concatenation.
Tensor concat(const Tensor& a, const Tensor& b);

/// Stacks equal-length 1-D tensors into a (n, w) matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);
/// Stacks scalars into a 1-D tensor.
Tensor stack_scalars(const std::vector<Tensor>& xs);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
/// Mean over `axis` of a 2-D tensor: axis 0 -> column means, axis 1 -> row means.
Tensor mean(const Tensor& m, std::size_t axis);

Tensor dot(const Tensor& a, const Tensor& b);

/// Index-select from a 1-D tensor; gradients scatter-add back, the index
/// list itself is not differentiated.
Tensor gather(const Tensor& a, const std::vector<std::size_t>& idx);

/// Mean of the k largest entries of a 1-D tensor. Ties at the k-th value are
/// broken toward the lowest index; gradient is 1/k on the selected entries.
Tensor topk_mean(const Tensor& a, std::size_t k);
std::vector<std::size_t> topk_indices(const std::vector<double>& v, std::size_t k);

/// Scales row t of m by v[t].
Tensor scale_rows(const Tensor& m, const Tensor& v);
/// Adds a length-n vector to every row of a (l,n) matrix.
Tensor add_rowvec(const Tensor& m, const Tensor& b);

/// Same data viewed under a new shape with identical element count.
Tensor reshape(const Tensor& a, Shape shape);

// ---- gradient checking --------------------------------------------------

/// Scalar-valued function of a list of tensors.
using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckOptions {
  double eps = 1e-5;        // central-difference step, must be in (0, 1e-2]
  long max_coords = -1;     // if >= 0, check a sampled subset of coordinates
                            // (at least one per input tensor)
  std::uint64_t sample_seed = 0;
};

/// Compares reverse-mode gradients of f against central differences at the
/// point given by `inputs`. Returns the max over checked coordinates of
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                  const GradCheckOptions& opts = {});
double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps);

}  // namespace wsloc
