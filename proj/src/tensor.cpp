#include "wsloc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace wsloc {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

thread_local Tape* g_active_tape = nullptr;

NodePtr make_node(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " +
                     std::to_string(data.size()) + " values");
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return n;
}

void check_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     " tensor, got shape " + shape_str(t.shape()));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

bool recording(std::initializer_list<const Tensor*> ins) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

struct ResultBuilder {
  // Builds the output tensor and, when recording, registers the backward rule.
  Tensor out;
  bool rec;

  ResultBuilder(Shape shape, std::vector<double> value, bool rec_) : rec(rec_) {
    out = rec ? Tensor::variable(std::move(shape), std::move(value))
              : Tensor::constant(std::move(shape), std::move(value));
  }

  template <typename F>
  void backward(F&& fn) {
    if (rec) g_active_tape->record(std::forward<F>(fn));
  }
};

}  // namespace

// ---- Tensor -------------------------------------------------------------

double Tensor::item() const {
  if (size() != 1)
    throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::variable(Shape shape, std::vector<double> data) {
  return Tensor(make_node(std::move(shape), std::move(data), true));
}

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  return Tensor(make_node(std::move(shape), std::move(data), false));
}

Tensor Tensor::scalar(double v) { return constant({}, {v}); }

Tensor Tensor::zeros(Shape shape) {
  std::size_t n = shape_numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

// ---- Tape ---------------------------------------------------------------

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

Tape::Pause::Pause() : saved_(g_active_tape) { g_active_tape = nullptr; }
Tape::Pause::~Pause() { g_active_tape = saved_; }

void Tape::backward(const Tensor& loss, double seed) {
  if (loss.size() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_str(loss.shape()));
  if (ops_.empty()) throw Error("backward: tape is empty");
  loss.node()->ensure_grad();
  loss.node()->grad[0] += seed;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

// ---- primitives ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank("matmul", a, 2);
  if (b.rank() != 1 && b.rank() != 2)
    throw ShapeError("matmul: rhs must be rank 1 or 2, got " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const bool vec = b.rank() == 1;
  const std::size_t n = vec ? 1 : b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const double aval = av[i * k + t];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aval * bv[t * n + j];
    }
  ResultBuilder r(vec ? Shape{m} : Shape{m, n}, std::move(out), recording({&a, &b}));
  r.backward([an = a.node(), bn = b.node(), on = r.out.node(), m, k, n] {
    if (on->grad.empty()) return;
    const auto& g = on->grad;
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < k; ++t) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bn->value[t * n + j];
          an->grad[i * k + t] += acc;
        }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < k; ++t) {
          const double aval = an->value[i * k + t];
          for (std::size_t j = 0; j < n; ++j) bn->grad[t * n + j] += aval * g[i * n + j];
        }
    }
  });
  return r.out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  ResultBuilder r(a.shape(), std::move(out), recording({&a, &b}));
  r.backward([an = a.node(), bn = b.node(), on = r.out.node()] {
    if (on->grad.empty()) return;
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
    }
  });
  return r.out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  ResultBuilder r(a.shape(), std::move(out), recording({&a, &b}));
  r.backward([an = a.node(), bn = b.node(), on = r.out.node()] {
    if (on->grad.empty()) return;
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
    }
  });
  return r.out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  ResultBuilder r(a.shape(), std::move(out), recording({&a, &b}));
  r.backward([an = a.node(), bn = b.node(), on = r.out.node()] {
    if (on->grad.empty()) return;
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        bn->grad[i] += on->grad[i] * an->value[i];
    }
  });
  return r.out;
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * c;
  ResultBuilder r(a.shape(), std::move(out), recording({&a}));
  r.backward([an = a.node(), on = r.out.node(), c] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += c * on->grad[i];
  });
  return r.out;
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + c;
  ResultBuilder r(a.shape(), std::move(out), recording({&a}));
  r.backward([an = a.node(), on = r.out.node()] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
  });
  return r.out;
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
  }
  ResultBuilder r(a.shape(), std::move(out), recording({&a}));
  r.backward([an = a.node(), on = r.out.node()] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < on->grad.size(); ++i) {
      const double y = on->value[i];
      an->grad[i] += on->grad[i] * y * (1.0 - y);
    }
  });
  return r.out;
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
  ResultBuilder r(a.shape(), std::move(out), recording({&a}));
  r.backward([an = a.node(), on = r.out.node()] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < on->grad.size(); ++i) {
      const double y = on->value[i];
      an->grad[i] += on->grad[i] * (1.0 - y * y);
    }
  });
  return r.out;
}

Tensor max_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a[i], c);
  ResultBuilder r(a.shape(), std::move(out), recording({&a}));
  r.backward([an = a.node(), on = r.out.node(), c] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < on->grad.size(); ++i)
      if (an->value[i] > c) an->grad[i] += on->grad[i];
  });
  return r.out;
}

Tensor relu(const Tensor& a) { return max_scalar(a, 0.0); }

namespace {

// Stable softmax of v[begin:begin+n:stride] written into out at the same
// positions.
void softmax_span(const std::vector<double>& v, std::vector<double>& out,
                  std::size_t begin, std::size_t n, std::size_t stride) {
  double mx = v[begin];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[begin + i * stride]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(v[begin + i * stride] - mx);
    out[begin + i * stride] = e;
    sum += e;
  }
  for (std::size_t i = 0; i < n; ++i) out[begin + i * stride] /= sum;
}

void softmax_span_backward(const std::vector<double>& y, const std::vector<double>& g,
                           std::vector<double>& dst, std::size_t begin, std::size_t n,
                           std::size_t stride) {
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    dot += g[begin + i * stride] * y[begin + i * stride];
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = begin + i * stride;
    dst[p] += y[p] * (g[p] - dot);
  }
}

}  // namespace

Tensor softmax(const Tensor& a) {
  check_rank("softmax", a, 1);
  std::vector<double> out(a.size());
  softmax_span(a.value(), out, 0, a.size(), 1);
  ResultBuilder r(a.shape(), std::move(out), recording({&a}));
  r.backward([an = a.node(), on = r.out.node()] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    softmax_span_backward(on->value, on->grad, an->grad, 0, on->value.size(), 1);
  });
  return r.out;
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  if (a.rank() == 1) {
    if (axis != 0)
      throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                       shape_str(a.shape()));
    return softmax(a);
  }
  check_rank("softmax", a, 2);
  if (axis > 1)
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(a.shape()));
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(a.size());
  if (axis == 1) {
    for (std::size_t i = 0; i < rows; ++i) softmax_span(a.value(), out, i * cols, cols, 1);
  } else {
    for (std::size_t j = 0; j < cols; ++j) softmax_span(a.value(), out, j, rows, cols);
  }
  ResultBuilder r(a.shape(), std::move(out), recording({&a}));
  r.backward([an = a.node(), on = r.out.node(), rows, cols, axis] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    if (axis == 1) {
      for (std::size_t i = 0; i < rows; ++i)
        softmax_span_backward(on->value, on->grad, an->grad, i * cols, cols, 1);
    } else {
      for (std::size_t j = 0; j < cols; ++j)
        softmax_span_backward(on->value, on->grad, an->grad, j, rows, cols);
    }
  });
  return r.out;
}

Tensor logsumexp(const Tensor& a) {
  check_rank("logsumexp", a, 1);
  if (a.size() == 0) throw ShapeError("logsumexp: empty input");
  double mx = a[0];
  for (std::size_t i = 1; i < a.size(); ++i) mx = std::max(mx, a[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::exp(a[i] - mx);
  ResultBuilder r({}, {mx + std::log(sum)}, recording({&a}));
  r.backward([an = a.node(), on = r.out.node()] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    const double g = on->grad[0];
    const double lse = on->value[0];
    for (std::size_t i = 0; i < an->value.size(); ++i)
      an->grad[i] += g * std::exp(an->value[i] - lse);
  });
  return r.out;
}

Tensor at(const Tensor& a, std::size_t i) {
  check_rank("at", a, 1);
  if (i >= a.size())
    throw ShapeError("at: index " + std::to_string(i) + " out of range for " +
                     shape_str(a.shape()));
  ResultBuilder r({}, {a[i]}, recording({&a}));
  r.backward([an = a.node(), on = r.out.node(), i] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    an->grad[i] += on->grad[0];
  });
  return r.out;
}

Tensor row(const Tensor& m, std::size_t r_) {
  check_rank("row", m, 2);
  if (r_ >= m.dim(0))
    throw ShapeError("row: index " + std::to_string(r_) + " out of range for " +
                     shape_str(m.shape()));
  const std::size_t cols = m.dim(1);
  std::vector<double> out(m.value().begin() + r_ * cols,
                          m.value().begin() + (r_ + 1) * cols);
  ResultBuilder r({cols}, std::move(out), recording({&m}));
  r.backward([mn = m.node(), on = r.out.node(), r_, cols] {
    if (on->grad.empty() || !mn->requires_grad) return;
    mn->ensure_grad();
    for (std::size_t j = 0; j < cols; ++j) mn->grad[r_ * cols + j] += on->grad[j];
  });
  return r.out;
}

Tensor column(const Tensor& m, std::size_t c) {
  check_rank("column", m, 2);
  if (c >= m.dim(1))
    throw ShapeError("column: index " + std::to_string(c) + " out of range for " +
                     shape_str(m.shape()));
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  std::vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i) out[i] = m.value()[i * cols + c];
  ResultBuilder r({rows}, std::move(out), recording({&m}));
  r.backward([mn = m.node(), on = r.out.node(), c, rows, cols] {
    if (on->grad.empty() || !mn->requires_grad) return;
    mn->ensure_grad();
    for (std::size_t i = 0; i < rows; ++i) mn->grad[i * cols + c] += on->grad[i];
  });
  return r.out;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  check_rank("concat", a, 1);
  check_rank("concat", b, 1);
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.value().begin(), a.value().end());
  out.insert(out.end(), b.value().begin(), b.value().end());
  ResultBuilder r({a.size() + b.size()}, std::move(out), recording({&a, &b}));
  r.backward([an = a.node(), bn = b.node(), on = r.out.node()] {
    if (on->grad.empty()) return;
    const std::size_t na = an->value.size();
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < na; ++i) an->grad[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < bn->value.size(); ++i) bn->grad[i] += on->grad[na + i];
    }
  });
  return r.out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const std::size_t w = rows[0].size();
  std::vector<double> out;
  out.reserve(rows.size() * w);
  bool rec = false;
  for (const Tensor& t : rows) {
    check_rank("stack_rows", t, 1);
    if (t.size() != w)
      throw ShapeError("stack_rows: shape mismatch " + shape_str(rows[0].shape()) +
                       " vs " + shape_str(t.shape()));
    out.insert(out.end(), t.value().begin(), t.value().end());
    rec = rec || t.requires_grad();
  }
  rec = rec && Tape::active() != nullptr;
  ResultBuilder r({rows.size(), w}, std::move(out), rec);
  if (rec) {
    std::vector<NodePtr> nodes;
    nodes.reserve(rows.size());
    for (const Tensor& t : rows) nodes.push_back(t.node());
    r.backward([nodes = std::move(nodes), on = r.out.node(), w] {
      if (on->grad.empty()) return;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i]->requires_grad) continue;
        nodes[i]->ensure_grad();
        for (std::size_t j = 0; j < w; ++j) nodes[i]->grad[j] += on->grad[i * w + j];
      }
    });
  }
  return r.out;
}

Tensor stack_scalars(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("stack_scalars: no inputs");
  std::vector<double> out(xs.size());
  bool rec = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out[i] = xs[i].item();
    rec = rec || xs[i].requires_grad();
  }
  rec = rec && Tape::active() != nullptr;
  ResultBuilder r({xs.size()}, std::move(out), rec);
  if (rec) {
    std::vector<NodePtr> nodes;
    nodes.reserve(xs.size());
    for (const Tensor& t : xs) nodes.push_back(t.node());
    r.backward([nodes = std::move(nodes), on = r.out.node()] {
      if (on->grad.empty()) return;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i]->requires_grad) continue;
        nodes[i]->ensure_grad();
        nodes[i]->grad[0] += on->grad[i];
      }
    });
  }
  return r.out;
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
  ResultBuilder r({}, {s}, recording({&a}));
  r.backward([an = a.node(), on = r.out.node()] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < an->value.size(); ++i) an->grad[i] += on->grad[0];
  });
  return r.out;
}

Tensor mean_all(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean_all: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
  const double inv = 1.0 / static_cast<double>(a.size());
  ResultBuilder r({}, {s * inv}, recording({&a}));
  r.backward([an = a.node(), on = r.out.node(), inv] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < an->value.size(); ++i) an->grad[i] += inv * on->grad[0];
  });
  return r.out;
}

Tensor mean(const Tensor& m, std::size_t axis) {
  check_rank("mean", m, 2);
  if (axis > 1)
    throw ShapeError("mean: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(m.shape()));
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  const std::size_t n_out = axis == 0 ? cols : rows;
  const std::size_t n_red = axis == 0 ? rows : cols;
  const double inv = 1.0 / static_cast<double>(n_red);
  std::vector<double> out(n_out, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[axis == 0 ? j : i] += m.value()[i * cols + j];
  for (double& v : out) v *= inv;
  ResultBuilder r({n_out}, std::move(out), recording({&m}));
  r.backward([mn = m.node(), on = r.out.node(), rows, cols, axis, inv] {
    if (on->grad.empty() || !mn->requires_grad) return;
    mn->ensure_grad();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        mn->grad[i * cols + j] += inv * on->grad[axis == 0 ? j : i];
  });
  return r.out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  check_rank("dot", a, 1);
  check_same_shape("dot", a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  ResultBuilder r({}, {s}, recording({&a, &b}));
  r.backward([an = a.node(), bn = b.node(), on = r.out.node()] {
    if (on->grad.empty()) return;
    const double g = on->grad[0];
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->value.size(); ++i) an->grad[i] += g * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < bn->value.size(); ++i) bn->grad[i] += g * an->value[i];
    }
  });
  return r.out;
}

Tensor gather(const Tensor& a, const std::vector<std::size_t>& idx) {
  check_rank("gather", a, 1);
  std::vector<double> out(idx.size());
  for (std::size_t t = 0; t < idx.size(); ++t) {
    if (idx[t] >= a.size())
      throw ShapeError("gather: index " + std::to_string(idx[t]) + " out of range for " +
                       shape_str(a.shape()));
    out[t] = a[idx[t]];
  }
  ResultBuilder r({idx.size()}, std::move(out), recording({&a}));
  r.backward([an = a.node(), on = r.out.node(), idx] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t t = 0; t < idx.size(); ++t) an->grad[idx[t]] += on->grad[t];
  });
  return r.out;
}

std::vector<std::size_t> topk_indices(const std::vector<double>& v, std::size_t k) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&v](std::size_t a, std::size_t b) {
    if (v[a] != v[b]) return v[a] > v[b];
    return a < b;  // ties: lowest index wins
  });
  order.resize(k);
  return order;
}

Tensor topk_mean(const Tensor& a, std::size_t k) {
  check_rank("topk_mean", a, 1);
  if (k == 0 || k > a.size())
    throw ShapeError("topk_mean: k=" + std::to_string(k) + " invalid for " +
                     shape_str(a.shape()));
  auto sel = topk_indices(a.value(), k);
  double s = 0.0;
  for (auto i : sel) s += a[i];
  const double inv = 1.0 / static_cast<double>(k);
  ResultBuilder r({}, {s * inv}, recording({&a}));
  r.backward([an = a.node(), on = r.out.node(), sel = std::move(sel), inv] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    for (auto i : sel) an->grad[i] += inv * on->grad[0];
  });
  return r.out;
}

Tensor scale_rows(const Tensor& m, const Tensor& v) {
  check_rank("scale_rows", m, 2);
  check_rank("scale_rows", v, 1);
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  if (v.size() != rows)
    throw ShapeError("scale_rows: shape mismatch " + shape_str(m.shape()) + " vs " +
                     shape_str(v.shape()));
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = m.value()[i * cols + j] * v[i];
  ResultBuilder r(m.shape(), std::move(out), recording({&m, &v}));
  r.backward([mn = m.node(), vn = v.node(), on = r.out.node(), rows, cols] {
    if (on->grad.empty()) return;
    if (mn->requires_grad) {
      mn->ensure_grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
          mn->grad[i * cols + j] += on->grad[i * cols + j] * vn->value[i];
    }
    if (vn->requires_grad) {
      vn->ensure_grad();
      for (std::size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j)
          acc += on->grad[i * cols + j] * mn->value[i * cols + j];
        vn->grad[i] += acc;
      }
    }
  });
  return r.out;
}

Tensor add_rowvec(const Tensor& m, const Tensor& b) {
  check_rank("add_rowvec", m, 2);
  check_rank("add_rowvec", b, 1);
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  if (b.size() != cols)
    throw ShapeError("add_rowvec: shape mismatch " + shape_str(m.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = m.value()[i * cols + j] + b[j];
  ResultBuilder r(m.shape(), std::move(out), recording({&m, &b}));
  r.backward([mn = m.node(), bn = b.node(), on = r.out.node(), rows, cols] {
    if (on->grad.empty()) return;
    if (mn->requires_grad) {
      mn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) mn->grad[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) bn->grad[j] += on->grad[i * cols + j];
    }
  });
  return r.out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  ResultBuilder r(std::move(shape), a.value(), recording({&a}));
  r.backward([an = a.node(), on = r.out.node()] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
  });
  return r.out;
}

// ---- gradient checking ---------------------------------------------------

double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                  const GradCheckOptions& opts) {
  if (!(opts.eps > 0.0) || opts.eps > 1e-2)
    throw Error("grad_check: eps must be in (0, 1e-2], got " + std::to_string(opts.eps));

  // Analytic pass on a fresh tape.
  std::vector<Tensor> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(Tensor::variable(t.shape(), t.value()));
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor y = f(vars);
    if (y.size() != 1)
      throw Error("grad_check: function must return a scalar, got shape " +
                  shape_str(y.shape()));
    if (!std::isfinite(y.item())) throw Error("grad_check: non-finite function value");
    tape.backward(y);
    for (const Tensor& v : vars) analytic.push_back(v.grad());
  }

  // Coordinates to check: all of them, or a seeded sample covering every input.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t total = 0;
  for (const Tensor& t : inputs) total += t.size();
  if (opts.max_coords < 0 || static_cast<std::size_t>(opts.max_coords) >= total) {
    coords.reserve(total);
    for (std::size_t t = 0; t < inputs.size(); ++t)
      for (std::size_t i = 0; i < inputs[t].size(); ++i) coords.emplace_back(t, i);
  } else {
    std::mt19937_64 gen(opts.sample_seed);
    for (std::size_t t = 0; t < inputs.size(); ++t)
      if (inputs[t].size() > 0) coords.emplace_back(t, gen() % inputs[t].size());
    std::vector<std::pair<std::size_t, std::size_t>> rest;
    rest.reserve(total);
    for (std::size_t t = 0; t < inputs.size(); ++t)
      for (std::size_t i = 0; i < inputs[t].size(); ++i) rest.emplace_back(t, i);
    std::shuffle(rest.begin(), rest.end(), gen);
    for (const auto& c : rest) {
      if (coords.size() >= static_cast<std::size_t>(opts.max_coords)) break;
      if (std::find(coords.begin(), coords.end(), c) == coords.end()) coords.push_back(c);
    }
  }

  // Numeric pass: central differences with recording suspended.
  std::vector<Tensor> probe;
  probe.reserve(inputs.size());
  for (const Tensor& t : inputs) probe.push_back(Tensor::constant(t.shape(), t.value()));
  Tape::Pause pause;
  double max_rel = 0.0;
  for (const auto& [t, i] : coords) {
    const double orig = probe[t].value()[i];
    probe[t].value()[i] = orig + opts.eps;
    const double y_plus = f(probe).item();
    probe[t].value()[i] = orig - opts.eps;
    const double y_minus = f(probe).item();
    probe[t].value()[i] = orig;
    if (!std::isfinite(y_plus) || !std::isfinite(y_minus))
      throw Error("grad_check: non-finite function value during perturbation");
    const double numeric = (y_plus - y_minus) / (2.0 * opts.eps);
    const double a = analytic[t][i];
    const double rel =
        std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps) {
  GradCheckOptions opts;
  opts.eps = eps;
  return grad_check(f, inputs, opts);
}

}  // namespace wsloc
