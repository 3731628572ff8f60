#pragma once

// Dense tensor library with reverse-mode automatic differentiation.
//
// Tensors are shared handles onto contiguous row-major buffers. Gradients
// are recorded onto an explicit Tape that is rebuilt for every forward pass
// (define-by-run): while a Tape is alive on the current thread, any
// operation touching a tensor that requires gradients (or was itself
// produced on that tape) appends a record with a backward rule. Records are
// appended in execution order, so the list is topologically sorted by
// construction and backward() is a single reverse sweep.
//
// Matrix products are evaluated through Eigen maps over the raw buffers;
// everything else is plain loops with double accumulators for the
// reductions, in a fixed order, so results are reproducible run to run.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nart/common.hpp"

namespace nart {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

namespace detail {

template <typename S>
struct TensorNode {
  Shape shape;
  std::vector<S> values;
  std::vector<S> grad;  // allocated lazily during backward / on demand
  bool requires_grad = false;
  uint64_t tape_gen = 0;  // generation of the tape that produced this node

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), S(0));
  }
};

template <typename S>
using NodePtr = std::shared_ptr<TensorNode<S>>;

}  // namespace detail

template <typename S>
class Tape;

template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.node = make_node(std::move(shape));
    return t;
  }
  static Tensor full(Shape shape, S value) {
    Tensor t = zeros(std::move(shape));
    for (S& x : t.node->values) x = value;
    return t;
  }
  static Tensor from(Shape shape, std::vector<S> values) {
    Tensor t;
    t.node = make_node(std::move(shape));
    if (static_cast<int64_t>(values.size()) != shape_numel(t.node->shape))
      throw ShapeError("tensor init: " + std::to_string(values.size()) +
                       " values for shape " + shape_str(t.node->shape));
    t.node->values = std::move(values);
    return t;
  }
  template <typename U>
  static Tensor from_other(Shape shape, const std::vector<U>& values) {
    std::vector<S> v(values.size());
    for (size_t i = 0; i < values.size(); ++i) v[i] = static_cast<S>(values[i]);
    return from(std::move(shape), std::move(v));
  }
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
    Tensor t = zeros(std::move(shape));
    for (S& x : t.node->values) x = static_cast<S>(rng.normal(0.0, stddev));
    return t;
  }
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t = zeros(std::move(shape));
    for (S& x : t.node->values)
      x = static_cast<S>(lo + (hi - lo) * rng.uniform_real());
    return t;
  }
  static Tensor scalar(S value) { return full({1}, value); }

  bool defined() const { return node != nullptr; }
  const Shape& shape() const { return node->shape; }
  int ndim() const { return static_cast<int>(node->shape.size()); }
  int dim(int i) const { return node->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(node->values.size()); }

  S* data() { return node->values.data(); }
  const S* data() const { return node->values.data(); }
  std::vector<S>& values() { return node->values; }
  const std::vector<S>& values() const { return node->values; }

  S& at(int i) { return node->values[static_cast<size_t>(i)]; }
  S at(int i) const { return node->values[static_cast<size_t>(i)]; }
  S& at(int r, int c) {
    return node->values[static_cast<size_t>(r) * dim(1) + c];
  }
  S at(int r, int c) const {
    return node->values[static_cast<size_t>(r) * dim(1) + c];
  }
  S item() const {
    if (numel() != 1) throw ShapeError("item(): tensor is not scalar");
    return node->values[0];
  }

  void set_requires_grad(bool on) { node->requires_grad = on; }
  bool requires_grad() const { return node && node->requires_grad; }

  bool has_grad() const { return node && !node->grad.empty(); }
  const std::vector<S>& grad() const {
    if (!has_grad()) throw NumericError("grad(): no gradient present");
    return node->grad;
  }
  void zero_grad() {
    if (node) std::fill(node->grad.begin(), node->grad.end(), S(0));
  }

  detail::NodePtr<S> node;

 private:
  static detail::NodePtr<S> make_node(Shape shape) {
    for (int d : shape)
      if (d <= 0) throw ShapeError("tensor shape must have positive extents, got " + shape_str(shape));
    auto n = std::make_shared<detail::TensorNode<S>>();
    n->values.assign(static_cast<size_t>(shape_numel(shape)), S(0));
    n->shape = std::move(shape);
    return n;
  }
};

// ---- tape ------------------------------------------------------------------

template <typename S>
class Tape {
 public:
  Tape() : gen_(next_generation()), prev_(current_) { current_ = this; }
  ~Tape() { current_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_; }
  uint64_t generation() const { return gen_; }
  size_t size() const { return records_.size(); }
  bool consumed() const { return used_; }

  void record(std::vector<detail::NodePtr<S>> inputs, detail::NodePtr<S> output,
              std::function<void()> backprop) {
    output->tape_gen = gen_;
    records_.push_back(Record{std::move(inputs), std::move(output), std::move(backprop)});
  }

  // Reverse sweep from a scalar loss. Gradients are accumulated into every
  // node reachable from the loss; leaf tensors keep theirs afterwards.
  void backward(const Tensor<S>& loss) {
    if (used_) throw NumericError("backward: tape already consumed; rebuild the graph");
    if (!loss.defined() || loss.node->tape_gen != gen_)
      throw NumericError("backward: loss was not produced on this (live) tape");
    if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar");
    used_ = true;
    loss.node->ensure_grad();
    loss.node->grad[0] = S(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (it->output->grad.empty()) continue;  // not reachable from the loss
      it->backprop();
    }
  }

 private:
  struct Record {
    std::vector<detail::NodePtr<S>> inputs;
    detail::NodePtr<S> output;
    std::function<void()> backprop;
  };

  static uint64_t next_generation() {
    static std::atomic<uint64_t> counter{0};
    return ++counter;
  }

  std::vector<Record> records_;
  bool used_ = false;
  uint64_t gen_;
  Tape* prev_;
  inline static thread_local Tape* current_ = nullptr;
};

namespace detail {

// An input participates in recording if it is a gradient leaf or was itself
// produced on the live tape.
template <typename S>
bool tracked(const Tensor<S>& t) {
  Tape<S>* tape = Tape<S>::current();
  if (!tape) return false;
  return t.node->requires_grad || t.node->tape_gen == tape->generation();
}

template <typename S>
void check_finite(const char* op, const std::vector<S>& v) {
  if (!debug_checks_enabled()) return;
  for (S x : v)
    if (!std::isfinite(static_cast<double>(x)))
      throw NumericError(std::string(op) + ": produced a non-finite value");
}

template <typename S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Map = Eigen::Map<EMat<S>>;
template <typename S>
using CMap = Eigen::Map<const EMat<S>>;

}  // namespace detail

// ---- elementwise and structural ops -----------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const size_t n = a.values().size();
  for (size_t i = 0; i < n; ++i) out.node->values[i] = a.node->values[i] + b.node->values[i];
  detail::check_finite("add", out.values());
  bool ta = detail::tracked(a), tb = detail::tracked(b);
  if (ta || tb) {
    Tape<S>::current()->record(
        {a.node, b.node}, out.node, [an = a.node, bn = b.node, on = out.node, ta, tb]() {
          const auto& go = on->grad;
          if (ta) {
            an->ensure_grad();
            for (size_t i = 0; i < go.size(); ++i) an->grad[i] += go[i];
          }
          if (tb) {
            bn->ensure_grad();
            for (size_t i = 0; i < go.size(); ++i) bn->grad[i] += go[i];
          }
        });
  }
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const size_t n = a.values().size();
  for (size_t i = 0; i < n; ++i) out.node->values[i] = a.node->values[i] * b.node->values[i];
  detail::check_finite("mul", out.values());
  bool ta = detail::tracked(a), tb = detail::tracked(b);
  if (ta || tb) {
    Tape<S>::current()->record(
        {a.node, b.node}, out.node, [an = a.node, bn = b.node, on = out.node, ta, tb]() {
          const auto& go = on->grad;
          if (ta) {
            an->ensure_grad();
            for (size_t i = 0; i < go.size(); ++i) an->grad[i] += go[i] * bn->values[i];
          }
          if (tb) {
            bn->ensure_grad();
            for (size_t i = 0; i < go.size(); ++i) bn->grad[i] += go[i] * an->values[i];
          }
        });
  }
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, double factor) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S f = static_cast<S>(factor);
  const size_t n = a.values().size();
  for (size_t i = 0; i < n; ++i) out.node->values[i] = a.node->values[i] * f;
  detail::check_finite("scale", out.values());
  if (detail::tracked(a)) {
    Tape<S>::current()->record({a.node}, out.node, [an = a.node, on = out.node, f]() {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * f;
    });
  }
  return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const size_t n = a.values().size();
  for (size_t i = 0; i < n; ++i) {
    S v = a.node->values[i];
    out.node->values[i] = v > S(0) ? v : S(0);
  }
  if (detail::tracked(a)) {
    Tape<S>::current()->record({a.node}, out.node, [an = a.node, on = out.node]() {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i)
        if (an->values[i] > S(0)) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  double acc = 0.0;
  for (S v : a.values()) acc += static_cast<double>(v);
  Tensor<S> out = Tensor<S>::scalar(static_cast<S>(acc));
  detail::check_finite("sum", out.values());
  if (detail::tracked(a)) {
    Tape<S>::current()->record({a.node}, out.node, [an = a.node, on = out.node]() {
      an->ensure_grad();
      const S g = on->grad[0];
      for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    });
  }
  return out;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  if (a.ndim() != 2) throw ShapeError("transpose: expected 2-d tensor, got " + shape_str(a.shape()));
  const int m = a.dim(0), n = a.dim(1);
  Tensor<S> out = Tensor<S>::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  if (detail::tracked(a)) {
    Tape<S>::current()->record({a.node}, out.node, [an = a.node, on = out.node, m, n]() {
      an->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          an->grad[static_cast<size_t>(i) * n + j] += on->grad[static_cast<size_t>(j) * m + i];
    });
  }
  return out;
}

// Broadcast-add a length-n row vector onto every row of an [m, n] matrix.
template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& a, const Tensor<S>& v) {
  if (a.ndim() != 2 || v.ndim() != 1 || a.dim(1) != v.dim(0))
    throw ShapeError("add_rowvec: " + shape_str(a.shape()) + " vs " + shape_str(v.shape()));
  const int m = a.dim(0), n = a.dim(1);
  Tensor<S> out = Tensor<S>::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = a.at(i, j) + v.at(j);
  detail::check_finite("add_rowvec", out.values());
  bool ta = detail::tracked(a), tv = detail::tracked(v);
  if (ta || tv) {
    Tape<S>::current()->record(
        {a.node, v.node}, out.node, [an = a.node, vn = v.node, on = out.node, ta, tv, m, n]() {
          if (ta) {
            an->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
          }
          if (tv) {
            vn->ensure_grad();
            for (int j = 0; j < n; ++j) {
              double acc = 0.0;
              for (int i = 0; i < m; ++i)
                acc += static_cast<double>(on->grad[static_cast<size_t>(i) * n + j]);
              vn->grad[static_cast<size_t>(j)] += static_cast<S>(acc);
            }
          }
        });
  }
  return out;
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& a, int first, int count) {
  if (a.ndim() != 2) throw ShapeError("slice_cols: expected 2-d tensor");
  const int m = a.dim(0), n = a.dim(1);
  if (first < 0 || count <= 0 || first + count > n)
    throw ShapeError("slice_cols: invalid column range [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") for " + shape_str(a.shape()));
  Tensor<S> out = Tensor<S>::zeros({m, count});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < count; ++j) out.at(i, j) = a.at(i, first + j);
  if (detail::tracked(a)) {
    Tape<S>::current()->record({a.node}, out.node,
                               [an = a.node, on = out.node, m, n, first, count]() {
                                 an->ensure_grad();
                                 for (int i = 0; i < m; ++i)
                                   for (int j = 0; j < count; ++j)
                                     an->grad[static_cast<size_t>(i) * n + first + j] +=
                                         on->grad[static_cast<size_t>(i) * count + j];
                               });
  }
  return out;
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int m = parts[0].dim(0);
  int total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(0) != m) throw ShapeError("concat_cols: row mismatch");
    total += p.dim(1);
  }
  Tensor<S> out = Tensor<S>::zeros({m, total});
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.dim(1);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) out.at(i, off + j) = p.at(i, j);
    off += w;
  }
  bool any = false;
  std::vector<detail::NodePtr<S>> inputs;
  std::vector<char> flags;
  for (const auto& p : parts) {
    bool t = detail::tracked(p);
    any = any || t;
    inputs.push_back(p.node);
    flags.push_back(t ? 1 : 0);
  }
  if (any) {
    Tape<S>::current()->record(inputs, out.node,
                               [inputs, flags, on = out.node, m, total]() {
                                 int off2 = 0;
                                 for (size_t pi = 0; pi < inputs.size(); ++pi) {
                                   const int w = inputs[pi]->shape[1];
                                   if (flags[pi]) {
                                     inputs[pi]->ensure_grad();
                                     for (int i = 0; i < m; ++i)
                                       for (int j = 0; j < w; ++j)
                                         inputs[pi]->grad[static_cast<size_t>(i) * w + j] +=
                                             on->grad[static_cast<size_t>(i) * total + off2 + j];
                                   }
                                   off2 += w;
                                 }
                               });
  }
  return out;
}

// ---- matmul ------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<S> out = Tensor<S>::zeros({m, n});
  detail::CMap<S> A(a.data(), m, k), B(b.data(), k, n);
  detail::Map<S> C(out.data(), m, n);
  C.noalias() = A * B;
  detail::check_finite("matmul", out.values());
  bool ta = detail::tracked(a), tb = detail::tracked(b);
  if (ta || tb) {
    Tape<S>::current()->record(
        {a.node, b.node}, out.node,
        [an = a.node, bn = b.node, on = out.node, ta, tb, m, k, n]() {
          detail::CMap<S> GO(on->grad.data(), m, n);
          detail::CMap<S> A2(an->values.data(), m, k), B2(bn->values.data(), k, n);
          if (ta) {
            an->ensure_grad();
            detail::Map<S> GA(an->grad.data(), m, k);
            GA.noalias() += GO * B2.transpose();
          }
          if (tb) {
            bn->ensure_grad();
            detail::Map<S> GB(bn->grad.data(), k, n);
            GB.noalias() += A2.transpose() * GO;
          }
        });
  }
  return out;
}

// ---- softmax -----------------------------------------------------------------

namespace detail {

// Stable softmax over each row of [m, n]; double accumulators.
template <typename S>
void softmax_rows_forward(const S* x, S* y, int m, int n) {
  for (int i = 0; i < m; ++i) {
    const S* xi = x + static_cast<size_t>(i) * n;
    S* yi = y + static_cast<size_t>(i) * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(xi[j]));
    double denom = 0.0;
    for (int j = 0; j < n; ++j) denom += std::exp(static_cast<double>(xi[j]) - mx);
    for (int j = 0; j < n; ++j)
      yi[j] = static_cast<S>(std::exp(static_cast<double>(xi[j]) - mx) / denom);
  }
}

}  // namespace detail

// Softmax along `axis` (last axis by default). Supports 1-d and 2-d tensors.
template <typename S>
Tensor<S> softmax(const Tensor<S>& a, int axis = -1) {
  if (a.ndim() == 1) {
    if (axis != 0 && axis != -1) throw ShapeError("softmax: bad axis for 1-d tensor");
    const int n = a.dim(0);
    Tensor<S> out = Tensor<S>::zeros({n});
    detail::softmax_rows_forward(a.data(), out.data(), 1, n);
    if (detail::tracked(a)) {
      Tape<S>::current()->record({a.node}, out.node, [an = a.node, on = out.node, n]() {
        an->ensure_grad();
        double dot = 0.0;
        for (int j = 0; j < n; ++j)
          dot += static_cast<double>(on->grad[static_cast<size_t>(j)]) *
                 static_cast<double>(on->values[static_cast<size_t>(j)]);
        for (int j = 0; j < n; ++j)
          an->grad[static_cast<size_t>(j)] += static_cast<S>(
              static_cast<double>(on->values[static_cast<size_t>(j)]) *
              (static_cast<double>(on->grad[static_cast<size_t>(j)]) - dot));
      });
    }
    return out;
  }
  if (a.ndim() != 2) throw ShapeError("softmax: expected 1-d or 2-d tensor");
  if (axis == 0) return transpose(softmax(transpose(a), -1));
  if (axis != 1 && axis != -1) throw ShapeError("softmax: bad axis for 2-d tensor");
  const int m = a.dim(0), n = a.dim(1);
  Tensor<S> out = Tensor<S>::zeros({m, n});
  detail::softmax_rows_forward(a.data(), out.data(), m, n);
  if (detail::tracked(a)) {
    Tape<S>::current()->record({a.node}, out.node, [an = a.node, on = out.node, m, n]() {
      an->ensure_grad();
      for (int i = 0; i < m; ++i) {
        const S* yi = on->values.data() + static_cast<size_t>(i) * n;
        const S* gi = on->grad.data() + static_cast<size_t>(i) * n;
        S* ai = an->grad.data() + static_cast<size_t>(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += static_cast<double>(gi[j]) * yi[j];
        for (int j = 0; j < n; ++j)
          ai[j] += static_cast<S>(static_cast<double>(yi[j]) * (static_cast<double>(gi[j]) - dot));
      }
    });
  }
  return out;
}

// Softmax over the valid key positions of each score row; invalid positions
// get weight exactly zero. A row with no valid key is an error.
template <typename S>
Tensor<S> masked_softmax_rows(const Tensor<S>& scores, const std::vector<uint8_t>& key_valid) {
  if (scores.ndim() != 2) throw ShapeError("masked_softmax_rows: expected 2-d scores");
  const int m = scores.dim(0), n = scores.dim(1);
  if (static_cast<int>(key_valid.size()) != n)
    throw ShapeError("masked_softmax_rows: mask size " + std::to_string(key_valid.size()) +
                     " vs " + std::to_string(n) + " keys");
  int n_valid = 0;
  for (uint8_t v : key_valid) n_valid += v ? 1 : 0;
  if (n_valid == 0) throw NumericError("masked_softmax_rows: no attendable key position");
  Tensor<S> out = Tensor<S>::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    const S* xi = scores.data() + static_cast<size_t>(i) * n;
    S* yi = out.data() + static_cast<size_t>(i) * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (key_valid[static_cast<size_t>(j)]) mx = std::max(mx, static_cast<double>(xi[j]));
    double denom = 0.0;
    for (int j = 0; j < n; ++j)
      if (key_valid[static_cast<size_t>(j)]) denom += std::exp(static_cast<double>(xi[j]) - mx);
    for (int j = 0; j < n; ++j)
      yi[j] = key_valid[static_cast<size_t>(j)]
                  ? static_cast<S>(std::exp(static_cast<double>(xi[j]) - mx) / denom)
                  : S(0);
  }
  if (detail::tracked(scores)) {
    Tape<S>::current()->record(
        {scores.node}, out.node, [an = scores.node, on = out.node, key_valid, m, n]() {
          an->ensure_grad();
          for (int i = 0; i < m; ++i) {
            const S* yi = on->values.data() + static_cast<size_t>(i) * n;
            const S* gi = on->grad.data() + static_cast<size_t>(i) * n;
            S* ai = an->grad.data() + static_cast<size_t>(i) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j)
              if (key_valid[static_cast<size_t>(j)])
                dot += static_cast<double>(gi[j]) * yi[j];
            for (int j = 0; j < n; ++j)
              if (key_valid[static_cast<size_t>(j)])
                ai[j] += static_cast<S>(static_cast<double>(yi[j]) *
                                        (static_cast<double>(gi[j]) - dot));
          }
        });
  }
  return out;
}

// ---- layer norm --------------------------------------------------------------

// Normalizes each row of x (or the whole vector for 1-d input) to zero mean
// and unit variance before the affine transform.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                     double eps = 1e-5) {
  if (eps <= 0) throw NumericError("layer_norm: eps must be positive");
  const bool vec = x.ndim() == 1;
  if (!vec && x.ndim() != 2) throw ShapeError("layer_norm: expected 1-d or 2-d input");
  const int m = vec ? 1 : x.dim(0);
  const int d = vec ? x.dim(0) : x.dim(1);
  if (gain.ndim() != 1 || gain.dim(0) != d || bias.ndim() != 1 || bias.dim(0) != d)
    throw ShapeError("layer_norm: gain/bias must be length-" + std::to_string(d) + " vectors");
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  std::vector<double> inv_std(static_cast<size_t>(m)), mean(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    const S* xi = x.data() + static_cast<size_t>(i) * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += static_cast<double>(xi[j]);
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double c = static_cast<double>(xi[j]) - mu;
      var += c * c;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    mean[static_cast<size_t>(i)] = mu;
    inv_std[static_cast<size_t>(i)] = inv;
    S* yi = out.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j)
      yi[j] = static_cast<S>((static_cast<double>(xi[j]) - mu) * inv *
                                 static_cast<double>(gain.at(j)) +
                             static_cast<double>(bias.at(j)));
  }
  detail::check_finite("layer_norm", out.values());
  bool tx = detail::tracked(x), tg = detail::tracked(gain), tb = detail::tracked(bias);
  if (tx || tg || tb) {
    Tape<S>::current()->record(
        {x.node, gain.node, bias.node}, out.node,
        [xn = x.node, gn = gain.node, bn = bias.node, on = out.node, tx, tg, tb, m, d, mean,
         inv_std]() {
          if (tx) xn->ensure_grad();
          if (tg) gn->ensure_grad();
          if (tb) bn->ensure_grad();
          for (int i = 0; i < m; ++i) {
            const S* xi = xn->values.data() + static_cast<size_t>(i) * d;
            const S* gi = on->grad.data() + static_cast<size_t>(i) * d;
            const double mu = mean[static_cast<size_t>(i)];
            const double inv = inv_std[static_cast<size_t>(i)];
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (int j = 0; j < d; ++j) {
              const double xh = (static_cast<double>(xi[j]) - mu) * inv;
              const double dxh = static_cast<double>(gi[j]) * static_cast<double>(gn->values[static_cast<size_t>(j)]);
              sum_dxh += dxh;
              sum_dxh_xh += dxh * xh;
              if (tg) gn->grad[static_cast<size_t>(j)] += static_cast<S>(static_cast<double>(gi[j]) * xh);
              if (tb) bn->grad[static_cast<size_t>(j)] += gi[j];
            }
            if (tx) {
              S* ai = xn->grad.data() + static_cast<size_t>(i) * d;
              for (int j = 0; j < d; ++j) {
                const double xh = (static_cast<double>(xi[j]) - mu) * inv;
                const double dxh = static_cast<double>(gi[j]) * static_cast<double>(gn->values[static_cast<size_t>(j)]);
                ai[j] += static_cast<S>(inv * (dxh - sum_dxh / d - xh * sum_dxh_xh / d));
              }
            }
          }
        });
  }
  return out;
}

// ---- cross entropy -----------------------------------------------------------

// Weighted mean of -log softmax(logits)[target] over positions. Positions
// with weight zero contribute nothing (padding, unsupervised rows). If every
// weight is zero the loss is zero with zero gradients.
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<int>& targets,
                        const std::vector<S>& weights, double label_smoothing = 0.0) {
  if (logits.ndim() != 2) throw ShapeError("cross_entropy: expected [positions, vocab] logits");
  const int n = logits.dim(0), v = logits.dim(1);
  if (static_cast<int>(targets.size()) != n || static_cast<int>(weights.size()) != n)
    throw ShapeError("cross_entropy: targets/weights must match position count");
  for (int t : targets)
    if (t < 0 || t >= v)
      throw std::out_of_range("cross_entropy: target id " + std::to_string(t) +
                              " outside vocabulary of size " + std::to_string(v));
  for (S w : weights)
    if (w < S(0)) throw NumericError("cross_entropy: negative position weight");
  double total_weight = 0.0;
  for (S w : weights) total_weight += static_cast<double>(w);
  const double eps = label_smoothing;
  double acc = 0.0;
  if (total_weight > 0.0) {
    for (int i = 0; i < n; ++i) {
      const double w = static_cast<double>(weights[static_cast<size_t>(i)]);
      if (w == 0.0) continue;
      const S* li = logits.data() + static_cast<size_t>(i) * v;
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < v; ++j) mx = std::max(mx, static_cast<double>(li[j]));
      double denom = 0.0, lsum = 0.0;
      for (int j = 0; j < v; ++j) {
        denom += std::exp(static_cast<double>(li[j]) - mx);
        lsum += static_cast<double>(li[j]);
      }
      const double lse = mx + std::log(denom);
      const double nll = lse - static_cast<double>(li[targets[static_cast<size_t>(i)]]);
      const double smooth = lse - lsum / v;
      acc += w * ((1.0 - eps) * nll + eps * smooth);
    }
    acc /= total_weight;
  }
  Tensor<S> out = Tensor<S>::scalar(static_cast<S>(acc));
  detail::check_finite("cross_entropy", out.values());
  if (detail::tracked(logits)) {
    Tape<S>::current()->record(
        {logits.node}, out.node,
        [ln = logits.node, on = out.node, targets, weights, total_weight, eps, n, v]() {
          if (total_weight <= 0.0) return;
          ln->ensure_grad();
          const double g = static_cast<double>(on->grad[0]);
          for (int i = 0; i < n; ++i) {
            const double w = static_cast<double>(weights[static_cast<size_t>(i)]);
            if (w == 0.0) continue;
            const S* li = ln->values.data() + static_cast<size_t>(i) * v;
            S* gi = ln->grad.data() + static_cast<size_t>(i) * v;
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < v; ++j) mx = std::max(mx, static_cast<double>(li[j]));
            double denom = 0.0;
            for (int j = 0; j < v; ++j) denom += std::exp(static_cast<double>(li[j]) - mx);
            const double scale_i = g * w / total_weight;
            for (int j = 0; j < v; ++j) {
              const double p = std::exp(static_cast<double>(li[j]) - mx) / denom;
              double hot = (j == targets[static_cast<size_t>(i)]) ? (1.0 - eps) : 0.0;
              gi[j] += static_cast<S>(scale_i * (p - hot - eps / v));
            }
          }
        });
  }
  return out;
}

// ---- embedding lookup ----------------------------------------------------------

template <typename S>
Tensor<S> embedding_lookup(const Tensor<S>& table, const std::vector<int>& ids) {
  if (table.ndim() != 2) throw ShapeError("embedding_lookup: table must be 2-d");
  const int v = table.dim(0), d = table.dim(1);
  const int n = static_cast<int>(ids.size());
  if (n == 0) throw ShapeError("embedding_lookup: empty id list");
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::out_of_range("embedding_lookup: id " + std::to_string(id) +
                              " outside table of size " + std::to_string(v));
  Tensor<S> out = Tensor<S>::zeros({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = table.at(ids[static_cast<size_t>(i)], j);
  if (detail::tracked(table)) {
    Tape<S>::current()->record({table.node}, out.node,
                               [tn = table.node, on = out.node, ids, n, d]() {
                                 tn->ensure_grad();
                                 for (int i = 0; i < n; ++i)
                                   for (int j = 0; j < d; ++j)
                                     tn->grad[static_cast<size_t>(ids[static_cast<size_t>(i)]) * d + j] +=
                                         on->grad[static_cast<size_t>(i) * d + j];
                               });
  }
  return out;
}

// ---- strided 1-d convolution ---------------------------------------------------

// x: [T, c_in], weight: [kernel, c_in, c_out], bias: [c_out].
// SAME-style zero padding; output length is ceil(T / stride).
template <typename S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                 int stride) {
  if (x.ndim() != 2 || weight.ndim() != 3 || bias.ndim() != 1)
    throw ShapeError("conv1d: expected x[T,c_in], weight[k,c_in,c_out], bias[c_out]");
  const int T = x.dim(0), c_in = x.dim(1);
  const int k = weight.dim(0), c_out = weight.dim(2);
  if (weight.dim(1) != c_in || bias.dim(0) != c_out)
    throw ShapeError("conv1d: channel mismatch");
  if (stride < 1) throw ShapeError("conv1d: stride must be >= 1");
  const int out_t = (T + stride - 1) / stride;
  const int pad_total = std::max(0, (out_t - 1) * stride + k - T);
  const int pad_left = pad_total / 2;
  Tensor<S> out = Tensor<S>::zeros({out_t, c_out});
  auto wat = [&](int dk, int ci, int co) -> S {
    return weight.node->values[(static_cast<size_t>(dk) * c_in + ci) * c_out + co];
  };
  for (int t = 0; t < out_t; ++t) {
    for (int co = 0; co < c_out; ++co) {
      double acc = static_cast<double>(bias.at(co));
      for (int dk = 0; dk < k; ++dk) {
        const int q = t * stride + dk - pad_left;
        if (q < 0 || q >= T) continue;
        for (int ci = 0; ci < c_in; ++ci)
          acc += static_cast<double>(x.at(q, ci)) * static_cast<double>(wat(dk, ci, co));
      }
      out.at(t, co) = static_cast<S>(acc);
    }
  }
  detail::check_finite("conv1d", out.values());
  bool txx = detail::tracked(x), tw = detail::tracked(weight), tb = detail::tracked(bias);
  if (txx || tw || tb) {
    Tape<S>::current()->record(
        {x.node, weight.node, bias.node}, out.node,
        [xn = x.node, wn = weight.node, bn = bias.node, on = out.node, txx, tw, tb, T, c_in, k,
         c_out, stride, out_t, pad_left]() {
          if (txx) xn->ensure_grad();
          if (tw) wn->ensure_grad();
          if (tb) bn->ensure_grad();
          for (int t = 0; t < out_t; ++t) {
            const S* go = on->grad.data() + static_cast<size_t>(t) * c_out;
            if (tb)
              for (int co = 0; co < c_out; ++co) bn->grad[static_cast<size_t>(co)] += go[co];
            for (int dk = 0; dk < k; ++dk) {
              const int q = t * stride + dk - pad_left;
              if (q < 0 || q >= T) continue;
              for (int ci = 0; ci < c_in; ++ci) {
                const size_t xoff = static_cast<size_t>(q) * c_in + ci;
                const size_t woff = (static_cast<size_t>(dk) * c_in + ci) * c_out;
                if (txx) {
                  double acc = 0.0;
                  for (int co = 0; co < c_out; ++co)
                    acc += static_cast<double>(go[co]) * static_cast<double>(wn->values[woff + co]);
                  xn->grad[xoff] += static_cast<S>(acc);
                }
                if (tw) {
                  const double xv = static_cast<double>(xn->values[xoff]);
                  for (int co = 0; co < c_out; ++co)
                    wn->grad[woff + co] += static_cast<S>(xv * static_cast<double>(go[co]));
                }
              }
            }
          }
        });
  }
  return out;
}

// ---- dropout -------------------------------------------------------------------

// Inverted dropout; identity when rate == 0.
template <typename S>
Tensor<S> dropout(const Tensor<S>& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw NumericError("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return a;
  const size_t n = a.values().size();
  std::vector<S> mask(n);
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  for (size_t i = 0; i < n; ++i) mask[i] = rng.uniform_real() >= rate ? keep_scale : S(0);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  for (size_t i = 0; i < n; ++i) out.node->values[i] = a.node->values[i] * mask[i];
  if (detail::tracked(a)) {
    Tape<S>::current()->record({a.node}, out.node, [an = a.node, on = out.node, mask]() {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * mask[i];
    });
  }
  return out;
}

// ---- optimizer ------------------------------------------------------------------

template <typename S>
struct AdamState {
  std::vector<std::vector<S>> first_moment;
  std::vector<std::vector<S>> second_moment;
  int64_t step = 0;
};

// Standard Adam with bias correction. Parameters with no gradient buffer are
// treated as having zero gradient.
template <typename S>
void adam_step(const std::vector<Tensor<S>*>& params, AdamState<S>& state, double lr,
               double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-9) {
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
    for (size_t p = 0; p < params.size(); ++p) {
      state.first_moment[p].assign(params[p]->values().size(), S(0));
      state.second_moment[p].assign(params[p]->values().size(), S(0));
    }
  }
  if (state.first_moment.size() != params.size())
    throw ShapeError("adam_step: state tracks a different parameter count");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor<S>& t = *params[p];
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    if (m.size() != t.values().size())
      throw ShapeError("adam_step: moment shape mismatch for parameter " + std::to_string(p));
    const bool has_g = t.has_grad();
    for (size_t i = 0; i < m.size(); ++i) {
      const double g = has_g ? static_cast<double>(t.node->grad[i]) : 0.0;
      const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
      const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
      m[i] = static_cast<S>(mi);
      v[i] = static_cast<S>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      t.node->values[i] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

}  // namespace nart
