#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "skipcross/errors.hpp"
#include "skipcross/rng.hpp"

namespace skipcross {

// Dense row-major tensor of rank <= 4 with an optional gradient buffer and a
// replayable tape for reverse-mode differentiation. The canonical 4-d layout
// is batch x channel x height x width.

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

template <typename S>
class Tape;

namespace detail {

template <typename S>
struct TensorData {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  bool tape_output = false;  // produced by a recorded op (non-leaf)
  Tape<S>* tape = nullptr;   // tape that recorded the producing op
};

}  // namespace detail

template <typename S>
class TensorT {
 public:
  using Scalar = S;

  TensorT() = default;

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), S(0), requires_grad);
  }

  static TensorT full(Shape shape, S fill, bool requires_grad = false) {
    check_shape(shape);
    TensorT t;
    t.d_ = std::make_shared<detail::TensorData<S>>();
    t.d_->shape = std::move(shape);
    t.d_->value.assign(static_cast<size_t>(shape_numel(t.d_->shape)), fill);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  static TensorT from(Shape shape, std::vector<S> values,
                      bool requires_grad = false) {
    check_shape(shape);
    if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    TensorT t;
    t.d_ = std::make_shared<detail::TensorData<S>>();
    t.d_->shape = std::move(shape);
    t.d_->value = std::move(values);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  // Rank-0 tensor (the shape of every learnable fusion scalar).
  static TensorT scalar(S v, bool requires_grad = false) {
    return from({}, {v}, requires_grad);
  }

  static TensorT randn(Shape shape, Rng& rng, S stddev = S(1),
                       bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    for (S& v : t.d_->value) v = static_cast<S>(rng.normal()) * stddev;
    return t;
  }

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(d_->value.size()); }
  int extent(int axis) const { return d_->shape[static_cast<size_t>(axis)]; }

  std::span<S> values() { return {d_->value.data(), d_->value.size()}; }
  std::span<const S> values() const {
    return {d_->value.data(), d_->value.size()};
  }
  S* data() { return d_->value.data(); }
  const S* data() const { return d_->value.data(); }

  S item() const {
    if (numel() != 1) {
      throw ShapeError("item() requires a single-element tensor, got shape " +
                       shape_str(d_->shape));
    }
    return d_->value[0];
  }

  // Flat element access; rank-4 convenience indexer for tests.
  S& at(int64_t i) { return d_->value[static_cast<size_t>(i)]; }
  S at(int64_t i) const { return d_->value[static_cast<size_t>(i)]; }
  S& at4(int n, int c, int h, int w) {
    const Shape& s = d_->shape;
    return d_->value[static_cast<size_t>(
        ((static_cast<int64_t>(n) * s[1] + c) * s[2] + h) * s[3] + w)];
  }
  S at4(int n, int c, int h, int w) const {
    return const_cast<TensorT*>(this)->at4(n, c, h, w);
  }

  bool requires_grad() const { return d_->requires_grad; }
  TensorT& set_requires_grad(bool on) {
    d_->requires_grad = on;
    if (!on) d_->grad.clear();
    return *this;
  }

  bool has_grad() const { return !d_->grad.empty(); }

  // Gradient accumulator, allocated zero-filled on first use.
  std::span<S> grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->value.size(), S(0));
    return {d_->grad.data(), d_->grad.size()};
  }
  std::span<const S> grad() const {
    return {d_->grad.data(), d_->grad.size()};
  }

  void zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), S(0));
  }

  void reset_grad_buffer() { d_->grad.assign(d_->value.size(), S(0)); }

  bool is_leaf() const { return !d_->tape_output; }
  Tape<S>* producing_tape() const { return d_->tape; }

  // Deep copy of the values; gradient state is not carried over.
  TensorT clone() const {
    TensorT t;
    t.d_ = std::make_shared<detail::TensorData<S>>();
    t.d_->shape = d_->shape;
    t.d_->value = d_->value;
    t.d_->requires_grad = d_->requires_grad;
    return t;
  }

  bool same_storage(const TensorT& other) const { return d_ == other.d_; }

  std::shared_ptr<detail::TensorData<S>> impl() const { return d_; }

 private:
  static void check_shape(const Shape& shape) {
    if (shape.size() > 4) {
      throw ShapeError("tensor rank " + std::to_string(shape.size()) +
                       " exceeds the supported maximum of 4");
    }
    for (int e : shape) {
      if (e <= 0) {
        throw ShapeError("tensor extent must be positive, got shape " +
                         shape_str(shape));
      }
    }
  }

  std::shared_ptr<detail::TensorData<S>> d_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// Ordered record of executed differentiable operations. While a tape is in
// scope every op whose inputs require gradients appends its adjoint; backward
// replays the adjoints in reverse record order. Non-leaf gradients are reset
// at the start of each replay, leaf gradients accumulate across replays.
template <typename S>
class Tape {
 public:
  Tape() : prev_(current_) { current_ = this; }
  ~Tape() { current_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_; }

  void record(const TensorT<S>& output, std::function<void()> adjoint) {
    output.impl()->tape = this;
    output.impl()->tape_output = true;
    nodes_.push_back(Node{std::move(adjoint), output.impl()});
  }

  size_t size() const { return nodes_.size(); }

  void backward(const TensorT<S>& loss) {
    if (!loss.defined() || loss.rank() != 0) {
      throw ShapeError("backward requires a rank-0 loss tensor");
    }
    if (loss.producing_tape() != this) {
      throw DataError("loss was not produced under this tape");
    }
    for (Node& n : nodes_) n.out->grad.assign(n.out->value.size(), S(0));
    loss.impl()->grad[0] = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->adjoint();
  }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::function<void()> adjoint;
    std::shared_ptr<detail::TensorData<S>> out;
  };

  std::vector<Node> nodes_;
  Tape* prev_ = nullptr;
  static thread_local Tape* current_;
};

template <typename S>
thread_local Tape<S>* Tape<S>::current_ = nullptr;

// Dispatches to the tape that produced the loss.
template <typename S>
void backward(const TensorT<S>& loss) {
  if (!loss.defined() || loss.rank() != 0) {
    throw ShapeError("backward requires a rank-0 loss tensor");
  }
  Tape<S>* tape = loss.producing_tape();
  if (!tape) throw DataError("backward called without an active tape");
  tape->backward(loss);
}

namespace detail {

template <typename S>
bool track(std::initializer_list<const TensorT<S>*> inputs) {
  if (!Tape<S>::current()) return false;
  for (const TensorT<S>* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename S>
void require_same_shape(const TensorT<S>& a, const TensorT<S>& b,
                        const char* op) {
  if (a.shape() == b.shape()) return;
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  std::string detail;
  if (sa.size() != sb.size()) {
    detail = "rank " + std::to_string(sa.size()) + " vs " +
             std::to_string(sb.size());
  } else {
    for (size_t i = 0; i < sa.size(); ++i) {
      if (sa[i] != sb[i]) {
        detail = "dimension " + std::to_string(i) + " (" +
                 std::to_string(sa[i]) + " vs " + std::to_string(sb[i]) + ")";
        break;
      }
    }
  }
  throw ShapeError(std::string(op) + ": shape mismatch at " + detail + ", " +
                   shape_str(sa) + " vs " + shape_str(sb));
}

template <typename S>
void require_scalar(const TensorT<S>& w, const char* op) {
  if (w.rank() != 0) {
    throw ShapeError(std::string(op) + ": weight must be rank-0, got " +
                     shape_str(w.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_same_shape(a, b, "add");
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (detail::track<S>({&a, &b})) {
    out.set_requires_grad(true);
    TensorT<S> ac = a, bc = b, oc = out;
    Tape<S>::current()->record(out, [ac, bc, oc]() mutable {
      std::span<const S> g = oc.grad();
      if (ac.requires_grad()) {
        std::span<S> ga = ac.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bc.requires_grad()) {
        std::span<S> gb = bc.grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> relu(const TensorT<S>& x) {
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  const S* px = x.data();
  S* po = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] > S(0) ? px[i] : S(0);
  if (detail::track<S>({&x})) {
    out.set_requires_grad(true);
    TensorT<S> xc = x, oc = out;
    Tape<S>::current()->record(out, [xc, oc]() mutable {
      std::span<const S> g = oc.grad();
      if (!xc.requires_grad()) return;
      std::span<S> gx = xc.grad();
      const S* vx = xc.data();
      for (size_t i = 0; i < g.size(); ++i) {
        if (vx[i] > S(0)) gx[i] += g[i];
      }
    });
  }
  return out;
}

// w * x with a rank-0 learnable w.
template <typename S>
TensorT<S> smul(const TensorT<S>& w, const TensorT<S>& x) {
  detail::require_scalar(w, "smul");
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  const S wv = w.item();
  const S* px = x.data();
  S* po = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = wv * px[i];
  if (detail::track<S>({&w, &x})) {
    out.set_requires_grad(true);
    TensorT<S> wc = w, xc = x, oc = out;
    Tape<S>::current()->record(out, [wc, xc, oc]() mutable {
      std::span<const S> g = oc.grad();
      const S* vx = xc.data();
      if (wc.requires_grad()) {
        S acc = S(0);
        for (size_t i = 0; i < g.size(); ++i) acc += g[i] * vx[i];
        wc.grad()[0] += acc;
      }
      if (xc.requires_grad()) {
        std::span<S> gx = xc.grad();
        const S wv2 = wc.item();
        for (size_t i = 0; i < g.size(); ++i) gx[i] += wv2 * g[i];
      }
    });
  }
  return out;
}

// a + w * b, the fusion primitive: one stream's map plus a learnable scalar
// times the other stream's map. d/da = 1, d/db = w, d/dw = sum(g .* b).
template <typename S>
TensorT<S> scale_add(const TensorT<S>& a, const TensorT<S>& w,
                     const TensorT<S>& b) {
  detail::require_same_shape(a, b, "scale_add");
  detail::require_scalar(w, "scale_add");
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  const S wv = w.item();
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + wv * pb[i];
  if (detail::track<S>({&a, &w, &b})) {
    out.set_requires_grad(true);
    TensorT<S> ac = a, wc = w, bc = b, oc = out;
    Tape<S>::current()->record(out, [ac, wc, bc, oc]() mutable {
      std::span<const S> g = oc.grad();
      if (ac.requires_grad()) {
        std::span<S> ga = ac.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wc.requires_grad()) {
        const S* vb = bc.data();
        S acc = S(0);
        for (size_t i = 0; i < g.size(); ++i) acc += g[i] * vb[i];
        wc.grad()[0] += acc;
      }
      if (bc.requires_grad()) {
        std::span<S> gb = bc.grad();
        const S wv2 = wc.item();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += wv2 * g[i];
      }
    });
  }
  return out;
}

// Concatenate two rank-4 tensors along the channel axis.
template <typename S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 4 || b.rank() != 4) {
    throw ShapeError("concat_channels requires rank-4 inputs");
  }
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
    throw ShapeError("concat_channels: batch/spatial mismatch, " +
                     shape_str(sa) + " vs " + shape_str(sb));
  }
  const int n = sa[0], ca = sa[1], cb = sb[1], h = sa[2], w = sa[3];
  const int64_t plane = static_cast<int64_t>(h) * w;
  TensorT<S> out = TensorT<S>::zeros({n, ca + cb, h, w});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * ca * plane, ca * plane,
                out.data() + static_cast<int64_t>(i) * (ca + cb) * plane);
    std::copy_n(b.data() + i * cb * plane, cb * plane,
                out.data() + static_cast<int64_t>(i) * (ca + cb) * plane +
                    ca * plane);
  }
  if (detail::track<S>({&a, &b})) {
    out.set_requires_grad(true);
    TensorT<S> ac = a, bc = b, oc = out;
    Tape<S>::current()->record(
        out, [ac, bc, oc, n, ca, cb, plane]() mutable {
          std::span<const S> g = oc.grad();
          for (int i = 0; i < n; ++i) {
            const S* go = g.data() + static_cast<int64_t>(i) * (ca + cb) * plane;
            if (ac.requires_grad()) {
              std::span<S> ga = ac.grad();
              S* pa = ga.data() + static_cast<int64_t>(i) * ca * plane;
              for (int64_t j = 0; j < ca * plane; ++j) pa[j] += go[j];
            }
            if (bc.requires_grad()) {
              std::span<S> gb = bc.grad();
              S* pb = gb.data() + static_cast<int64_t>(i) * cb * plane;
              for (int64_t j = 0; j < cb * plane; ++j) {
                pb[j] += go[ca * plane + j];
              }
            }
          }
        });
  }
  return out;
}

}  // namespace skipcross
