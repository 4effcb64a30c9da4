#pragma once

// Tape-based reverse-mode differentiation over a small, fixed op vocabulary.
// One Tape belongs to one thread. Parameters enter a tape by value; gradients
// flow back into the Parameter's `grad` only when the tape was given a mutable
// reference to it.

#include <Eigen/Core>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mmsr/tensor.hpp"

namespace mmsr::ad {

template <class T>
class Tape;

/// Handle to a node recorded on a Tape.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Shape& shape() const { return tape->node(id).shape; }
  const Buffer<T>& value() const { return tape->node(id).value; }
  T item() const { return tape->node(id).value.at(0); }
  std::size_t size() const { return tape->node(id).value.size(); }
  bool requires_grad() const { return tape->node(id).requires_grad; }
  /// Gradient after backward(); zeros if the node was never reached.
  Buffer<T> grad() const {
    const auto& n = tape->node(id);
    return n.grad.empty() ? Buffer<T>(n.value.size(), T(0)) : n.grad;
  }
  BasicTensor<T> tensor() const { return BasicTensor<T>(shape(), value()); }
};

template <class T>
class Tape {
 public:
  struct Node {
    Shape shape;
    Buffer<T> value;
    Buffer<T> grad;  // allocated lazily during backward
    bool requires_grad = false;
    BasicTensor<T>* sink = nullptr;  // parameter gradient accumulator
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(const BasicTensor<T>& t) { return push(t.shape(), t.values(), false); }
  Var<T> constant(Shape shape, Buffer<T> v) { return push(std::move(shape), std::move(v), false); }
  Var<T> scalar(T v) { return push(Shape{1}, Buffer<T>{v}, false); }

  /// Differentiable leaf; backward() adds into p.grad.
  Var<T> param(BasicParameter<T>& p) {
    auto v = push(p.value.shape(), p.value.values(), true);
    nodes_[v.id].sink = &p.grad;
    return v;
  }
  /// Read-only leaf for inference over shared parameters.
  Var<T> param(const BasicParameter<T>& p) { return push(p.value.shape(), p.value.values(), false); }

  /// Differentiable leaf without a parameter sink (gradient readable via Var::grad).
  Var<T> variable(const BasicTensor<T>& t) { return push(t.shape(), t.values(), true); }

  Var<T> detach(Var<T> x) { return push(x.shape(), x.value(), false); }

  Node& node(std::size_t id) { return nodes_.at(id); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  std::size_t num_ops() const noexcept { return ops_.size(); }

  /// Records an op output. `back` runs during backward with the output grad available.
  Var<T> record(Shape shape, Buffer<T> value, bool requires_grad, std::function<void(Tape&, std::size_t)> back) {
#ifndef NDEBUG
    for (T x : value) assert(std::isfinite(x) && "non-finite forward value");
#endif
    auto v = push(std::move(shape), std::move(value), requires_grad);
    if (requires_grad) ops_.push_back({v.id, std::move(back)});
    return v;
  }

  /// Accumulates d(loss)/d(node) for every reachable requires_grad node, in
  /// reverse recording order, then flushes leaf gradients into parameter sinks.
  void backward(Var<T> loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: loss belongs to another tape");
    if (loss.size() != 1) throw ShapeError("backward: loss must be scalar, got " + to_string(loss.shape()));
    for (auto& n : nodes_) n.grad.clear();
    grad_of(loss.id)[0] = T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (it->out > loss.id) continue;
      if (nodes_[it->out].grad.empty()) continue;
      it->back(*this, it->out);
    }
    for (auto& n : nodes_) {
      if (!n.sink || n.grad.empty()) continue;
      auto& g = n.sink->values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  }

  /// Gradient buffer for accumulation, allocated to zeros on first touch.
  Buffer<T>& grad_of(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

 private:
  struct Op {
    std::size_t out;
    std::function<void(Tape&, std::size_t)> back;
  };

  Var<T> push(Shape shape, Buffer<T> value, bool requires_grad) {
    if (numel(shape) != value.size()) throw ShapeError("tape node shape/data mismatch");
    nodes_.push_back(Node{std::move(shape), std::move(value), {}, requires_grad, nullptr});
    return Var<T>{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::vector<Op> ops_;
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <class T>
void same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw std::invalid_argument("operands recorded on different tapes");
}

template <class T>
void require_same_shape(Var<T> a, Var<T> b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  detail::require_same_shape(a, b, "add");
  Buffer<T> y(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return a.tape->record(a.shape(), std::move(y), a.requires_grad() || b.requires_grad(), [a, b](Tape<T>& t, std::size_t o) {
    for (Var<T> x : {a, b}) {
      if (!x.requires_grad()) continue;
      auto& g = t.grad_of(x.id);
      const auto& go = t.node(o).grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    }
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  detail::require_same_shape(a, b, "sub");
  Buffer<T> y(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return a.tape->record(a.shape(), std::move(y), a.requires_grad() || b.requires_grad(), [a, b](Tape<T>& t, std::size_t o) {
    const T sign[2] = {T(1), T(-1)};
    Var<T> xs[2] = {a, b};
    for (int k = 0; k < 2; ++k) {
      if (!xs[k].requires_grad()) continue;
      auto& g = t.grad_of(xs[k].id);
      const auto& go = t.node(o).grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * go[i];
    }
  });
}

/// y = s * x + c
template <class T>
Var<T> affine_scalar(Var<T> x, T s, T c = T(0)) {
  Buffer<T> y(x.value());
  for (auto& v : y) v = s * v + c;
  return x.tape->record(x.shape(), std::move(y), x.requires_grad(), [x, s](Tape<T>& t, std::size_t o) {
    auto& g = t.grad_of(x.id);
    const auto& go = t.node(o).grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * go[i];
  });
}

template <class T>
Var<T> scale(Var<T> x, T s) {
  return affine_scalar(x, s, T(0));
}

template <class T>
Var<T> square(Var<T> x) {
  Buffer<T> y(x.value());
  for (auto& v : y) v = v * v;
  return x.tape->record(x.shape(), std::move(y), x.requires_grad(), [x](Tape<T>& t, std::size_t o) {
    auto& g = t.grad_of(x.id);
    const auto& go = t.node(o).grad;
    const auto& xv = t.node(x.id).value;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += T(2) * xv[i] * go[i];
  });
}

/// max(0, x); subgradient 0 at x == 0 so a hinge sitting exactly on its margin is inactive.
template <class T>
Var<T> relu(Var<T> x) {
  Buffer<T> y(x.value());
  for (auto& v : y) v = v > T(0) ? v : T(0);
  return x.tape->record(x.shape(), std::move(y), x.requires_grad(), [x](Tape<T>& t, std::size_t o) {
    auto& g = t.grad_of(x.id);
    const auto& go = t.node(o).grad;
    const auto& xv = t.node(x.id).value;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > T(0)) g[i] += go[i];
  });
}

/// Elementwise max(x, slope*x). At exactly 0 the slope-1 branch is used.
template <class T>
Var<T> leaky_relu(Var<T> x, T slope) {
  if (!(slope > T(0) && slope <= T(1))) throw std::invalid_argument("leaky_relu: slope must lie in (0,1]");
  Buffer<T> y(x.value());
  for (auto& v : y) v = v >= T(0) ? v : slope * v;
  return x.tape->record(x.shape(), std::move(y), x.requires_grad(), [x, slope](Tape<T>& t, std::size_t o) {
    auto& g = t.grad_of(x.id);
    const auto& go = t.node(o).grad;
    const auto& xv = t.node(x.id).value;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (xv[i] >= T(0) ? T(1) : slope) * go[i];
  });
}

template <class T>
Var<T> sum(Var<T> x) {
  const auto& xv = x.value();
  T s = std::accumulate(xv.begin(), xv.end(), T(0));
  return x.tape->record(Shape{1}, {s}, x.requires_grad(), [x](Tape<T>& t, std::size_t o) {
    auto& g = t.grad_of(x.id);
    const T go = t.node(o).grad[0];
    for (auto& v : g) v += go;
  });
}

template <class T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

/// mean(|a - b|). Subgradient 0 where a == b.
template <class T>
Var<T> l1_loss(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  detail::require_same_shape(a, b, "l1_loss");
  const auto& av = a.value();
  const auto& bv = b.value();
  T s = 0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
  const T n = static_cast<T>(av.size());
  return a.tape->record(Shape{1}, {s / n}, a.requires_grad() || b.requires_grad(), [a, b, n](Tape<T>& t, std::size_t o) {
    const T go = t.node(o).grad[0] / n;
    const auto& av = t.node(a.id).value;
    const auto& bv = t.node(b.id).value;
    auto sgn = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
    if (a.requires_grad()) {
      auto& g = t.grad_of(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * sgn(av[i] - bv[i]);
    }
    if (b.requires_grad()) {
      auto& g = t.grad_of(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= go * sgn(av[i] - bv[i]);
    }
  });
}

/// Contiguous sub-range of a 1-D tensor.
template <class T>
Var<T> slice(Var<T> x, std::size_t offset, std::size_t count) {
  if (x.shape().size() != 1 || offset + count > x.size()) throw ShapeError("slice: range outside 1-D tensor");
  Buffer<T> y(x.value().begin() + offset, x.value().begin() + offset + count);
  return x.tape->record(Shape{count}, std::move(y), x.requires_grad(), [x, offset, count](Tape<T>& t, std::size_t o) {
    auto& g = t.grad_of(x.id);
    const auto& go = t.node(o).grad;
    for (std::size_t i = 0; i < count; ++i) g[offset + i] += go[i];
  });
}

/// Concatenation of 1-D tensors.
template <class T>
Var<T> concat(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  Buffer<T> y;
  bool rg = false;
  for (auto x : xs) {
    detail::same_tape(x, xs.front());
    if (x.shape().size() != 1) throw ShapeError("concat: inputs must be 1-D");
    y.insert(y.end(), x.value().begin(), x.value().end());
    rg = rg || x.requires_grad();
  }
  const std::size_t n = y.size();
  return xs.front().tape->record(Shape{n}, std::move(y), rg, [xs](Tape<T>& t, std::size_t o) {
    const auto& go = t.node(o).grad;
    std::size_t off = 0;
    for (auto x : xs) {
      if (x.requires_grad()) {
        auto& g = t.grad_of(x.id);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[off + i];
      }
      off += x.size();
    }
  });
}

// ---------------------------------------------------------------------------
// Network layers
// ---------------------------------------------------------------------------

enum class Pad { zero, reflect };

namespace detail {

/// Source index for a padded coordinate, or -1 for a zero tap. Reflect mode
/// mirrors without repeating the edge sample, folding again when the padding
/// exceeds the extent; a single sample reflects onto itself.
inline std::ptrdiff_t pad_index(std::ptrdiff_t i, std::ptrdiff_t n, Pad mode) {
  if (i >= 0 && i < n) return i;
  if (mode == Pad::zero) return -1;
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * n - 2;
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace detail

/// Correlation of input [Cin,H,W] with weight [Cout,Cin,k,k] plus bias.
template <class T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, std::size_t stride = 1, std::size_t padding = 0, Pad pad_mode = Pad::zero) {
  detail::same_tape(input, weight);
  detail::same_tape(input, bias);
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  if (is.size() != 3) throw ShapeError("conv2d: input must be [C,H,W], got " + to_string(is));
  if (ws.size() != 4 || ws[2] != ws[3]) throw ShapeError("conv2d: weight must be [Cout,Cin,k,k], got " + to_string(ws));
  if (ws[1] != is[0]) throw ShapeError("conv2d: input channels " + std::to_string(is[0]) + " != weight Cin " + std::to_string(ws[1]));
  if (bias.shape() != Shape{ws[0]}) throw ShapeError("conv2d: bias must be [Cout]");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t cin = is[0], h = is[1], w = is[2], cout = ws[0], k = ws[2];
  if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd");
  if (h + 2 * padding < k || w + 2 * padding < k) throw ShapeError("conv2d: input smaller than kernel");
  if ((h + 2 * padding - k) % stride != 0 || (w + 2 * padding - k) % stride != 0)
    throw ShapeError("conv2d: non-integral output extent");
  const std::size_t oh = (h + 2 * padding - k) / stride + 1;
  const std::size_t ow = (w + 2 * padding - k) / stride + 1;
  const std::size_t kk = cin * k * k, n = oh * ow;
  const auto sh = static_cast<std::ptrdiff_t>(h), sw = static_cast<std::ptrdiff_t>(w);

  // im2col: rows index (ci,ky,kx), columns index output pixels.
  Buffer<T> col(kk * n, T(0));
  const auto& x = input.value();
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = col.data() + ((ci * k + ky) * k + kx) * n;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = detail::pad_index(static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding), sh, pad_mode);
          if (iy < 0) continue;
          const T* src = x.data() + (ci * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = detail::pad_index(static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding), sw, pad_mode);
            if (ix >= 0) row[oy * ow + ox] = src[ix];
          }
        }
      }

  Buffer<T> y(cout * n);
  {
    detail::CMapMat<T> W(weight.value().data(), cout, kk);
    detail::CMapMat<T> C(col.data(), kk, n);
    detail::MapMat<T> Y(y.data(), cout, n);
    Y.noalias() = W * C;
    const auto& b = bias.value();
    for (std::size_t co = 0; co < cout; ++co) Y.row(co).array() += b[co];
  }

  const bool rg = input.requires_grad() || weight.requires_grad() || bias.requires_grad();
  return input.tape->record(
      Shape{cout, oh, ow}, std::move(y), rg,
      [=, col = std::move(col)](Tape<T>& t, std::size_t o) {
        detail::CMapMat<T> G(t.node(o).grad.data(), cout, n);
        if (bias.requires_grad()) {
          auto& gb = t.grad_of(bias.id);
          for (std::size_t co = 0; co < cout; ++co) gb[co] += G.row(co).sum();
        }
        if (weight.requires_grad()) {
          detail::MapMat<T> GW(t.grad_of(weight.id).data(), cout, kk);
          detail::CMapMat<T> C(col.data(), kk, n);
          GW.noalias() += G * C.transpose();
        }
        if (input.requires_grad()) {
          detail::CMapMat<T> W(t.node(weight.id).value.data(), cout, kk);
          detail::RowMat<T> dcol = W.transpose() * G;
          auto& gx = t.grad_of(input.id);
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const T* row = dcol.data() + ((ci * k + ky) * k + kx) * n;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                  const std::ptrdiff_t iy = detail::pad_index(static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding), sh, pad_mode);
                  if (iy < 0) continue;
                  T* dst = gx.data() + (ci * h + static_cast<std::size_t>(iy)) * w;
                  for (std::size_t ox = 0; ox < ow; ++ox) {
                    const std::ptrdiff_t ix = detail::pad_index(static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding), sw, pad_mode);
                    if (ix >= 0) dst[ix] += row[oy * ow + ox];
                  }
                }
              }
        }
      });
}

/// y = W x + b with W [M,N], x [N].
template <class T>
Var<T> dense(Var<T> x, Var<T> weight, Var<T> bias) {
  detail::same_tape(x, weight);
  detail::same_tape(x, bias);
  const auto& ws = weight.shape();
  if (x.shape().size() != 1) throw ShapeError("dense: input must be 1-D, got " + to_string(x.shape()));
  if (ws.size() != 2 || ws[1] != x.size()) throw ShapeError("dense: weight " + to_string(ws) + " incompatible with input " + to_string(x.shape()));
  if (bias.shape() != Shape{ws[0]}) throw ShapeError("dense: bias must be [M]");
  const std::size_t m = ws[0], n = ws[1];
  Buffer<T> y(bias.value());
  const auto& W = weight.value();
  const auto& xv = x.value();
  for (std::size_t i = 0; i < m; ++i) {
    T acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += W[i * n + j] * xv[j];
    y[i] += acc;
  }
  const bool rg = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  return x.tape->record(Shape{m}, std::move(y), rg, [=](Tape<T>& t, std::size_t o) {
    const auto go = t.node(o).grad;
    if (bias.requires_grad()) {
      auto& gb = t.grad_of(bias.id);
      for (std::size_t i = 0; i < m; ++i) gb[i] += go[i];
    }
    if (weight.requires_grad()) {
      auto& gw = t.grad_of(weight.id);
      const auto& xv = t.node(x.id).value;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gw[i * n + j] += go[i] * xv[j];
    }
    if (x.requires_grad()) {
      auto& gx = t.grad_of(x.id);
      const auto& W = t.node(weight.id).value;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[j] += go[i] * W[i * n + j];
    }
  });
}

/// [C,H,W] -> [C] per-channel mean.
template <class T>
Var<T> global_avg_pool(Var<T> x) {
  const auto& s = x.shape();
  if (s.size() != 3 || s[1] == 0 || s[2] == 0) throw ShapeError("global_avg_pool: input must be non-empty [C,H,W]");
  const std::size_t c = s[0], hw = s[1] * s[2];
  Buffer<T> y(c, T(0));
  const auto& xv = x.value();
  for (std::size_t ch = 0; ch < c; ++ch) {
    T acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += xv[ch * hw + i];
    y[ch] = acc / static_cast<T>(hw);
  }
  return x.tape->record(Shape{c}, std::move(y), x.requires_grad(), [x, c, hw](Tape<T>& t, std::size_t o) {
    auto& g = t.grad_of(x.id);
    const auto& go = t.node(o).grad;
    const T inv = T(1) / static_cast<T>(hw);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) g[ch * hw + i] += go[ch] * inv;
  });
}

namespace detail {
// Index in a [C*r*r,H,W] tensor of element (c,y,x) of its [C,rH,rW] shuffle.
inline std::size_t shuffle_src(std::size_t c, std::size_t y, std::size_t x, std::size_t r, std::size_t h, std::size_t w) {
  const std::size_t ch = c * r * r + (y % r) * r + (x % r);
  return (ch * h + y / r) * w + x / r;
}
}  // namespace detail

/// [C*r^2,H,W] -> [C,rH,rW]; out[c, y*r+i, x*r+j] = in[c*r*r + i*r + j, y, x].
template <class T>
Var<T> pixel_shuffle(Var<T> x, std::size_t r) {
  const auto& s = x.shape();
  if (r == 0 || s.size() != 3 || s[0] % (r * r) != 0) throw ShapeError("pixel_shuffle: channels must be divisible by r^2");
  const std::size_t c = s[0] / (r * r), h = s[1], w = s[2];
  const std::size_t oh = h * r, ow = w * r;
  Buffer<T> y(x.size());
  const auto& xv = x.value();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t yy = 0; yy < oh; ++yy)
      for (std::size_t xx = 0; xx < ow; ++xx) y[(ch * oh + yy) * ow + xx] = xv[detail::shuffle_src(ch, yy, xx, r, h, w)];
  return x.tape->record(Shape{c, oh, ow}, std::move(y), x.requires_grad(), [=](Tape<T>& t, std::size_t o) {
    auto& g = t.grad_of(x.id);
    const auto& go = t.node(o).grad;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t yy = 0; yy < oh; ++yy)
        for (std::size_t xx = 0; xx < ow; ++xx) g[detail::shuffle_src(ch, yy, xx, r, h, w)] += go[(ch * oh + yy) * ow + xx];
  });
}

/// Inverse of pixel_shuffle: [C,rH,rW] -> [C*r^2,H,W].
template <class T>
Var<T> pixel_unshuffle(Var<T> x, std::size_t r) {
  const auto& s = x.shape();
  if (r == 0 || s.size() != 3 || s[1] % r != 0 || s[2] % r != 0) throw ShapeError("pixel_unshuffle: extents must be divisible by r");
  const std::size_t c = s[0], oh = s[1], ow = s[2], h = oh / r, w = ow / r;
  Buffer<T> y(x.size());
  const auto& xv = x.value();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t yy = 0; yy < oh; ++yy)
      for (std::size_t xx = 0; xx < ow; ++xx) y[detail::shuffle_src(ch, yy, xx, r, h, w)] = xv[(ch * oh + yy) * ow + xx];
  return x.tape->record(Shape{c * r * r, h, w}, std::move(y), x.requires_grad(), [=](Tape<T>& t, std::size_t o) {
    auto& g = t.grad_of(x.id);
    const auto& go = t.node(o).grad;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t yy = 0; yy < oh; ++yy)
        for (std::size_t xx = 0; xx < ow; ++xx) g[(ch * oh + yy) * ow + xx] += go[detail::shuffle_src(ch, yy, xx, r, h, w)];
  });
}

/// out[c,h,w] = f[c,h,w] * alpha[c] + beta[c]
template <class T>
Var<T> broadcast_affine(Var<T> f, Var<T> alpha, Var<T> beta) {
  detail::same_tape(f, alpha);
  detail::same_tape(f, beta);
  const auto& s = f.shape();
  if (s.size() != 3) throw ShapeError("broadcast_affine: features must be [C,H,W]");
  const std::size_t c = s[0], hw = s[1] * s[2];
  if (alpha.shape() != Shape{c} || beta.shape() != Shape{c})
    throw ShapeError("broadcast_affine: alpha/beta must be [" + std::to_string(c) + "]");
  Buffer<T> y(f.value());
  const auto& a = alpha.value();
  const auto& b = beta.value();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) y[ch * hw + i] = y[ch * hw + i] * a[ch] + b[ch];
  const bool rg = f.requires_grad() || alpha.requires_grad() || beta.requires_grad();
  return f.tape->record(s, std::move(y), rg, [=](Tape<T>& t, std::size_t o) {
    const auto& go = t.node(o).grad;
    const auto& fv = t.node(f.id).value;
    const auto& av = t.node(alpha.id).value;
    if (f.requires_grad()) {
      auto& g = t.grad_of(f.id);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) g[ch * hw + i] += go[ch * hw + i] * av[ch];
    }
    if (alpha.requires_grad()) {
      auto& g = t.grad_of(alpha.id);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) g[ch] += go[ch * hw + i] * fv[ch * hw + i];
    }
    if (beta.requires_grad()) {
      auto& g = t.grad_of(beta.id);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) g[ch] += go[ch * hw + i];
    }
  });
}

}  // namespace mmsr::ad
