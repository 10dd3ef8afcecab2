#include "hqgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "hqgan/errors.hpp"

namespace hqgan {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
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

// ---------------------------------------------------------------------------
// Tensor handle
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = std::make_shared<detail::TensorNode>();
  node->data.assign(numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeError("from_data: shape " + shape_str(shape) + " wants " +
                     std::to_string(numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->data.size(); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::value() const {
  if (size() != 1) {
    throw ShapeError("value(): tensor has shape " + shape_str(shape()));
  }
  return node_->data[0];
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) {
    throw ShapeError("grad(): no gradient present; call backward() first");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detached() const {
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = node_->shape;
  node->data = node_->data;
  node->requires_grad = false;
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
               detail::BackpropFn backprop) {
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  for (const Tensor& in : inputs) {
    node->parents.push_back(in.node_);
    node->requires_grad = node->requires_grad || in.requires_grad();
  }
  if (node->requires_grad) node->backprop = std::move(backprop);
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  using detail::TensorNode;
  if (!node_) throw ShapeError("backward: undefined tensor");
  if (node_->data.size() != 1) {
    throw ShapeError("backward: root must be a scalar, got shape " +
                     shape_str(node_->shape));
  }
  if (!node_->requires_grad) return;

  // Post-order DFS; reversed, it yields root first with parents after.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      TensorNode* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Fresh gradients for this pass only; folded into the persistent buffers at
  // the end so repeated backward calls accumulate rather than compound.
  std::unordered_map<TensorNode*, std::vector<double>> pass;
  pass[node_.get()] = {1.0};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    auto found = pass.find(n);
    if (found == pass.end() || !n->backprop) continue;
    n->backprop(found->second.data(), [&](std::size_t i) -> double* {
      if (i >= n->parents.size()) return nullptr;  // absent optional input
      TensorNode* p = n->parents[i].get();
      if (!p->requires_grad) return nullptr;
      auto& buf = pass[p];
      if (buf.empty()) buf.assign(p->data.size(), 0.0);
      return buf.data();
    });
  }

  for (auto& [n, g] : pass) {
    if (!n->requires_grad) continue;
    if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) n->grad[i] += g[i];
  }
}

// ---------------------------------------------------------------------------
// Elementwise / reduction
// ---------------------------------------------------------------------------

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

void require_scalar(const char* op, const Tensor& s) {
  if (s.size() != 1) {
    throw ShapeError(std::string(op) + ": expected single-element tensor, got " +
                     shape_str(s.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [n = a.size()](const double* g, const auto& parent_grad) {
                   for (std::size_t p = 0; p < 2; ++p) {
                     if (double* dst = parent_grad(p)) {
                       for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
                     }
                   }
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [a, b](const double* g, const auto& parent_grad) {
                   const auto av = a.data(), bv = b.data();
                   if (double* da = parent_grad(0)) {
                     for (std::size_t i = 0; i < av.size(); ++i) da[i] += g[i] * bv[i];
                   }
                   if (double* db = parent_grad(1)) {
                     for (std::size_t i = 0; i < av.size(); ++i) db[i] += g[i] * av[i];
                   }
                 });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * xv[i];
  return make_op(x.shape(), std::move(out), {x},
                 [c, n = x.size()](const double* g, const auto& parent_grad) {
                   if (double* dx = parent_grad(0)) {
                     for (std::size_t i = 0; i < n; ++i) dx[i] += c * g[i];
                   }
                 });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (const double v : x.data()) total += v;
  return make_op({1}, {total}, {x},
                 [n = x.size()](const double* g, const auto& parent_grad) {
                   if (double* dx = parent_grad(0)) {
                     for (std::size_t i = 0; i < n; ++i) dx[i] += g[0];
                   }
                 });
}

Tensor mul_by_scalar(const Tensor& x, const Tensor& s) {
  require_scalar("mul_by_scalar", s);
  const double sv = s.data()[0];
  std::vector<double> out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * sv;
  return make_op(x.shape(), std::move(out), {x, s},
                 [x, sv](const double* g, const auto& parent_grad) {
                   const auto xv = x.data();
                   if (double* dx = parent_grad(0)) {
                     for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += g[i] * sv;
                   }
                   if (double* ds = parent_grad(1)) {
                     double acc = 0.0;
                     for (std::size_t i = 0; i < xv.size(); ++i) acc += g[i] * xv[i];
                     ds[0] += acc;
                   }
                 });
}

Tensor div_by_scalar(const Tensor& x, const Tensor& s) {
  require_scalar("div_by_scalar", s);
  const double sv = s.data()[0];
  std::vector<double> out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] / sv;
  return make_op(x.shape(), std::move(out), {x, s},
                 [x, sv](const double* g, const auto& parent_grad) {
                   const auto xv = x.data();
                   if (double* dx = parent_grad(0)) {
                     for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += g[i] / sv;
                   }
                   if (double* ds = parent_grad(1)) {
                     double acc = 0.0;
                     for (std::size_t i = 0; i < xv.size(); ++i) acc += g[i] * xv[i];
                     ds[0] -= acc / (sv * sv);
                   }
                 });
}

Tensor sqrt_scalar(const Tensor& s) {
  require_scalar("sqrt_scalar", s);
  const double y = std::sqrt(s.data()[0]);
  return make_op({1}, {y}, {s}, [y](const double* g, const auto& parent_grad) {
    if (double* ds = parent_grad(0)) ds[0] += g[0] / (2.0 * y);
  });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (numel(new_shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op(std::move(new_shape), std::move(out), {x},
                 [n = x.size()](const double* g, const auto& parent_grad) {
                   if (double* dx = parent_grad(0)) {
                     for (std::size_t i = 0; i < n; ++i) dx[i] += g[i];
                   }
                 });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    // NaN must propagate, not silently clamp to 0.
    out[i] = (xv[i] > 0.0 || std::isnan(xv[i])) ? xv[i] : 0.0;
  }
  return make_op(x.shape(), std::move(out), {x},
                 [x](const double* g, const auto& parent_grad) {
                   if (double* dx = parent_grad(0)) {
                     const auto xv = x.data();
                     for (std::size_t i = 0; i < xv.size(); ++i) {
                       if (xv[i] > 0.0) dx[i] += g[i];
                     }
                   }
                 });
}

Tensor tanh(const Tensor& x) {
  // std::tanh rounds to exactly +-1 for |x| above ~19; the contract is the
  // open interval, so saturate to the nearest interior double instead.
  static const double kInterior = std::nextafter(1.0, 0.0);
  std::vector<double> out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double y = std::tanh(xv[i]);
    out[i] = y >= 1.0 ? kInterior : (y <= -1.0 ? -kInterior : y);
  }
  // Capture the forward values; dy/dx = 1 - y^2. The copy is made before the
  // call so the unspecified argument evaluation order cannot observe the move.
  std::vector<double> values = out;
  return make_op(x.shape(), std::move(values), {x},
                 [y = std::move(out)](const double* g, const auto& parent_grad) {
                   if (double* dx = parent_grad(0)) {
                     for (std::size_t i = 0; i < y.size(); ++i) {
                       dx[i] += g[i] * (1.0 - y[i] * y[i]);
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.shape().size() != 2 || weight.shape().size() != 2) {
    throw ShapeError("linear: expected 2-D input and weight, got " +
                     shape_str(x.shape()) + " and " + shape_str(weight.shape()));
  }
  const std::size_t n = x.shape()[0], in = x.shape()[1];
  const std::size_t out_dim = weight.shape()[0];
  if (weight.shape()[1] != in) {
    throw ShapeError("linear: input " + shape_str(x.shape()) +
                     " incompatible with weight " + shape_str(weight.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{out_dim}) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) +
                     " incompatible with weight " + shape_str(weight.shape()));
  }

  std::vector<double> y(n * out_dim, 0.0);
  const double* xv = x.data().data();
  const double* wv = weight.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = xv + r * in;
    double* yr = y.data() + r * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wr = wv + o * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      yr[o] = acc;
    }
    if (bias.defined()) {
      const double* bv = bias.data().data();
      for (std::size_t o = 0; o < out_dim; ++o) yr[o] += bv[o];
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(
      {n, out_dim}, std::move(y), std::move(inputs),
      [x, weight, n, in, out_dim](const double* g, const auto& parent_grad) {
        const double* xv = x.data().data();
        const double* wv = weight.data().data();
        if (double* dx = parent_grad(0)) {
          for (std::size_t r = 0; r < n; ++r) {
            const double* gr = g + r * out_dim;
            double* dxr = dx + r * in;
            for (std::size_t o = 0; o < out_dim; ++o) {
              const double go = gr[o];
              const double* wr = wv + o * in;
              for (std::size_t i = 0; i < in; ++i) dxr[i] += go * wr[i];
            }
          }
        }
        if (double* dw = parent_grad(1)) {
          for (std::size_t r = 0; r < n; ++r) {
            const double* gr = g + r * out_dim;
            const double* xr = xv + r * in;
            for (std::size_t o = 0; o < out_dim; ++o) {
              const double go = gr[o];
              double* dwr = dw + o * in;
              for (std::size_t i = 0; i < in; ++i) dwr[i] += go * xr[i];
            }
          }
        }
        if (double* db = parent_grad(2)) {
          for (std::size_t r = 0; r < n; ++r) {
            const double* gr = g + r * out_dim;
            for (std::size_t o = 0; o < out_dim; ++o) db[o] += gr[o];
          }
        }
      });
}

Tensor vecmat(const Tensor& u, const Tensor& m) {
  if (u.shape().size() != 2 || u.shape()[0] != 1 || m.shape().size() != 2 ||
      u.shape()[1] != m.shape()[0]) {
    throw ShapeError("vecmat: incompatible shapes " + shape_str(u.shape()) +
                     " and " + shape_str(m.shape()));
  }
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  std::vector<double> y(c, 0.0);
  const double* uv = u.data().data();
  const double* mv = m.data().data();
  for (std::size_t i = 0; i < r; ++i) {
    const double ui = uv[i];
    const double* row = mv + i * c;
    for (std::size_t j = 0; j < c; ++j) y[j] += ui * row[j];
  }
  return make_op({1, c}, std::move(y), {u, m},
                 [u, m, r, c](const double* g, const auto& parent_grad) {
                   const double* uv = u.data().data();
                   const double* mv = m.data().data();
                   if (double* du = parent_grad(0)) {
                     for (std::size_t i = 0; i < r; ++i) {
                       const double* row = mv + i * c;
                       double acc = 0.0;
                       for (std::size_t j = 0; j < c; ++j) acc += g[j] * row[j];
                       du[i] += acc;
                     }
                   }
                   if (double* dm = parent_grad(1)) {
                     for (std::size_t i = 0; i < r; ++i) {
                       const double ui = uv[i];
                       double* row = dm + i * c;
                       for (std::size_t j = 0; j < c; ++j) row[j] += ui * g[j];
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
  std::size_t n, c, h, w;       // input
  std::size_t f, k;             // filters, kernel
  std::size_t oh, ow;           // output spatial
  int stride, padding;
  std::size_t ckk() const { return c * k * k; }
  std::size_t ohw() const { return oh * ow; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int padding) {
  if (x.shape().size() != 4 || w.shape().size() != 4) {
    throw ShapeError("conv2d: expected 4-D input and weight, got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  ConvDims d{};
  d.n = x.shape()[0];
  d.c = x.shape()[1];
  d.h = x.shape()[2];
  d.w = x.shape()[3];
  d.f = w.shape()[0];
  d.k = w.shape()[2];
  d.stride = stride;
  d.padding = padding;
  if (w.shape()[1] != d.c || w.shape()[3] != d.k) {
    throw ShapeError("conv2d: weight " + shape_str(w.shape()) +
                     " incompatible with input " + shape_str(x.shape()));
  }
  if (d.k != 1 && d.k != 3) {
    throw ConfigError("conv2d: kernel size must be 1 or 3, got " +
                      std::to_string(d.k));
  }
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  // Floor semantics: trailing rows/columns that do not fit a full window are
  // dropped, as in every mainstream conv implementation.
  const long hn = static_cast<long>(d.h) + 2 * padding - static_cast<long>(d.k);
  const long wn = static_cast<long>(d.w) + 2 * padding - static_cast<long>(d.k);
  if (hn < 0 || wn < 0) {
    throw ConfigError("conv2d: no valid output positions for input " +
                      shape_str(x.shape()) + ", kernel " + std::to_string(d.k) +
                      ", stride " + std::to_string(stride) + ", padding " +
                      std::to_string(padding));
  }
  d.oh = static_cast<std::size_t>(hn / stride) + 1;
  d.ow = static_cast<std::size_t>(wn / stride) + 1;
  return d;
}

// Four-lane reduction with an explicitly fixed summation order
// (deterministic) that breaks the loop-carried dependency.
inline double dot4(const double* __restrict a, const double* __restrict b,
                   const std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// Output positions whose input index o*stride - padding + k stays inside
// [0, in): the intersection of [0, out) with the kernel-shifted window.
inline void valid_range(long k, long padding, long stride, long in, long out,
                        long& lo, long& hi) {
  const long lo_num = padding - k;
  lo = lo_num <= 0 ? 0 : (lo_num + stride - 1) / stride;
  const long hi_num = in - 1 + padding - k;
  hi = hi_num < 0 ? -1 : hi_num / stride;
  if (hi > out - 1) hi = out - 1;
}

// Stride-1 same-size taps (3x3 pad 1, 1x1 pad 0) flatten to one long
// vector pass over the plane plus O(H) edge corrections: the flat pass
// wrongly includes the horizontally wrapped neighbor on one edge column,
// which the fixup subtracts again (costing at most a couple of ulps there).
struct FlatTap {
  long off;      // x index offset = dy * W + dx
  long t_start;  // first valid flat output index
  long t_end;    // last valid flat output index (inclusive)
  long fix_col;  // column whose contribution must be removed, -1 if none
};

inline bool flat_tap(const ConvDims& d, const long ky, const long kx, FlatTap& tap) {
  if (d.stride != 1 || d.oh != d.h || d.ow != d.w) return false;
  const long dy = ky - d.padding, dx = kx - d.padding;
  if (dy < -1 || dy > 1 || dx < -1 || dx > 1) return false;
  const long h = static_cast<long>(d.h), w = static_cast<long>(d.w);
  tap.off = dy * w + dx;
  tap.t_start = std::max((dy < 0 ? w : 0L), -tap.off);
  tap.t_end = std::min((h - (dy > 0 ? 1 : 0)) * w - 1, h * w - 1 - tap.off);
  tap.fix_col = dx < 0 ? 0 : (dx > 0 ? w - 1 : -1);
  return tap.t_end >= tap.t_start;
}

// y[oy,ox] += w * x[oy*s-p+ky, ox*s-p+kx] over the valid window. Works
// directly on image planes; no patch matrix is materialized.
inline void conv_plane_accumulate(double* __restrict y, const double* __restrict x,
                                  const double w, const ConvDims& d, const long ky,
                                  const long kx) {
  FlatTap tap;
  if (flat_tap(d, ky, kx, tap)) {
    double* __restrict yt = y + tap.t_start;
    const double* __restrict xt = x + tap.t_start + tap.off;
    const long n = tap.t_end - tap.t_start + 1;
    for (long i = 0; i < n; ++i) yt[i] += w * xt[i];
    if (tap.fix_col >= 0) {
      const long wl = static_cast<long>(d.w);
      for (long t = (tap.t_start / wl) * wl + tap.fix_col; t <= tap.t_end; t += wl) {
        if (t >= tap.t_start) y[t] -= w * x[t + tap.off];
      }
    }
    return;
  }

  long oy_lo, oy_hi, ox_lo, ox_hi;
  valid_range(ky, d.padding, d.stride, static_cast<long>(d.h),
              static_cast<long>(d.oh), oy_lo, oy_hi);
  valid_range(kx, d.padding, d.stride, static_cast<long>(d.w),
              static_cast<long>(d.ow), ox_lo, ox_hi);
  const long count = ox_hi - ox_lo + 1;
  if (count <= 0) return;
  for (long oy = oy_lo; oy <= oy_hi; ++oy) {
    const long iy = oy * d.stride - d.padding + ky;
    double* __restrict yrow = y + oy * static_cast<long>(d.ow) + ox_lo;
    const double* __restrict xrow =
        x + iy * static_cast<long>(d.w) + (ox_lo * d.stride - d.padding + kx);
    if (d.stride == 1) {
      for (long i = 0; i < count; ++i) yrow[i] += w * xrow[i];
    } else {
      for (long i = 0; i < count; ++i) yrow[i] += w * xrow[i * d.stride];
    }
  }
}

// dx[oy*s-p+ky, ox*s-p+kx] += w * g[oy,ox]: the transposed counterpart.
inline void conv_plane_scatter(double* __restrict dx, const double* __restrict g,
                               const double w, const ConvDims& d, const long ky,
                               const long kx) {
  FlatTap tap;
  if (flat_tap(d, ky, kx, tap)) {
    double* __restrict xt = dx + tap.t_start + tap.off;
    const double* __restrict gt = g + tap.t_start;
    const long n = tap.t_end - tap.t_start + 1;
    for (long i = 0; i < n; ++i) xt[i] += w * gt[i];
    if (tap.fix_col >= 0) {
      const long wl = static_cast<long>(d.w);
      for (long t = (tap.t_start / wl) * wl + tap.fix_col; t <= tap.t_end; t += wl) {
        if (t >= tap.t_start) dx[t + tap.off] -= w * g[t];
      }
    }
    return;
  }

  long oy_lo, oy_hi, ox_lo, ox_hi;
  valid_range(ky, d.padding, d.stride, static_cast<long>(d.h),
              static_cast<long>(d.oh), oy_lo, oy_hi);
  valid_range(kx, d.padding, d.stride, static_cast<long>(d.w),
              static_cast<long>(d.ow), ox_lo, ox_hi);
  const long count = ox_hi - ox_lo + 1;
  if (count <= 0) return;
  for (long oy = oy_lo; oy <= oy_hi; ++oy) {
    const long iy = oy * d.stride - d.padding + ky;
    const double* __restrict grow = g + oy * static_cast<long>(d.ow) + ox_lo;
    double* __restrict xrow =
        dx + iy * static_cast<long>(d.w) + (ox_lo * d.stride - d.padding + kx);
    if (d.stride == 1) {
      for (long i = 0; i < count; ++i) xrow[i] += w * grow[i];
    } else {
      for (long i = 0; i < count; ++i) xrow[i * d.stride] += w * grow[i];
    }
  }
}

// sum over the valid window of g[oy,ox] * x[oy*s-p+ky, ox*s-p+kx].
inline double conv_plane_weight_grad(const double* __restrict g,
                                     const double* __restrict x, const ConvDims& d,
                                     const long ky, const long kx) {
  FlatTap tap;
  if (flat_tap(d, ky, kx, tap)) {
    double acc =
        dot4(g + tap.t_start, x + tap.t_start + tap.off,
             static_cast<std::size_t>(tap.t_end - tap.t_start + 1));
    if (tap.fix_col >= 0) {
      const long wl = static_cast<long>(d.w);
      for (long t = (tap.t_start / wl) * wl + tap.fix_col; t <= tap.t_end; t += wl) {
        if (t >= tap.t_start) acc -= g[t] * x[t + tap.off];
      }
    }
    return acc;
  }

  long oy_lo, oy_hi, ox_lo, ox_hi;
  valid_range(ky, d.padding, d.stride, static_cast<long>(d.h),
              static_cast<long>(d.oh), oy_lo, oy_hi);
  valid_range(kx, d.padding, d.stride, static_cast<long>(d.w),
              static_cast<long>(d.ow), ox_lo, ox_hi);
  const long count = ox_hi - ox_lo + 1;
  if (count <= 0) return 0.0;
  double acc = 0.0;
  for (long oy = oy_lo; oy <= oy_hi; ++oy) {
    const long iy = oy * d.stride - d.padding + ky;
    const double* grow = g + oy * static_cast<long>(d.ow) + ox_lo;
    const double* xrow =
        x + iy * static_cast<long>(d.w) + (ox_lo * d.stride - d.padding + kx);
    if (d.stride == 1) {
      acc += dot4(grow, xrow, static_cast<std::size_t>(count));
    } else {
      for (long i = 0; i < count; ++i) acc += grow[i] * xrow[i * d.stride];
    }
  }
  return acc;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
  const ConvDims d = conv_dims(x, weight, stride, padding);
  if (bias.defined() && bias.shape() != Shape{d.f}) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " wants shape [" +
                     std::to_string(d.f) + "]");
  }

  const std::size_t in_sample = d.c * d.h * d.w;
  const std::size_t out_sample = d.f * d.ohw();
  const std::size_t plane = d.h * d.w;
  std::vector<double> y(d.n * out_sample, 0.0);
  const double* xv = x.data().data();
  const double* wv = weight.data().data();

  // Direct convolution on image planes: each output plane stays hot while
  // the input planes stream; per output element the accumulation order is
  // (c, ky, kx), matching the straightforward nested-loop definition.
  const std::size_t ohw = d.ohw();
  for (std::size_t s = 0; s < d.n; ++s) {
    const double* xs = xv + s * in_sample;
    double* ys = y.data() + s * out_sample;
    for (std::size_t f = 0; f < d.f; ++f) {
      double* yf = ys + f * ohw;
      for (std::size_t c = 0; c < d.c; ++c) {
        const double* xc = xs + c * plane;
        const double* wfc = wv + (f * d.c + c) * d.k * d.k;
        for (std::size_t ky = 0; ky < d.k; ++ky) {
          for (std::size_t kx = 0; kx < d.k; ++kx) {
            const double w = wfc[ky * d.k + kx];
            if (w != 0.0) {
              conv_plane_accumulate(yf, xc, w, d, static_cast<long>(ky),
                                    static_cast<long>(kx));
            }
          }
        }
      }
      if (bias.defined()) {
        const double bf = bias.data()[f];
        for (std::size_t t = 0; t < ohw; ++t) yf[t] += bf;
      }
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(
      {d.n, d.f, d.oh, d.ow}, std::move(y), std::move(inputs),
      [x, weight, d, in_sample, out_sample](const double* g,
                                            const auto& parent_grad) {
        const double* xv = x.data().data();
        const double* wv = weight.data().data();
        double* dx = parent_grad(0);
        double* dw = parent_grad(1);
        double* db = parent_grad(2);
        const std::size_t ohw = d.ohw();
        const std::size_t plane = d.h * d.w;
        for (std::size_t s = 0; s < d.n; ++s) {
          const double* gs = g + s * out_sample;
          const double* xs = xv + s * in_sample;
          for (std::size_t f = 0; f < d.f; ++f) {
            const double* gf = gs + f * ohw;
            if (db) {
              double acc = 0.0;
              for (std::size_t t = 0; t < ohw; ++t) acc += gf[t];
              db[f] += acc;
            }
            for (std::size_t c = 0; c < d.c; ++c) {
              const std::size_t wbase = (f * d.c + c) * d.k * d.k;
              for (std::size_t ky = 0; ky < d.k; ++ky) {
                for (std::size_t kx = 0; kx < d.k; ++kx) {
                  if (dw) {
                    dw[wbase + ky * d.k + kx] += conv_plane_weight_grad(
                        gf, xs + c * plane, d, static_cast<long>(ky),
                        static_cast<long>(kx));
                  }
                  if (dx) {
                    const double w = wv[wbase + ky * d.k + kx];
                    if (w != 0.0) {
                      conv_plane_scatter(dx + s * in_sample + c * plane, gf, w, d,
                                         static_cast<long>(ky),
                                         static_cast<long>(kx));
                    }
                  }
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// upsample / pooling
// ---------------------------------------------------------------------------

Tensor upsample_nearest2x(const Tensor& x) {
  if (x.shape().size() != 4) {
    throw ShapeError("upsample_nearest2x: expected 4-D input, got " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  const std::size_t h = x.shape()[2], w = x.shape()[3];
  std::vector<double> y(n * c * 4 * h * w);
  const double* xv = x.data().data();
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* xp = xv + p * h * w;
    double* yp = y.data() + p * 4 * h * w;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const double v = xp[i * w + j];
        double* row0 = yp + (2 * i) * 2 * w + 2 * j;
        double* row1 = row0 + 2 * w;
        row0[0] = row0[1] = row1[0] = row1[1] = v;
      }
    }
  }
  return make_op({n, c, 2 * h, 2 * w}, std::move(y), {x},
                 [n, c, h, w](const double* g, const auto& parent_grad) {
                   double* dx = parent_grad(0);
                   if (!dx) return;
                   for (std::size_t p = 0; p < n * c; ++p) {
                     const double* gp = g + p * 4 * h * w;
                     double* dxp = dx + p * h * w;
                     for (std::size_t i = 0; i < h; ++i) {
                       for (std::size_t j = 0; j < w; ++j) {
                         const double* row0 = gp + (2 * i) * 2 * w + 2 * j;
                         const double* row1 = row0 + 2 * w;
                         dxp[i * w + j] += row0[0] + row0[1] + row1[0] + row1[1];
                       }
                     }
                   }
                 });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.shape().size() != 4) {
    throw ShapeError("global_avg_pool: expected 4-D input, got " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  const std::size_t hw = x.shape()[2] * x.shape()[3];
  std::vector<double> y(n * c);
  const double* xv = x.data().data();
  for (std::size_t p = 0; p < n * c; ++p) {
    double acc = 0.0;
    for (std::size_t t = 0; t < hw; ++t) acc += xv[p * hw + t];
    y[p] = acc / static_cast<double>(hw);
  }
  return make_op({n, c}, std::move(y), {x},
                 [n, c, hw](const double* g, const auto& parent_grad) {
                   if (double* dx = parent_grad(0)) {
                     const double inv = 1.0 / static_cast<double>(hw);
                     for (std::size_t p = 0; p < n * c; ++p) {
                       const double gp = g[p] * inv;
                       for (std::size_t t = 0; t < hw; ++t) dx[p * hw + t] += gp;
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// batchnorm
// ---------------------------------------------------------------------------

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, Mode mode, double eps, double momentum) {
  const auto& xs = x.shape();
  if (xs.size() != 2 && xs.size() != 4) {
    throw ShapeError("batchnorm: expected 2-D or 4-D input, got " + shape_str(xs));
  }
  const std::size_t n = xs[0], c = xs[1];
  const std::size_t l = xs.size() == 4 ? xs[2] * xs[3] : 1;
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("batchnorm: gamma/beta must have shape [" + std::to_string(c) +
                     "], got " + shape_str(gamma.shape()) + " and " +
                     shape_str(beta.shape()));
  }
  if (state.running_mean.size() != c || state.running_var.size() != c) {
    throw ShapeError("batchnorm: running stats sized " +
                     std::to_string(state.running_mean.size()) + ", want " +
                     std::to_string(c));
  }
  if (mode == Mode::kTrain && n < 2) {
    throw ConfigError(
        "batchnorm: train mode needs batch size >= 2 for usable statistics, got " +
        std::to_string(n));
  }

  const double* xv = x.data().data();
  const std::size_t count = n * l;
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (mode == Mode::kTrain) {
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* p = xv + (s * c + ch) * l;
        for (std::size_t t = 0; t < l; ++t) mean[ch] += p[t];
      }
    }
    for (std::size_t ch = 0; ch < c; ++ch) mean[ch] /= static_cast<double>(count);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* p = xv + (s * c + ch) * l;
        for (std::size_t t = 0; t < l; ++t) {
          const double dlt = p[t] - mean[ch];
          var[ch] += dlt * dlt;
        }
      }
    }
    for (std::size_t ch = 0; ch < c; ++ch) var[ch] /= static_cast<double>(count);
    // Exponential moving average; the running variance stores the unbiased
    // estimate as is conventional.
    const double unbias = count > 1 ? static_cast<double>(count) /
                                          static_cast<double>(count - 1)
                                    : 1.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      state.running_mean[ch] =
          (1.0 - momentum) * state.running_mean[ch] + momentum * mean[ch];
      state.running_var[ch] =
          (1.0 - momentum) * state.running_var[ch] + momentum * var[ch] * unbias;
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);

  std::vector<double> xhat(n * c * l);
  std::vector<double> y(n * c * l);
  const double* gv = gamma.data().data();
  const double* bv = beta.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* p = xv + (s * c + ch) * l;
      double* xh = xhat.data() + (s * c + ch) * l;
      double* yp = y.data() + (s * c + ch) * l;
      for (std::size_t t = 0; t < l; ++t) {
        xh[t] = (p[t] - mean[ch]) * inv_std[ch];
        yp[t] = gv[ch] * xh[t] + bv[ch];
      }
    }
  }

  const bool batch_stats = mode == Mode::kTrain;
  return make_op(
      xs, std::move(y), {x, gamma, beta},
      [gamma, n, c, l, batch_stats, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](const double* g, const auto& parent_grad) {
        const double count = static_cast<double>(n * l);
        const double* gv = gamma.data().data();
        double* dgamma = parent_grad(1);
        double* dbeta = parent_grad(2);
        double* dx = parent_grad(0);

        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double* gp = g + (s * c + ch) * l;
            const double* xh = xhat.data() + (s * c + ch) * l;
            double a = 0.0, b = 0.0;
            for (std::size_t t = 0; t < l; ++t) {
              a += gp[t];
              b += gp[t] * xh[t];
            }
            sum_g[ch] += a;
            sum_gx[ch] += b;
          }
        }
        if (dbeta) {
          for (std::size_t ch = 0; ch < c; ++ch) dbeta[ch] += sum_g[ch];
        }
        if (dgamma) {
          for (std::size_t ch = 0; ch < c; ++ch) dgamma[ch] += sum_gx[ch];
        }
        if (dx) {
          for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              const double* gp = g + (s * c + ch) * l;
              const double* xh = xhat.data() + (s * c + ch) * l;
              double* dp = dx + (s * c + ch) * l;
              const double k = gv[ch] * inv_std[ch];
              if (batch_stats) {
                const double mg = sum_g[ch] / count;
                const double mgx = sum_gx[ch] / count;
                for (std::size_t t = 0; t < l; ++t) {
                  dp[t] += k * (gp[t] - mg - xh[t] * mgx);
                }
              } else {
                for (std::size_t t = 0; t < l; ++t) dp[t] += k * gp[t];
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_same_shape("bce_with_logits", logits, targets);
  const auto xv = logits.data();
  const auto tv = targets.data();
  for (const double t : tv) {
    if (t != 0.0 && t != 1.0) {
      throw ConfigError("bce_with_logits: targets must be 0 or 1, got " +
                        std::to_string(t));
    }
  }
  const std::size_t n = xv.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = xv[i];
    total += std::max(x, 0.0) - x * tv[i] + std::log1p(std::exp(-std::abs(x)));
  }
  total /= static_cast<double>(n);
  return make_op({1}, {total}, {logits, targets},
                 [logits, targets, n](const double* g, const auto& parent_grad) {
                   const auto xv = logits.data();
                   const auto tv = targets.data();
                   const double inv = g[0] / static_cast<double>(n);
                   if (double* dx = parent_grad(0)) {
                     for (std::size_t i = 0; i < n; ++i) {
                       const double x = xv[i];
                       // sigmoid via the stable branch
                       const double s = x >= 0.0
                                            ? 1.0 / (1.0 + std::exp(-x))
                                            : std::exp(x) / (1.0 + std::exp(x));
                       dx[i] += inv * (s - tv[i]);
                     }
                   }
                   if (double* dt = parent_grad(1)) {
                     for (std::size_t i = 0; i < n; ++i) dt[i] -= inv * xv[i];
                   }
                 });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.shape().size() != 2) {
    throw ShapeError("cross_entropy: expected 2-D logits, got " +
                     shape_str(logits.shape()));
  }
  const std::size_t n = logits.shape()[0], c = logits.shape()[1];
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  }
  for (const int lab : labels) {
    if (lab < 0 || static_cast<std::size_t>(lab) >= c) {
      throw ConfigError("cross_entropy: label " + std::to_string(lab) +
                        " outside [0," + std::to_string(c) + ")");
    }
  }
  const double* xv = logits.data().data();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = xv + r * c;
    const double m = *std::max_element(row, row + c);
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(row[j] - m);
    total += m + std::log(lse) - row[labels[r]];
  }
  total /= static_cast<double>(n);
  return make_op({1}, {total}, {logits},
                 [logits, labels, n, c](const double* g, const auto& parent_grad) {
                   double* dx = parent_grad(0);
                   if (!dx) return;
                   const double* xv = logits.data().data();
                   const double inv = g[0] / static_cast<double>(n);
                   for (std::size_t r = 0; r < n; ++r) {
                     const double* row = xv + r * c;
                     const double m = *std::max_element(row, row + c);
                     double lse = 0.0;
                     for (std::size_t j = 0; j < c; ++j) lse += std::exp(row[j] - m);
                     for (std::size_t j = 0; j < c; ++j) {
                       double p = std::exp(row[j] - m) / lse;
                       if (static_cast<std::size_t>(labels[r]) == j) p -= 1.0;
                       dx[r * c + j] += inv * p;
                     }
                   }
                 });
}

std::vector<double> softmax_rows(const Tensor& logits) {
  if (logits.shape().size() != 2) {
    throw ShapeError("softmax_rows: expected 2-D logits, got " +
                     shape_str(logits.shape()));
  }
  const std::size_t n = logits.shape()[0], c = logits.shape()[1];
  const double* xv = logits.data().data();
  std::vector<double> out(n * c);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = xv + r * c;
    double* o = out.data() + r * c;
    const double m = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(row[j] - m);
      z += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  return out;
}

}  // namespace hqgan
