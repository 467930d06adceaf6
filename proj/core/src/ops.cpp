#include "msaff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <utility>

namespace msaff {
namespace {

using detail::Node;

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw UsageError(std::string(op) + ": undefined input tensor");
}

void check_axis(int axis, int rank, const char* op) {
  if (axis < 0 || axis >= rank) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
  }
}

void check_finite_out(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

Tensor make_op(const char* op, Shape shape, std::vector<double> value,
               std::vector<Tensor> inputs,
               std::function<void(Node&)> backward) {
  check_finite_out(value, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->seq = detail::next_seq();
  bool rg = false;
  for (const auto& in : inputs) rg = rg || in.requires_grad();
  node->requires_grad = rg;
  if (rg) {
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = acc;
    acc *= s[static_cast<std::size_t>(i)];
  }
  return st;
}

// outer x n x inner view of a tensor around one axis
struct AxisView {
  int64_t outer, n, inner;
};

AxisView axis_view(const Shape& s, int axis) {
  AxisView v{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) v.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

Shape reduced_shape(const Shape& s, int axis, bool keepdim) {
  Shape out = s;
  if (keepdim) {
    out[static_cast<std::size_t>(axis)] = 1;
  } else if (out.size() == 1) {
    out = {1};
  } else {
    out.erase(out.begin() + axis);
  }
  return out;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    int da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    int db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) +
                       " with " + shape_str(b) + " (axis " + std::to_string(i) + ")");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` aligned to a broadcast output shape; 0 where `s` stretches.
std::vector<int64_t> bcast_strides(const Shape& s, const Shape& out) {
  std::vector<int64_t> st(out.size(), 0);
  auto own = strides_of(s);
  std::size_t shift = out.size() - s.size();
  for (std::size_t i = 0; i < s.size(); ++i) {
    st[shift + i] = (s[i] == 1 && out[shift + i] != 1) ? 0 : own[i];
  }
  return st;
}

template <class F, class DA, class DB>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
  check_defined(a, op);
  check_defined(b, op);
  const Shape out_shape = broadcast_shape(a.shape(), b.shape(), op);
  const auto sa = bcast_strides(a.shape(), out_shape);
  const auto sb = bcast_strides(b.shape(), out_shape);
  const int64_t n = numel(out_shape);
  const std::size_t rank = out_shape.size();

  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<std::size_t>(n));
  std::vector<int> idx(rank, 0);
  int64_t oa = 0, ob = 0;
  for (int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] =
        f(av[static_cast<std::size_t>(oa)], bv[static_cast<std::size_t>(ob)]);
    for (int ax = static_cast<int>(rank) - 1; ax >= 0; --ax) {
      auto u = static_cast<std::size_t>(ax);
      if (++idx[u] < out_shape[u]) {
        oa += sa[u];
        ob += sb[u];
        break;
      }
      oa -= sa[u] * (out_shape[u] - 1);
      ob -= sb[u] * (out_shape[u] - 1);
      idx[u] = 0;
    }
  }

  auto bw = [out_shape, sa, sb, dfa, dfb](Node& self) {
    const int64_t count = numel(out_shape);
    const std::size_t rk = out_shape.size();
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const bool ga = na.requires_grad;
    const bool gb = nb.requires_grad;
    std::vector<int> it(rk, 0);
    int64_t pa = 0, pb = 0;
    for (int64_t i = 0; i < count; ++i) {
      const double g = self.grad[static_cast<std::size_t>(i)];
      const double va = na.value[static_cast<std::size_t>(pa)];
      const double vb = nb.value[static_cast<std::size_t>(pb)];
      if (ga) self.accumulate(0, static_cast<std::size_t>(pa), g * dfa(va, vb));
      if (gb) self.accumulate(1, static_cast<std::size_t>(pb), g * dfb(va, vb));
      for (int ax = static_cast<int>(rk) - 1; ax >= 0; --ax) {
        auto u = static_cast<std::size_t>(ax);
        if (++it[u] < out_shape[u]) {
          pa += sa[u];
          pb += sb[u];
          break;
        }
        pa -= sa[u] * (out_shape[u] - 1);
        pb -= sb[u] * (out_shape[u] - 1);
        it[u] = 0;
      }
    }
  };
  return make_op(op, out_shape, std::move(out), {a, b}, std::move(bw));
}

template <class F, class DF>
Tensor unary_op(const char* op, const Tensor& x, F f, DF df) {
  check_defined(x, op);
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  auto bw = [df](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      self.accumulate(0, i, self.grad[i] * df(in.value[i], self.value[i]));
    }
  };
  return make_op(op, x.shape(), std::move(out), {x}, std::move(bw));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
  check_defined(input, "conv2d");
  check_defined(weight, "conv2d");
  if (input.dim() != 4) throw ShapeError("conv2d: input must be [B,Cin,H,W], got " + shape_str(input.shape()));
  if (weight.dim() != 4) throw ShapeError("conv2d: weight must be [Cout,Cin,kh,kw], got " + shape_str(weight.shape()));
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  const int B = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  const int Cout = ws[0], kh = ws[2], kw = ws[3];
  if (ws[1] != Cin) {
    throw ShapeError("conv2d: input channel axis (" + std::to_string(Cin) +
                     ") does not match weight channel axis (" + std::to_string(ws[1]) + ")");
  }
  if (H + 2 * padding < kh || W + 2 * padding < kw) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " does not fit padded input " + shape_str(xs));
  }
  if (bias.defined() && (bias.dim() != 1 || bias.shape()[0] != Cout)) {
    throw ShapeError("conv2d: bias must be [Cout]=" + std::to_string(Cout) +
                     ", got " + shape_str(bias.shape()));
  }
  const int OH = (H + 2 * padding - kh) / stride + 1;
  const int OW = (W + 2 * padding - kw) / stride + 1;

  const auto& xv = input.data();
  const auto& wv = weight.data();
  std::vector<double> out(static_cast<std::size_t>(B) * Cout * OH * OW, 0.0);
  if (bias.defined()) {
    const auto& bv = bias.data();
    for (int b = 0; b < B; ++b)
      for (int co = 0; co < Cout; ++co) {
        double* o = out.data() + (static_cast<int64_t>(b) * Cout + co) * OH * OW;
        std::fill(o, o + static_cast<int64_t>(OH) * OW, bv[static_cast<std::size_t>(co)]);
      }
  }
  for (int b = 0; b < B; ++b) {
    for (int co = 0; co < Cout; ++co) {
      double* o = out.data() + (static_cast<int64_t>(b) * Cout + co) * OH * OW;
      for (int ci = 0; ci < Cin; ++ci) {
        const double* xplane = xv.data() + (static_cast<int64_t>(b) * Cin + ci) * H * W;
        const double* wplane = wv.data() + (static_cast<int64_t>(co) * Cin + ci) * kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            const double wval = wplane[ky * kw + kx];
            if (wval == 0.0) continue;
            for (int oy = 0; oy < OH; ++oy) {
              const int iy = oy * stride - padding + ky;
              if (iy < 0 || iy >= H) continue;
              const double* xrow = xplane + static_cast<int64_t>(iy) * W;
              double* orow = o + static_cast<int64_t>(oy) * OW;
              for (int ox = 0; ox < OW; ++ox) {
                const int ix = ox * stride - padding + kx;
                if (ix < 0 || ix >= W) continue;
                orow[ox] += wval * xrow[ix];
              }
            }
          }
        }
      }
    }
  }

  const bool has_bias = bias.defined();
  auto bw = [B, Cin, H, W, Cout, kh, kw, OH, OW, stride, padding, has_bias](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nw = *self.inputs[1];
    const bool gx = nx.requires_grad;
    const bool gw = nw.requires_grad;
    const bool gb = has_bias && self.inputs[2]->requires_grad;
    auto* dx = gx ? nx.grad_buffer().data() : nullptr;
    auto* dw = gw ? nw.grad_buffer().data() : nullptr;
    auto* db = gb ? self.inputs[2]->grad_buffer().data() : nullptr;
    const double* xv = nx.value.data();
    const double* wv = nw.value.data();
    for (int b = 0; b < B; ++b) {
      for (int co = 0; co < Cout; ++co) {
        const double* g = self.grad.data() + (static_cast<int64_t>(b) * Cout + co) * OH * OW;
        if (gb) {
          double s = 0.0;
          for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i) s += g[i];
          db[co] += s;
        }
        for (int ci = 0; ci < Cin; ++ci) {
          const double* xplane = xv + (static_cast<int64_t>(b) * Cin + ci) * H * W;
          const double* wplane = wv + (static_cast<int64_t>(co) * Cin + ci) * kh * kw;
          double* dxplane = gx ? dx + (static_cast<int64_t>(b) * Cin + ci) * H * W : nullptr;
          double* dwplane = gw ? dw + (static_cast<int64_t>(co) * Cin + ci) * kh * kw : nullptr;
          for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
              const double wval = wplane[ky * kw + kx];
              double wacc = 0.0;
              for (int oy = 0; oy < OH; ++oy) {
                const int iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= H) continue;
                const double* grow = g + static_cast<int64_t>(oy) * OW;
                const double* xrow = xplane + static_cast<int64_t>(iy) * W;
                double* dxrow = gx ? dxplane + static_cast<int64_t>(iy) * W : nullptr;
                for (int ox = 0; ox < OW; ++ox) {
                  const int ix = ox * stride - padding + kx;
                  if (ix < 0 || ix >= W) continue;
                  if (gx) dxrow[ix] += wval * grow[ox];
                  if (gw) wacc += xrow[ix] * grow[ox];
                }
              }
              if (gw) dwplane[ky * kw + kx] += wacc;
            }
          }
        }
      }
    }
  };

  Shape out_shape{B, Cout, OH, OW};
  std::vector<Tensor> ins{input, weight};
  if (has_bias) ins.push_back(bias);
  return make_op("conv2d", std::move(out_shape), std::move(out), std::move(ins), std::move(bw));
}

Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias, int padding) {
  check_defined(input, "conv1d");
  check_defined(weight, "conv1d");
  if (input.dim() != 3) throw ShapeError("conv1d: input must be [B,Cin,L], got " + shape_str(input.shape()));
  if (weight.dim() != 3) throw ShapeError("conv1d: weight must be [Cout,Cin,k], got " + shape_str(weight.shape()));
  if (padding < 0) throw ConfigError("conv1d: padding must be >= 0");
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  const int B = xs[0], Cin = xs[1], L = xs[2];
  const int Cout = ws[0], k = ws[2];
  if (ws[1] != Cin) {
    throw ShapeError("conv1d: input channel axis (" + std::to_string(Cin) +
                     ") does not match weight channel axis (" + std::to_string(ws[1]) + ")");
  }
  if (L + 2 * padding < k) {
    throw ShapeError("conv1d: kernel " + std::to_string(k) + " does not fit padded input " + shape_str(xs));
  }
  if (bias.defined() && (bias.dim() != 1 || bias.shape()[0] != Cout)) {
    throw ShapeError("conv1d: bias must be [Cout]=" + std::to_string(Cout) +
                     ", got " + shape_str(bias.shape()));
  }
  const int OL = L + 2 * padding - k + 1;

  const auto& xv = input.data();
  const auto& wv = weight.data();
  std::vector<double> out(static_cast<std::size_t>(B) * Cout * OL, 0.0);
  if (bias.defined()) {
    const auto& bv = bias.data();
    for (int b = 0; b < B; ++b)
      for (int co = 0; co < Cout; ++co) {
        double* o = out.data() + (static_cast<int64_t>(b) * Cout + co) * OL;
        std::fill(o, o + OL, bv[static_cast<std::size_t>(co)]);
      }
  }
  for (int b = 0; b < B; ++b) {
    for (int co = 0; co < Cout; ++co) {
      double* o = out.data() + (static_cast<int64_t>(b) * Cout + co) * OL;
      for (int ci = 0; ci < Cin; ++ci) {
        const double* xrow = xv.data() + (static_cast<int64_t>(b) * Cin + ci) * L;
        const double* wrow = wv.data() + (static_cast<int64_t>(co) * Cin + ci) * k;
        for (int kk = 0; kk < k; ++kk) {
          const double wval = wrow[kk];
          const int lo = std::max(0, padding - kk);
          const int hi = std::min(OL, L + padding - kk);
          for (int ox = lo; ox < hi; ++ox) o[ox] += wval * xrow[ox - padding + kk];
        }
      }
    }
  }

  const bool has_bias = bias.defined();
  auto bw = [B, Cin, L, Cout, k, OL, padding, has_bias](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nw = *self.inputs[1];
    const bool gx = nx.requires_grad;
    const bool gw = nw.requires_grad;
    const bool gb = has_bias && self.inputs[2]->requires_grad;
    auto* dx = gx ? nx.grad_buffer().data() : nullptr;
    auto* dw = gw ? nw.grad_buffer().data() : nullptr;
    auto* db = gb ? self.inputs[2]->grad_buffer().data() : nullptr;
    const double* xv = nx.value.data();
    const double* wv = nw.value.data();
    for (int b = 0; b < B; ++b) {
      for (int co = 0; co < Cout; ++co) {
        const double* g = self.grad.data() + (static_cast<int64_t>(b) * Cout + co) * OL;
        if (gb) {
          double s = 0.0;
          for (int i = 0; i < OL; ++i) s += g[i];
          db[co] += s;
        }
        for (int ci = 0; ci < Cin; ++ci) {
          const double* xrow = xv + (static_cast<int64_t>(b) * Cin + ci) * L;
          const double* wrow = wv + (static_cast<int64_t>(co) * Cin + ci) * k;
          double* dxrow = gx ? dx + (static_cast<int64_t>(b) * Cin + ci) * L : nullptr;
          double* dwrow = gw ? dw + (static_cast<int64_t>(co) * Cin + ci) * k : nullptr;
          for (int kk = 0; kk < k; ++kk) {
            const double wval = wrow[kk];
            double wacc = 0.0;
            const int lo = std::max(0, padding - kk);
            const int hi = std::min(OL, L + padding - kk);
            for (int ox = lo; ox < hi; ++ox) {
              const int ix = ox - padding + kk;
              if (gx) dxrow[ix] += wval * g[ox];
              wacc += xrow[ix] * g[ox];
            }
            if (gw) dwrow[kk] += wacc;
          }
        }
      }
    }
  };

  Shape out_shape{B, Cout, OL};
  std::vector<Tensor> ins{input, weight};
  if (has_bias) ins.push_back(bias);
  return make_op("conv1d", std::move(out_shape), std::move(out), std::move(ins), std::move(bw));
}

Tensor conv1d_same(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  check_defined(weight, "conv1d_same");
  const int k = weight.shape()[2];
  if (k % 2 == 0) {
    throw ConfigError("conv1d_same: kernel size " + std::to_string(k) +
                      " must be odd for same-length mode");
  }
  return conv1d(input, weight, bias, k / 2);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.dim() != 2 || b.dim() != 2) {
    throw ShapeError("matmul: expects 2-D operands, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const int m = a.shape()[0], k = a.shape()[1];
  const int k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul: inner axes disagree, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    double* orow = out.data() + static_cast<int64_t>(i) * n;
    const double* arow = av.data() + static_cast<int64_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double aval = arow[kk];
      if (aval == 0.0) continue;
      const double* brow = bv.data() + static_cast<int64_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += aval * brow[j];
    }
  }
  auto bw = [m, k, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    if (na.requires_grad) {
      double* da = na.grad_buffer().data();
      for (int i = 0; i < m; ++i) {
        const double* grow = self.grad.data() + static_cast<int64_t>(i) * n;
        double* darow = da + static_cast<int64_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
          const double* brow = nb.value.data() + static_cast<int64_t>(kk) * n;
          double s = 0.0;
          for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
          darow[kk] += s;
        }
      }
    }
    if (nb.requires_grad) {
      double* dbv = nb.grad_buffer().data();
      for (int i = 0; i < m; ++i) {
        const double* grow = self.grad.data() + static_cast<int64_t>(i) * n;
        const double* arow = na.value.data() + static_cast<int64_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
          const double aval = arow[kk];
          if (aval == 0.0) continue;
          double* dbrow = dbv + static_cast<int64_t>(kk) * n;
          for (int j = 0; j < n; ++j) dbrow[j] += aval * grow[j];
        }
      }
    }
  };
  return make_op("matmul", Shape{m, n}, std::move(out), {a, b}, std::move(bw));
}

Tensor transpose(const Tensor& x) {
  check_defined(x, "transpose");
  if (x.dim() != 2) throw ShapeError("transpose: expects a 2-D tensor, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

Tensor permute(const Tensor& x, const std::vector<int>& order) {
  check_defined(x, "permute");
  const Shape& s = x.shape();
  const std::size_t rank = s.size();
  if (order.size() != rank) {
    throw ShapeError("permute: order length " + std::to_string(order.size()) +
                     " does not match rank " + std::to_string(rank));
  }
  std::vector<bool> used(rank, false);
  for (int ax : order) {
    if (ax < 0 || ax >= static_cast<int>(rank) || used[static_cast<std::size_t>(ax)]) {
      throw ShapeError("permute: invalid axis order");
    }
    used[static_cast<std::size_t>(ax)] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = s[static_cast<std::size_t>(order[i])];

  const auto in_strides = strides_of(s);
  const auto out_strides = strides_of(out_shape);
  // walk input in order; scatter to permuted offsets
  std::vector<int64_t> scatter(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    scatter[static_cast<std::size_t>(order[i])] = out_strides[i];
  }
  const auto& xv = x.data();
  const int64_t n = numel(s);
  std::vector<double> out(static_cast<std::size_t>(n));
  std::vector<int> idx(rank, 0);
  int64_t off = 0;
  for (int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(off)] = xv[static_cast<std::size_t>(i)];
    for (int ax = static_cast<int>(rank) - 1; ax >= 0; --ax) {
      auto u = static_cast<std::size_t>(ax);
      if (++idx[u] < s[u]) {
        off += scatter[u];
        break;
      }
      off -= scatter[u] * (s[u] - 1);
      idx[u] = 0;
    }
  }
  auto bw = [s, scatter, rank](Node& self) {
    Node& in = *self.inputs[0];
    auto& dg = in.grad_buffer();
    const int64_t count = numel(s);
    std::vector<int> it(rank, 0);
    int64_t off2 = 0;
    for (int64_t i = 0; i < count; ++i) {
      dg[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(off2)];
      for (int ax = static_cast<int>(rank) - 1; ax >= 0; --ax) {
        auto u = static_cast<std::size_t>(ax);
        if (++it[u] < s[u]) {
          off2 += scatter[u];
          break;
        }
        off2 -= scatter[u] * (s[u] - 1);
        it[u] = 0;
      }
    }
  };
  return make_op("permute", std::move(out_shape), std::move(out), {x}, std::move(bw));
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_defined(x, "reshape");
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto bw = [](Node& self) {
    Node& in = *self.inputs[0];
    auto& dg = in.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) dg[i] += self.grad[i];
  };
  return make_op("reshape", std::move(shape), x.data(), {x}, std::move(bw));
}

Tensor softmax(const Tensor& x, int axis) {
  check_defined(x, "softmax");
  check_axis(axis, x.dim(), "softmax");
  const Shape& s = x.shape();
  const AxisView v = axis_view(s, axis);
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  for (int64_t o = 0; o < v.outer; ++o) {
    for (int64_t i = 0; i < v.inner; ++i) {
      const int64_t base = (o * v.n) * v.inner + i;
      double mx = xv[static_cast<std::size_t>(base)];
      for (int64_t j = 1; j < v.n; ++j) {
        mx = std::max(mx, xv[static_cast<std::size_t>(base + j * v.inner)]);
      }
      double z = 0.0;
      for (int64_t j = 0; j < v.n; ++j) {
        const double e = std::exp(xv[static_cast<std::size_t>(base + j * v.inner)] - mx);
        out[static_cast<std::size_t>(base + j * v.inner)] = e;
        z += e;
      }
      for (int64_t j = 0; j < v.n; ++j) out[static_cast<std::size_t>(base + j * v.inner)] /= z;
    }
  }
  auto bw = [v](Node& self) {
    Node& in = *self.inputs[0];
    auto& dg = in.grad_buffer();
    for (int64_t o = 0; o < v.outer; ++o) {
      for (int64_t i = 0; i < v.inner; ++i) {
        const int64_t base = (o * v.n) * v.inner + i;
        double dot = 0.0;
        for (int64_t j = 0; j < v.n; ++j) {
          const auto p = static_cast<std::size_t>(base + j * v.inner);
          dot += self.grad[p] * self.value[p];
        }
        for (int64_t j = 0; j < v.n; ++j) {
          const auto p = static_cast<std::size_t>(base + j * v.inner);
          dg[p] += self.value[p] * (self.grad[p] - dot);
        }
      }
    }
  };
  return make_op("softmax", s, std::move(out), {x}, std::move(bw));
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
  return unary_op(
      "leaky_relu", x,
      [negative_slope](double v) { return v >= 0.0 ? v : negative_slope * v; },
      [negative_slope](double v, double) { return v >= 0.0 ? 1.0 : negative_slope; });
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }

Tensor sqrt(const Tensor& x) {
  const auto& xv = x.data();
  for (double v : xv) {
    if (v < 0.0) throw NumericError("sqrt: negative input");
  }
  // subgradient 0 at the origin keeps masked zero-distance terms finite
  return unary_op(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor max_pool2d(const Tensor& x, int kernel, int stride) {
  check_defined(x, "max_pool2d");
  if (x.dim() != 4) throw ShapeError("max_pool2d: input must be [B,C,H,W], got " + shape_str(x.shape()));
  if (kernel < 1 || stride < 1) throw ConfigError("max_pool2d: kernel and stride must be >= 1");
  const Shape& s = x.shape();
  const int B = s[0], C = s[1], H = s[2], W = s[3];
  if (H < kernel || W < kernel) {
    throw ShapeError("max_pool2d: kernel " + std::to_string(kernel) +
                     " does not fit input " + shape_str(s));
  }
  const int OH = (H - kernel) / stride + 1;
  const int OW = (W - kernel) / stride + 1;
  const auto& xv = x.data();
  std::vector<double> out(static_cast<std::size_t>(B) * C * OH * OW);
  auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
  int64_t p = 0;
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const double* plane = xv.data() + (static_cast<int64_t>(b) * C + c) * H * W;
      const int64_t plane_off = (static_cast<int64_t>(b) * C + c) * H * W;
      for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox, ++p) {
          double best = -std::numeric_limits<double>::infinity();
          int64_t best_idx = -1;
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = oy * stride + ky;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = ox * stride + kx;
              const double val = plane[static_cast<int64_t>(iy) * W + ix];
              if (val > best) {
                best = val;
                best_idx = plane_off + static_cast<int64_t>(iy) * W + ix;
              }
            }
          }
          out[static_cast<std::size_t>(p)] = best;
          (*argmax)[static_cast<std::size_t>(p)] = best_idx;
        }
      }
    }
  }
  auto bw = [argmax](Node& self) {
    Node& in = *self.inputs[0];
    auto& dg = in.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      dg[static_cast<std::size_t>((*argmax)[i])] += self.grad[i];
    }
  };
  return make_op("max_pool2d", Shape{B, C, OH, OW}, std::move(out), {x}, std::move(bw));
}

Tensor reduce_mean(const Tensor& x, int axis, bool keepdim) {
  check_defined(x, "reduce_mean");
  check_axis(axis, x.dim(), "reduce_mean");
  const Shape& s = x.shape();
  const AxisView v = axis_view(s, axis);
  const auto& xv = x.data();
  std::vector<double> out(static_cast<std::size_t>(v.outer * v.inner), 0.0);
  for (int64_t o = 0; o < v.outer; ++o) {
    for (int64_t j = 0; j < v.n; ++j) {
      const int64_t base = (o * v.n + j) * v.inner;
      double* orow = out.data() + o * v.inner;
      for (int64_t i = 0; i < v.inner; ++i) orow[i] += xv[static_cast<std::size_t>(base + i)];
    }
  }
  const double inv = 1.0 / static_cast<double>(v.n);
  for (double& val : out) val *= inv;
  auto bw = [v, inv](Node& self) {
    Node& in = *self.inputs[0];
    auto& dg = in.grad_buffer();
    for (int64_t o = 0; o < v.outer; ++o) {
      for (int64_t j = 0; j < v.n; ++j) {
        const int64_t base = (o * v.n + j) * v.inner;
        const double* grow = self.grad.data() + o * v.inner;
        for (int64_t i = 0; i < v.inner; ++i) dg[static_cast<std::size_t>(base + i)] += grow[i] * inv;
      }
    }
  };
  return make_op("reduce_mean", reduced_shape(s, axis, keepdim), std::move(out), {x}, std::move(bw));
}

Tensor reduce_max(const Tensor& x, int axis, bool keepdim) {
  check_defined(x, "reduce_max");
  check_axis(axis, x.dim(), "reduce_max");
  const Shape& s = x.shape();
  const AxisView v = axis_view(s, axis);
  const auto& xv = x.data();
  std::vector<double> out(static_cast<std::size_t>(v.outer * v.inner));
  auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
  for (int64_t o = 0; o < v.outer; ++o) {
    for (int64_t i = 0; i < v.inner; ++i) {
      double best = xv[static_cast<std::size_t>((o * v.n) * v.inner + i)];
      int64_t best_j = 0;
      for (int64_t j = 1; j < v.n; ++j) {
        const double val = xv[static_cast<std::size_t>((o * v.n + j) * v.inner + i)];
        if (val > best) {
          best = val;
          best_j = j;
        }
      }
      out[static_cast<std::size_t>(o * v.inner + i)] = best;
      (*argmax)[static_cast<std::size_t>(o * v.inner + i)] = (o * v.n + best_j) * v.inner + i;
    }
  }
  auto bw = [argmax](Node& self) {
    Node& in = *self.inputs[0];
    auto& dg = in.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      dg[static_cast<std::size_t>((*argmax)[i])] += self.grad[i];
    }
  };
  return make_op("reduce_max", reduced_shape(s, axis, keepdim), std::move(out), {x}, std::move(bw));
}

Tensor reduce_sum(const Tensor& x, int axis, bool keepdim) {
  check_defined(x, "reduce_sum");
  check_axis(axis, x.dim(), "reduce_sum");
  const Shape& s = x.shape();
  const AxisView v = axis_view(s, axis);
  const auto& xv = x.data();
  std::vector<double> out(static_cast<std::size_t>(v.outer * v.inner), 0.0);
  for (int64_t o = 0; o < v.outer; ++o) {
    for (int64_t j = 0; j < v.n; ++j) {
      const int64_t base = (o * v.n + j) * v.inner;
      double* orow = out.data() + o * v.inner;
      for (int64_t i = 0; i < v.inner; ++i) orow[i] += xv[static_cast<std::size_t>(base + i)];
    }
  }
  auto bw = [v](Node& self) {
    Node& in = *self.inputs[0];
    auto& dg = in.grad_buffer();
    for (int64_t o = 0; o < v.outer; ++o) {
      for (int64_t j = 0; j < v.n; ++j) {
        const int64_t base = (o * v.n + j) * v.inner;
        const double* grow = self.grad.data() + o * v.inner;
        for (int64_t i = 0; i < v.inner; ++i) dg[static_cast<std::size_t>(base + i)] += grow[i];
      }
    }
  };
  return make_op("reduce_sum", reduced_shape(s, axis, keepdim), std::move(out), {x}, std::move(bw));
}

Tensor sum(const Tensor& x) {
  check_defined(x, "sum");
  const auto& xv = x.data();
  double s = 0.0;
  for (double v : xv) s += v;
  auto bw = [](Node& self) {
    Node& in = *self.inputs[0];
    auto& dg = in.grad_buffer();
    const double g = self.grad[0];
    for (double& d : dg) d += g;
  };
  return make_op("sum", Shape{1}, std::vector<double>{s}, {x}, std::move(bw));
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat: no operands");
  for (const auto& t : parts) check_defined(t, "concat");
  const Shape& first = parts[0].shape();
  check_axis(axis, static_cast<int>(first.size()), "concat");
  int total = 0;
  for (const auto& t : parts) {
    const Shape& s = t.shape();
    if (s.size() != first.size()) {
      throw ShapeError("concat: rank mismatch, " + shape_str(first) + " vs " + shape_str(s));
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != axis && s[i] != first[i]) {
        throw ShapeError("concat: ragged operands on axis " + std::to_string(i) + ": " +
                         shape_str(first) + " vs " + shape_str(s));
      }
    }
    total += s[static_cast<std::size_t>(axis)];
  }
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = total;
  const AxisView ov = axis_view(out_shape, axis);

  std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
  std::vector<int64_t> lens;
  lens.reserve(parts.size());
  int64_t off = 0;
  for (const auto& t : parts) {
    const int64_t n = t.shape()[static_cast<std::size_t>(axis)];
    lens.push_back(n);
    const auto& tv = t.data();
    for (int64_t o = 0; o < ov.outer; ++o) {
      const double* src = tv.data() + o * n * ov.inner;
      double* dst = out.data() + (o * ov.n + off) * ov.inner;
      std::copy(src, src + n * ov.inner, dst);
    }
    off += n;
  }
  auto bw = [ov, lens](Node& self) {
    int64_t start = 0;
    for (std::size_t p = 0; p < lens.size(); ++p) {
      Node& in = *self.inputs[p];
      const int64_t n = lens[p];
      if (in.requires_grad) {
        auto& dg = in.grad_buffer();
        for (int64_t o = 0; o < ov.outer; ++o) {
          const double* src = self.grad.data() + (o * ov.n + start) * ov.inner;
          double* dst = dg.data() + o * n * ov.inner;
          for (int64_t i = 0; i < n * ov.inner; ++i) dst[i] += src[i];
        }
      }
      start += n;
    }
  };
  return make_op("concat", std::move(out_shape), std::move(out), parts, std::move(bw));
}

Tensor slice(const Tensor& x, int axis, int start, int length) {
  check_defined(x, "slice");
  check_axis(axis, x.dim(), "slice");
  const Shape& s = x.shape();
  const int n = s[static_cast<std::size_t>(axis)];
  if (length <= 0 || start < 0 || start + length > n) {
    throw ShapeError("slice: window [" + std::to_string(start) + "," +
                     std::to_string(start + length) + ") out of range on axis " +
                     std::to_string(axis) + " of " + shape_str(s));
  }
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(axis)] = length;
  const AxisView v = axis_view(s, axis);
  const auto& xv = x.data();
  std::vector<double> out(static_cast<std::size_t>(v.outer * length * v.inner));
  for (int64_t o = 0; o < v.outer; ++o) {
    const double* src = xv.data() + (o * v.n + start) * v.inner;
    double* dst = out.data() + o * length * v.inner;
    std::copy(src, src + static_cast<int64_t>(length) * v.inner, dst);
  }
  auto bw = [v, start, length](Node& self) {
    Node& in = *self.inputs[0];
    auto& dg = in.grad_buffer();
    for (int64_t o = 0; o < v.outer; ++o) {
      const double* src = self.grad.data() + o * length * v.inner;
      double* dst = dg.data() + (o * v.n + start) * v.inner;
      for (int64_t i = 0; i < static_cast<int64_t>(length) * v.inner; ++i) dst[i] += src[i];
    }
  };
  return make_op("slice", std::move(out_shape), std::move(out), {x}, std::move(bw));
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary_op(
      "add_scalar", x, [c](double v) { return v + c; },
      [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary_op(
      "mul_scalar", x, [c](double v) { return v * c; },
      [c](double, double) { return c; });
}

}  // namespace msaff
