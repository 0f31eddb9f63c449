#include "flanet/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <complex>

#include "flanet/fft.hpp"

namespace flanet::ops {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
void accumulate(Node<T>& input, const Tensor<T>& delta) {
  if (!input.requires_grad) return;
  Tensor<T>& g = input.grad_buffer();
  for (int64_t i = 0; i < g.numel(); ++i) g[i] += delta[i];
}

template <typename Fn>
auto unary_map(const auto& src, Fn fn) {
  auto out = src;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = fn(src[i]);
  return out;
}

struct Dims4 {
  int64_t n, c, h, w;
};

Dims4 dims4(const Shape& s, const char* what) {
  require_rank(s, 4, what);
  return {s[0], s[1], s[2], s[3]};
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    accumulate(*self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) {
      Tensor<T>& g = self.inputs[1]->grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>& lhs = *self.inputs[0];
    Node<T>& rhs = *self.inputs[1];
    if (lhs.requires_grad) {
      Tensor<T>& g = lhs.grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * rhs.value[i];
    }
    if (rhs.requires_grad) {
      Tensor<T>& g = rhs.grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * lhs.value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = unary_map(a.value(), [factor](T v) { return v * factor; });
  return make_result<T>(std::move(out), {a}, [factor](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T offset) {
  Tensor<T> out = unary_map(a.value(), [offset](T v) { return v + offset; });
  return make_result<T>(std::move(out), {a},
                        [](Node<T>& self) { accumulate(*self.inputs[0], self.grad); });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = unary_map(a.value(), [](T v) { return v > T(0) ? v : T(0); });
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (self.value[i] > T(0)) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = unary_map(a.value(), [](T v) { return stable_sigmoid(v); });
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) {
      const T s = self.value[i];
      g[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total{};
  for (T v : a.value().values()) total += v;
  return make_result<T>(Tensor<T>({1}, total), {a}, [](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  if (a.value().numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.value().numel()));
}

// ------------------------------------------------------------------ reshaping

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Dims4 d0 = dims4(parts[0].shape(), "concat_channels");
  int64_t total_c = 0;
  for (const auto& p : parts) {
    const Dims4 d = dims4(p.shape(), "concat_channels");
    if (d.n != d0.n || d.h != d0.h || d.w != d0.w) {
      throw ShapeError("concat_channels: incompatible " + shape_str(p.shape()) + " vs " +
                       shape_str(parts[0].shape()));
    }
    total_c += d.c;
  }
  const int64_t plane = d0.h * d0.w;
  Tensor<T> out({d0.n, total_c, d0.h, d0.w});
  int64_t offset = 0;
  std::vector<int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const int64_t c = p.shape()[1];
    for (int64_t n = 0; n < d0.n; ++n) {
      std::copy_n(p.value().data() + n * c * plane, c * plane,
                  out.data() + (n * total_c + offset) * plane);
    }
    offset += c;
  }
  return make_result<T>(std::move(out), parts, [offsets, total_c, plane](Node<T>& self) {
    const int64_t batch = self.value.shape()[0];
    for (size_t k = 0; k < self.inputs.size(); ++k) {
      Node<T>& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      Tensor<T>& g = in.grad_buffer();
      const int64_t c = in.value.shape()[1];
      for (int64_t n = 0; n < batch; ++n) {
        const T* src = self.grad.data() + (n * total_c + offsets[k]) * plane;
        T* dst = g.data() + n * c * plane;
        for (int64_t i = 0; i < c * plane; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& a, int64_t begin, int64_t count) {
  const Dims4 d = dims4(a.shape(), "slice_channels");
  if (begin < 0 || count <= 0 || begin + count > d.c) {
    throw ShapeError("slice_channels: range out of bounds for " + shape_str(a.shape()));
  }
  const int64_t plane = d.h * d.w;
  Tensor<T> out({d.n, count, d.h, d.w});
  for (int64_t n = 0; n < d.n; ++n) {
    std::copy_n(a.value().data() + (n * d.c + begin) * plane, count * plane,
                out.data() + n * count * plane);
  }
  return make_result<T>(std::move(out), {a}, [d, begin, count, plane](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (int64_t n = 0; n < d.n; ++n) {
      const T* src = self.grad.data() + n * count * plane;
      T* dst = g.data() + (n * d.c + begin) * plane;
      for (int64_t i = 0; i < count * plane; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var<T> select_batch(const Var<T>& a, int64_t index) {
  const Dims4 d = dims4(a.shape(), "select_batch");
  if (index < 0 || index >= d.n) throw ShapeError("select_batch: index out of range");
  const int64_t item = d.c * d.h * d.w;
  Tensor<T> out({1, d.c, d.h, d.w});
  std::copy_n(a.value().data() + index * item, item, out.data());
  return make_result<T>(std::move(out), {a}, [index, item](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < item; ++i) g[index * item + i] += self.grad[i];
  });
}

// ---------------------------------------------------------------- convolution

namespace {

struct ConvGeometry {
  int64_t cin, h, w, k, stride, pad, out_h, out_w;
  int64_t rows() const { return cin * k * k; }
  int64_t cols() const { return out_h * out_w; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  for (int64_t c = 0; c < g.cin; ++c) {
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
        for (int64_t oy = 0; oy < g.out_h; ++oy) {
          const int64_t iy = oy * g.stride - g.pad + ky;
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.out_w, T(0));
            continue;
          }
          const T* src = image + (c * g.h + iy) * g.w;
          for (int64_t ox = 0; ox < g.out_w; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* image) {
  for (int64_t c = 0; c < g.cin; ++c) {
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
        for (int64_t oy = 0; oy < g.out_h; ++oy) {
          const int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + oy * g.out_w;
          T* dst = image + (c * g.h + iy) * g.w;
          for (int64_t ox = 0; ox < g.out_w; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
              int padding) {
  const Dims4 d = dims4(x.shape(), "conv2d input");
  const Dims4 wd = dims4(weight.shape(), "conv2d weight");
  if (wd.c != d.c || wd.h != wd.w) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  if (bias && (bias.shape().size() != 1 || bias.shape()[0] != wd.n)) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: invalid stride/padding");
  ConvGeometry g{d.c, d.h, d.w, wd.h, stride, padding, 0, 0};
  g.out_h = (d.h + 2 * padding - g.k) / stride + 1;
  g.out_w = (d.w + 2 * padding - g.k) / stride + 1;
  if (g.out_h <= 0 || g.out_w <= 0) throw ShapeError("conv2d: kernel larger than padded input");
  const int64_t cout = wd.n;

  // Column buffers are kept for the weight gradient.
  const bool keep_cols = !g.pointwise();
  std::vector<T> cols(keep_cols ? static_cast<size_t>(d.n * g.rows() * g.cols()) : 0);
  Tensor<T> out({d.n, cout, g.out_h, g.out_w});
  ConstMatMap<T> wmat(weight.value().data(), cout, g.rows());
  for (int64_t n = 0; n < d.n; ++n) {
    const T* image = x.value().data() + n * d.c * d.h * d.w;
    const T* col = image;
    if (keep_cols) {
      T* buf = cols.data() + n * g.rows() * g.cols();
      im2col(image, g, buf);
      col = buf;
    }
    MatMap<T> omat(out.data() + n * cout * g.cols(), cout, g.cols());
    omat.noalias() = wmat * ConstMatMap<T>(col, g.rows(), g.cols());
    if (bias) {
      for (int64_t o = 0; o < cout; ++o) omat.row(o).array() += bias.value()[o];
    }
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  return make_result<T>(
      std::move(out), inputs,
      [g, cout, batch = d.n, keep_cols, cols = std::move(cols)](Node<T>& self) {
        Node<T>& xin = *self.inputs[0];
        Node<T>& win = *self.inputs[1];
        Node<T>* bin = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        ConstMatMap<T> wmat(win.value.data(), cout, g.rows());
        std::vector<T> dcol(xin.requires_grad ? static_cast<size_t>(g.rows() * g.cols()) : 0);
        for (int64_t n = 0; n < batch; ++n) {
          ConstMatMap<T> dout(self.grad.data() + n * cout * g.cols(), cout, g.cols());
          const T* col = keep_cols ? cols.data() + n * g.rows() * g.cols()
                                   : xin.value.data() + n * g.rows() * g.cols();
          if (win.requires_grad) {
            MatMap<T> dw(win.grad_buffer().data(), cout, g.rows());
            dw.noalias() += dout * ConstMatMap<T>(col, g.rows(), g.cols()).transpose();
          }
          if (bin && bin->requires_grad) {
            Tensor<T>& db = bin->grad_buffer();
            for (int64_t o = 0; o < cout; ++o) db[o] += dout.row(o).sum();
          }
          if (xin.requires_grad) {
            T* dimage = xin.grad_buffer().data() + n * g.cin * g.h * g.w;
            if (keep_cols) {
              MatMap<T> dc(dcol.data(), g.rows(), g.cols());
              dc.noalias() = wmat.transpose() * dout;
              col2im(dcol.data(), g, dimage);
            } else {
              MatMap<T> dx(dimage, g.rows(), g.cols());
              dx.noalias() += wmat.transpose() * dout;
            }
          }
        }
      });
}

// ------------------------------------------------------------- normalization

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups, T eps) {
  const Dims4 d = dims4(x.shape(), "group_norm");
  if (groups <= 0 || d.c % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(d.c) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  }
  require_same_shape(gamma.shape(), Shape{d.c}, "group_norm gamma");
  require_same_shape(beta.shape(), Shape{d.c}, "group_norm beta");
  const int64_t cg = d.c / groups;
  const int64_t plane = d.h * d.w;
  const int64_t m = cg * plane;

  Tensor<T> xhat(x.shape());
  std::vector<T> rstd(static_cast<size_t>(d.n * groups));
  Tensor<T> out(x.shape());
  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t gi = 0; gi < groups; ++gi) {
      const int64_t base = (n * d.c + gi * cg) * plane;
      const T* src = x.value().data() + base;
      T mu{};
      for (int64_t i = 0; i < m; ++i) mu += src[i];
      mu /= static_cast<T>(m);
      T var{};
      for (int64_t i = 0; i < m; ++i) var += (src[i] - mu) * (src[i] - mu);
      var /= static_cast<T>(m);
      const T r = T(1) / std::sqrt(var + eps);
      rstd[static_cast<size_t>(n * groups + gi)] = r;
      for (int64_t i = 0; i < m; ++i) {
        const int64_t c = gi * cg + i / plane;
        const T xh = (src[i] - mu) * r;
        xhat[base + i] = xh;
        out[base + i] = xh * gamma.value()[c] + beta.value()[c];
      }
    }
  }
  return make_result<T>(
      std::move(out), {x, gamma, beta},
      [d, groups, cg, plane, m, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
        Node<T>& xin = *self.inputs[0];
        Node<T>& gin = *self.inputs[1];
        Node<T>& bin = *self.inputs[2];
        const Tensor<T>& dy = self.grad;
        if (gin.requires_grad || bin.requires_grad) {
          Tensor<T>& dg = gin.grad_buffer();
          Tensor<T>& db = bin.grad_buffer();
          for (int64_t n = 0; n < d.n; ++n) {
            for (int64_t c = 0; c < d.c; ++c) {
              const int64_t base = (n * d.c + c) * plane;
              T sg{}, sb{};
              for (int64_t i = 0; i < plane; ++i) {
                sg += dy[base + i] * xhat[base + i];
                sb += dy[base + i];
              }
              dg[c] += sg;
              db[c] += sb;
            }
          }
        }
        if (!xin.requires_grad) return;
        Tensor<T>& dx = xin.grad_buffer();
        std::vector<T> dxh(static_cast<size_t>(m));
        for (int64_t n = 0; n < d.n; ++n) {
          for (int64_t gi = 0; gi < groups; ++gi) {
            const int64_t base = (n * d.c + gi * cg) * plane;
            T s1{}, s2{};
            for (int64_t i = 0; i < m; ++i) {
              const int64_t c = gi * cg + i / plane;
              dxh[i] = dy[base + i] * gin.value[c];
              s1 += dxh[i];
              s2 += dxh[i] * xhat[base + i];
            }
            const T r = rstd[static_cast<size_t>(n * groups + gi)];
            const T inv_m = T(1) / static_cast<T>(m);
            for (int64_t i = 0; i < m; ++i) {
              dx[base + i] += r * (dxh[i] - inv_m * s1 - xhat[base + i] * inv_m * s2);
            }
          }
        }
      });
}

// ---------------------------------------------------------------- resampling

namespace {

struct Tap {
  int64_t i0, i1;
  double frac;
};

std::vector<Tap> bilinear_taps(int64_t in, int64_t out) {
  std::vector<Tap> taps(static_cast<size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int64_t i0 = static_cast<int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int64_t i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int64_t out_h, int64_t out_w) {
  const Dims4 d = dims4(x.shape(), "resize_bilinear");
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize_bilinear: empty output");
  auto ty = bilinear_taps(d.h, out_h);
  auto tx = bilinear_taps(d.w, out_w);
  Tensor<T> out({d.n, d.c, out_h, out_w});
  for (int64_t p = 0; p < d.n * d.c; ++p) {
    const T* src = x.value().data() + p * d.h * d.w;
    T* dst = out.data() + p * out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const Tap& a = ty[static_cast<size_t>(oy)];
      const T fy = static_cast<T>(a.frac);
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const Tap& b = tx[static_cast<size_t>(ox)];
        const T fx = static_cast<T>(b.frac);
        const T top = src[a.i0 * d.w + b.i0] * (T(1) - fx) + src[a.i0 * d.w + b.i1] * fx;
        const T bot = src[a.i1 * d.w + b.i0] * (T(1) - fx) + src[a.i1 * d.w + b.i1] * fx;
        dst[oy * out_w + ox] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [d, out_h, out_w, ty, tx](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (int64_t p = 0; p < d.n * d.c; ++p) {
      const T* dy = self.grad.data() + p * out_h * out_w;
      T* dx = g.data() + p * d.h * d.w;
      for (int64_t oy = 0; oy < out_h; ++oy) {
        const Tap& a = ty[static_cast<size_t>(oy)];
        const T fy = static_cast<T>(a.frac);
        for (int64_t ox = 0; ox < out_w; ++ox) {
          const Tap& b = tx[static_cast<size_t>(ox)];
          const T fx = static_cast<T>(b.frac);
          const T v = dy[oy * out_w + ox];
          dx[a.i0 * d.w + b.i0] += v * (T(1) - fy) * (T(1) - fx);
          dx[a.i0 * d.w + b.i1] += v * (T(1) - fy) * fx;
          dx[a.i1 * d.w + b.i0] += v * fy * (T(1) - fx);
          dx[a.i1 * d.w + b.i1] += v * fy * fx;
        }
      }
    }
  });
}

template <typename T>
Var<T> upsample2x(const Var<T>& x) {
  const Dims4 d = dims4(x.shape(), "upsample2x");
  return resize_bilinear(x, d.h * 2, d.w * 2);
}

// ------------------------------------------------------------------ spectral

namespace {

// Real C-channel planes -> complex planes, transform, pack to 2C channels.
template <typename T>
Tensor<T> forward_packed(const Tensor<T>& real) {
  const Dims4 d = dims4(real.shape(), "fft2_packed");
  const int64_t plane = d.h * d.w;
  std::vector<std::complex<T>> buf(static_cast<size_t>(d.n * d.c * plane));
  for (int64_t i = 0; i < real.numel(); ++i) buf[static_cast<size_t>(i)] = real[i];
  fft::transform2d(buf.data(), d.n * d.c, d.h, d.w, fft::Direction::kForward);
  Tensor<T> out({d.n, 2 * d.c, d.h, d.w});
  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t c = 0; c < d.c; ++c) {
      const std::complex<T>* src = buf.data() + (n * d.c + c) * plane;
      T* re = out.data() + (n * 2 * d.c + c) * plane;
      T* im = out.data() + (n * 2 * d.c + d.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        re[i] = src[i].real();
        im[i] = src[i].imag();
      }
    }
  }
  return out;
}

// Packed 2C-channel spectrum -> real part of unnormalized inverse transform.
template <typename T>
Tensor<T> inverse_real_unnormalized(const Tensor<T>& packed) {
  const Dims4 d = dims4(packed.shape(), "ifft2_real");
  if (d.c % 2 != 0) throw ShapeError("ifft2_real: odd channel count " + std::to_string(d.c));
  const int64_t c = d.c / 2;
  const int64_t plane = d.h * d.w;
  std::vector<std::complex<T>> buf(static_cast<size_t>(d.n * c * plane));
  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t k = 0; k < c; ++k) {
      const T* re = packed.data() + (n * d.c + k) * plane;
      const T* im = packed.data() + (n * d.c + c + k) * plane;
      std::complex<T>* dst = buf.data() + (n * c + k) * plane;
      for (int64_t i = 0; i < plane; ++i) dst[i] = {re[i], im[i]};
    }
  }
  fft::transform2d(buf.data(), d.n * c, d.h, d.w, fft::Direction::kInverse);
  Tensor<T> out({d.n, c, d.h, d.w});
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = buf[static_cast<size_t>(i)].real();
  return out;
}

}  // namespace

template <typename T>
Var<T> fft2_packed(const Var<T>& x) {
  // Adjoint: grad_x = Re(F^H g), the unnormalized inverse transform of g.
  return make_result<T>(forward_packed(x.value()), {x}, [](Node<T>& self) {
    Tensor<T> back = inverse_real_unnormalized(self.grad);
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += back[i];
  });
}

template <typename T>
Var<T> ifft2_real(const Var<T>& packed) {
  const Dims4 d = dims4(packed.shape(), "ifft2_real");
  const T norm = T(1) / static_cast<T>(d.h * d.w);
  Tensor<T> out = inverse_real_unnormalized(packed.value());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= norm;
  // Adjoint of Re(F^{-1} y) w.r.t. (Re y, Im y) is fft2(g) / (h*w), packed.
  return make_result<T>(std::move(out), {packed}, [norm](Node<T>& self) {
    Tensor<T> back = forward_packed(self.grad);
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += norm * back[i];
  });
}

// --------------------------------------------------------------------- losses

template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  const Var<T> diff = sub(a, b);
  return mean(mul(diff, diff));
}

template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& target) {
  require_same_shape(logits.shape(), target.shape(), "bce_with_logits");
  const int64_t count = target.numel();
  if (count == 0) throw ShapeError("bce_with_logits: empty input");
  T total{};
  for (int64_t i = 0; i < count; ++i) {
    const T x = logits.value()[i];
    total += std::max(x, T(0)) - x * target[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const T inv = T(1) / static_cast<T>(count);
  return make_result<T>(Tensor<T>({1}, total * inv), {logits}, [target, inv](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    Tensor<T>& g = in.grad_buffer();
    const T up = self.grad[0] * inv;
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += up * (stable_sigmoid(in.value[i]) - target[i]);
  });
}

template <typename T>
Var<T> soft_iou(const Var<T>& prob, const Tensor<T>& target, T eps) {
  require_same_shape(prob.shape(), target.shape(), "soft_iou");
  if (prob.shape().empty() || target.numel() == 0) throw ShapeError("soft_iou: empty input");
  const int64_t batch = prob.shape().size() == 4 ? prob.shape()[0] : 1;
  const int64_t item = target.numel() / batch;
  std::vector<T> inter(static_cast<size_t>(batch)), uni(static_cast<size_t>(batch));
  T total{};
  for (int64_t n = 0; n < batch; ++n) {
    T si{}, ss{}, sg{};
    for (int64_t i = n * item; i < (n + 1) * item; ++i) {
      si += prob.value()[i] * target[i];
      ss += prob.value()[i];
      sg += target[i];
    }
    inter[static_cast<size_t>(n)] = si + eps;
    uni[static_cast<size_t>(n)] = ss + sg - si + eps;
    total += T(1) - inter[static_cast<size_t>(n)] / uni[static_cast<size_t>(n)];
  }
  const T inv_b = T(1) / static_cast<T>(batch);
  return make_result<T>(
      Tensor<T>({1}, total * inv_b), {prob},
      [target, inter, uni, batch, item, inv_b](Node<T>& self) {
        Tensor<T>& g = self.inputs[0]->grad_buffer();
        const T up = self.grad[0] * inv_b;
        for (int64_t n = 0; n < batch; ++n) {
          const T I = inter[static_cast<size_t>(n)];
          const T U = uni[static_cast<size_t>(n)];
          // d/dS_i of -(I/U): dI = G_i, dU = 1 - G_i.
          for (int64_t i = n * item; i < (n + 1) * item; ++i) {
            const T gi = target[i];
            g[i] += up * -((gi * U - I * (T(1) - gi)) / (U * U));
          }
        }
      });
}

#define FLANET_INSTANTIATE(T)                                                              \
  template Var<T> add(const Var<T>&, const Var<T>&);                                       \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                       \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                       \
  template Var<T> scale(const Var<T>&, T);                                                 \
  template Var<T> add_scalar(const Var<T>&, T);                                            \
  template Var<T> relu(const Var<T>&);                                                     \
  template Var<T> sigmoid(const Var<T>&);                                                  \
  template Var<T> sum(const Var<T>&);                                                      \
  template Var<T> mean(const Var<T>&);                                                     \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                             \
  template Var<T> slice_channels(const Var<T>&, int64_t, int64_t);                         \
  template Var<T> select_batch(const Var<T>&, int64_t);                                    \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);           \
  template Var<T> group_norm(const Var<T>&, const Var<T>&, const Var<T>&, int, T);         \
  template Var<T> resize_bilinear(const Var<T>&, int64_t, int64_t);                        \
  template Var<T> upsample2x(const Var<T>&);                                               \
  template Var<T> fft2_packed(const Var<T>&);                                              \
  template Var<T> ifft2_real(const Var<T>&);                                               \
  template Var<T> mse(const Var<T>&, const Var<T>&);                                       \
  template Var<T> bce_with_logits(const Var<T>&, const Tensor<T>&);                        \
  template Var<T> soft_iou(const Var<T>&, const Tensor<T>&, T);

FLANET_INSTANTIATE(float)
FLANET_INSTANTIATE(double)

#undef FLANET_INSTANTIATE

}  // namespace flanet::ops
