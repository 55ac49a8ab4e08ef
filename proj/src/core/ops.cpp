#include "adu/core/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "adu/error.hpp"

namespace adu {

namespace {

// Neumaier-compensated sum. Keeps reduction round-off far below the
// finite-difference step so gradient checks measure the gradient, not noise.
double compensated_sum(const double* v, std::size_t n) {
  double s = 0.0, c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = s + v[i];
    c += std::abs(s) >= std::abs(v[i]) ? (s - t) + v[i] : (v[i] - t) + s;
    s = t;
  }
  return s + c;
}

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
  }
}

// df(x, y) returns dy/dx for output y = f(x).
template <class F, class DF>
Tensor unary(const Tensor& a, F f, DF df) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return Tensor::make_result(a.shape(), std::move(out), {a}, [df](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(p.data[i], self.data[i]);
  });
}

// da(x, y, z) and db(x, y, z) are partials of z = f(x, y).
template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  require_same_shape(a, b, name);
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [da, db](const Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * da(pa.data[i], pb.data[i], self.data[i]);
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * db(pa.data[i], pb.data[i], self.data[i]);
    }
  });
}

struct Nchw {
  std::size_t n, c, h, w;
};

Nchw nchw(const Tensor& x, const char* op) {
  require_rank(x, 4, op);
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary(
      a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor pow_scalar(const Tensor& a, double p) {
  return unary(
      a, [p](double x) { return std::pow(x, p); },
      [p](double x, double) {
        if (p == 0.0) return 0.0;
        if (x == 0.0) return p == 1.0 ? 1.0 : 0.0;
        return p * std::pow(x, p - 1.0);
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  const double s = compensated_sum(a.data().data(), a.numel());
  return Tensor::make_result({1}, {s}, {a}, [](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    const double go = self.grad[0];
    for (auto& v : g) v += go;
  });
}

Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {a}, [](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor transpose2d(const Tensor& a) {
  require_rank(a, 2, "transpose2d");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(a.numel());
  MutMap(out.data(), cols, rows) = ConstMap(a.data().data(), rows, cols).transpose();
  return Tensor::make_result({cols, rows}, std::move(out), {a}, [rows, cols](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    MutMap(g.data(), rows, cols) += ConstMap(self.grad.data(), cols, rows).transpose();
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](const Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    ConstMap go(self.grad.data(), m, n);
    if (pa.requires_grad) {
      MutMap(pa.ensure_grad().data(), m, k).noalias() +=
          go * ConstMap(pb.data.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MutMap(pb.ensure_grad().data(), k, n).noalias() +=
          ConstMap(pa.data.data(), m, k).transpose() * go;
    }
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.numel() / len;
  auto in = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = in.data() + r * len;
    double* dst = out.data() + r * len;
    const double mx = *std::max_element(src, src + len);
    for (std::size_t j = 0; j < len; ++j) dst[j] = std::exp(src[j] - mx);
    const double s = compensated_sum(dst, len);
    for (std::size_t j = 0; j < len; ++j) dst[j] /= s;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, len](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * len;
      const double* gy = self.grad.data() + r * len;
      double dot = 0.0;
      for (std::size_t j = 0; j < len; ++j) dot += y[j] * gy[j];
      for (std::size_t j = 0; j < len; ++j) g[r * len + j] += y[j] * (gy[j] - dot);
    }
  });
}

namespace {

struct ConvGeom {
  std::size_t n, c, h, w, o, k, stride, pad, oh, ow;
  std::size_t rows() const { return c * k * k; }
  std::size_t cols() const { return oh * ow; }
};

void im2col(const double* x, const ConvGeom& g, double* col) {
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          double* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeom& g, double* x) {
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const double* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Tensor conv2d_impl(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                   std::size_t stride, std::size_t padding) {
  const auto in = nchw(input, "conv2d");
  require_rank(kernel, 4, "conv2d");
  const std::size_t k = kernel.dim(2);
  if (kernel.dim(3) != k || k % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd extent, got " +
                     shape_str(kernel.shape()));
  }
  if (kernel.dim(1) != in.c) {
    throw ShapeError("conv2d: input has " + std::to_string(in.c) + " channels, kernel expects " +
                     std::to_string(kernel.dim(1)));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (in.h + 2 * padding < k || in.w + 2 * padding < k) {
    throw ShapeError("conv2d: kernel larger than padded input " + shape_str(input.shape()));
  }
  ConvGeom g{in.n, in.c, in.h, in.w, kernel.dim(0), k, stride, padding,
             (in.h + 2 * padding - k) / stride + 1, (in.w + 2 * padding - k) / stride + 1};
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.o)) {
    throw ShapeError("conv2d: bias must have shape [" + std::to_string(g.o) + "]");
  }

  const std::size_t col_size = g.rows() * g.cols();
  auto cols = std::make_shared<std::vector<double>>(g.n * col_size);
  std::vector<double> out(g.n * g.o * g.cols());
  ConstMap wmat(kernel.data().data(), g.o, g.rows());
  for (std::size_t n = 0; n < g.n; ++n) {
    double* col = cols->data() + n * col_size;
    im2col(input.data().data() + n * in.c * in.h * in.w, g, col);
    MutMap y(out.data() + n * g.o * g.cols(), g.o, g.cols());
    y.noalias() = wmat * ConstMap(col, g.rows(), g.cols());
    if (bias) {
      for (std::size_t o = 0; o < g.o; ++o) y.row(o).array() += bias->data()[o];
    }
  }

  std::vector<Tensor> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  return Tensor::make_result(
      {g.n, g.o, g.oh, g.ow}, std::move(out), std::move(inputs), [g, cols](const Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        const std::size_t col_size = g.rows() * g.cols();
        std::vector<double> dcol(px.requires_grad ? col_size : 0);
        ConstMap wmat(pw.data.data(), g.o, g.rows());
        for (std::size_t n = 0; n < g.n; ++n) {
          ConstMap gy(self.grad.data() + n * g.o * g.cols(), g.o, g.cols());
          if (pw.requires_grad) {
            MutMap(pw.ensure_grad().data(), g.o, g.rows()).noalias() +=
                gy * ConstMap(cols->data() + n * col_size, g.rows(), g.cols()).transpose();
          }
          if (pb && pb->requires_grad) {
            auto& gb = pb->ensure_grad();
            for (std::size_t o = 0; o < g.o; ++o) gb[o] += gy.row(o).sum();
          }
          if (px.requires_grad) {
            MutMap(dcol.data(), g.rows(), g.cols()).noalias() = wmat.transpose() * gy;
            col2im_add(dcol.data(), g, px.ensure_grad().data() + n * g.c * g.h * g.w);
          }
        }
      });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  return conv2d_impl(input, kernel, nullptr, stride, padding);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  return conv2d_impl(input, kernel, &bias, stride, padding);
}

Tensor pool_avg2(const Tensor& x) {
  const auto s = nchw(x, "pool_avg2");
  if (s.h % 2 || s.w % 2) {
    throw ShapeError("pool_avg2: spatial extents must be even, got " + shape_str(x.shape()));
  }
  const std::size_t oh = s.h / 2, ow = s.w / 2, planes = s.n * s.c;
  auto in = x.data();
  std::vector<double> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * s.h * s.w;
    double* dst = out.data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const double* r0 = src + (2 * y) * s.w + 2 * xx;
        const double* r1 = r0 + s.w;
        dst[y * ow + xx] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
    }
  }
  return Tensor::make_result({s.n, s.c, oh, ow}, std::move(out), {x},
                             [s, oh, ow, planes](const Node& self) {
                               Node& p = *self.parents[0];
                               if (!p.requires_grad) return;
                               auto& g = p.ensure_grad();
                               for (std::size_t pl = 0; pl < planes; ++pl) {
                                 for (std::size_t y = 0; y < s.h; ++y) {
                                   for (std::size_t xx = 0; xx < s.w; ++xx) {
                                     g[(pl * s.h + y) * s.w + xx] +=
                                         0.25 * self.grad[(pl * oh + y / 2) * ow + xx / 2];
                                   }
                                 }
                               }
                             });
}

Tensor upsample_nearest2(const Tensor& x) {
  const auto s = nchw(x, "upsample_nearest2");
  const std::size_t oh = s.h * 2, ow = s.w * 2, planes = s.n * s.c;
  auto in = x.data();
  std::vector<double> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        out[(p * oh + y) * ow + xx] = in[(p * s.h + y / 2) * s.w + xx / 2];
      }
    }
  }
  return Tensor::make_result({s.n, s.c, oh, ow}, std::move(out), {x},
                             [s, oh, ow, planes](const Node& self) {
                               Node& p = *self.parents[0];
                               if (!p.requires_grad) return;
                               auto& g = p.ensure_grad();
                               for (std::size_t pl = 0; pl < planes; ++pl) {
                                 for (std::size_t y = 0; y < oh; ++y) {
                                   for (std::size_t xx = 0; xx < ow; ++xx) {
                                     g[(pl * s.h + y / 2) * s.w + xx / 2] +=
                                         self.grad[(pl * oh + y) * ow + xx];
                                   }
                                 }
                               }
                             });
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double l = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - l, l};
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  const auto s = nchw(x, "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: target extents must be positive");
  auto ty = std::make_shared<std::vector<Tap>>(bilinear_taps(s.h, out_h));
  auto tx = std::make_shared<std::vector<Tap>>(bilinear_taps(s.w, out_w));
  const std::size_t planes = s.n * s.c;
  auto in = x.data();
  std::vector<double> out(planes * out_h * out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * s.h * s.w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const Tap& a = (*ty)[y];
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        const Tap& b = (*tx)[xx];
        out[(p * out_h + y) * out_w + xx] =
            a.w0 * (b.w0 * src[a.i0 * s.w + b.i0] + b.w1 * src[a.i0 * s.w + b.i1]) +
            a.w1 * (b.w0 * src[a.i1 * s.w + b.i0] + b.w1 * src[a.i1 * s.w + b.i1]);
      }
    }
  }
  return Tensor::make_result(
      {s.n, s.c, out_h, out_w}, std::move(out), {x},
      [s, ty, tx, planes, out_h, out_w](const Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t pl = 0; pl < planes; ++pl) {
          double* dst = g.data() + pl * s.h * s.w;
          for (std::size_t y = 0; y < out_h; ++y) {
            const Tap& a = (*ty)[y];
            for (std::size_t xx = 0; xx < out_w; ++xx) {
              const Tap& b = (*tx)[xx];
              const double go = self.grad[(pl * out_h + y) * out_w + xx];
              dst[a.i0 * s.w + b.i0] += go * a.w0 * b.w0;
              dst[a.i0 * s.w + b.i1] += go * a.w0 * b.w1;
              dst[a.i1 * s.w + b.i0] += go * a.w1 * b.w0;
              dst[a.i1 * s.w + b.i1] += go * a.w1 * b.w1;
            }
          }
        }
      });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const auto sa = nchw(a, "concat_channels");
  const auto sb = nchw(b, "concat_channels");
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t plane = sa.h * sa.w, ca = sa.c * plane, cb = sb.c * plane;
  std::vector<double> out(sa.n * (ca + cb));
  for (std::size_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.data().data() + n * ca, ca, out.data() + n * (ca + cb));
    std::copy_n(b.data().data() + n * cb, cb, out.data() + n * (ca + cb) + ca);
  }
  return Tensor::make_result(
      {sa.n, sa.c + sb.c, sa.h, sa.w}, std::move(out), {a, b}, [sa, ca, cb](const Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (std::size_t n = 0; n < sa.n; ++n) {
          const double* go = self.grad.data() + n * (ca + cb);
          if (pa.requires_grad) {
            double* g = pa.ensure_grad().data() + n * ca;
            for (std::size_t i = 0; i < ca; ++i) g[i] += go[i];
          }
          if (pb.requires_grad) {
            double* g = pb.ensure_grad().data() + n * cb;
            for (std::size_t i = 0; i < cb; ++i) g[i] += go[ca + i];
          }
        }
      });
}

Tensor concat_batch(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no inputs");
  Shape shape = parts.front().shape();
  Shape tail(shape.begin() + 1, shape.end());
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
      throw ShapeError("concat_batch: trailing extents differ " + shape_str(p.shape()));
    }
    total += p.dim(0);
  }
  shape[0] = total;
  std::vector<double> out;
  out.reserve(shape_numel(shape));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), parts, [](const Node& self) {
    std::size_t offset = 0;
    for (const auto& pp : self.parents) {
      const std::size_t len = pp->data.size();
      if (pp->requires_grad) {
        auto& g = pp->ensure_grad();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
      }
      offset += len;
    }
  });
}

Tensor slice_batch(const Tensor& x, std::size_t n) {
  if (x.rank() < 2) throw ShapeError("slice_batch: rank must be at least 2");
  if (n >= x.dim(0)) {
    throw ShapeError("slice_batch: index " + std::to_string(n) + " out of range for " +
                     shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[0] = 1;
  const std::size_t len = shape_numel(shape);
  std::vector<double> out(x.data().begin() + n * len, x.data().begin() + (n + 1) * len);
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [n, len](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    double* g = p.ensure_grad().data() + n * len;
    for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[i];
  });
}

Tensor gather_flat(const Tensor& x, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ShapeError("gather_flat: empty index set");
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.numel()) throw ShapeError("gather_flat: index out of range");
    out[i] = x.data()[indices[i]];
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(indices);
  return Tensor::make_result({indices.size()}, std::move(out), {x}, [idx](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < idx->size(); ++i) g[(*idx)[i]] += self.grad[i];
  });
}

Tensor broadcast_channels(const Tensor& x, std::size_t channels) {
  const auto s = nchw(x, "broadcast_channels");
  if (s.c != 1) throw ShapeError("broadcast_channels: input must have one channel");
  const std::size_t plane = s.h * s.w;
  std::vector<double> out(s.n * channels * plane);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::copy_n(x.data().data() + n * plane, plane, out.data() + (n * channels + c) * plane);
    }
  }
  return Tensor::make_result({s.n, channels, s.h, s.w}, std::move(out), {x},
                             [s, channels, plane](const Node& self) {
                               Node& p = *self.parents[0];
                               if (!p.requires_grad) return;
                               auto& g = p.ensure_grad();
                               for (std::size_t n = 0; n < s.n; ++n) {
                                 for (std::size_t c = 0; c < channels; ++c) {
                                   const double* go = self.grad.data() + (n * channels + c) * plane;
                                   for (std::size_t i = 0; i < plane; ++i) g[n * plane + i] += go[i];
                                 }
                               }
                             });
}

}  // namespace adu
