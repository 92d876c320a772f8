#include "ddcnet/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "ddcnet/errors.hpp"

namespace ddc::nn {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstMatrixMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

// Upper bound on the im2col scratch buffer, in floats.
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

struct ConvDims {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int k;
  std::size_t patch() const { return static_cast<std::size_t>(in_c) * k * k; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& weight, const ConvGeometry& g) {
  if (weight.c() != x.c() || weight.h() != g.kernel || weight.w() != g.kernel) {
    throw ShapeMismatch("conv weight " + to_string(weight.shape()) + " incompatible with input " +
                        to_string(x.shape()));
  }
  ConvDims d{x.c(), x.h(), x.w(), weight.n(), conv_output_size(x.h(), g),
             conv_output_size(x.w(), g), g.kernel};
  if (d.out_h < 1 || d.out_w < 1) {
    throw ShapeMismatch("conv input " + to_string(x.shape()) + " too small for kernel");
  }
  return d;
}

int rows_per_block(const ConvDims& d) {
  const std::size_t per_row = d.patch() * static_cast<std::size_t>(d.out_w);
  return static_cast<int>(std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_row, 1), 1,
                                                  static_cast<std::size_t>(d.out_h)));
}

// Fills col (patch x (rows*out_w)) for output rows [row0, row0 + rows).
void im2col(const float* x, const ConvDims& d, const ConvGeometry& g, int row0, int rows,
            float* col) {
  const std::size_t cols = static_cast<std::size_t>(rows) * d.out_w;
  for (int c = 0; c < d.in_c; ++c) {
    const float* plane = x + static_cast<std::size_t>(c) * d.in_h * d.in_w;
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        float* dst = col + ((static_cast<std::size_t>(c) * d.k + ky) * d.k + kx) * cols;
        for (int oy = row0; oy < row0 + rows; ++oy) {
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          if (iy < 0 || iy >= d.in_h) {
            std::fill(dst, dst + d.out_w, 0.0f);
            dst += d.out_w;
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * d.in_w;
          const int x_off = kx * g.dilation - g.pad;
          for (int ox = 0; ox < d.out_w; ++ox) {
            const int ix = ox * g.stride + x_off;
            *dst++ = (ix >= 0 && ix < d.in_w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvDims& d, const ConvGeometry& g, int row0, int rows,
                float* dx) {
  const std::size_t cols = static_cast<std::size_t>(rows) * d.out_w;
  for (int c = 0; c < d.in_c; ++c) {
    float* plane = dx + static_cast<std::size_t>(c) * d.in_h * d.in_w;
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        const float* src = col + ((static_cast<std::size_t>(c) * d.k + ky) * d.k + kx) * cols;
        for (int oy = row0; oy < row0 + rows; ++oy) {
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          if (iy < 0 || iy >= d.in_h) {
            src += d.out_w;
            continue;
          }
          float* dst = plane + static_cast<std::size_t>(iy) * d.in_w;
          const int x_off = kx * g.dilation - g.pad;
          for (int ox = 0; ox < d.out_w; ++ox, ++src) {
            const int ix = ox * g.stride + x_off;
            if (ix >= 0 && ix < d.in_w) dst[ix] += *src;
          }
        }
      }
    }
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw ShapeMismatch(std::string(what) + ": " + to_string(a.shape()) + " vs " +
                        to_string(b.shape()));
  }
}

}  // namespace

int conv_output_size(int input, const ConvGeometry& g) {
  const int span = g.dilation * (g.kernel - 1) + 1;
  return (input + 2 * g.pad - span) / g.stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& g) {
  const ConvDims d = conv_dims(x, weight, g);
  Tensor y(x.n(), d.out_c, d.out_h, d.out_w);
  const int block = rows_per_block(d);
  std::vector<float> col(d.patch() * static_cast<std::size_t>(block) * d.out_w);
  const ConstMatrixMap w(weight.ptr(), d.out_c, static_cast<Eigen::Index>(d.patch()),
                         Eigen::OuterStride<>(static_cast<Eigen::Index>(d.patch())));
  const std::size_t out_plane = static_cast<std::size_t>(d.out_h) * d.out_w;

  for (int n = 0; n < x.n(); ++n) {
    float* out = y.plane(n, 0);
    for (int row0 = 0; row0 < d.out_h; row0 += block) {
      const int rows = std::min(block, d.out_h - row0);
      const auto cols = static_cast<Eigen::Index>(rows) * d.out_w;
      im2col(x.plane(n, 0), d, g, row0, rows, col.data());
      const ConstMatrixMap c(col.data(), static_cast<Eigen::Index>(d.patch()), cols,
                             Eigen::OuterStride<>(cols));
      MatrixMap o(out + static_cast<std::size_t>(row0) * d.out_w, d.out_c, cols,
                  Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
      o.noalias() = w * c;
    }
    for (int oc = 0; oc < d.out_c; ++oc) {
      const float b = bias.ptr()[oc];
      float* p = out + oc * out_plane;
      for (std::size_t i = 0; i < out_plane; ++i) p[i] += b;
    }
  }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, const ConvGeometry& g,
                     Tensor* dx, Tensor* dweight, Tensor* dbias) {
  const ConvDims d = conv_dims(x, weight, g);
  if (dy.n() != x.n() || dy.c() != d.out_c || dy.h() != d.out_h || dy.w() != d.out_w) {
    throw ShapeMismatch("conv backward: gradient " + to_string(dy.shape()) +
                        " does not match output shape");
  }
  if (dx != nullptr) *dx = Tensor(x.shape());
  const int block = rows_per_block(d);
  std::vector<float> col(d.patch() * static_cast<std::size_t>(block) * d.out_w);
  const auto patch = static_cast<Eigen::Index>(d.patch());
  const ConstMatrixMap w(weight.ptr(), d.out_c, patch, Eigen::OuterStride<>(patch));
  const std::size_t out_plane = static_cast<std::size_t>(d.out_h) * d.out_w;

  for (int n = 0; n < x.n(); ++n) {
    const float* grad = dy.plane(n, 0);
    for (int row0 = 0; row0 < d.out_h; row0 += block) {
      const int rows = std::min(block, d.out_h - row0);
      const auto cols = static_cast<Eigen::Index>(rows) * d.out_w;
      const ConstMatrixMap gy(grad + static_cast<std::size_t>(row0) * d.out_w, d.out_c, cols,
                              Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
      if (dweight != nullptr) {
        im2col(x.plane(n, 0), d, g, row0, rows, col.data());
        const ConstMatrixMap c(col.data(), patch, cols, Eigen::OuterStride<>(cols));
        MatrixMap gw(dweight->ptr(), d.out_c, patch, Eigen::OuterStride<>(patch));
        gw.noalias() += gy * c.transpose();
      }
      if (dx != nullptr) {
        MatrixMap c(col.data(), patch, cols, Eigen::OuterStride<>(cols));
        c.noalias() = w.transpose() * gy;
        col2im_add(col.data(), d, g, row0, rows, dx->plane(n, 0));
      }
    }
    if (dbias != nullptr) {
      for (int oc = 0; oc < d.out_c; ++oc) {
        const float* p = grad + oc * out_plane;
        double s = 0.0;
        for (std::size_t i = 0; i < out_plane; ++i) s += p[i];
        dbias->ptr()[oc] += static_cast<float>(s);
      }
    }
  }
}

void relu_inplace(Tensor& t) {
  for (float& v : t.data()) v = v > 0.0f ? v : 0.0f;
}

void relu_backward_inplace(const Tensor& y, Tensor& dy) {
  require_same(y, dy, "relu backward");
  const float* out = y.ptr();
  float* g = dy.ptr();
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (!(out[i] > 0.0f)) g[i] = 0.0f;
}

void leaky_relu_inplace(Tensor& t, float slope) {
  for (float& v : t.data()) v = v > 0.0f ? v : v * slope;
}

void leaky_relu_backward_inplace(const Tensor& y, Tensor& dy, float slope) {
  require_same(y, dy, "leaky relu backward");
  const float* out = y.ptr();
  float* g = dy.ptr();
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (!(out[i] > 0.0f)) g[i] *= slope;
}

void sigmoid_inplace(Tensor& t) {
  for (float& v : t.data()) {
    // Split on sign so exp never overflows.
    if (v >= 0.0f) {
      v = 1.0f / (1.0f + std::exp(-v));
    } else {
      const float e = std::exp(v);
      v = e / (1.0f + e);
    }
  }
}

void sigmoid_backward_inplace(const Tensor& y, Tensor& dy) {
  require_same(y, dy, "sigmoid backward");
  const float* out = y.ptr();
  float* g = dy.ptr();
  for (std::size_t i = 0; i < dy.size(); ++i) g[i] *= out[i] * (1.0f - out[i]);
}

Tensor max_pool2x2(const Tensor& x, std::vector<std::uint32_t>* argmax) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) {
    throw ShapeMismatch("max pool needs even spatial size, got " + to_string(x.shape()));
  }
  Tensor y(x.n(), x.c(), x.h() / 2, x.w() / 2);
  if (argmax != nullptr) argmax->resize(y.size());
  std::size_t k = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* in = x.plane(n, c);
      float* out = y.plane(n, c);
      for (int oy = 0; oy < y.h(); ++oy) {
        for (int ox = 0; ox < y.w(); ++ox, ++k) {
          const std::uint32_t base = static_cast<std::uint32_t>((2 * oy) * x.w() + 2 * ox);
          std::uint32_t best = base;
          for (std::uint32_t cand : {base + 1, base + static_cast<std::uint32_t>(x.w()),
                                     base + static_cast<std::uint32_t>(x.w()) + 1}) {
            if (in[cand] > in[best]) best = cand;
          }
          *out++ = in[best];
          if (argmax != nullptr) (*argmax)[k] = best;
        }
      }
    }
  }
  return y;
}

Tensor max_pool2x2_backward(const Tensor& dy, const std::vector<std::uint32_t>& argmax,
                            const Shape& input_shape) {
  if (argmax.size() != dy.size()) throw ShapeMismatch("max pool backward: index size mismatch");
  Tensor dx(input_shape);
  std::size_t k = 0;
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const float* g = dy.plane(n, c);
      float* out = dx.plane(n, c);
      for (std::size_t i = 0; i < dy.plane_size(); ++i, ++k) out[argmax[k]] += g[i];
    }
  }
  return dx;
}

Tensor upsample_nearest2x(const Tensor& x) {
  Tensor y(x.n(), x.c(), x.h() * 2, x.w() * 2);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* in = x.plane(n, c);
      float* out = y.plane(n, c);
      for (int iy = 0; iy < x.h(); ++iy) {
        float* row0 = out + static_cast<std::size_t>(2 * iy) * y.w();
        for (int ix = 0; ix < x.w(); ++ix) {
          const float v = in[static_cast<std::size_t>(iy) * x.w() + ix];
          row0[2 * ix] = v;
          row0[2 * ix + 1] = v;
        }
        std::copy(row0, row0 + y.w(), row0 + y.w());
      }
    }
  }
  return y;
}

Tensor upsample_nearest2x_backward(const Tensor& dy) {
  if (dy.h() % 2 != 0 || dy.w() % 2 != 0) {
    throw ShapeMismatch("upsample backward needs even spatial size");
  }
  Tensor dx(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const float* g = dy.plane(n, c);
      float* out = dx.plane(n, c);
      for (int y = 0; y < dy.h(); ++y)
        for (int x = 0; x < dy.w(); ++x)
          out[static_cast<std::size_t>(y / 2) * dx.w() + x / 2] +=
              g[static_cast<std::size_t>(y) * dy.w() + x];
    }
  }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeMismatch("concat " + to_string(a.shape()) + " with " + to_string(b.shape()));
  }
  Tensor y(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int n = 0; n < a.n(); ++n) {
    std::copy(a.plane(n, 0), a.plane(n, 0) + a.sample_size(), y.plane(n, 0));
    std::copy(b.plane(n, 0), b.plane(n, 0) + b.sample_size(), y.plane(n, a.c()));
  }
  return y;
}

void split_channels(const Tensor& t, int first_channels, Tensor& a, Tensor& b) {
  if (first_channels < 0 || first_channels > t.c()) throw ShapeMismatch("split out of range");
  a = Tensor(t.n(), first_channels, t.h(), t.w());
  b = Tensor(t.n(), t.c() - first_channels, t.h(), t.w());
  for (int n = 0; n < t.n(); ++n) {
    std::copy(t.plane(n, 0), t.plane(n, 0) + a.sample_size(), a.plane(n, 0));
    std::copy(t.plane(n, first_channels), t.plane(n, first_channels) + b.sample_size(),
              b.plane(n, 0));
  }
}

namespace {

int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Tensor reflect_pad(const Tensor& x, int height, int width) {
  if (height < x.h() || width < x.w()) throw ShapeMismatch("reflect pad target smaller than input");
  Tensor y(x.n(), x.c(), height, width);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int yy = 0; yy < height; ++yy) {
        const int sy = mirror_index(yy, x.h());
        for (int xx = 0; xx < width; ++xx) y.at(n, c, yy, xx) = x.at(n, c, sy, mirror_index(xx, x.w()));
      }
  return y;
}

Tensor crop(const Tensor& x, int height, int width) {
  if (height > x.h() || width > x.w()) throw ShapeMismatch("crop larger than input");
  Tensor y(x.n(), x.c(), height, width);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int yy = 0; yy < height; ++yy)
        std::copy(x.plane(n, c) + static_cast<std::size_t>(yy) * x.w(),
                  x.plane(n, c) + static_cast<std::size_t>(yy) * x.w() + width,
                  y.plane(n, c) + static_cast<std::size_t>(yy) * width);
  return y;
}

}  // namespace ddc::nn
