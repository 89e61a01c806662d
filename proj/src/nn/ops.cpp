// SPDX-License-Identifier: Apache-2.0
#include "sald/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sald/error.hpp"

namespace sald::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                         to_string(b));
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(s));
  }
}

template <typename T>
bool wants_grad(const Node<T>& n, std::size_t i) {
  return i < n.inputs.size() && n.inputs[i]->requires_grad;
}

template <typename T>
std::vector<T>& input_grad(Node<T>& n, std::size_t i) {
  return n.inputs[i]->grad_buffer();
}

// Valid output range [lo, hi) for which in = o * stride - pad + k lies in [0, extent).
inline void valid_range(int out_extent, int in_extent, int stride, int pad, int k, int& lo,
                        int& hi) {
  const int off = k - pad;
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  const int last = in_extent - 1 - off;  // o * stride <= last
  hi = last < 0 ? 0 : std::min(out_extent, last / stride + 1);
  if (hi < lo) hi = lo;
}

struct ConvGeometry {
  int n, cin, h, w, cout, cin_g, cout_g, k, stride, pad, groups, ho, wo;
  std::size_t in_plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t out_plane() const { return static_cast<std::size_t>(ho) * wo; }
  std::size_t patch() const { return static_cast<std::size_t>(cin_g) * k * k; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
  bool depthwise() const { return groups == cin && cout == cin && cin_g == 1; }
};

// Columns for one image and one group: rows (c, ky, kx), columns (oy, ox).
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t plane = g.out_plane();
  for (int c = 0; c < g.cin_g; ++c) {
    const T* xc = x + c * g.in_plane();
    for (int ky = 0; ky < g.k; ++ky) {
      int oy_lo, oy_hi;
      valid_range(g.ho, g.h, g.stride, g.pad, ky, oy_lo, oy_hi);
      for (int kx = 0; kx < g.k; ++kx) {
        int ox_lo, ox_hi;
        valid_range(g.wo, g.w, g.stride, g.pad, kx, ox_lo, ox_hi);
        T* row = col + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * plane;
        std::fill(row, row + plane, T(0));
        for (int oy = oy_lo; oy < oy_hi; ++oy) {
          const T* xrow = xc + static_cast<std::size_t>(oy * g.stride - g.pad + ky) * g.w;
          T* dst = row + static_cast<std::size_t>(oy) * g.wo;
          if (g.stride == 1) {
            const int shift = kx - g.pad;
            for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox] = xrow[ox + shift];
          } else {
            for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox] = xrow[ox * g.stride - g.pad + kx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t plane = g.out_plane();
  for (int c = 0; c < g.cin_g; ++c) {
    T* dxc = dx + c * g.in_plane();
    for (int ky = 0; ky < g.k; ++ky) {
      int oy_lo, oy_hi;
      valid_range(g.ho, g.h, g.stride, g.pad, ky, oy_lo, oy_hi);
      for (int kx = 0; kx < g.k; ++kx) {
        int ox_lo, ox_hi;
        valid_range(g.wo, g.w, g.stride, g.pad, kx, ox_lo, ox_hi);
        const T* row = col + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * plane;
        for (int oy = oy_lo; oy < oy_hi; ++oy) {
          T* xrow = dxc + static_cast<std::size_t>(oy * g.stride - g.pad + ky) * g.w;
          const T* src = row + static_cast<std::size_t>(oy) * g.wo;
          for (int ox = ox_lo; ox < ox_hi; ++ox) xrow[ox * g.stride - g.pad + kx] += src[ox];
        }
      }
    }
  }
}

template <typename T>
Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> row_map(T* p, int n) {
  return {p, n};
}

template <typename T>
Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> crow_map(const T* p, int n) {
  return {p, n};
}

template <typename T>
void depthwise_forward(const T* x, const T* w, const ConvGeometry& g, T* y) {
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < g.cin; ++c) {
      const T* xc = x + (static_cast<std::size_t>(n) * g.cin + c) * g.in_plane();
      T* yc = y + (static_cast<std::size_t>(n) * g.cout + c) * g.out_plane();
      const T* wc = w + static_cast<std::size_t>(c) * g.k * g.k;
      for (int ky = 0; ky < g.k; ++ky) {
        int oy_lo, oy_hi;
        valid_range(g.ho, g.h, g.stride, g.pad, ky, oy_lo, oy_hi);
        for (int kx = 0; kx < g.k; ++kx) {
          int ox_lo, ox_hi;
          valid_range(g.wo, g.w, g.stride, g.pad, kx, ox_lo, ox_hi);
          const T wv = wc[ky * g.k + kx];
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            const T* xrow = xc + static_cast<std::size_t>(oy * g.stride - g.pad + ky) * g.w;
            T* yrow = yc + static_cast<std::size_t>(oy) * g.wo;
            if (g.stride == 1) {
              const T* xs = xrow + (kx - g.pad);
              row_map(yrow + ox_lo, ox_hi - ox_lo) += wv * crow_map(xs + ox_lo, ox_hi - ox_lo);
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox)
                yrow[ox] += wv * xrow[ox * g.stride - g.pad + kx];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void depthwise_backward(const T* x, const T* w, const T* dy, const ConvGeometry& g, T* dx,
                        T* dw) {
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < g.cin; ++c) {
      const T* xc = x + (static_cast<std::size_t>(n) * g.cin + c) * g.in_plane();
      const T* dyc = dy + (static_cast<std::size_t>(n) * g.cout + c) * g.out_plane();
      T* dxc = dx ? dx + (static_cast<std::size_t>(n) * g.cin + c) * g.in_plane() : nullptr;
      const T* wc = w + static_cast<std::size_t>(c) * g.k * g.k;
      T* dwc = dw ? dw + static_cast<std::size_t>(c) * g.k * g.k : nullptr;
      for (int ky = 0; ky < g.k; ++ky) {
        int oy_lo, oy_hi;
        valid_range(g.ho, g.h, g.stride, g.pad, ky, oy_lo, oy_hi);
        for (int kx = 0; kx < g.k; ++kx) {
          int ox_lo, ox_hi;
          valid_range(g.wo, g.w, g.stride, g.pad, kx, ox_lo, ox_hi);
          const T wv = wc[ky * g.k + kx];
          T acc = T(0);
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            const std::size_t irow = static_cast<std::size_t>(oy * g.stride - g.pad + ky) * g.w;
            const T* dyrow = dyc + static_cast<std::size_t>(oy) * g.wo;
            if (g.stride == 1) {
              const int shift = kx - g.pad;
              const auto dyv = crow_map(dyrow + ox_lo, ox_hi - ox_lo);
              if (dxc) row_map(dxc + irow + shift + ox_lo, ox_hi - ox_lo) += wv * dyv;
              if (dwc) acc += dyv.dot(crow_map(xc + irow + shift + ox_lo, ox_hi - ox_lo));
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox) {
                const std::size_t ix = irow + ox * g.stride - g.pad + kx;
                if (dxc) dxc[ix] += wv * dyrow[ox];
                if (dwc) acc += dyrow[ox] * xc[ix];
              }
            }
          }
          if (dwc) dwc[ky * g.k + kx] += acc;
        }
      }
    }
  }
}

template <typename T>
Tensor<T> unary(const Tensor<T>& x, std::vector<T> out, std::vector<T> local_grad,
                const char* op) {
  auto lg = std::make_shared<std::vector<T>>(std::move(local_grad));
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x},
      [lg](Node<T>& self) {
        auto& gx = input_grad(self, 0);
        const auto& gy = self.grad;
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * (*lg)[i];
      },
      op);
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dOptions opt) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  if (opt.groups < 1 || opt.stride < 1 || opt.padding < 0) {
    throw ConfigError("conv2d: invalid stride/padding/groups");
  }
  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.cin_g = weight.dim(1);
  g.k = weight.dim(2);
  g.stride = opt.stride;
  g.pad = opt.padding;
  g.groups = opt.groups;
  if (weight.dim(3) != g.k) throw DimensionError("conv2d: kernel must be square");
  if (g.k % 2 == 0) throw ConfigError("conv2d: kernel size must be odd");
  if (g.cin % g.groups != 0 || g.cout % g.groups != 0) {
    throw ConfigError("conv2d: groups must divide input and output channels");
  }
  if (g.cin_g != g.cin / g.groups) {
    throw DimensionError("conv2d: weight expects " + std::to_string(g.cin_g * g.groups) +
                         " input channels, input has " + std::to_string(g.cin));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias shape " + to_string(bias.shape()));
  }
  g.cout_g = g.cout / g.groups;
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  if (g.ho <= 0 || g.wo <= 0) throw DimensionError("conv2d: input smaller than kernel");

  std::vector<T> out(static_cast<std::size_t>(g.n) * g.cout * g.out_plane(), T(0));
  const T* xv = x.values().data();
  const T* wv = weight.values().data();

  if (g.depthwise()) {
    depthwise_forward(xv, wv, g, out.data());
  } else {
    std::vector<T> col(g.pointwise() ? 0 : g.patch() * g.out_plane());
    for (int n = 0; n < g.n; ++n) {
      for (int gr = 0; gr < g.groups; ++gr) {
        const T* xg = xv + (static_cast<std::size_t>(n) * g.cin + gr * g.cin_g) * g.in_plane();
        const T* cols = xg;
        if (!g.pointwise()) {
          im2col(xg, g, col.data());
          cols = col.data();
        }
        CMapMat<T> wm(wv + static_cast<std::size_t>(gr) * g.cout_g * g.patch(), g.cout_g,
                      static_cast<Eigen::Index>(g.patch()));
        CMapMat<T> cm(cols, static_cast<Eigen::Index>(g.patch()),
                      static_cast<Eigen::Index>(g.out_plane()));
        MapMat<T> ym(out.data() + (static_cast<std::size_t>(n) * g.cout + gr * g.cout_g) *
                                      g.out_plane(),
                     g.cout_g, static_cast<Eigen::Index>(g.out_plane()));
        ym.noalias() = wm * cm;
      }
    }
  }
  if (bias.defined()) {
    const T* bv = bias.values().data();
    for (int n = 0; n < g.n; ++n)
      for (int c = 0; c < g.cout; ++c) {
        T* p = out.data() + (static_cast<std::size_t>(n) * g.cout + c) * g.out_plane();
        for (std::size_t i = 0; i < g.out_plane(); ++i) p[i] += bv[c];
      }
  }

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor<T>::from_op(
      {g.n, g.cout, g.ho, g.wo}, std::move(out), std::move(inputs),
      [g](Node<T>& self) {
        const T* xv = self.inputs[0]->value.data();
        const T* wv = self.inputs[1]->value.data();
        const T* dy = self.grad.data();
        T* dx = wants_grad(self, 0) ? input_grad(self, 0).data() : nullptr;
        T* dw = wants_grad(self, 1) ? input_grad(self, 1).data() : nullptr;
        if (wants_grad(self, 2)) {
          auto& db = input_grad(self, 2);
          for (int n = 0; n < g.n; ++n)
            for (int c = 0; c < g.cout; ++c) {
              const T* p = dy + (static_cast<std::size_t>(n) * g.cout + c) * g.out_plane();
              T acc = T(0);
              for (std::size_t i = 0; i < g.out_plane(); ++i) acc += p[i];
              db[static_cast<std::size_t>(c)] += acc;
            }
        }
        if (!dx && !dw) return;
        if (g.depthwise()) {
          depthwise_backward(xv, wv, dy, g, dx, dw);
          return;
        }
        std::vector<T> col(g.pointwise() ? 0 : g.patch() * g.out_plane());
        std::vector<T> dcol(dx && !g.pointwise() ? g.patch() * g.out_plane() : 0);
        for (int n = 0; n < g.n; ++n) {
          for (int gr = 0; gr < g.groups; ++gr) {
            const std::size_t in_off =
                (static_cast<std::size_t>(n) * g.cin + gr * g.cin_g) * g.in_plane();
            CMapMat<T> dym(
                dy + (static_cast<std::size_t>(n) * g.cout + gr * g.cout_g) * g.out_plane(),
                g.cout_g, static_cast<Eigen::Index>(g.out_plane()));
            const auto patch = static_cast<Eigen::Index>(g.patch());
            const auto plane = static_cast<Eigen::Index>(g.out_plane());
            if (dw) {
              const T* cols = xv + in_off;
              if (!g.pointwise()) {
                im2col(xv + in_off, g, col.data());
                cols = col.data();
              }
              CMapMat<T> cm(cols, patch, plane);
              MapMat<T> dwm(dw + static_cast<std::size_t>(gr) * g.cout_g * g.patch(), g.cout_g,
                            patch);
              dwm.noalias() += dym * cm.transpose();
            }
            if (dx) {
              CMapMat<T> wm(wv + static_cast<std::size_t>(gr) * g.cout_g * g.patch(), g.cout_g,
                            patch);
              if (g.pointwise()) {
                MapMat<T> dxm(dx + in_off, patch, plane);
                dxm.noalias() += wm.transpose() * dym;
              } else {
                MapMat<T> dcm(dcol.data(), patch, plane);
                dcm.noalias() = wm.transpose() * dym;
                col2im(dcol.data(), g, dx + in_off);
              }
            }
          }
        }
      },
      "conv2d");
}

// ---------------------------------------------------------------------------
// batchnorm2d

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, BatchNormOptions opt) {
  if (!(opt.eps > 0.0)) throw ConfigError("batchnorm2d: eps must be positive");
  if (x.ndim() != 4 && x.ndim() != 2) throw DimensionError("batchnorm2d: expected rank 2 or 4");
  const int n = x.dim(0);
  const int c = x.dim(1);
  const std::size_t plane = x.ndim() == 4 ? static_cast<std::size_t>(x.dim(2)) * x.dim(3) : 1;
  for (const Tensor<T>* p : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
    if (p->numel() != static_cast<std::size_t>(c)) {
      throw DimensionError("batchnorm2d: parameter size does not match " + std::to_string(c) +
                           " channels");
    }
  }
  const std::size_t count = static_cast<std::size_t>(n) * plane;
  const T* xv = x.values().data();
  const T* gv = gamma.values().data();
  const T* bv = beta.values().data();

  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto invstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c));
  std::vector<T> out(x.numel());

  for (int ch = 0; ch < c; ++ch) {
    double mu;
    double var;
    if (opt.training) {
      if (count < 2) throw DimensionError("batchnorm2d: training needs more than one value per channel");
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* p = xv + (static_cast<std::size_t>(i) * c + ch) * plane;
        for (std::size_t j = 0; j < plane; ++j) s += p[j];
      }
      mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* p = xv + (static_cast<std::size_t>(i) * c + ch) * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          const double d = p[j] - mu;
          ss += d * d;
        }
      }
      var = ss / static_cast<double>(count);
      auto rm = running_mean.data();
      auto rv = running_var.data();
      const double unbiased = ss / static_cast<double>(count - 1);
      rm[ch] = static_cast<T>((1.0 - opt.momentum) * rm[ch] + opt.momentum * mu);
      rv[ch] = static_cast<T>((1.0 - opt.momentum) * rv[ch] + opt.momentum * unbiased);
    } else {
      mu = running_mean.values()[ch];
      var = running_var.values()[ch];
    }
    const double is = 1.0 / std::sqrt(var + opt.eps);
    (*invstd)[ch] = static_cast<T>(is);
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        const T h = static_cast<T>((xv[off + j] - mu) * is);
        (*xhat)[off + j] = h;
        out[off + j] = gv[ch] * h + bv[ch];
      }
    }
  }

  const bool training = opt.training;
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [xhat, invstd, n, c, plane, count, training](Node<T>& self) {
        const T* dy = self.grad.data();
        const T* gv = self.inputs[1]->value.data();
        std::vector<double> sum_dy(static_cast<std::size_t>(c), 0.0);
        std::vector<double> sum_dy_xhat(static_cast<std::size_t>(c), 0.0);
        for (int i = 0; i < n; ++i)
          for (int ch = 0; ch < c; ++ch) {
            const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
            double a = 0.0, b = 0.0;
            for (std::size_t j = 0; j < plane; ++j) {
              a += dy[off + j];
              b += dy[off + j] * (*xhat)[off + j];
            }
            sum_dy[ch] += a;
            sum_dy_xhat[ch] += b;
          }
        if (wants_grad(self, 1)) {
          auto& dg = input_grad(self, 1);
          for (int ch = 0; ch < c; ++ch) dg[ch] += static_cast<T>(sum_dy_xhat[ch]);
        }
        if (wants_grad(self, 2)) {
          auto& db = input_grad(self, 2);
          for (int ch = 0; ch < c; ++ch) db[ch] += static_cast<T>(sum_dy[ch]);
        }
        if (!wants_grad(self, 0)) return;
        auto& dx = input_grad(self, 0);
        const double m = static_cast<double>(count);
        for (int i = 0; i < n; ++i)
          for (int ch = 0; ch < c; ++ch) {
            const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
            const double k = gv[ch] * (*invstd)[ch];
            if (training) {
              const double mdy = sum_dy[ch] / m;
              const double mdyx = sum_dy_xhat[ch] / m;
              for (std::size_t j = 0; j < plane; ++j)
                dx[off + j] += static_cast<T>(k * (dy[off + j] - mdy - (*xhat)[off + j] * mdyx));
            } else {
              for (std::size_t j = 0; j < plane; ++j) dx[off + j] += static_cast<T>(k * dy[off + j]);
            }
          }
      },
      "batchnorm2d");
}

// ---------------------------------------------------------------------------
// activations

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  std::vector<T> lg(xv.size());
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < xv.size(); ++i) {
        const bool pos = xv[i] > T(0);
        out[i] = pos ? xv[i] : T(0);
        lg[i] = pos ? T(1) : T(0);
      }
      return unary(x, std::move(out), std::move(lg), "relu");
    case Activation::silu:
      for (std::size_t i = 0; i < xv.size(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-xv[i]));
        out[i] = xv[i] * s;
        lg[i] = s * (T(1) + xv[i] * (T(1) - s));
      }
      return unary(x, std::move(out), std::move(lg), "silu");
    case Activation::sigmoid: {
      // Saturated values are pulled back inside the open interval (0, 1).
      constexpr T lo = std::numeric_limits<T>::min();
      constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / 2;
      for (std::size_t i = 0; i < xv.size(); ++i) {
        const T s = std::clamp(T(1) / (T(1) + std::exp(-xv[i])), lo, hi);
        out[i] = s;
        lg[i] = s * (T(1) - s);
      }
      return unary(x, std::move(out), std::move(lg), "sigmoid");
    }
  }
  throw ConfigError("unknown activation");
}

// ---------------------------------------------------------------------------
// resample

namespace {

struct LerpTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<LerpTap> bilinear_taps(int in_extent, int factor) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(in_extent) * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in_extent - 1) i0 = in_extent - 1;
    const int i1 = std::min(i0 + 1, in_extent - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> resample(const Tensor<T>& x, int factor, Direction direction) {
  require_rank(x.shape(), 4, "resample");
  if (factor < 1) throw ConfigError("resample: factor must be >= 1");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t planes = static_cast<std::size_t>(n) * c;
  const T* xv = x.values().data();
  if (factor == 1) {
    return Tensor<T>::from_op(
        x.shape(), std::vector<T>(x.values().begin(), x.values().end()), {x},
        [](Node<T>& self) {
          auto& gx = input_grad(self, 0);
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
        },
        "resample");
  }

  if (direction == Direction::down) {
    if (h % factor != 0 || w % factor != 0) {
      throw DimensionError("resample: " + std::to_string(h) + "x" + std::to_string(w) +
                           " not divisible by " + std::to_string(factor));
    }
    const int ho = h / factor, wo = w / factor;
    const T inv = T(1) / static_cast<T>(factor * factor);
    std::vector<T> out(planes * ho * wo, T(0));
    for (std::size_t p = 0; p < planes; ++p) {
      const T* xp = xv + p * h * w;
      T* op = out.data() + p * ho * wo;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) op[(y / factor) * wo + xx / factor] += xp[y * w + xx];
      for (int i = 0; i < ho * wo; ++i) op[i] *= inv;
    }
    return Tensor<T>::from_op(
        {n, c, ho, wo}, std::move(out), {x},
        [=](Node<T>& self) {
          auto& gx = input_grad(self, 0);
          for (std::size_t p = 0; p < planes; ++p) {
            const T* gp = self.grad.data() + p * ho * wo;
            T* dp = gx.data() + p * h * w;
            for (int y = 0; y < h; ++y)
              for (int xx = 0; xx < w; ++xx) dp[y * w + xx] += gp[(y / factor) * wo + xx / factor] * inv;
          }
        },
        "avg_pool");
  }

  const int ho = h * factor, wo = w * factor;
  auto ty = std::make_shared<std::vector<LerpTap>>(bilinear_taps(h, factor));
  auto tx = std::make_shared<std::vector<LerpTap>>(bilinear_taps(w, factor));
  std::vector<T> out(planes * ho * wo);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* xp = xv + p * h * w;
    T* op = out.data() + p * ho * wo;
    for (int oy = 0; oy < ho; ++oy) {
      const auto& a = (*ty)[oy];
      const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
      for (int ox = 0; ox < wo; ++ox) {
        const auto& b = (*tx)[ox];
        const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
        op[oy * wo + ox] = wy0 * (wx0 * xp[a.i0 * w + b.i0] + wx1 * xp[a.i0 * w + b.i1]) +
                           wy1 * (wx0 * xp[a.i1 * w + b.i0] + wx1 * xp[a.i1 * w + b.i1]);
      }
    }
  }
  return Tensor<T>::from_op(
      {n, c, ho, wo}, std::move(out), {x},
      [=](Node<T>& self) {
        auto& gx = input_grad(self, 0);
        for (std::size_t p = 0; p < planes; ++p) {
          const T* gp = self.grad.data() + p * ho * wo;
          T* dp = gx.data() + p * h * w;
          for (int oy = 0; oy < ho; ++oy) {
            const auto& a = (*ty)[oy];
            const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
            for (int ox = 0; ox < wo; ++ox) {
              const auto& b = (*tx)[ox];
              const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
              const T gv = gp[oy * wo + ox];
              dp[a.i0 * w + b.i0] += gv * wy0 * wx0;
              dp[a.i0 * w + b.i1] += gv * wy0 * wx1;
              dp[a.i1 * w + b.i0] += gv * wy1 * wx0;
              dp[a.i1 * w + b.i1] += gv * wy1 * wx1;
            }
          }
        }
      },
      "bilinear_up");
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  const auto av = a.values(), bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor<T>::from_op(
      a.shape(), std::move(out), {a, b},
      [](Node<T>& self) {
        for (std::size_t k = 0; k < 2; ++k) {
          if (!wants_grad(self, k)) continue;
          auto& g = input_grad(self, k);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
      },
      "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  const auto av = a.values(), bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return Tensor<T>::from_op(
      a.shape(), std::move(out), {a, b},
      [](Node<T>& self) {
        if (wants_grad(self, 0)) {
          auto& g = input_grad(self, 0);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants_grad(self, 1)) {
          auto& g = input_grad(self, 1);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
      },
      "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  const auto av = a.values(), bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor<T>::from_op(
      a.shape(), std::move(out), {a, b},
      [](Node<T>& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        if (wants_grad(self, 0)) {
          auto& g = input_grad(self, 0);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
        }
        if (wants_grad(self, 1)) {
          auto& g = input_grad(self, 1);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
        }
      },
      "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, const Tensor<T>& s) {
  if (s.numel() != 1) throw DimensionError("scale: factor must have one element");
  const T sv = s.values()[0];
  const auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * sv;
  return Tensor<T>::from_op(
      a.shape(), std::move(out), {a, s},
      [](Node<T>& self) {
        const auto& av = self.inputs[0]->value;
        const T sv = self.inputs[1]->value[0];
        if (wants_grad(self, 0)) {
          auto& g = input_grad(self, 0);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * sv;
        }
        if (wants_grad(self, 1)) {
          T acc = T(0);
          for (std::size_t i = 0; i < av.size(); ++i) acc += self.grad[i] * av[i];
          input_grad(self, 1)[0] += acc;
        }
      },
      "scale");
}

template <typename T>
Tensor<T> affine(const Tensor<T>& a, T multiplier, T offset) {
  const auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * multiplier + offset;
  return Tensor<T>::from_op(
      a.shape(), std::move(out), {a},
      [multiplier](Node<T>& self) {
        auto& g = input_grad(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * multiplier;
      },
      "affine");
}

template <typename T>
Tensor<T> scale_per_sample(const Tensor<T>& x, std::span<const T> coeffs) {
  if (x.ndim() < 1 || static_cast<std::size_t>(x.dim(0)) != coeffs.size()) {
    throw DimensionError("scale_per_sample: need one coefficient per sample");
  }
  const std::size_t per = coeffs.empty() ? 0 : x.numel() / coeffs.size();
  auto cs = std::make_shared<std::vector<T>>(coeffs.begin(), coeffs.end());
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * (*cs)[i / per];
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x},
      [cs, per](Node<T>& self) {
        auto& g = input_grad(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*cs)[i / per];
      },
      "scale_per_sample");
}

// ---------------------------------------------------------------------------
// structural

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape shape = parts.front().shape();
  const int rank = static_cast<int>(shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw DimensionError("concat: axis out of range");
  int total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (static_cast<int>(s.size()) != rank) throw DimensionError("concat: rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d != axis && s[d] != shape[d]) {
        throw DimensionError("concat: non-axis dims differ " + to_string(s) + " vs " +
                             to_string(shape));
      }
    }
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= shape[d];
  for (int d = axis + 1; d < rank; ++d) inner *= shape[d];
  shape[axis] = total;
  std::vector<std::size_t> chunk;
  for (const auto& p : parts) chunk.push_back(static_cast<std::size_t>(p.shape()[axis]) * inner);
  const std::size_t row = static_cast<std::size_t>(total) * inner;
  std::vector<T> out(outer * row);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const T* src = parts[k].values().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src + o * chunk[k], chunk[k], out.data() + o * row + off);
    off += chunk[k];
  }
  return Tensor<T>::from_op(
      shape, std::move(out), parts,
      [chunk, outer, row](Node<T>& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < chunk.size(); ++k) {
          if (wants_grad(self, k)) {
            auto& g = input_grad(self, k);
            for (std::size_t o = 0; o < outer; ++o)
              for (std::size_t i = 0; i < chunk[k]; ++i)
                g[o * chunk[k] + i] += self.grad[o * row + off + i];
          }
          off += chunk[k];
        }
      },
      "concat");
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int start, int length) {
  Shape shape = x.shape();
  const int rank = static_cast<int>(shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw DimensionError("slice: axis out of range");
  if (start < 0 || length < 0 || start + length > shape[axis]) {
    throw IndexError("slice: range out of bounds");
  }
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= shape[d];
  for (int d = axis + 1; d < rank; ++d) inner *= shape[d];
  const std::size_t in_row = static_cast<std::size_t>(shape[axis]) * inner;
  const std::size_t out_row = static_cast<std::size_t>(length) * inner;
  const std::size_t off = static_cast<std::size_t>(start) * inner;
  shape[axis] = length;
  std::vector<T> out(outer * out_row);
  const T* src = x.values().data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(src + o * in_row + off, out_row, out.data() + o * out_row);
  return Tensor<T>::from_op(
      shape, std::move(out), {x},
      [=](Node<T>& self) {
        auto& g = input_grad(self, 0);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < out_row; ++i) g[o * in_row + off + i] += self.grad[o * out_row + i];
      },
      "slice");
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, const std::vector<int>& sizes) {
  std::vector<Tensor<T>> parts;
  int start = 0;
  for (int s : sizes) {
    parts.push_back(slice(x, axis, start, s));
    start += s;
  }
  const int rank = x.ndim();
  if (start != x.dim(axis < 0 ? axis + rank : axis)) {
    throw DimensionError("split: sizes do not cover the axis");
  }
  return parts;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + to_string(x.shape()) + " to " + to_string(shape));
  }
  return Tensor<T>::from_op(
      std::move(shape), std::vector<T>(x.values().begin(), x.values().end()), {x},
      [](Node<T>& self) {
        auto& g = input_grad(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      },
      "reshape");
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.ndim() < 2) throw DimensionError("add_channel_bias: input rank < 2");
  const int n = x.dim(0), c = x.dim(1);
  const bool per_sample = bias.ndim() == 2;
  if ((per_sample && (bias.dim(0) != n || bias.dim(1) != c)) ||
      (!per_sample && bias.numel() != static_cast<std::size_t>(c))) {
    throw DimensionError("add_channel_bias: bias " + to_string(bias.shape()) + " for input " +
                         to_string(x.shape()));
  }
  const std::size_t plane = x.numel() / (static_cast<std::size_t>(n) * c);
  const auto xv = x.values();
  const auto bv = bias.values();
  std::vector<T> out(xv.size());
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
      const T b = bv[per_sample ? static_cast<std::size_t>(i) * c + ch : ch];
      for (std::size_t j = 0; j < plane; ++j) out[off + j] = xv[off + j] + b;
    }
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x, bias},
      [n, c, plane, per_sample](Node<T>& self) {
        if (wants_grad(self, 0)) {
          auto& g = input_grad(self, 0);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants_grad(self, 1)) {
          auto& g = input_grad(self, 1);
          for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch) {
              const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
              T acc = T(0);
              for (std::size_t j = 0; j < plane; ++j) acc += self.grad[off + j];
              g[per_sample ? static_cast<std::size_t>(i) * c + ch : ch] += acc;
            }
        }
      },
      "add_channel_bias");
}

template <typename T>
Tensor<T> mul_channel(const Tensor<T>& x, const Tensor<T>& gate) {
  require_rank(x.shape(), 4, "mul_channel");
  const int n = x.dim(0), c = x.dim(1);
  if (gate.ndim() != 2 || gate.dim(0) != n || gate.dim(1) != c) {
    throw DimensionError("mul_channel: gate " + to_string(gate.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const auto xv = x.values();
  const auto gv = gate.values();
  std::vector<T> out(xv.size());
  for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p)
    for (std::size_t j = 0; j < plane; ++j) out[p * plane + j] = xv[p * plane + j] * gv[p];
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x, gate},
      [n, c, plane](Node<T>& self) {
        const auto& xv = self.inputs[0]->value;
        const auto& gv = self.inputs[1]->value;
        const std::size_t planes = static_cast<std::size_t>(n) * c;
        if (wants_grad(self, 0)) {
          auto& g = input_grad(self, 0);
          for (std::size_t p = 0; p < planes; ++p)
            for (std::size_t j = 0; j < plane; ++j) g[p * plane + j] += self.grad[p * plane + j] * gv[p];
        }
        if (wants_grad(self, 1)) {
          auto& g = input_grad(self, 1);
          for (std::size_t p = 0; p < planes; ++p) {
            T acc = T(0);
            for (std::size_t j = 0; j < plane; ++j) acc += self.grad[p * plane + j] * xv[p * plane + j];
            g[p] += acc;
          }
        }
      },
      "mul_channel");
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const auto xv = x.values();
  std::vector<T> out(static_cast<std::size_t>(n) * c);
  for (std::size_t p = 0; p < out.size(); ++p) {
    T acc = T(0);
    for (std::size_t j = 0; j < plane; ++j) acc += xv[p * plane + j];
    out[p] = acc / static_cast<T>(plane);
  }
  return Tensor<T>::from_op(
      {n, c}, std::move(out), {x},
      [plane](Node<T>& self) {
        auto& g = input_grad(self, 0);
        const T inv = T(1) / static_cast<T>(plane);
        for (std::size_t p = 0; p < self.grad.size(); ++p)
          for (std::size_t j = 0; j < plane; ++j) g[p * plane + j] += self.grad[p] * inv;
      },
      "global_avg_pool");
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x.shape(), 2, "linear input");
  require_rank(weight.shape(), 2, "linear weight");
  const int n = x.dim(0), f = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != f) throw DimensionError("linear: feature mismatch");
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(o)) {
    throw DimensionError("linear: bias size");
  }
  std::vector<T> out(static_cast<std::size_t>(n) * o);
  CMapMat<T> xm(x.values().data(), n, f);
  CMapMat<T> wm(weight.values().data(), o, f);
  MapMat<T> ym(out.data(), n, o);
  ym.noalias() = xm * wm.transpose();
  if (bias.defined()) {
    const auto bv = bias.values();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < o; ++j) ym(i, j) += bv[j];
  }
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor<T>::from_op(
      {n, o}, std::move(out), std::move(inputs),
      [n, f, o](Node<T>& self) {
        CMapMat<T> gy(self.grad.data(), n, o);
        if (wants_grad(self, 0)) {
          CMapMat<T> wm(self.inputs[1]->value.data(), o, f);
          MapMat<T> gx(input_grad(self, 0).data(), n, f);
          gx.noalias() += gy * wm;
        }
        if (wants_grad(self, 1)) {
          CMapMat<T> xm(self.inputs[0]->value.data(), n, f);
          MapMat<T> gw(input_grad(self, 1).data(), o, f);
          gw.noalias() += gy.transpose() * xm;
        }
        if (wants_grad(self, 2)) {
          auto& gb = input_grad(self, 2);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < o; ++j) gb[j] += gy(i, j);
        }
      },
      "linear");
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  std::vector<T> lg(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = std::clamp(xv[i], lo, hi);
    lg[i] = (xv[i] >= lo && xv[i] <= hi) ? T(1) : T(0);
  }
  return unary(x, std::move(out), std::move(lg), "clamp");
}

template <typename T>
Tensor<T> box_filter3(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "box_filter3");
  const int h = x.dim(2), w = x.dim(3);
  const std::size_t planes = static_cast<std::size_t>(x.dim(0)) * x.dim(1);
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  const T ninth = T(1) / T(9);
  auto at = [h, w](int y, int xx) {
    return static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(xx, 0, w - 1);
  };
  for (std::size_t p = 0; p < planes; ++p) {
    const T* xp = xv.data() + p * h * w;
    T* op = out.data() + p * h * w;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        T acc = T(0);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) acc += xp[at(y + dy, xx + dx)];
        op[y * w + xx] = acc * ninth;
      }
  }
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x},
      [=](Node<T>& self) {
        auto& g = input_grad(self, 0);
        for (std::size_t p = 0; p < planes; ++p) {
          const T* gp = self.grad.data() + p * h * w;
          T* dp = g.data() + p * h * w;
          for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
              const T v = gp[y * w + xx] * ninth;
              for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) dp[at(y + dy, xx + dx)] += v;
            }
        }
      },
      "box_filter3");
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const auto xv = x.values();
  double acc = 0.0;
  for (T v : xv) acc += v;
  return Tensor<T>::from_op(
      {}, {static_cast<T>(acc)}, {x},
      [](Node<T>& self) {
        auto& g = input_grad(self, 0);
        for (auto& v : g) v += self.grad[0];
      },
      "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const auto xv = x.values();
  if (xv.empty()) throw DimensionError("mean of empty tensor");
  double acc = 0.0;
  for (T v : xv) acc += v;
  const T inv = T(1) / static_cast<T>(xv.size());
  return Tensor<T>::from_op(
      {}, {static_cast<T>(acc / static_cast<double>(xv.size()))}, {x},
      [inv](Node<T>& self) {
        auto& g = input_grad(self, 0);
        for (auto& v : g) v += self.grad[0] * inv;
      },
      "mean");
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  const auto av = a.values(), bv = b.values();
  if (av.empty()) throw DimensionError("mse of empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - bv[i];
    acc += d * d;
  }
  const double count = static_cast<double>(av.size());
  return Tensor<T>::from_op(
      {}, {static_cast<T>(acc / count)}, {a, b},
      [count](Node<T>& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        const T k = static_cast<T>(2.0 / count) * self.grad[0];
        if (wants_grad(self, 0)) {
          auto& g = input_grad(self, 0);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * (av[i] - bv[i]);
        }
        if (wants_grad(self, 1)) {
          auto& g = input_grad(self, 1);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * (av[i] - bv[i]);
        }
      },
      "mse");
}

template <typename T>
Tensor<T> mean_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mean_abs_diff");
  const auto av = a.values(), bv = b.values();
  if (av.empty()) throw DimensionError("mean_abs_diff of empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(static_cast<double>(av[i]) - bv[i]);
  const double count = static_cast<double>(av.size());
  return Tensor<T>::from_op(
      {}, {static_cast<T>(acc / count)}, {a, b},
      [count](Node<T>& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        const T k = static_cast<T>(1.0 / count) * self.grad[0];
        auto sign = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
        if (wants_grad(self, 0)) {
          auto& g = input_grad(self, 0);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * sign(av[i] - bv[i]);
        }
        if (wants_grad(self, 1)) {
          auto& g = input_grad(self, 1);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * sign(av[i] - bv[i]);
        }
      },
      "mean_abs_diff");
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "cross_entropy");
  const int n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != static_cast<std::size_t>(n)) throw DimensionError("cross_entropy: labels");
  const auto lv = logits.values();
  auto prob = std::make_shared<std::vector<T>>(lv.size());
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= k) throw IndexError("cross_entropy: label out of range");
    const T* row = lv.data() + static_cast<std::size_t>(i) * k;
    const T mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    for (int j = 0; j < k; ++j)
      (*prob)[static_cast<std::size_t>(i) * k + j] = static_cast<T>(std::exp(row[j] - mx) / z);
    loss += std::log(z) - (row[y] - mx);
  }
  return Tensor<T>::from_op(
      {}, {static_cast<T>(loss / n)}, {logits},
      [prob, lab, n, k](Node<T>& self) {
        auto& g = input_grad(self, 0);
        const T s = self.grad[0] / static_cast<T>(n);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < k; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * k + j;
            g[idx] += s * ((*prob)[idx] - ((*lab)[i] == j ? T(1) : T(0)));
          }
      },
      "cross_entropy");
}

#define SALD_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions); \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                 Tensor<T>&, Tensor<T>&, BatchNormOptions);                       \
  template Tensor<T> activation(const Tensor<T>&, Activation);                                    \
  template Tensor<T> resample(const Tensor<T>&, int, Direction);                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scale(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> affine(const Tensor<T>&, T, T);                                              \
  template Tensor<T> scale_per_sample(const Tensor<T>&, std::span<const T>);                      \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                  \
  template Tensor<T> slice(const Tensor<T>&, int, int, int);                                      \
  template std::vector<Tensor<T>> split(const Tensor<T>&, int, const std::vector<int>&);          \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                            \
  template Tensor<T> add_channel_bias(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> mul_channel(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                           \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                               \
  template Tensor<T> box_filter3(const Tensor<T>&);                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                       \
  template Tensor<T> mean(const Tensor<T>&);                                                      \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mean_abs_diff(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);

SALD_INSTANTIATE_OPS(float)
SALD_INSTANTIATE_OPS(double)

}  // namespace sald::nn
