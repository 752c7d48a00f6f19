#pragma once

#include <Eigen/Dense>
#include <algorithm>

#include "gbm/tensor.hpp"

namespace gbm {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline int conv_out_size(int in, int k, int stride, int pad, int dil) {
  const int eff = dil * (k - 1) + 1;
  const int span = in + 2 * pad - eff;
  if (span < 0) throw ValidationError("convolution window exceeds padded input");
  if (stride <= 0) throw ValidationError("stride must be > 0");
  return span / stride + 1;
}

namespace detail {

// Output rows per im2col strip so the column buffer stays within a fixed
// element budget (keeps peak memory flat for large feature maps).
inline int conv_strip_rows(int patch, int ow, int oh) {
  constexpr Eigen::Index kBudget = Eigen::Index(1) << 22;
  const Eigen::Index per_row = static_cast<Eigen::Index>(patch) * ow;
  const int rows = per_row > 0 ? static_cast<int>(std::max<Eigen::Index>(1, kBudget / per_row)) : oh;
  return std::min(std::max(rows, 1), std::max(oh, 1));
}

// Unfolds output rows [r0, r1) of sample ni into col (patch x positions).
template <typename S>
void im2col_strip(const Tensor<S>& x, int ni, int k, int stride, int pad, int dil, int ow, int r0,
                  int r1, MatRM<S>& col) {
  const Eigen::Index m = static_cast<Eigen::Index>(r1 - r0) * ow;
  for (int ci = 0; ci < x.c; ++ci) {
    const auto src = x.plane(ni, ci);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int row = (ci * k + ky) * k + kx;
        S* dst = col.data() + static_cast<Eigen::Index>(row) * m;
        for (int r = r0; r < r1; ++r) {
          const int sy = r * stride - pad + ky * dil;
          if (sy < 0 || sy >= x.h) {
            std::fill(dst, dst + ow, S(0));
            dst += ow;
            continue;
          }
          for (int cc = 0; cc < ow; ++cc) {
            const int sx = cc * stride - pad + kx * dil;
            *dst++ = (sx >= 0 && sx < x.w) ? src(sy, sx) : S(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a column gradient strip back onto the input gradient.
template <typename S>
void col2im_strip_add(const MatRM<S>& gcol, int ni, int k, int stride, int pad, int dil, int ow,
                      int r0, int r1, Tensor<S>& gx) {
  const Eigen::Index m = static_cast<Eigen::Index>(r1 - r0) * ow;
  for (int ci = 0; ci < gx.c; ++ci) {
    auto dst = gx.plane(ni, ci);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int row = (ci * k + ky) * k + kx;
        const S* src = gcol.data() + static_cast<Eigen::Index>(row) * m;
        for (int r = r0; r < r1; ++r) {
          const int sy = r * stride - pad + ky * dil;
          if (sy < 0 || sy >= gx.h) {
            src += ow;
            continue;
          }
          for (int cc = 0; cc < ow; ++cc) {
            const int sx = cc * stride - pad + kx * dil;
            if (sx >= 0 && sx < gx.w) dst(sy, sx) += src[cc];
          }
          src += ow;
        }
      }
    }
  }
}

}  // namespace detail

// weight is (out_ch, in_ch, k, k); bias, when given, holds out_ch values.
template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>* bias,
                         int stride, int pad, int dil) {
  if (weight.c != x.c) throw ValidationError("conv2d: weight/input channel mismatch");
  if (weight.h != weight.w) throw ValidationError("conv2d: kernels must be square");
  const int k = weight.h;
  const int oh = conv_out_size(x.h, k, stride, pad, dil);
  const int ow = conv_out_size(x.w, k, stride, pad, dil);
  const int patch = x.c * k * k;
  Tensor<S> y(x.n, weight.n, oh, ow);
  Eigen::Map<const MatRM<S>> wmat(weight.data.data(), weight.n, patch);
  const int strip = detail::conv_strip_rows(patch, ow, oh);
  MatRM<S> col, out;
  for (int ni = 0; ni < x.n; ++ni) {
    for (int r0 = 0; r0 < oh; r0 += strip) {
      const int r1 = std::min(oh, r0 + strip);
      const Eigen::Index m = static_cast<Eigen::Index>(r1 - r0) * ow;
      col.resize(patch, m);
      detail::im2col_strip(x, ni, k, stride, pad, dil, ow, r0, r1, col);
      out.resize(weight.n, m);
      out.noalias() = wmat * col;
      for (int oc = 0; oc < weight.n; ++oc) {
        Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> dst(
            y.data.data() + y.offset(ni, oc) + static_cast<Eigen::Index>(r0) * ow, m);
        Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> src(
            out.data() + static_cast<Eigen::Index>(oc) * m, m);
        dst = bias ? (src + bias->data[oc]).eval() : src.eval();
      }
    }
  }
  return y;
}

// Accumulates into gweight (and gx/gbias when non-null); callers zero grads
// at step boundaries, not here.
template <typename S>
void conv2d_backward(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& gy, int stride,
                     int pad, int dil, Tensor<S>* gx, Tensor<S>& gweight, Tensor<S>* gbias) {
  const int k = weight.h;
  const int oh = gy.h, ow = gy.w;
  const int patch = x.c * k * k;
  Eigen::Map<const MatRM<S>> wmat(weight.data.data(), weight.n, patch);
  Eigen::Map<MatRM<S>> gwmat(gweight.data.data(), weight.n, patch);
  const int strip = detail::conv_strip_rows(patch, ow, oh);
  MatRM<S> col, gcol, gout;
  for (int ni = 0; ni < x.n; ++ni) {
    for (int r0 = 0; r0 < oh; r0 += strip) {
      const int r1 = std::min(oh, r0 + strip);
      const Eigen::Index m = static_cast<Eigen::Index>(r1 - r0) * ow;
      gout.resize(weight.n, m);
      for (int oc = 0; oc < weight.n; ++oc) {
        std::copy_n(gy.data.data() + gy.offset(ni, oc) + static_cast<Eigen::Index>(r0) * ow, m,
                    gout.data() + static_cast<Eigen::Index>(oc) * m);
      }
      col.resize(patch, m);
      detail::im2col_strip(x, ni, k, stride, pad, dil, ow, r0, r1, col);
      gwmat.noalias() += gout * col.transpose();
      if (gbias) {
        for (int oc = 0; oc < weight.n; ++oc) gbias->data[oc] += gout.row(oc).sum();
      }
      if (gx) {
        gcol.resize(patch, m);
        gcol.noalias() = wmat.transpose() * gout;
        detail::col2im_strip_add(gcol, ni, k, stride, pad, dil, ow, r0, r1, *gx);
      }
    }
  }
}

}  // namespace gbm
