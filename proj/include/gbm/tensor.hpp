#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "gbm/errors.hpp"
#include "gbm/image.hpp"

namespace gbm {

// Dense NCHW activation/parameter storage backed by a single contiguous
// Eigen array. Feature maps are exposed as row-major plane maps so image
// utilities and GEMM views share the same memory.
template <typename Scalar>
struct Tensor {
  using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<Plane<Scalar>>;
  using ConstPlaneMap = Eigen::Map<const Plane<Scalar>>;

  int n = 0, c = 0, h = 0, w = 0;
  Buffer data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0) throw ValidationError("tensor dims must be >= 0");
    data = Buffer::Zero(static_cast<Eigen::Index>(n_) * c_ * h_ * w_);
  }

  Eigen::Index size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  Eigen::Index offset(int ni, int ci) const {
    return ((static_cast<Eigen::Index>(ni) * c) + ci) * h * w;
  }
  Scalar& at(int ni, int ci, int y, int x) {
    return data[offset(ni, ci) + static_cast<Eigen::Index>(y) * w + x];
  }
  Scalar at(int ni, int ci, int y, int x) const {
    return data[offset(ni, ci) + static_cast<Eigen::Index>(y) * w + x];
  }

  PlaneMap plane(int ni, int ci) { return PlaneMap(data.data() + offset(ni, ci), h, w); }
  ConstPlaneMap plane(int ni, int ci) const {
    return ConstPlaneMap(data.data() + offset(ni, ci), h, w);
  }

  void setZero() { data.setZero(); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(n, c, h, w);
    out.data = data.template cast<Other>();
    return out;
  }

  static Tensor from_planes(const std::vector<Plane<Scalar>>& planes) {
    if (planes.empty()) throw ValidationError("from_planes requires at least one plane");
    Tensor out(1, static_cast<int>(planes.size()), static_cast<int>(planes[0].rows()),
               static_cast<int>(planes[0].cols()));
    for (int ci = 0; ci < out.c; ++ci) {
      if (planes[ci].rows() != out.h || planes[ci].cols() != out.w) {
        throw ValidationError("from_planes requires equally sized planes");
      }
      out.plane(0, ci) = planes[ci];
    }
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace gbm
