#pragma once

#include <cmath>
#include <vector>

#include "gbm/image.hpp"

namespace gbm {

struct PreprocessConfig {
  int target_side = 256;
  int gaussian_kernel = 5;
  double gaussian_sigma = 1.0;
  bool sharpen_enabled = true;
  bool normalize = true;

  void validate() const {
    if (target_side < 16) throw ConfigError("target_side must be >= 16");
    if (gaussian_kernel < 3 || gaussian_kernel % 2 == 0) {
      throw ConfigError("gaussian_kernel must be odd and >= 3");
    }
    if (!(gaussian_sigma > 0.0)) throw ConfigError("gaussian_sigma must be > 0");
  }
};

// Mirrors the index back into [0, n) (symmetric reflection, edge repeated).
inline Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

// Luminance reduction 0.299 R + 0.587 G + 0.114 B; grayscale passes through.
template <typename Scalar>
Plane<Scalar> to_grayscale(const std::vector<Plane<Scalar>>& channels) {
  if (channels.size() == 1) return channels[0];
  if (channels.size() != 3) {
    throw ValidationError("to_grayscale expects 1 or 3 channels, got " +
                          std::to_string(channels.size()));
  }
  const auto& r = channels[0];
  const auto& g = channels[1];
  const auto& b = channels[2];
  if (r.rows() != g.rows() || r.rows() != b.rows() || r.cols() != g.cols() || r.cols() != b.cols()) {
    throw ValidationError("channel planes disagree on dimensions");
  }
  Plane<Scalar> out(r.rows(), r.cols());
  for (Eigen::Index y = 0; y < r.rows(); ++y) {
    for (Eigen::Index x = 0; x < r.cols(); ++x) {
      out(y, x) = static_cast<Scalar>(0.299 * r(y, x) + 0.587 * g(y, x) + 0.114 * b(y, x));
    }
  }
  return out;
}

// Bilinear resize with half-pixel centers. Same-size resize is an exact copy.
template <typename Scalar>
Plane<Scalar> resize_bilinear(const Plane<Scalar>& in, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ValidationError("resize target must be >= 1 pixel");
  if (in.size() == 0) throw ValidationError("cannot resize an empty image");
  const Eigen::Index ih = in.rows(), iw = in.cols();
  Plane<Scalar> out(out_h, out_w);
  const double sy = static_cast<double>(ih) / out_h;
  const double sx = static_cast<double>(iw) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(ih - 1));
    const Eigen::Index y0 = static_cast<Eigen::Index>(std::floor(fy));
    const Eigen::Index y1 = std::min(y0 + 1, ih - 1);
    const double wy = fy - static_cast<double>(y0);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(iw - 1));
      const Eigen::Index x0 = static_cast<Eigen::Index>(std::floor(fx));
      const Eigen::Index x1 = std::min(x0 + 1, iw - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = (1.0 - wx) * in(y0, x0) + wx * in(y0, x1);
      const double bot = (1.0 - wx) * in(y1, x0) + wx * in(y1, x1);
      out(y, x) = static_cast<Scalar>((1.0 - wy) * top + wy * bot);
    }
  }
  return out;
}

inline SegmentationMask resize_nearest_mask(const SegmentationMask& in, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ValidationError("resize target must be >= 1 pixel");
  SegmentationMask out(out_h, out_w);
  const double sy = static_cast<double>(in.rows()) / out_h;
  const double sx = static_cast<double>(in.cols()) / out_w;
  for (int y = 0; y < out_h; ++y) {
    Eigen::Index src_y = static_cast<Eigen::Index>(std::floor((y + 0.5) * sy));
    src_y = std::min(std::max<Eigen::Index>(src_y, 0), in.rows() - 1);
    for (int x = 0; x < out_w; ++x) {
      Eigen::Index src_x = static_cast<Eigen::Index>(std::floor((x + 0.5) * sx));
      src_x = std::min(std::max<Eigen::Index>(src_x, 0), in.cols() - 1);
      out(y, x) = in(src_y, src_x);
    }
  }
  return out;
}

inline std::vector<double> gaussian_kernel_weights(int kernel, double sigma) {
  const int r = kernel / 2;
  std::vector<double> w(static_cast<size_t>(kernel));
  double sum = 0.0;
  for (int i = 0; i < kernel; ++i) {
    const double d = i - r;
    w[static_cast<size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += w[static_cast<size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable Gaussian, reflected borders, kernel normalized to sum 1.
template <typename Scalar>
Plane<Scalar> gaussian_blur(const Plane<Scalar>& in, int kernel, double sigma) {
  if (kernel < 1 || kernel % 2 == 0) throw ValidationError("gaussian kernel size must be odd");
  if (!(sigma > 0.0)) throw ValidationError("gaussian sigma must be > 0");
  if (in.size() == 0) throw ValidationError("cannot blur an empty image");
  const std::vector<double> w = gaussian_kernel_weights(kernel, sigma);
  const int r = kernel / 2;
  const Eigen::Index h = in.rows(), cols = in.cols();

  Plane<Scalar> horiz(h, cols);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        acc += w[static_cast<size_t>(k + r)] * in(y, reflect_index(x + k, cols));
      }
      horiz(y, x) = static_cast<Scalar>(acc);
    }
  }
  Plane<Scalar> out(h, cols);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        acc += w[static_cast<size_t>(k + r)] * horiz(reflect_index(y + k, h), x);
      }
      out(y, x) = static_cast<Scalar>(acc);
    }
  }
  return out;
}

// Identity-plus-Laplacian high-pass (center 5, cross -1), reflected borders,
// clamped to [0, max_value].
template <typename Scalar>
Plane<Scalar> sharpen(const Plane<Scalar>& in, Scalar max_value = Scalar(1)) {
  if (in.size() == 0) throw ValidationError("cannot sharpen an empty image");
  const Eigen::Index h = in.rows(), cols = in.cols();
  Plane<Scalar> out(h, cols);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      const double center = in(y, x);
      const double cross = in(reflect_index(y - 1, h), x) + in(reflect_index(y + 1, h), x) +
                           in(y, reflect_index(x - 1, cols)) + in(y, reflect_index(x + 1, cols));
      const double v = 5.0 * center - cross;
      out(y, x) = static_cast<Scalar>(std::min(static_cast<double>(max_value), std::max(0.0, v)));
    }
  }
  return out;
}

// Raw convolution value before clamping; test hook for overshoot checks.
template <typename Scalar>
double sharpen_response_at(const Plane<Scalar>& in, Eigen::Index y, Eigen::Index x) {
  const Eigen::Index h = in.rows(), cols = in.cols();
  const double cross = in(reflect_index(y - 1, h), x) + in(reflect_index(y + 1, h), x) +
                       in(y, reflect_index(x - 1, cols)) + in(y, reflect_index(x + 1, cols));
  return 5.0 * in(y, x) - cross;
}

// grayscale -> resize -> blur -> sharpen -> normalize, in that order.
inline ImageSample preprocess_pipeline(const ImageSample& sample, const PreprocessConfig& config) {
  config.validate();
  if (sample.channels.empty()) throw ValidationError("sample '" + sample.id + "' has no pixel data");

  PlaneF gray = to_grayscale(sample.channels);
  PlaneF img = resize_bilinear(gray, config.target_side, config.target_side);
  img = gaussian_blur(img, config.gaussian_kernel, config.gaussian_sigma);
  const float max_value = sample.normalized ? 1.0f : 255.0f;
  if (config.sharpen_enabled) img = sharpen(img, max_value);

  ImageSample out;
  out.label = sample.label;
  out.id = sample.id;
  out.path = sample.path;
  out.normalized = sample.normalized;
  if (config.normalize && !sample.normalized) {
    img /= 255.0f;
    out.normalized = true;
  }
  out.channels.push_back(std::move(img));
  if (sample.mask) {
    out.mask = resize_nearest_mask(*sample.mask, config.target_side, config.target_side);
  }
  return out;
}

}  // namespace gbm
