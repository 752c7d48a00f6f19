#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <random>

#include "gbm/image.hpp"

namespace gbm {

struct AugmentConfig {
  double rotation_max_deg = 15.0;
  std::array<double, 2> scale_range{0.9, 1.1};
  double flip_horizontal_prob = 0.5;
  double shear_max_deg = 10.0;
  double noise_sigma = 0.02;
  std::array<double, 2> contrast_range{0.8, 1.2};
  uint64_t seed = 0;

  void validate() const {
    if (rotation_max_deg < 0.0 || rotation_max_deg > 180.0) {
      throw ConfigError("rotation_max_deg must lie in [0, 180]");
    }
    if (scale_range[0] > scale_range[1] || scale_range[0] <= 0.0) {
      throw ConfigError("scale_range must satisfy 0 < min <= max");
    }
    if (flip_horizontal_prob < 0.0 || flip_horizontal_prob > 1.0) {
      throw ConfigError("flip_horizontal_prob must lie in [0, 1]");
    }
    if (shear_max_deg < 0.0 || shear_max_deg >= 45.0) {
      throw ConfigError("shear_max_deg must lie in [0, 45)");
    }
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
    if (contrast_range[0] > contrast_range[1] || contrast_range[0] <= 0.0) {
      throw ConfigError("contrast_range must satisfy 0 < min <= max");
    }
  }

  static AugmentConfig identity() {
    AugmentConfig c;
    c.rotation_max_deg = 0.0;
    c.scale_range = {1.0, 1.0};
    c.flip_horizontal_prob = 0.0;
    c.shear_max_deg = 0.0;
    c.noise_sigma = 0.0;
    c.contrast_range = {1.0, 1.0};
    return c;
  }
};

namespace detail {

inline double snap_integral(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

// Inverse-mapped affine warp about the image center. The 2x2 matrix maps
// output coordinates (x = col, y = row) back to source coordinates.
// Bilinear with zero fill for the image, nearest neighbor for the mask.
template <typename Scalar>
std::pair<Plane<Scalar>, std::optional<SegmentationMask>> warp_affine(
    const Plane<Scalar>& image, const std::optional<SegmentationMask>& mask, double m00, double m01,
    double m10, double m11) {
  const Eigen::Index h = image.rows(), w = image.cols();
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  Plane<Scalar> out = Plane<Scalar>::Zero(h, w);
  std::optional<SegmentationMask> mask_out;
  if (mask) mask_out = SegmentationMask::Zero(h, w);

  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double sx = snap_integral(m00 * dx + m01 * dy + cx);
      const double sy = snap_integral(m10 * dx + m11 * dy + cy);

      const Eigen::Index x0 = static_cast<Eigen::Index>(std::floor(sx));
      const Eigen::Index y0 = static_cast<Eigen::Index>(std::floor(sy));
      const double wx = sx - static_cast<double>(x0);
      const double wy = sy - static_cast<double>(y0);
      auto tap = [&](Eigen::Index yy, Eigen::Index xx) -> double {
        return (yy >= 0 && yy < h && xx >= 0 && xx < w) ? static_cast<double>(image(yy, xx)) : 0.0;
      };
      if (wx == 0.0 && wy == 0.0) {
        out(y, x) = (y0 >= 0 && y0 < h && x0 >= 0 && x0 < w) ? image(y0, x0) : Scalar(0);
      } else {
        const double top = (1.0 - wx) * tap(y0, x0) + wx * tap(y0, x0 + 1);
        const double bot = (1.0 - wx) * tap(y0 + 1, x0) + wx * tap(y0 + 1, x0 + 1);
        out(y, x) = static_cast<Scalar>((1.0 - wy) * top + wy * bot);
      }
      if (mask_out) {
        const Eigen::Index nx = static_cast<Eigen::Index>(std::lround(sx));
        const Eigen::Index ny = static_cast<Eigen::Index>(std::lround(sy));
        (*mask_out)(y, x) = (ny >= 0 && ny < h && nx >= 0 && nx < w) ? (*mask)(ny, nx) : 0;
      }
    }
  }
  return {std::move(out), std::move(mask_out)};
}

}  // namespace detail

// Rotation about the image center; right angles resolve exactly.
template <typename Scalar>
std::pair<Plane<Scalar>, std::optional<SegmentationMask>> rotate(
    const Plane<Scalar>& image, const std::optional<SegmentationMask>& mask, double degrees) {
  if (std::abs(degrees) > 180.0) throw ValidationError("rotation angle must satisfy |deg| <= 180");
  const double rad = degrees * M_PI / 180.0;
  const double c = detail::snap_integral(std::cos(rad));
  const double s = detail::snap_integral(std::sin(rad));
  // Inverse of [[c, -s], [s, c]].
  return detail::warp_affine(image, mask, c, s, -s, c);
}

template <typename Scalar>
std::pair<Plane<Scalar>, std::optional<SegmentationMask>> scale(
    const Plane<Scalar>& image, const std::optional<SegmentationMask>& mask, double factor) {
  if (!(factor > 0.0)) throw ValidationError("scale factor must be > 0");
  const double inv = detail::snap_integral(1.0 / factor);
  return detail::warp_affine(image, mask, inv, 0.0, 0.0, inv);
}

template <typename Scalar>
std::pair<Plane<Scalar>, std::optional<SegmentationMask>> flip_horizontal(
    const Plane<Scalar>& image, const std::optional<SegmentationMask>& mask) {
  Plane<Scalar> out = image.rowwise().reverse();
  std::optional<SegmentationMask> mask_out;
  if (mask) mask_out = mask->rowwise().reverse();
  return {std::move(out), std::move(mask_out)};
}

// Horizontal shear about the center row.
template <typename Scalar>
std::pair<Plane<Scalar>, std::optional<SegmentationMask>> shear(
    const Plane<Scalar>& image, const std::optional<SegmentationMask>& mask, double degrees) {
  if (std::abs(degrees) >= 45.0) throw ValidationError("shear angle must satisfy |deg| < 45");
  const double t = detail::snap_integral(std::tan(degrees * M_PI / 180.0));
  // Forward map x' = x + t*(y - cy); inverse subtracts the same term.
  return detail::warp_affine(image, mask, 1.0, -t, 0.0, 1.0);
}

template <typename Scalar>
Plane<Scalar> add_noise(const Plane<Scalar>& image, double sigma, std::mt19937& rng) {
  if (sigma < 0.0) throw ValidationError("noise sigma must be >= 0");
  if (sigma == 0.0) return image;
  std::normal_distribution<double> dist(0.0, sigma);
  Plane<Scalar> out(image.rows(), image.cols());
  for (Eigen::Index y = 0; y < image.rows(); ++y) {
    for (Eigen::Index x = 0; x < image.cols(); ++x) {
      out(y, x) = static_cast<Scalar>(
          std::min(1.0, std::max(0.0, static_cast<double>(image(y, x)) + dist(rng))));
    }
  }
  return out;
}

// out = clamp(mean + factor * (in - mean), 0, 1) with the image's own mean.
template <typename Scalar>
Plane<Scalar> adjust_contrast(const Plane<Scalar>& image, double factor) {
  if (!(factor > 0.0)) throw ValidationError("contrast factor must be > 0");
  if (factor == 1.0) return image;
  const double mean = image.template cast<double>().mean();
  Plane<Scalar> out(image.rows(), image.cols());
  for (Eigen::Index y = 0; y < image.rows(); ++y) {
    for (Eigen::Index x = 0; x < image.cols(); ++x) {
      const double v = mean + factor * (static_cast<double>(image(y, x)) - mean);
      out(y, x) = static_cast<Scalar>(std::min(1.0, std::max(0.0, v)));
    }
  }
  return out;
}

// Draws one parameter per augmentation from the config ranges and applies
// the six operations in the fixed order rotate, scale, flip, shear, noise,
// contrast. Geometry touches image and mask alike; intensity ops touch the
// image only; the label never changes.
inline ImageSample sample_and_apply(const ImageSample& sample, const AugmentConfig& config,
                                    std::mt19937& rng) {
  config.validate();
  if (!sample.normalized) {
    throw ValidationError("augmentation expects unit-interval images (run preprocessing first)");
  }
  auto uniform = [&rng](double lo, double hi) {
    if (lo == hi) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const double rot_deg = uniform(-config.rotation_max_deg, config.rotation_max_deg);
  const double factor = uniform(config.scale_range[0], config.scale_range[1]);
  const bool flip = config.flip_horizontal_prob > 0.0 &&
                    std::bernoulli_distribution(config.flip_horizontal_prob)(rng);
  const double shear_deg = uniform(-config.shear_max_deg, config.shear_max_deg);
  const double contrast = uniform(config.contrast_range[0], config.contrast_range[1]);

  PlaneF image = sample.gray();
  std::optional<SegmentationMask> mask = sample.mask;
  if (rot_deg != 0.0) std::tie(image, mask) = rotate(image, mask, rot_deg);
  if (factor != 1.0) std::tie(image, mask) = scale(image, mask, factor);
  if (flip) std::tie(image, mask) = flip_horizontal(image, mask);
  if (shear_deg != 0.0) std::tie(image, mask) = shear(image, mask, shear_deg);
  if (config.noise_sigma > 0.0) image = add_noise(image, config.noise_sigma, rng);
  if (contrast != 1.0) image = adjust_contrast(image, contrast);

  ImageSample out;
  out.channels.push_back(std::move(image));
  out.label = sample.label;
  out.mask = std::move(mask);
  out.id = sample.id;
  out.path = sample.path;
  out.normalized = true;
  return out;
}

}  // namespace gbm
