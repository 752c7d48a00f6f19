#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "gbm/errors.hpp"

namespace gbm {

// A single image channel, row-major so that memory order matches pixel
// raster order.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using PlaneF = Plane<float>;

// Per-pixel class labels (0 = background, 1 = tumor, 2 = edema,
// 3 = healthy tissue for the default 4-class palette).
using SegmentationMask = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Decoded image plus provenance. Channels hold either one grayscale plane
// or three planes in R, G, B order. Intensities are raw 0..255 floats as
// decoded; `normalized` flips to true once the preprocessing pipeline has
// mapped them into [0, 1].
struct ImageSample {
  std::vector<PlaneF> channels;
  int label = 0;
  std::optional<SegmentationMask> mask;
  std::string id;
  std::string path;
  bool normalized = false;

  int height() const { return channels.empty() ? 0 : static_cast<int>(channels[0].rows()); }
  int width() const { return channels.empty() ? 0 : static_cast<int>(channels[0].cols()); }
  bool needs_grayscale() const { return channels.size() > 1; }

  const PlaneF& gray() const {
    if (channels.size() != 1) {
      throw ValidationError("image '" + id + "' has " + std::to_string(channels.size()) +
                            " channels; expected 1 (run to_grayscale first)");
    }
    return channels[0];
  }
};

// Packed 8-bit RGB raster, the unit of PNG overlay output.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<unsigned char> data;  // height*width*3, row-major, RGB interleaved

  unsigned char& at(int r, int c, int ch) { return data[static_cast<size_t>(r * width + c) * 3 + ch]; }
  unsigned char at(int r, int c, int ch) const { return data[static_cast<size_t>(r * width + c) * 3 + ch]; }
};

inline bool all_finite(const PlaneF& p) { return p.isFinite().all(); }

}  // namespace gbm
