#include "gbm/overlay.hpp"

#include <cmath>

namespace gbm {

const std::vector<ClassColor>& default_palette() {
  static const std::vector<ClassColor> palette = {
      {220, 50, 47},   // red
      {38, 139, 210},  // blue
      {133, 153, 0},   // green
      {181, 137, 0},   // yellow
      {211, 54, 130},  // magenta
      {42, 161, 152},  // cyan
  };
  return palette;
}

RgbImage render_overlay(const PlaneF& image, const SegmentationMask& mask,
                        const std::vector<ClassColor>& colors, double alpha) {
  if (image.rows() != mask.rows() || image.cols() != mask.cols()) {
    throw ValidationError("render_overlay: image/mask shape mismatch");
  }
  if (colors.empty()) throw ValidationError("render_overlay: empty palette");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("render_overlay: alpha out of [0, 1]");

  RgbImage out;
  out.height = static_cast<int>(image.rows());
  out.width = static_cast<int>(image.cols());
  out.data.resize(static_cast<size_t>(out.height) * out.width * 3);
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      const double v = std::min(std::max(static_cast<double>(image(r, c)), 0.0), 1.0);
      const double base = v * 255.0;
      double rgb[3] = {base, base, base};
      const int cls = mask(r, c);
      if (cls < 0) throw ValidationError("render_overlay: negative class label");
      if (cls > 0) {
        const ClassColor& col = colors[static_cast<size_t>(cls - 1) % colors.size()];
        rgb[0] = (1.0 - alpha) * base + alpha * col.r;
        rgb[1] = (1.0 - alpha) * base + alpha * col.g;
        rgb[2] = (1.0 - alpha) * base + alpha * col.b;
      }
      for (int ch = 0; ch < 3; ++ch) {
        out.at(static_cast<int>(r), static_cast<int>(c), ch) =
            static_cast<unsigned char>(std::lround(std::min(std::max(rgb[ch], 0.0), 255.0)));
      }
    }
  }
  return out;
}

}  // namespace gbm
