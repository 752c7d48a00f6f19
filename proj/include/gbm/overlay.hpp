#pragma once

#include <vector>

#include "gbm/image.hpp"

namespace gbm {

struct ClassColor {
  unsigned char r = 0, g = 0, b = 0;
};

// Palette for classes 1, 2, 3, ... (class 0 is the unpainted background);
// cycles when a mask has more classes than colors.
const std::vector<ClassColor>& default_palette();

// Grayscale base promoted to RGB with each nonzero class tinted at the given
// alpha. Image values are unit-interval.
RgbImage render_overlay(const PlaneF& image, const SegmentationMask& mask,
                        const std::vector<ClassColor>& colors = default_palette(),
                        double alpha = 0.4);

}  // namespace gbm
