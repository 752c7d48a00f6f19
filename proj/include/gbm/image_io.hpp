#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gbm/image.hpp"

namespace gbm {

enum class ImageFormat { png, jpeg, bmp, unknown };

// Sniffs the leading magic bytes; `unknown` for anything that is not a
// supported raster format.
ImageFormat detect_format(const std::filesystem::path& path);

// Decodes PNG/JPEG/BMP into 1 or 3 float planes with raw 0..255 values.
// 16-bit depths are reduced to 8, alpha is dropped, palettes are expanded.
// Throws IoError on unreadable/corrupt files, ValidationError on zero-area
// images.
std::vector<PlaneF> read_image(const std::filesystem::path& path);

// Cheap validity probe used by the dataset scanner: true when the file
// decodes far enough to yield a nonzero-area raster.
bool probe_image(const std::filesystem::path& path);

// 8-bit grayscale PNG. Values are clamped to [0, 255] and rounded.
void write_png_gray(const std::filesystem::path& path, const PlaneF& plane);

// 8-bit RGB PNG.
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);

// Class-index mask as an 8-bit grayscale PNG (pixel value == class id).
void write_png_mask(const std::filesystem::path& path, const SegmentationMask& mask);
SegmentationMask read_png_mask(const std::filesystem::path& path);

}  // namespace gbm
