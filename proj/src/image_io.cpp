#include "gbm/image_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <jpeglib.h>

#include "gbm/errors.hpp"

namespace gbm {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return f;
}

// ---- PNG ----

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

std::vector<PlaneF> read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("'" + path.string() + "' is not a valid PNG file");
  }
  std::rewind(f.get());

  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) throw IoError("libpng init failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw IoError("libpng init failed");
  if (setjmp(png_jmpbuf(r.png))) {
    throw IoError("corrupt PNG '" + path.string() + "'");
  }
  png_init_io(r.png, f.get());
  // STRIP_16 + EXPAND + STRIP_ALPHA normalizes every PNG variant to 8-bit
  // gray or RGB; interlacing is resolved internally.
  png_read_png(r.png, r.info,
               PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA,
               nullptr);

  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  if (w == 0 || h == 0) throw ValidationError("zero-area image '" + path.string() + "'");
  const int channels = png_get_channels(r.png, r.info);
  if (channels != 1 && channels != 3) {
    throw IoError("unsupported PNG channel count " + std::to_string(channels) + " in '" +
                  path.string() + "'");
  }
  png_bytepp rows = png_get_rows(r.png, r.info);

  std::vector<PlaneF> planes(static_cast<size_t>(channels), PlaneF(h, w));
  for (png_uint_32 y = 0; y < h; ++y) {
    const png_bytep row = rows[y];
    for (png_uint_32 x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        planes[static_cast<size_t>(c)](y, x) = static_cast<float>(row[x * channels + c]);
      }
    }
  }
  return planes;
}

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

void write_png_8bit(const std::filesystem::path& path, int h, int w, int channels,
                    const std::vector<unsigned char>& bytes) {
  if (auto parent = path.parent_path(); !parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  FilePtr f = open_file(path, "wb");
  PngWriter wr;
  wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!wr.png) throw IoError("libpng init failed");
  wr.info = png_create_info_struct(wr.png);
  if (!wr.info) throw IoError("libpng init failed");
  if (setjmp(png_jmpbuf(wr.png))) {
    throw IoError("PNG write failed for '" + path.string() + "'");
  }
  png_init_io(wr.png, f.get());
  png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) {
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(bytes.data() + static_cast<size_t>(y) * w * channels);
  }
  png_set_rows(wr.png, wr.info, rows.data());
  png_write_png(wr.png, wr.info, PNG_TRANSFORM_IDENTITY, nullptr);
}

// ---- JPEG ----

struct JpegErrorMgr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

std::vector<PlaneF> read_jpeg(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.mgr);
  jerr.mgr.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("corrupt JPEG '" + path.string() + "'");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);

  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  const int channels = cinfo.output_components;
  if (w == 0 || h == 0) {
    jpeg_destroy_decompress(&cinfo);
    throw ValidationError("zero-area image '" + path.string() + "'");
  }
  if (channels != 1 && channels != 3) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("unsupported JPEG channel count in '" + path.string() + "'");
  }

  std::vector<unsigned char> row(static_cast<size_t>(w) * channels);
  std::vector<PlaneF> planes(static_cast<size_t>(channels), PlaneF(h, w));
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* rowp = row.data();
    const int y = static_cast<int>(cinfo.output_scanline);
    jpeg_read_scanlines(&cinfo, &rowp, 1);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        planes[static_cast<size_t>(c)](y, x) = static_cast<float>(row[x * channels + c]);
      }
    }
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return planes;
}

// ---- BMP (uncompressed 24-bit and 8-bit grayscale palette) ----

uint32_t le32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t le16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

std::vector<PlaneF> read_bmp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 54 || buf[0] != 'B' || buf[1] != 'M') {
    throw IoError("'" + path.string() + "' is not a valid BMP file");
  }
  const uint32_t data_offset = le32(&buf[10]);
  const uint32_t header_size = le32(&buf[14]);
  if (header_size < 40) throw IoError("unsupported BMP header in '" + path.string() + "'");
  const int32_t w = static_cast<int32_t>(le32(&buf[18]));
  const int32_t h_raw = static_cast<int32_t>(le32(&buf[22]));
  const bool top_down = h_raw < 0;
  const int32_t h = top_down ? -h_raw : h_raw;
  const uint16_t bpp = le16(&buf[28]);
  const uint32_t compression = le32(&buf[30]);
  if (w <= 0 || h <= 0) throw ValidationError("zero-area image '" + path.string() + "'");
  if (compression != 0 || (bpp != 24 && bpp != 8)) {
    throw IoError("unsupported BMP variant (bpp=" + std::to_string(bpp) + ") in '" + path.string() +
                  "'");
  }
  const size_t row_stride = (static_cast<size_t>(w) * bpp / 8 + 3) & ~size_t{3};
  if (buf.size() < data_offset + row_stride * static_cast<size_t>(h)) {
    throw IoError("truncated BMP '" + path.string() + "'");
  }

  const int channels = bpp == 24 ? 3 : 1;
  std::vector<PlaneF> planes(static_cast<size_t>(channels), PlaneF(h, w));
  for (int32_t y = 0; y < h; ++y) {
    const int32_t src_y = top_down ? y : h - 1 - y;
    const unsigned char* row = buf.data() + data_offset + row_stride * static_cast<size_t>(src_y);
    for (int32_t x = 0; x < w; ++x) {
      if (bpp == 24) {
        // BMP stores BGR
        planes[0](y, x) = static_cast<float>(row[x * 3 + 2]);
        planes[1](y, x) = static_cast<float>(row[x * 3 + 1]);
        planes[2](y, x) = static_cast<float>(row[x * 3 + 0]);
      } else {
        planes[0](y, x) = static_cast<float>(row[x]);
      }
    }
  }
  return planes;
}

}  // namespace

ImageFormat detect_format(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return ImageFormat::unknown;
  unsigned char magic[8] = {};
  in.read(reinterpret_cast<char*>(magic), 8);
  if (in.gcount() >= 8 && png_sig_cmp(magic, 0, 8) == 0) return ImageFormat::png;
  if (in.gcount() >= 3 && magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) {
    return ImageFormat::jpeg;
  }
  if (in.gcount() >= 2 && magic[0] == 'B' && magic[1] == 'M') return ImageFormat::bmp;
  return ImageFormat::unknown;
}

std::vector<PlaneF> read_image(const std::filesystem::path& path) {
  switch (detect_format(path)) {
    case ImageFormat::png:
      return read_png(path);
    case ImageFormat::jpeg:
      return read_jpeg(path);
    case ImageFormat::bmp:
      return read_bmp(path);
    default:
      throw IoError("'" + path.string() + "' is not a supported raster image (PNG/JPEG/BMP)");
  }
}

bool probe_image(const std::filesystem::path& path) {
  try {
    auto planes = read_image(path);
    return !planes.empty() && planes[0].size() > 0;
  } catch (const std::exception&) {
    return false;
  }
}

void write_png_gray(const std::filesystem::path& path, const PlaneF& plane) {
  const int h = static_cast<int>(plane.rows());
  const int w = static_cast<int>(plane.cols());
  std::vector<unsigned char> bytes(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float v = std::min(255.0f, std::max(0.0f, plane(y, x)));
      bytes[static_cast<size_t>(y) * w + x] = static_cast<unsigned char>(std::lround(v));
    }
  }
  write_png_8bit(path, h, w, 1, bytes);
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
  write_png_8bit(path, image.height, image.width, 3, image.data);
}

void write_png_mask(const std::filesystem::path& path, const SegmentationMask& mask) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  std::vector<unsigned char> bytes(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int v = mask(y, x);
      if (v < 0 || v > 255) {
        throw ValidationError("mask class id " + std::to_string(v) + " outside 0..255");
      }
      bytes[static_cast<size_t>(y) * w + x] = static_cast<unsigned char>(v);
    }
  }
  write_png_8bit(path, h, w, 1, bytes);
}

SegmentationMask read_png_mask(const std::filesystem::path& path) {
  auto planes = read_image(path);
  if (planes.size() != 1) {
    throw ValidationError("mask '" + path.string() + "' must be single-channel");
  }
  const auto& p = planes[0];
  SegmentationMask mask(p.rows(), p.cols());
  for (Eigen::Index y = 0; y < p.rows(); ++y) {
    for (Eigen::Index x = 0; x < p.cols(); ++x) {
      mask(y, x) = static_cast<int>(std::lround(p(y, x)));
    }
  }
  return mask;
}

}  // namespace gbm
