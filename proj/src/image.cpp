#include "splatstyle/image.hpp"

#include "splatstyle/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

namespace splatstyle {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw LoadError("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) {
  throw LoadError(std::string("png: ") + msg);
}

void png_warning_handler(png_structp, png_const_charp) {}

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint8_t> bytes;
};

// Decodes to 8-bit gray or RGB (alpha stripped, palettes expanded).
DecodedPng decode(const std::filesystem::path& path, bool want_gray) {
  FilePtr file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                           png_warning_handler);
  if (!png) throw LoadError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (want_gray) {
    if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
        color_type == PNG_COLOR_TYPE_PALETTE)
      throw LoadError("expected single-channel label PNG: " + path.string());
  } else if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);

  DecodedPng out;
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = want_gray ? 1 : 3;
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  if (row_bytes != std::size_t(out.width) * out.channels)
    throw LoadError("unexpected PNG layout in " + path.string());
  out.bytes.resize(row_bytes * out.height);
  std::vector<png_bytep> rows(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = out.bytes.data() + row_bytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return out;
}

void encode(const std::filesystem::path& path, int width, int height, int color_type,
            int bit_depth, const std::vector<std::uint8_t>& bytes, std::size_t row_bytes) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                            png_warning_handler);
  if (!png) throw Error("png: out of memory");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(bytes.data() + row_bytes * y);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
}

std::uint8_t to_byte(double v) {
  if (!std::isfinite(v)) v = 0.0;
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image read_png_rgb(const std::filesystem::path& path) {
  const DecodedPng png = decode(path, false);
  Image image(png.width, png.height, 3);
  for (std::size_t i = 0; i < png.bytes.size(); ++i) image.data()[Eigen::Index(i)] = png.bytes[i] / 255.0;
  return image;
}

void write_png_rgb(const Image& image, const std::filesystem::path& path) {
  if (image.channels() != 3) throw ValidationError("write_png_rgb expects 3 channels");
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(image.data().size()));
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(image.data()[Eigen::Index(i)]);
  encode(path, image.width(), image.height(), PNG_COLOR_TYPE_RGB, 8, bytes,
         std::size_t(image.width()) * 3);
}

LabelGrid read_png_labels(const std::filesystem::path& path) {
  const DecodedPng png = decode(path, true);
  LabelGrid labels(png.height, png.width);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) labels(y, x) = png.bytes[std::size_t(y) * png.width + x];
  return labels;
}

void write_png_labels(const LabelGrid& labels, const std::filesystem::path& path) {
  const int height = static_cast<int>(labels.rows());
  const int width = static_cast<int>(labels.cols());
  std::vector<std::uint8_t> bytes(std::size_t(width) * height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int v = labels(y, x);
      if (v < 0 || v > 255) throw ValidationError("label value out of 8-bit range");
      bytes[std::size_t(y) * width + x] = static_cast<std::uint8_t>(v);
    }
  encode(path, width, height, PNG_COLOR_TYPE_GRAY, 8, bytes, std::size_t(width));
}

void write_png_depth16(const Image& depth, double max_value, const std::filesystem::path& path) {
  if (depth.channels() != 1) throw ValidationError("depth map must have one channel");
  const double scale = max_value > 0 ? 65535.0 / max_value : 0.0;
  std::vector<std::uint8_t> bytes(std::size_t(depth.pixel_count()) * 2);
  for (Eigen::Index i = 0; i < depth.pixel_count(); ++i) {
    double v = depth.data()[i];
    if (!std::isfinite(v)) v = 0.0;
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v * scale, 0.0, 65535.0)));
    bytes[2 * i] = static_cast<std::uint8_t>(q >> 8);  // PNG is big-endian
    bytes[2 * i + 1] = static_cast<std::uint8_t>(q & 0xff);
  }
  encode(path, depth.width(), depth.height(), PNG_COLOR_TYPE_GRAY, 16, bytes,
         std::size_t(depth.width()) * 2);
}

void write_depth_f32(const Image& depth, const std::filesystem::path& path) {
  if (depth.channels() != 1) throw ValidationError("depth map must have one channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(depth.width()),
                                 static_cast<std::uint32_t>(depth.height())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  for (Eigen::Index i = 0; i < depth.pixel_count(); ++i) {
    const float v = static_cast<float>(depth.data()[i]);
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
}

Image read_depth_f32(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::uint32_t dims[2] = {0, 0};
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] == 0 || dims[1] == 0 || dims[0] > 1u << 15 || dims[1] > 1u << 15)
    throw LoadError("bad depth header in " + path.string());
  Image depth(static_cast<int>(dims[0]), static_cast<int>(dims[1]), 1);
  for (Eigen::Index i = 0; i < depth.pixel_count(); ++i) {
    float v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    depth.data()[i] = v;
  }
  if (!in) throw LoadError("truncated depth file " + path.string());
  return depth;
}

}  // namespace splatstyle
