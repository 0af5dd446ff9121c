#pragma once

#include <Eigen/Core>

#include <cassert>
#include <filesystem>
#include <string>

namespace splatstyle {

/// Interleaved row-major image (y, x, channel). Values are unclamped; only
/// the PNG writers clamp.
template <typename Scalar>
class ImageT {
 public:
  using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  ImageT() = default;
  ImageT(int width, int height, int channels, Scalar fill = Scalar(0))
      : width_(width), height_(height), channels_(channels),
        data_(Storage::Constant(Eigen::Index(width) * height * channels, fill)) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  Eigen::Index pixel_count() const { return Eigen::Index(width_) * height_; }
  bool empty() const { return data_.size() == 0; }

  Scalar& operator()(int x, int y, int c = 0) {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_ && c >= 0 && c < channels_);
    return data_[(Eigen::Index(y) * width_ + x) * channels_ + c];
  }
  Scalar operator()(int x, int y, int c = 0) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_ && c >= 0 && c < channels_);
    return data_[(Eigen::Index(y) * width_ + x) * channels_ + c];
  }

  /// Channel vector of one pixel (channels() == 3 only).
  Eigen::Matrix<Scalar, 3, 1> rgb(int x, int y) const {
    const Eigen::Index base = (Eigen::Index(y) * width_ + x) * channels_;
    return data_.template segment<3>(base);
  }
  void set_rgb(int x, int y, const Eigen::Matrix<Scalar, 3, 1>& v) {
    const Eigen::Index base = (Eigen::Index(y) * width_ + x) * channels_;
    data_.template segment<3>(base) = v;
  }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  bool same_shape(const ImageT& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  Storage data_;
};

using Image = ImageT<double>;

/// Integer label grid, rows = image rows.
using LabelGrid = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// PNG I/O. Color images are 8-bit RGB; values are clamped to [0,1] on write.
Image read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const Image& image, const std::filesystem::path& path);

// 8-bit single-channel label maps.
LabelGrid read_png_labels(const std::filesystem::path& path);
void write_png_labels(const LabelGrid& labels, const std::filesystem::path& path);

/// 16-bit grayscale PNG of a single-channel map, linearly scaled so that
/// `max_value` maps to 65535.
void write_png_depth16(const Image& depth, double max_value, const std::filesystem::path& path);

/// Raw float32 little-endian dump: u32 width, u32 height, then width*height floats.
void write_depth_f32(const Image& depth, const std::filesystem::path& path);
Image read_depth_f32(const std::filesystem::path& path);

}  // namespace splatstyle
