#pragma once

#include "splatstyle/image.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>

namespace splatstyle {

enum class ExtractorKind { PatchStats, File };

/// How feature cells are produced. PatchStats computes 12 channels per patch
/// (mean RGB, RGB std, mean |dx| and |dy| per channel); File loads
/// externally computed maps (e.g. conv3-level CNN activations) from FMAP files.
struct FeatureExtractorSpec {
  ExtractorKind kind = ExtractorKind::PatchStats;
  int patch = 8;
  int step = 8;
  /// For File: "{key}" is replaced with the view or style identifier.
  std::string path_template;
  int file_receptive_field = 8;

  int stride() const { return step; }
  int receptive_field() const { return kind == ExtractorKind::PatchStats ? patch : file_receptive_field; }

  static FeatureExtractorSpec patch_stats(int patch = 8, int step = 8) {
    FeatureExtractorSpec s;
    s.patch = patch;
    s.step = step;
    return s;
  }
};

inline constexpr int kPatchStatsChannels = 12;

/// H_f x W_f grid of C-dimensional feature vectors stored as a C x (H_f*W_f)
/// matrix; cell (r, c) is column r * cols + c.
template <typename Scalar>
struct FeatureMapT {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Matrix values;
  int rows = 0;
  int cols = 0;
  int stride = 1;
  int receptive_field = 1;
  std::optional<LabelGrid> label_grid;

  int channels() const { return static_cast<int>(values.rows()); }
  Eigen::Index cells() const { return Eigen::Index(rows) * cols; }
  Eigen::Index cell(int r, int c) const { return Eigen::Index(r) * cols + c; }
  int label_of(Eigen::Index cell_index) const {
    return label_grid ? (*label_grid)(cell_index / cols, cell_index % cols) : 0;
  }
};

using FeatureMap = FeatureMapT<double>;

/// Feature grid size (rows, cols) the extractor produces for an image.
Eigen::Vector2i feature_grid_size(const FeatureExtractorSpec& spec, int width, int height);

FeatureMap extract(const Image& image, const FeatureExtractorSpec& spec, const std::string& key = {});

/// Gradient of sum(grad_values .* extract(image)) with respect to the image.
/// PatchStats only; File features are constants.
Image extract_adjoint(const Image& image, const FeatureExtractorSpec& spec, const Eigen::MatrixXd& grad_values);

/// Majority label per cell over the cell's footprint; ties -> 0 (unlabeled).
LabelGrid downsample_labels(const LabelGrid& mask, const FeatureMap& fm);

// FMAP tensor files: "FMAP", u32 version, u32 ndims, u64 dims[ndims],
// float32 little-endian row-major data. Feature maps use dims (H_f, W_f, C).
FeatureMap load_feature_map(const std::filesystem::path& path);
void save_feature_map(const FeatureMap& fm, const std::filesystem::path& path);

}  // namespace splatstyle
