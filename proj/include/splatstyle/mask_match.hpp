#pragma once

#include "splatstyle/features.hpp"
#include "splatstyle/image.hpp"
#include "splatstyle/render.hpp"
#include "splatstyle/scene.hpp"

#include <Eigen/Core>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace splatstyle {

/// Per-pixel label map; 0 is unlabeled, labels are 1..num_labels.
struct LabelMask {
  LabelGrid grid;
  int num_labels = 0;

  static LabelMask from_grid(LabelGrid grid);
};

/// Accumulated blending weight per Gaussian (row) and label (column j-1 for
/// label j).
struct LabelWeights {
  Eigen::MatrixXd weights;
};

enum class CompletionMode { Mirror, Translate, MeanFill };

std::string to_string(CompletionMode mode);
CompletionMode parse_completion_mode(const std::string& name);

/// A style region cut out of its image and completed to a rectangle.
/// `region_pixel_mask` marks crop pixels of the eroded region;
/// `region_cell_mask` marks feature cells whose receptive field lies wholly
/// inside it.
struct IsolatedStyleRegion {
  Image completed_image;
  BoolGrid region_pixel_mask;
  BoolGrid region_cell_mask;
  CompletionMode completion_mode = CompletionMode::Mirror;
  Eigen::Vector2i origin = Eigen::Vector2i::Zero();  // (x, y) of the crop in the style image
};

struct SemanticMatchingGroup {
  int label = 0;
  int content_mask_label = 0;
  int style_index = 0;
  IsolatedStyleRegion style_region;
  std::vector<int> gaussian_indices;
};

/// Sums T_i(p) alpha_i(p) into w_i^{label(p)} over every pixel of every view.
LabelWeights unproject_labels(const GaussianScene& scene, std::span<const Camera> cameras,
                              std::span<const LabelMask> masks, const RenderSettings& settings = {});

/// argmax label when it holds at least `tau` of the Gaussian's total weight.
std::vector<std::optional<int>> assign_labels(const LabelWeights& w, double tau);

enum class ErodeBorder {
  Outside,  // pixels beyond the image count as background
  Inside,   // pixels beyond the image count as region
};

/// Erosion with a (2r+1)^2 square structuring element.
BoolGrid erode_mask(const BoolGrid& mask, int radius, ErodeBorder border = ErodeBorder::Outside);

IsolatedStyleRegion isolate_style_region(const Image& style_image, const BoolGrid& region_mask, CompletionMode mode,
                                         int erosion_radius, const FeatureExtractorSpec& extractor);

struct StyleSpec {
  Image image;
  BoolGrid region;  // style-image pixels belonging to this style
  CompletionMode mode = CompletionMode::Mirror;
};

/// One group per mapped content label. `mapping` sends content label ->
/// index into `styles`; every label carried by a Gaussian must be mapped.
std::vector<SemanticMatchingGroup> build_matching_groups(std::span<const StyleSpec> styles,
                                                         const std::map<int, int>& mapping,
                                                         std::span<const std::optional<int>> gaussian_labels,
                                                         int erosion_radius, const FeatureExtractorSpec& extractor);

/// Style-region pixels as a 3 x M matrix.
Eigen::Matrix3Xd region_pixels(const IsolatedStyleRegion& region);

}  // namespace splatstyle
