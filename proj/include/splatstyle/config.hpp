#pragma once

#include "splatstyle/align_loss.hpp"
#include "splatstyle/color_match.hpp"
#include "splatstyle/features.hpp"
#include "splatstyle/mask_match.hpp"
#include "splatstyle/optimizer.hpp"
#include "splatstyle/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace splatstyle {

enum class TransferType { Single, Compositional, Semantic };

std::string to_string(TransferType t);
TransferType parse_transfer_type(const std::string& name);

struct StyleEntry {
  std::filesystem::path image;
  /// Optional 8-bit label PNG; the region is where it equals `region_label`.
  std::optional<std::filesystem::path> mask;
  int region_label = 1;
  CompletionMode completion = CompletionMode::Mirror;
};

struct StylizeConfig {
  std::filesystem::path scene;
  std::filesystem::path cameras;
  std::vector<std::filesystem::path> content_images;
  std::vector<std::filesystem::path> content_masks;
  std::vector<StyleEntry> styles;
  std::map<int, int> mapping;  // content label -> style index
  TransferType transfer_type = TransferType::Single;

  LossWeights weights;
  StyleLossKind style_loss = StyleLossKind::Fast;
  double ridge = -1.0;
  double tau = 0.6;
  int erosion_radius = 8;
  FeatureExtractorSpec extractor;
  RecolorOptions recolor;
  std::optional<OutlierFilter> outlier_filter;  // unset: OutlierFilter::defaults_for(scene)

  int reconstruction_iterations = 1000;
  int stylization_iterations = 2000;
  double lambda_dssim = 0.2;
  LearningRates lr;
  TrainableGroups trainable;
  int snapshot_every = 0;

  std::uint64_t seed = 0;
  std::filesystem::path output = "out";

  /// Parses a JSON config; relative paths resolve against the file's folder.
  static StylizeConfig load(const std::filesystem::path& path);

  /// Throws ValidationError naming the offending field.
  void validate(bool check_files = true) const;

  /// Fully resolved config as JSON text (all defaults filled in).
  std::string to_json() const;
};

/// Environment variable naming the config used when --config is absent.
inline constexpr const char* kConfigEnvVar = "SPLATSTYLE_CONFIG";

std::optional<std::filesystem::path> default_config_path();

}  // namespace splatstyle
