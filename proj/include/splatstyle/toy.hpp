#pragma once

#include "splatstyle/image.hpp"
#include "splatstyle/mask_match.hpp"
#include "splatstyle/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace splatstyle {

/// Procedural two-object scene: a textured sphere (label 1) and a textured
/// cube (label 2), 100 Gaussians each, seen by 8 cameras on a ring.
struct ToyAssets {
  GaussianScene scene;                 // unlabelled; cameras attached
  std::vector<Image> content;          // renders of `scene`
  std::vector<LabelMask> masks;        // dominant object where coverage >= 0.5
  std::vector<std::optional<int>> true_labels;  // object of each Gaussian
  Image style_a;                       // warm diagonal stripes
  Image style_b;                       // cool blotches
  Image style_split;                   // left half style A, right half style B
  LabelGrid style_split_mask;          // 1 left, 2 right
};

struct ToyOptions {
  int gaussians_per_object = 100;
  int views = 8;
  int width = 64;
  int height = 64;
  double focal = 80.0;
  int style_size = 96;
  std::uint64_t seed = 7;
};

ToyAssets make_toy(const ToyOptions& options = {});

/// Writes scene.ply, cameras.json, content/mask PNGs, style PNGs and one
/// config per transfer type (config_single.json, config_compositional.json,
/// config_semantic.json) into `dir`.
void write_toy(const ToyAssets& toy, const std::filesystem::path& dir);

}  // namespace splatstyle
