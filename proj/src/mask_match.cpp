#include "splatstyle/mask_match.hpp"

#include "splatstyle/error.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace splatstyle {

LabelMask LabelMask::from_grid(LabelGrid grid) {
  LabelMask m;
  m.num_labels = grid.size() ? std::max(0, grid.maxCoeff()) : 0;
  if (grid.size() && grid.minCoeff() < 0) throw ValidationError("label masks must be non-negative");
  m.grid = std::move(grid);
  return m;
}

std::string to_string(CompletionMode mode) {
  switch (mode) {
    case CompletionMode::Mirror: return "mirror";
    case CompletionMode::Translate: return "translate";
    case CompletionMode::MeanFill: return "mean-fill";
  }
  return "mirror";
}

CompletionMode parse_completion_mode(const std::string& name) {
  if (name == "mirror") return CompletionMode::Mirror;
  if (name == "translate") return CompletionMode::Translate;
  if (name == "mean-fill") return CompletionMode::MeanFill;
  throw ValidationError("unknown completion mode '" + name + "' (mirror, translate, mean-fill)");
}

LabelWeights unproject_labels(const GaussianScene& scene, std::span<const Camera> cameras,
                              std::span<const LabelMask> masks, const RenderSettings& settings) {
  if (cameras.size() != masks.size())
    throw ValidationError("unproject_labels: " + std::to_string(cameras.size()) + " cameras but " +
                          std::to_string(masks.size()) + " masks");
  int num_labels = 0;
  for (std::size_t v = 0; v < masks.size(); ++v) {
    if (masks[v].grid.rows() != cameras[v].height || masks[v].grid.cols() != cameras[v].width)
      throw ValidationError("unproject_labels: mask " + std::to_string(v) + " does not match its camera size");
    num_labels = std::max(num_labels, masks[v].num_labels);
  }
  LabelWeights w;
  w.weights.setZero(static_cast<Eigen::Index>(scene.size()), num_labels);
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    const RenderOutput out = render(scene, cameras[v], true, settings);
    const Camera& cam = cameras[v];
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const int label = masks[v].grid(y, x);
        if (label <= 0) continue;
        for (const Contribution& c : out.contribs[static_cast<std::size_t>(y) * cam.width + x])
          w.weights(c.gaussian_index, label - 1) += c.weight;
      }
    }
  }
  return w;
}

std::vector<std::optional<int>> assign_labels(const LabelWeights& w, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ValidationError("assign_labels: tau must be in (0, 1]");
  std::vector<std::optional<int>> labels(static_cast<std::size_t>(w.weights.rows()));
  for (Eigen::Index i = 0; i < w.weights.rows(); ++i) {
    const double total = w.weights.row(i).sum();
    if (!(total > 0.0)) continue;
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < w.weights.cols(); ++j)
      if (w.weights(i, j) > w.weights(i, best)) best = j;
    if (w.weights(i, best) / total >= tau) labels[static_cast<std::size_t>(i)] = static_cast<int>(best) + 1;
  }
  return labels;
}

BoolGrid erode_mask(const BoolGrid& mask, int radius, ErodeBorder border) {
  if (radius < 0) throw ValidationError("erode_mask: radius must be >= 0");
  if (radius == 0) return mask;
  const Eigen::Index rows = mask.rows(), cols = mask.cols();
  const bool outside = border == ErodeBorder::Inside;
  // Square structuring element: separable min filter.
  BoolGrid horizontal(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      bool v = true;
      for (Eigen::Index dx = -radius; dx <= radius && v; ++dx) {
        const Eigen::Index xx = x + dx;
        v = (xx < 0 || xx >= cols) ? outside : mask(y, xx);
      }
      horizontal(y, x) = v;
    }
  }
  BoolGrid out(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      bool v = true;
      for (Eigen::Index dy = -radius; dy <= radius && v; ++dy) {
        const Eigen::Index yy = y + dy;
        v = (yy < 0 || yy >= rows) ? outside : horizontal(yy, x);
      }
      out(y, x) = v;
    }
  }
  return out;
}

namespace {

void fill_mean(Image& img, const BoolGrid& inside) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Index count = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (inside(y, x)) {
        sum += img.rgb(x, y);
        ++count;
      }
  const Eigen::Vector3d mean = sum / double(count);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (!inside(y, x)) img.set_rgb(x, y, mean);
}

// Nearest in-region pixel by squared distance, ties broken by (y, x) order.
Eigen::Vector2i nearest_inside(const BoolGrid& inside, int px, int py) {
  const int h = static_cast<int>(inside.rows()), w = static_cast<int>(inside.cols());
  long best_d2 = std::numeric_limits<long>::max();
  Eigen::Vector2i best(-1, -1);
  auto consider = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= w || y >= h || !inside(y, x)) return;
    const long d2 = long(x - px) * (x - px) + long(y - py) * (y - py);
    if (d2 < best_d2 || (d2 == best_d2 && (y < best.y() || (y == best.y() && x < best.x())))) {
      best_d2 = d2;
      best = {x, y};
    }
  };
  const int max_ring = std::max(w, h);
  for (int k = 1; k <= max_ring; ++k) {
    if (long(k) * k > best_d2) break;
    for (int x = px - k; x <= px + k; ++x) {
      consider(x, py - k);
      consider(x, py + k);
    }
    for (int y = py - k + 1; y <= py + k - 1; ++y) {
      consider(px - k, y);
      consider(px + k, y);
    }
  }
  return best;
}

void fill_mirror(Image& img, const BoolGrid& inside) {
  const Image source = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (inside(y, x)) continue;
      const Eigen::Vector2i q = nearest_inside(inside, x, y);
      const Eigen::Vector2i r = 2 * q - Eigen::Vector2i(x, y);
      const bool reflected_ok =
          r.x() >= 0 && r.y() >= 0 && r.x() < img.width() && r.y() < img.height() && inside(r.y(), r.x());
      img.set_rgb(x, y, reflected_ok ? source.rgb(r.x(), r.y()) : source.rgb(q.x(), q.y()));
    }
  }
}

void fill_translate(Image& img, const BoolGrid& inside) {
  std::vector<int> filled_rows;
  std::vector<Eigen::Vector3d> run;
  for (int y = 0; y < img.height(); ++y) {
    run.clear();
    for (int x = 0; x < img.width(); ++x)
      if (inside(y, x)) run.push_back(img.rgb(x, y));
    if (run.empty()) continue;
    filled_rows.push_back(y);
    for (int x = 0; x < img.width(); ++x)
      if (!inside(y, x)) img.set_rgb(x, y, run[static_cast<std::size_t>(x) % run.size()]);
  }
  const std::set<int> has_content(filled_rows.begin(), filled_rows.end());
  for (int y = 0; y < img.height(); ++y) {
    if (has_content.count(y)) continue;
    const int src = filled_rows[static_cast<std::size_t>(y) % filled_rows.size()];
    for (int x = 0; x < img.width(); ++x) img.set_rgb(x, y, img.rgb(x, src));
  }
}

}  // namespace

IsolatedStyleRegion isolate_style_region(const Image& style_image, const BoolGrid& region_mask, CompletionMode mode,
                                         int erosion_radius, const FeatureExtractorSpec& extractor) {
  if (style_image.channels() != 3) throw ValidationError("isolate_style_region: style image must be RGB");
  if (region_mask.rows() != style_image.height() || region_mask.cols() != style_image.width())
    throw ValidationError("isolate_style_region: mask size does not match the style image");
  // Pixels beyond the image count as region.
  const BoolGrid eroded = erode_mask(region_mask, erosion_radius, ErodeBorder::Inside);
  if (!eroded.any())
    throw ValidationError("style region is empty after erosion with radius " + std::to_string(erosion_radius) +
                          "; use a smaller erosion radius");

  int x0 = style_image.width(), y0 = style_image.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < style_image.height(); ++y)
    for (int x = 0; x < style_image.width(); ++x)
      if (eroded(y, x)) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  const int w = x1 - x0 + 1, h = y1 - y0 + 1;

  IsolatedStyleRegion region;
  region.completion_mode = mode;
  region.origin = {x0, y0};
  region.region_pixel_mask = eroded.block(y0, x0, h, w);
  region.completed_image = Image(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (region.region_pixel_mask(y, x)) region.completed_image.set_rgb(x, y, style_image.rgb(x0 + x, y0 + y));

  switch (mode) {
    case CompletionMode::MeanFill: fill_mean(region.completed_image, region.region_pixel_mask); break;
    case CompletionMode::Mirror: fill_mirror(region.completed_image, region.region_pixel_mask); break;
    case CompletionMode::Translate: fill_translate(region.completed_image, region.region_pixel_mask); break;
  }

  const Eigen::Vector2i grid = feature_grid_size(extractor, w, h);
  const int rf = extractor.receptive_field();
  const int stride = extractor.stride();
  region.region_cell_mask = BoolGrid::Constant(grid[0], grid[1], false);
  for (int r = 0; r < grid[0]; ++r) {
    for (int c = 0; c < grid[1]; ++c) {
      const int cx = c * stride, cy = r * stride;
      if (cx + rf > w || cy + rf > h) continue;
      region.region_cell_mask(r, c) = region.region_pixel_mask.block(cy, cx, rf, rf).all();
    }
  }
  return region;
}

std::vector<SemanticMatchingGroup> build_matching_groups(std::span<const StyleSpec> styles,
                                                         const std::map<int, int>& mapping,
                                                         std::span<const std::optional<int>> gaussian_labels,
                                                         int erosion_radius, const FeatureExtractorSpec& extractor) {
  std::set<int> present;
  for (const auto& l : gaussian_labels)
    if (l) present.insert(*l);
  std::string unmapped;
  for (int label : present)
    if (!mapping.count(label)) unmapped += (unmapped.empty() ? "" : ", ") + std::to_string(label);
  if (!unmapped.empty()) throw ValidationError("content labels without a style mapping: " + unmapped);

  std::map<int, IsolatedStyleRegion> isolated;
  std::vector<SemanticMatchingGroup> groups;
  for (const auto& [label, style_index] : mapping) {
    if (style_index < 0 || static_cast<std::size_t>(style_index) >= styles.size())
      throw ValidationError("label " + std::to_string(label) + " maps to missing style " +
                            std::to_string(style_index));
    if (!isolated.count(style_index)) {
      const StyleSpec& s = styles[static_cast<std::size_t>(style_index)];
      isolated.emplace(style_index, isolate_style_region(s.image, s.region, s.mode, erosion_radius, extractor));
    }
    SemanticMatchingGroup g;
    g.label = label;
    g.content_mask_label = label;
    g.style_index = style_index;
    g.style_region = isolated.at(style_index);
    for (std::size_t i = 0; i < gaussian_labels.size(); ++i)
      if (gaussian_labels[i] == label) g.gaussian_indices.push_back(static_cast<int>(i));
    groups.push_back(std::move(g));
  }
  return groups;
}

Eigen::Matrix3Xd region_pixels(const IsolatedStyleRegion& region) {
  const Image& img = region.completed_image;
  Eigen::Matrix3Xd pixels(3, region.region_pixel_mask.count());
  Eigen::Index k = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (region.region_pixel_mask(y, x)) pixels.col(k++) = img.rgb(x, y);
  return pixels;
}

}  // namespace splatstyle
