#include "splatstyle/features.hpp"

#include "splatstyle/error.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

namespace splatstyle {

namespace {

void check_patch_spec(const FeatureExtractorSpec& spec) {
  if (spec.patch < 1 || spec.step < 1) throw ValidationError("patch-stats: patch and stride must be >= 1");
}

std::string shape_string(Eigen::Index a, Eigen::Index b, Eigen::Index c) {
  return "(" + std::to_string(a) + ", " + std::to_string(b) + ", " + std::to_string(c) + ")";
}

FeatureMap extract_patch_stats(const Image& image, const FeatureExtractorSpec& spec) {
  check_patch_spec(spec);
  if (image.channels() != 3) throw ValidationError("patch-stats: image must have 3 channels");
  if (image.width() < spec.patch || image.height() < spec.patch)
    throw ValidationError("patch-stats: image smaller than the receptive field");
  const Eigen::Vector2i grid = feature_grid_size(spec, image.width(), image.height());
  FeatureMap fm;
  fm.rows = grid[0];
  fm.cols = grid[1];
  fm.stride = spec.stride();
  fm.receptive_field = spec.receptive_field();
  fm.values.setZero(kPatchStatsChannels, fm.cells());

  const int p = spec.patch;
  const double inv_area = 1.0 / (double(p) * p);
  const double inv_pairs = p > 1 ? 1.0 / (double(p) * (p - 1)) : 0.0;
  for (int r = 0; r < fm.rows; ++r) {
    for (int c = 0; c < fm.cols; ++c) {
      const int x0 = c * spec.step;
      const int y0 = r * spec.step;
      auto column = fm.values.col(fm.cell(r, c));
      for (int ch = 0; ch < 3; ++ch) {
        double sum = 0.0;
        for (int y = y0; y < y0 + p; ++y)
          for (int x = x0; x < x0 + p; ++x) sum += image(x, y, ch);
        const double mean = sum * inv_area;
        double var = 0.0, gx = 0.0, gy = 0.0;
        for (int y = y0; y < y0 + p; ++y) {
          for (int x = x0; x < x0 + p; ++x) {
            const double d = image(x, y, ch) - mean;
            var += d * d;
            if (x + 1 < x0 + p) gx += std::abs(image(x + 1, y, ch) - image(x, y, ch));
            if (y + 1 < y0 + p) gy += std::abs(image(x, y + 1, ch) - image(x, y, ch));
          }
        }
        column[ch] = mean;
        column[3 + ch] = std::sqrt(var * inv_area);
        column[6 + ch] = gx * inv_pairs;
        column[9 + ch] = gy * inv_pairs;
      }
    }
  }
  return fm;
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

Eigen::Vector2i feature_grid_size(const FeatureExtractorSpec& spec, int width, int height) {
  if (spec.kind == ExtractorKind::PatchStats) {
    check_patch_spec(spec);
    if (width < spec.patch || height < spec.patch) return {0, 0};
    return {(height - spec.patch) / spec.step + 1, (width - spec.patch) / spec.step + 1};
  }
  if (spec.step < 1) throw ValidationError("file features: stride must be >= 1");
  return {height / spec.step, width / spec.step};
}

FeatureMap extract(const Image& image, const FeatureExtractorSpec& spec, const std::string& key) {
  if (spec.kind == ExtractorKind::PatchStats) return extract_patch_stats(image, spec);

  std::string path = spec.path_template;
  const auto pos = path.find("{key}");
  if (pos != std::string::npos) path.replace(pos, 5, key);
  if (!std::filesystem::exists(path)) throw LoadError("feature file missing: " + path);
  FeatureMap fm = load_feature_map(path);
  const Eigen::Vector2i grid = feature_grid_size(spec, image.width(), image.height());
  if (fm.rows != grid[0] || fm.cols != grid[1])
    throw LoadError("feature file " + path + ": expected shape " + shape_string(grid[0], grid[1], fm.channels()) +
                    ", got " + shape_string(fm.rows, fm.cols, fm.channels()));
  fm.stride = spec.stride();
  fm.receptive_field = spec.receptive_field();
  return fm;
}

Image extract_adjoint(const Image& image, const FeatureExtractorSpec& spec, const Eigen::MatrixXd& grad_values) {
  if (spec.kind != ExtractorKind::PatchStats)
    throw ValidationError("extract_adjoint: file-backed features have no adjoint");
  check_patch_spec(spec);
  const Eigen::Vector2i grid = feature_grid_size(spec, image.width(), image.height());
  if (grad_values.rows() != kPatchStatsChannels || grad_values.cols() != Eigen::Index(grid[0]) * grid[1])
    throw ValidationError("extract_adjoint: gradient shape does not match the feature grid");

  Image grad(image.width(), image.height(), 3);
  const int p = spec.patch;
  const double inv_area = 1.0 / (double(p) * p);
  const double inv_pairs = p > 1 ? 1.0 / (double(p) * (p - 1)) : 0.0;
  for (int r = 0; r < grid[0]; ++r) {
    for (int c = 0; c < grid[1]; ++c) {
      const int x0 = c * spec.step;
      const int y0 = r * spec.step;
      const auto g = grad_values.col(Eigen::Index(r) * grid[1] + c);
      for (int ch = 0; ch < 3; ++ch) {
        const double g_mean = g[ch], g_std = g[3 + ch], g_dx = g[6 + ch], g_dy = g[9 + ch];
        if (g_mean == 0.0 && g_std == 0.0 && g_dx == 0.0 && g_dy == 0.0) continue;
        double sum = 0.0;
        for (int y = y0; y < y0 + p; ++y)
          for (int x = x0; x < x0 + p; ++x) sum += image(x, y, ch);
        const double mean = sum * inv_area;
        double var = 0.0;
        for (int y = y0; y < y0 + p; ++y)
          for (int x = x0; x < x0 + p; ++x) var += (image(x, y, ch) - mean) * (image(x, y, ch) - mean);
        const double sd = std::sqrt(var * inv_area);
        const double std_scale = sd > 1e-12 ? g_std * inv_area / sd : 0.0;
        for (int y = y0; y < y0 + p; ++y) {
          for (int x = x0; x < x0 + p; ++x) {
            grad(x, y, ch) += g_mean * inv_area + std_scale * (image(x, y, ch) - mean);
            if (x + 1 < x0 + p) {
              const double s = g_dx * inv_pairs * sign(image(x + 1, y, ch) - image(x, y, ch));
              grad(x + 1, y, ch) += s;
              grad(x, y, ch) -= s;
            }
            if (y + 1 < y0 + p) {
              const double s = g_dy * inv_pairs * sign(image(x, y + 1, ch) - image(x, y, ch));
              grad(x, y + 1, ch) += s;
              grad(x, y, ch) -= s;
            }
          }
        }
      }
    }
  }
  return grad;
}

LabelGrid downsample_labels(const LabelGrid& mask, const FeatureMap& fm) {
  LabelGrid out = LabelGrid::Zero(fm.rows, fm.cols);
  const int height = static_cast<int>(mask.rows());
  const int width = static_cast<int>(mask.cols());
  std::map<int, int> counts;
  for (int r = 0; r < fm.rows; ++r) {
    for (int c = 0; c < fm.cols; ++c) {
      counts.clear();
      const int y0 = r * fm.stride, x0 = c * fm.stride;
      for (int y = y0; y < std::min(height, y0 + fm.receptive_field); ++y)
        for (int x = x0; x < std::min(width, x0 + fm.receptive_field); ++x) ++counts[mask(y, x)];
      int best = 0, best_count = -1;
      bool tie = false;
      for (const auto& [label, count] : counts) {
        if (count > best_count) {
          best = label;
          best_count = count;
          tie = false;
        } else if (count == best_count) {
          tie = true;
        }
      }
      out(r, c) = tie ? 0 : best;
    }
  }
  return out;
}

namespace {
constexpr char kMagic[4] = {'F', 'M', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

FeatureMap load_feature_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw LoadError("FMAP: bad magic in " + path.string());
  std::uint32_t version = 0, ndims = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&ndims), 4);
  if (!in) throw LoadError("FMAP: truncated header");
  if (version != kVersion) throw LoadError("FMAP: unsupported version " + std::to_string(version));
  if (ndims != 3) throw LoadError("FMAP: feature maps need 3 dims (H_f, W_f, C), got " + std::to_string(ndims));
  std::uint64_t dims[3] = {};
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in) throw LoadError("FMAP: truncated dims");
  constexpr std::uint64_t kMaxDim = 1ull << 20;
  constexpr std::uint64_t kMaxElements = 1ull << 31;
  for (std::uint64_t d : dims) {
    if (d == 0) throw LoadError("FMAP: zero-sized dimension");
    if (d > kMaxDim) throw LoadError("FMAP: dimension overflow");
  }
  if (dims[0] * dims[1] > kMaxElements / dims[2]) throw LoadError("FMAP: tensor too large");

  FeatureMap fm;
  fm.rows = static_cast<int>(dims[0]);
  fm.cols = static_cast<int>(dims[1]);
  fm.values.resize(static_cast<Eigen::Index>(dims[2]), fm.cells());
  std::vector<float> buffer(static_cast<std::size_t>(dims[2]));
  for (Eigen::Index cell = 0; cell < fm.cells(); ++cell) {
    in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size() * sizeof(float)));
    if (!in) throw LoadError("FMAP: truncated data in " + path.string());
    for (std::size_t ch = 0; ch < buffer.size(); ++ch) {
      if (!std::isfinite(buffer[ch])) throw LoadError("FMAP: non-finite value in " + path.string());
      fm.values(static_cast<Eigen::Index>(ch), cell) = buffer[ch];
    }
  }
  return fm;
}

void save_feature_map(const FeatureMap& fm, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic, 4);
  const std::uint32_t ndims = 3;
  out.write(reinterpret_cast<const char*>(&kVersion), 4);
  out.write(reinterpret_cast<const char*>(&ndims), 4);
  const std::uint64_t dims[3] = {std::uint64_t(fm.rows), std::uint64_t(fm.cols), std::uint64_t(fm.channels())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  for (Eigen::Index cell = 0; cell < fm.cells(); ++cell) {
    for (Eigen::Index ch = 0; ch < fm.values.rows(); ++ch) {
      const float v = static_cast<float>(fm.values(ch, cell));
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace splatstyle
