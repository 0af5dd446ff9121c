#include "splatstyle/color_match.hpp"

#include <array>
#include <cmath>
#include <map>

namespace splatstyle {

RecolorResult recolor_groups(std::span<const SemanticMatchingGroup> groups, std::span<const Image> content_images,
                             std::span<const LabelMask> content_masks, const GaussianScene& scene,
                             const RecolorOptions& options) {
  if (content_images.size() != content_masks.size())
    throw ValidationError("recolor_groups: image and mask counts differ");
  for (std::size_t v = 0; v < content_images.size(); ++v) {
    if (content_masks[v].grid.rows() != content_images[v].height() ||
        content_masks[v].grid.cols() != content_images[v].width())
      throw ValidationError("recolor_groups: mask " + std::to_string(v) + " does not match its image");
  }

  auto gather_content = [&](auto&& accept) {
    std::vector<Eigen::Vector3d> pixels;
    for (std::size_t v = 0; v < content_images.size(); ++v) {
      const Image& img = content_images[v];
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
          if (accept(content_masks[v].grid(y, x))) pixels.push_back(img.rgb(x, y));
    }
    Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(pixels.size()));
    for (std::size_t i = 0; i < pixels.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = pixels[i];
    return m;
  };

  std::map<int, std::size_t> group_of_label;
  for (std::size_t g = 0; g < groups.size(); ++g) group_of_label[groups[g].content_mask_label] = g;

  RecolorResult result;
  if (options.global) {
    const Eigen::Matrix3Xd content = gather_content([&](int label) { return group_of_label.count(label) > 0; });
    if (content.cols() < 2) throw ValidationError("recolor_groups: fewer than 2 labeled content pixels");
    std::map<int, Eigen::Matrix3Xd> style_sets;
    Eigen::Index total = 0;
    for (const auto& g : groups) {
      if (!style_sets.count(g.style_index)) {
        style_sets[g.style_index] = region_pixels(g.style_region);
        total += style_sets[g.style_index].cols();
      }
    }
    Eigen::Matrix3Xd style(3, total);
    Eigen::Index offset = 0;
    for (const auto& [index, px] : style_sets) {
      style.middleCols(offset, px.cols()) = px;
      offset += px.cols();
    }
    const auto t = solve_color_transform(compute_moments(content), compute_moments(style), options.eig_floor);
    result.transforms.assign(groups.size(), t);
  } else {
    for (const auto& g : groups) {
      const Eigen::Matrix3Xd content = gather_content([&](int label) { return label == g.content_mask_label; });
      if (content.cols() < 2)
        throw ValidationError("recolor_groups: group " + std::to_string(g.label) + " has fewer than 2 content pixels");
      const Eigen::Matrix3Xd style = region_pixels(g.style_region);
      result.transforms.push_back(
          solve_color_transform(compute_moments(content), compute_moments(style), options.eig_floor));
    }
  }

  for (std::size_t v = 0; v < content_images.size(); ++v) {
    Image pre = content_images[v];
    Image clamped = content_images[v];
    for (int y = 0; y < pre.height(); ++y) {
      for (int x = 0; x < pre.width(); ++x) {
        const auto it = group_of_label.find(content_masks[v].grid(y, x));
        if (it == group_of_label.end()) continue;
        const auto& t = result.transforms[it->second];
        const Eigen::Vector3d c = t.weight * pre.rgb(x, y) + t.bias;
        pre.set_rgb(x, y, c);
        clamped.set_rgb(x, y, c.cwiseMax(0.0).cwiseMin(1.0));
      }
    }
    result.images_preclamp.push_back(std::move(pre));
    result.images.push_back(std::move(clamped));
  }

  result.scene = scene;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    for (int idx : groups[gi].gaussian_indices) {
      Gaussian& g = result.scene.gaussians.at(static_cast<std::size_t>(idx));
      g.color = apply_transform(result.transforms[gi], g.color);
    }
  }
  return result;
}

namespace {

using Plane = Eigen::ArrayXXd;  // rows = image rows

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& window() {
  static const std::array<double, kWindow> w = [] {
    std::array<double, kWindow> k{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - kWindow / 2;
      k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
  }();
  return w;
}

// Separable correlation with the window, zero outside the image.
Plane blur(const Plane& in) {
  const auto& k = window();
  const Eigen::Index rows = in.rows(), cols = in.cols();
  const int half = kWindow / 2;
  Plane tmp = Plane::Zero(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y)
    for (Eigen::Index x = 0; x < cols; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) {
        const Eigen::Index xx = x + i - half;
        if (xx >= 0 && xx < cols) s += k[i] * in(y, xx);
      }
      tmp(y, x) = s;
    }
  Plane out = Plane::Zero(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y)
    for (Eigen::Index x = 0; x < cols; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) {
        const Eigen::Index yy = y + i - half;
        if (yy >= 0 && yy < rows) s += k[i] * tmp(yy, x);
      }
      out(y, x) = s;
    }
  return out;
}

Plane channel(const Image& img, int c) {
  Plane p(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) p(y, x) = img(x, y, c);
  return p;
}

void check_same(const Image& a, const Image& b, const char* who) {
  if (!a.same_shape(b)) throw ValidationError(std::string(who) + ": image dimensions differ");
  if (a.empty()) throw ValidationError(std::string(who) + ": empty images");
}

ImageLoss ssim_impl(const Image& a, const Image& b, bool want_gradient) {
  check_same(a, b, "ssim");
  ImageLoss out;
  if (want_gradient) out.gradient = Image(a.width(), a.height(), a.channels());
  const Plane norm = blur(Plane::Ones(a.height(), a.width()));
  const double scale = 1.0 / double(a.data().size());
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    const Plane pa = channel(a, c), pb = channel(b, c);
    const Plane mu_a = blur(pa) / norm;
    const Plane mu_b = blur(pb) / norm;
    const Plane var_a = blur(pa * pa) / norm - mu_a.square();
    const Plane var_b = blur(pb * pb) / norm - mu_b.square();
    const Plane cov_ab = blur(pa * pb) / norm - mu_a * mu_b;
    const Plane n1 = 2.0 * mu_a * mu_b + kC1;
    const Plane n2 = 2.0 * cov_ab + kC2;
    const Plane d1 = mu_a.square() + mu_b.square() + kC1;
    const Plane d2 = var_a + var_b + kC2;
    const Plane r1 = n1 / d1;
    const Plane r2 = n2 / d2;
    const Plane s = r1 * r2;
    total += s.sum();
    if (!want_gradient) continue;

    // Partials with respect to the window mean, E[a^2] and E[ab]; each term
    // vanishes exactly when a == b.
    const Plane ds_dmu = r2 * (2.0 * mu_b - 2.0 * mu_a * r1) / d1 + 2.0 * r1 * (mu_a * r2 - mu_b) / d2;
    const Plane ds_dsq = -(r1 * r2) / d2;
    const Plane ds_dab = 2.0 * r1 / d2;
    const Plane g = blur(ds_dmu / norm) + 2.0 * pa * blur(ds_dsq / norm) + pb * blur(ds_dab / norm);
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) out.gradient(x, y, c) = g(y, x) * scale;
  }
  out.value = total * scale;
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, false).value; }

ImageLoss ssim_with_gradient(const Image& a, const Image& b) { return ssim_impl(a, b, true); }

ImageLoss reconstruction_loss(const Image& rendered, const Image& target, double lambda_dssim) {
  check_same(rendered, target, "reconstruction_loss");
  const Eigen::VectorXd diff = rendered.data() - target.data();
  const double n = double(diff.size());
  ImageLoss out;
  out.gradient = Image(rendered.width(), rendered.height(), rendered.channels());
  const double l1 = diff.cwiseAbs().sum() / n;
  out.value = (1.0 - lambda_dssim) * l1;
  out.gradient.data() = (1.0 - lambda_dssim) / n * diff.unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
  if (lambda_dssim != 0.0) {
    const ImageLoss s = ssim_with_gradient(rendered, target);
    out.value += lambda_dssim * 0.5 * (1.0 - s.value);
    out.gradient.data() -= 0.5 * lambda_dssim * s.gradient.data();
  }
  return out;
}

}  // namespace splatstyle
