#pragma once

#include "splatstyle/error.hpp"
#include "splatstyle/image.hpp"
#include "splatstyle/mask_match.hpp"
#include "splatstyle/scene.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <span>
#include <vector>

namespace splatstyle {

template <typename Scalar>
struct ColorMoments {
  Eigen::Matrix<Scalar, 3, 1> mean = Eigen::Matrix<Scalar, 3, 1>::Zero();
  Eigen::Matrix<Scalar, 3, 3> cov = Eigen::Matrix<Scalar, 3, 3>::Zero();
  Eigen::Index count = 0;
};

/// Affine color map p -> weight * p + bias.
template <typename Scalar>
struct ColorTransform {
  Eigen::Matrix<Scalar, 3, 3> weight = Eigen::Matrix<Scalar, 3, 3>::Identity();
  Eigen::Matrix<Scalar, 3, 1> bias = Eigen::Matrix<Scalar, 3, 1>::Zero();
};

/// Sample mean and population (1/N) covariance of a 3 x N pixel matrix.
template <typename Derived>
ColorMoments<typename Derived::Scalar> compute_moments(const Eigen::MatrixBase<Derived>& pixels) {
  using Scalar = typename Derived::Scalar;
  static_assert(Derived::RowsAtCompileTime == 3 || Derived::RowsAtCompileTime == Eigen::Dynamic);
  if (pixels.rows() != 3) throw ValidationError("compute_moments: pixels must be 3 x N");
  if (pixels.cols() < 2) throw ValidationError("compute_moments: need at least 2 pixels");
  ColorMoments<Scalar> m;
  m.count = pixels.cols();
  m.mean = pixels.rowwise().mean();
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> centered = pixels.colwise() - m.mean;
  m.cov = (centered * centered.transpose()) / Scalar(m.count);
  m.cov = Scalar(0.5) * (m.cov + m.cov.transpose()).eval();
  return m;
}

/// Closed-form moment-matching map:
///   A = U_s L_s^{1/2} U_s^T U_c L_c^{-1/2} U_c^T,  b = mean_s - A mean_c,
/// with content eigenvalues clamped below at `eig_floor`.
template <typename Scalar>
ColorTransform<Scalar> solve_color_transform(const ColorMoments<Scalar>& content, const ColorMoments<Scalar>& style,
                                             Scalar eig_floor = Scalar(1e-8)) {
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  if (!content.mean.allFinite() || !content.cov.allFinite() || !style.mean.allFinite() || !style.cov.allFinite())
    throw NumericalError("solve_color_transform: non-finite moments");
  Eigen::SelfAdjointEigenSolver<Mat3> ec(content.cov);
  Eigen::SelfAdjointEigenSolver<Mat3> es(style.cov);
  if (ec.info() != Eigen::Success || es.info() != Eigen::Success)
    throw NumericalError("solve_color_transform: eigen-decomposition failed");
  const auto lc = ec.eigenvalues().cwiseMax(eig_floor).cwiseSqrt().cwiseInverse();
  const auto ls = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  const Mat3 content_whiten = ec.eigenvectors() * lc.asDiagonal() * ec.eigenvectors().transpose();
  const Mat3 style_color = es.eigenvectors() * ls.asDiagonal() * es.eigenvectors().transpose();
  ColorTransform<Scalar> t;
  t.weight = style_color * content_whiten;
  t.bias = style.mean - t.weight * content.mean;
  if (!t.weight.allFinite() || !t.bias.allFinite()) throw NumericalError("solve_color_transform: non-finite result");
  return t;
}

/// Affine map without clamping (3 x N in, 3 x N out).
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, 3, Eigen::Dynamic> transform_colors(const ColorTransform<Scalar>& t,
                                                          const Eigen::MatrixBase<Derived>& colors) {
  return (t.weight * colors).colwise() + t.bias;
}

/// Affine map followed by the [0,1] storage clamp.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, 3, Eigen::Dynamic> apply_transform(const ColorTransform<Scalar>& t,
                                                         const Eigen::MatrixBase<Derived>& colors) {
  return transform_colors(t, colors).cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
}

struct RecolorOptions {
  double eig_floor = 1e-8;
  /// Fit one transform over all labeled pixels instead of one per group.
  bool global = false;
};

struct RecolorResult {
  std::vector<Image> images;           // clamped to [0,1]
  std::vector<Image> images_preclamp;  // same, before the clamp
  GaussianScene scene;                 // Gaussian colors clamped to [0,1]
  std::vector<ColorTransform<double>> transforms;  // one per group (repeated in global mode)
};

/// Fits one transform per group (content pixels with the group's label,
/// pooled over all views, vs. the group's style-region pixels) and applies it
/// to those pixels and to the group's Gaussians.
RecolorResult recolor_groups(std::span<const SemanticMatchingGroup> groups, std::span<const Image> content_images,
                             std::span<const LabelMask> content_masks, const GaussianScene& scene,
                             const RecolorOptions& options = {});

struct ImageLoss {
  double value = 0.0;
  Image gradient;
};

/// Mean SSIM over pixels and channels with an 11x11 Gaussian window
/// (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2. At the border the window is
/// renormalised over the pixels inside the image.
double ssim(const Image& a, const Image& b);

/// SSIM together with its gradient with respect to `a`.
ImageLoss ssim_with_gradient(const Image& a, const Image& b);

/// (1 - lambda) L1 + lambda (1 - SSIM) / 2, gradient w.r.t. `rendered`.
ImageLoss reconstruction_loss(const Image& rendered, const Image& target, double lambda_dssim = 0.2);

}  // namespace splatstyle
