#pragma once

#include "splatstyle/image.hpp"
#include "splatstyle/scene.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <vector>

namespace splatstyle {

struct RenderSettings {
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  double alpha_max = 0.99;
  /// Blending stops before a splat that would push transmittance below this.
  double transmittance_min = 1e-4;
  /// Added to the diagonal of every projected covariance (pixels^2).
  double low_pass = 0.3;
  double near_plane = 0.01;
};

/// A Gaussian projected into one camera. `camera_point` and `jacobian` are
/// kept for the adjoint pass.
struct Splat2D {
  Eigen::Vector2d mean2d;
  Eigen::Matrix2d cov2d;
  double depth = 0.0;
  int gaussian_index = -1;
  Eigen::Vector3d camera_point;
  Eigen::Matrix<double, 2, 3> jacobian;
};

struct Contribution {
  int gaussian_index;
  double weight;  // T_i * alpha_i
};

struct RenderOutput {
  Image color;      // 3 channels
  Image depth;      // 1 channel, sum of T_i alpha_i d_i (not normalised)
  Image alpha_acc;  // 1 channel, sum of T_i alpha_i
  /// Per pixel (row-major), front-to-back; filled only when requested.
  std::vector<std::vector<Contribution>> contribs;
};

/// Per-Gaussian parameter gradients; rotation is with respect to the raw
/// (w, x, y, z) quaternion components.
struct GaussianGradients {
  Eigen::Matrix<double, Eigen::Dynamic, 3> position;
  Eigen::Matrix<double, Eigen::Dynamic, 4> rotation;
  Eigen::Matrix<double, Eigen::Dynamic, 3> scale;
  Eigen::VectorXd opacity;
  Eigen::Matrix<double, Eigen::Dynamic, 3> color;

  static GaussianGradients zeros(std::size_t n);
  std::size_t size() const { return static_cast<std::size_t>(opacity.size()); }
  GaussianGradients& operator+=(const GaussianGradients& other);
  GaussianGradients& operator*=(double s);
  bool all_finite() const;
};

/// EWA-style first-order projection. Returns nullopt when the center is at
/// or behind the near plane or the 3-sigma footprint misses the image.
std::optional<Splat2D> project(const Gaussian& g, int index, const Camera& cam,
                               const RenderSettings& settings = {});

/// Per-pixel reference rasterisation: depth-sorted front-to-back alpha
/// compositing of color and depth. Ties in depth keep index order.
RenderOutput render(std::span<const Gaussian> gaussians, const Camera& cam, bool want_contribs = false,
                    const RenderSettings& settings = {});
inline RenderOutput render(const GaussianScene& scene, const Camera& cam, bool want_contribs = false,
                           const RenderSettings& settings = {}) {
  return render(std::span<const Gaussian>(scene.gaussians), cam, want_contribs, settings);
}

/// Exact adjoint of render() for the color and depth outputs.
GaussianGradients render_adjoint(std::span<const Gaussian> gaussians, const Camera& cam, const Image& grad_color,
                                 const Image& grad_depth, const RenderSettings& settings = {});
inline GaussianGradients render_adjoint(const GaussianScene& scene, const Camera& cam, const Image& grad_color,
                                        const Image& grad_depth, const RenderSettings& settings = {}) {
  return render_adjoint(std::span<const Gaussian>(scene.gaussians), cam, grad_color, grad_depth, settings);
}

}  // namespace splatstyle
