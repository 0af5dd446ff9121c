#include "splatstyle/render.hpp"

#include "splatstyle/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace splatstyle {

GaussianGradients GaussianGradients::zeros(std::size_t n) {
  const auto rows = static_cast<Eigen::Index>(n);
  GaussianGradients g;
  g.position.setZero(rows, 3);
  g.rotation.setZero(rows, 4);
  g.scale.setZero(rows, 3);
  g.opacity.setZero(rows);
  g.color.setZero(rows, 3);
  return g;
}

GaussianGradients& GaussianGradients::operator+=(const GaussianGradients& other) {
  position += other.position;
  rotation += other.rotation;
  scale += other.scale;
  opacity += other.opacity;
  color += other.color;
  return *this;
}

GaussianGradients& GaussianGradients::operator*=(double s) {
  position *= s;
  rotation *= s;
  scale *= s;
  opacity *= s;
  color *= s;
  return *this;
}

bool GaussianGradients::all_finite() const {
  return position.allFinite() && rotation.allFinite() && scale.allFinite() && opacity.allFinite() &&
         color.allFinite();
}

namespace {

// Splats are evaluated out to exp(-q/2) = 1e-10.
const double kMaxMahalanobis = 2.0 * std::log(1e10);

struct PreparedSplat {
  Splat2D splat;
  Eigen::Matrix2d conic;
  Eigen::Matrix3d view_cov;  // W Sigma W^T
  double opacity;
  Eigen::Vector3d color;
  int x0, x1, y0, y1;
};

std::vector<PreparedSplat> prepare(std::span<const Gaussian> gaussians, const Camera& cam,
                                   const RenderSettings& settings) {
  std::vector<PreparedSplat> prepared;
  prepared.reserve(gaussians.size());
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const Gaussian& g = gaussians[i];
    auto splat = project(g, static_cast<int>(i), cam, settings);
    if (!splat) continue;
    const double det = splat->cov2d.determinant();
    if (!(det > 0.0) || !std::isfinite(det)) continue;
    PreparedSplat p;
    p.splat = *splat;
    p.conic = splat->cov2d.inverse();
    const Eigen::Matrix3d sigma = covariance_of(g);
    p.view_cov = cam.rotation * sigma * cam.rotation.transpose();
    p.opacity = g.opacity;
    p.color = g.color;
    const double ex = std::sqrt(kMaxMahalanobis * splat->cov2d(0, 0));
    const double ey = std::sqrt(kMaxMahalanobis * splat->cov2d(1, 1));
    p.x0 = std::max(0, static_cast<int>(std::ceil(splat->mean2d.x() - ex)));
    p.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(splat->mean2d.x() + ex)));
    p.y0 = std::max(0, static_cast<int>(std::ceil(splat->mean2d.y() - ey)));
    p.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(splat->mean2d.y() + ey)));
    if (p.x0 > p.x1 || p.y0 > p.y1) continue;
    prepared.push_back(p);
  }
  std::stable_sort(prepared.begin(), prepared.end(), [](const PreparedSplat& a, const PreparedSplat& b) {
    if (a.splat.depth != b.splat.depth) return a.splat.depth < b.splat.depth;
    return a.splat.gaussian_index < b.splat.gaussian_index;
  });
  return prepared;
}

struct Fragment {
  int splat;  // index into prepared list
  double gaussian;
  double alpha;
  double transmittance;
  bool clamped;
};

// Front-to-back walk over one pixel. Returns final transmittance.
template <typename Visit>
double composite_pixel(const std::vector<PreparedSplat>& splats, int x, int y, const RenderSettings& settings,
                       Visit&& visit) {
  double t = 1.0;
  for (std::size_t s = 0; s < splats.size(); ++s) {
    const PreparedSplat& p = splats[s];
    if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) continue;
    const Eigen::Vector2d d(x - p.splat.mean2d.x(), y - p.splat.mean2d.y());
    const double q = d.dot(p.conic * d);
    if (!(q <= kMaxMahalanobis)) continue;
    const double gauss = std::exp(-0.5 * q);
    double alpha = p.opacity * gauss;
    bool clamped = false;
    if (alpha > settings.alpha_max) {
      alpha = settings.alpha_max;
      clamped = true;
    }
    if (alpha <= 0.0) continue;
    const double next_t = t * (1.0 - alpha);
    if (next_t < settings.transmittance_min) break;
    visit(Fragment{static_cast<int>(s), gauss, alpha, t, clamped});
    t = next_t;
  }
  return t;
}

// dR/dq_k for the (already normalised) quaternion (w, x, y, z).
std::array<Eigen::Matrix3d, 4> rotation_derivatives(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Eigen::Matrix3d, 4> d;
  d[0] << 0, -2 * z, 2 * y,
          2 * z, 0, -2 * x,
          -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z,
          2 * y, -4 * x, -2 * w,
          2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w,
          2 * x, 0, 2 * z,
          -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x,
          2 * w, -4 * z, 2 * y,
          2 * x, 2 * y, 0;
  return d;
}

}  // namespace

std::optional<Splat2D> project(const Gaussian& g, int index, const Camera& cam, const RenderSettings& settings) {
  const Eigen::Vector3d p = cam.to_camera(g.position);
  if (!(p.z() > settings.near_plane)) return std::nullopt;
  const double inv_z = 1.0 / p.z();
  Splat2D s;
  s.gaussian_index = index;
  s.camera_point = p;
  s.depth = p.z();
  s.mean2d = {cam.fx * p.x() * inv_z + cam.cx, cam.fy * p.y() * inv_z + cam.cy};
  s.jacobian << cam.fx * inv_z, 0.0, -cam.fx * p.x() * inv_z * inv_z,
                0.0, cam.fy * inv_z, -cam.fy * p.y() * inv_z * inv_z;
  const Eigen::Matrix3d view_cov = cam.rotation * covariance_of(g) * cam.rotation.transpose();
  s.cov2d = s.jacobian * view_cov * s.jacobian.transpose();
  s.cov2d(0, 1) = s.cov2d(1, 0) = 0.5 * (s.cov2d(0, 1) + s.cov2d(1, 0));
  s.cov2d.diagonal().array() += settings.low_pass;
  if (!s.cov2d.allFinite() || !s.mean2d.allFinite()) return std::nullopt;

  const double mid = 0.5 * (s.cov2d(0, 0) + s.cov2d(1, 1));
  const double disc = std::sqrt(std::max(0.0, mid * mid - s.cov2d.determinant()));
  const double radius = 3.0 * std::sqrt(mid + disc);
  if (s.mean2d.x() + radius < 0.0 || s.mean2d.x() - radius > cam.width - 1 || s.mean2d.y() + radius < 0.0 ||
      s.mean2d.y() - radius > cam.height - 1)
    return std::nullopt;
  return s;
}

RenderOutput render(std::span<const Gaussian> gaussians, const Camera& cam, bool want_contribs,
                    const RenderSettings& settings) {
  RenderOutput out;
  out.color = Image(cam.width, cam.height, 3);
  out.depth = Image(cam.width, cam.height, 1);
  out.alpha_acc = Image(cam.width, cam.height, 1);
  if (want_contribs) out.contribs.resize(static_cast<std::size_t>(cam.width) * cam.height);

  const std::vector<PreparedSplat> splats = prepare(gaussians, cam, settings);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Eigen::Vector3d color = Eigen::Vector3d::Zero();
      double depth = 0.0;
      auto* list = want_contribs ? &out.contribs[static_cast<std::size_t>(y) * cam.width + x] : nullptr;
      const double t_final = composite_pixel(splats, x, y, settings, [&](const Fragment& f) {
        const PreparedSplat& p = splats[f.splat];
        const double w = f.transmittance * f.alpha;
        color += w * p.color;
        depth += w * p.splat.depth;
        if (list) list->push_back({p.splat.gaussian_index, w});
      });
      out.color.set_rgb(x, y, color + t_final * settings.background);
      out.depth(x, y) = depth;
      out.alpha_acc(x, y) = 1.0 - t_final;
    }
  }
  return out;
}

GaussianGradients render_adjoint(std::span<const Gaussian> gaussians, const Camera& cam, const Image& grad_color,
                                 const Image& grad_depth, const RenderSettings& settings) {
  if (grad_color.width() != cam.width || grad_color.height() != cam.height || grad_color.channels() != 3)
    throw ValidationError("render_adjoint: grad_color must be " + std::to_string(cam.width) + "x" +
                          std::to_string(cam.height) + "x3");
  if (grad_depth.width() != cam.width || grad_depth.height() != cam.height || grad_depth.channels() != 1)
    throw ValidationError("render_adjoint: grad_depth must be " + std::to_string(cam.width) + "x" +
                          std::to_string(cam.height) + "x1");

  GaussianGradients grads = GaussianGradients::zeros(gaussians.size());
  const std::vector<PreparedSplat> splats = prepare(gaussians, cam, settings);
  const std::size_t n = splats.size();

  // Screen-space accumulators per prepared splat.
  std::vector<Eigen::Vector2d> g_mean(n, Eigen::Vector2d::Zero());
  std::vector<Eigen::Matrix2d> g_conic(n, Eigen::Matrix2d::Zero());
  std::vector<double> g_depth(n, 0.0);

  std::vector<Fragment> fragments;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Eigen::Vector3d gc = grad_color.rgb(x, y);
      const double gd = grad_depth(x, y);
      if (gc.isZero(0.0) && gd == 0.0) continue;
      fragments.clear();
      const double t_final =
          composite_pixel(splats, x, y, settings, [&](const Fragment& f) { fragments.push_back(f); });

      // suffix = sum_{j>i} w_j (gc.c_j + gd d_j) + T_final gc.bg
      double suffix = t_final * gc.dot(settings.background);
      for (auto it = fragments.rbegin(); it != fragments.rend(); ++it) {
        const PreparedSplat& p = splats[it->splat];
        const int gi = p.splat.gaussian_index;
        const double w = it->transmittance * it->alpha;
        const double value = gc.dot(p.color) + gd * p.splat.depth;
        const double d_alpha = it->transmittance * value - suffix / (1.0 - it->alpha);
        suffix += w * value;

        grads.color.row(gi) += w * gc.transpose();
        g_depth[it->splat] += w * gd;
        if (it->clamped) continue;
        grads.opacity[gi] += d_alpha * it->gaussian;
        const double d_gauss = d_alpha * p.opacity;
        const Eigen::Vector2d delta(x - p.splat.mean2d.x(), y - p.splat.mean2d.y());
        g_mean[it->splat] += d_gauss * it->gaussian * (p.conic * delta);
        g_conic[it->splat] += (-0.5 * d_gauss * it->gaussian) * (delta * delta.transpose());
      }
    }
  }

  for (std::size_t s = 0; s < n; ++s) {
    const PreparedSplat& p = splats[s];
    const int gi = p.splat.gaussian_index;
    const Gaussian& g = gaussians[static_cast<std::size_t>(gi)];
    const Eigen::Matrix<double, 2, 3>& jac = p.splat.jacobian;
    const Eigen::Vector3d& pc = p.splat.camera_point;

    const Eigen::Matrix2d g_cov2d = -p.conic * g_conic[s] * p.conic;
    const Eigen::Matrix3d g_view_cov = jac.transpose() * g_cov2d * jac;
    const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_cov2d * jac * p.view_cov;

    // Camera-space point: through mean2d, depth and the Jacobian.
    Eigen::Vector3d g_point = jac.transpose() * g_mean[s];
    g_point.z() += g_depth[s];
    const double iz = 1.0 / pc.z();
    const double iz2 = iz * iz;
    const double iz3 = iz2 * iz;
    g_point.x() += g_jac(0, 2) * (-cam.fx * iz2);
    g_point.y() += g_jac(1, 2) * (-cam.fy * iz2);
    g_point.z() += g_jac(0, 0) * (-cam.fx * iz2) + g_jac(0, 2) * (2.0 * cam.fx * pc.x() * iz3) +
                   g_jac(1, 1) * (-cam.fy * iz2) + g_jac(1, 2) * (2.0 * cam.fy * pc.y() * iz3);
    grads.position.row(gi) += (cam.rotation.transpose() * g_point).transpose();

    // Sigma = R D R^T with D = diag(s^2).
    const Eigen::Matrix3d g_sigma = cam.rotation.transpose() * g_view_cov * cam.rotation;
    const double qnorm = g.rotation.norm();
    const Eigen::Vector4d qhat = g.rotation / qnorm;
    const Eigen::Matrix3d rot = rotation_matrix(qhat);
    const Eigen::Vector3d s2 = g.scale.cwiseProduct(g.scale);
    const Eigen::Matrix3d inner = rot.transpose() * g_sigma * rot;
    for (int k = 0; k < 3; ++k) grads.scale(gi, k) += 2.0 * g.scale[k] * inner(k, k);

    const Eigen::Matrix3d g_rot = 2.0 * g_sigma * rot * s2.asDiagonal();
    const auto d_rot = rotation_derivatives(qhat);
    Eigen::Vector4d g_qhat;
    for (int k = 0; k < 4; ++k) g_qhat[k] = (g_rot.array() * d_rot[k].array()).sum();
    const Eigen::Vector4d g_q = (g_qhat - qhat * qhat.dot(g_qhat)) / qnorm;
    grads.rotation.row(gi) += g_q.transpose();
  }
  return grads;
}

}  // namespace splatstyle
