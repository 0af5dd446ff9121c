#pragma once

#include "splatstyle/render.hpp"
#include "splatstyle/scene.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace testing {

using splatstyle::Camera;
using splatstyle::Gaussian;
using splatstyle::GaussianGradients;
using splatstyle::GaussianScene;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal();
    return m;
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Norm-wise relative error with an absolute floor.
inline double rel_error(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b,
                        double floor = 1e-8) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

/// Identity camera looking down +z.
inline Camera front_camera(int width, int height, double focal) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  return cam;
}

inline Eigen::Vector4d random_quaternion(Rng& rng) {
  Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q / q.norm();
}

/// Small scene well inside the frustum of front_camera(16, 16, 16).
inline GaussianScene random_scene(int n, Rng& rng) {
  std::vector<Gaussian> gs;
  for (int i = 0; i < n; ++i) {
    Gaussian g;
    const double z = rng.uniform(2.5, 4.0);
    g.position = Eigen::Vector3d(rng.uniform(-0.25, 0.25) * z, rng.uniform(-0.25, 0.25) * z, z);
    g.rotation = random_quaternion(rng);
    g.scale = Eigen::Vector3d(rng.uniform(0.25, 0.5), rng.uniform(0.25, 0.5), rng.uniform(0.15, 0.4));
    g.opacity = rng.uniform(0.3, 0.75);
    g.color = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());
    gs.push_back(g);
  }
  return GaussianScene(std::move(gs));
}

/// Central finite differences of f over every Gaussian parameter.
inline GaussianGradients numeric_gradient(const GaussianScene& scene, const std::function<double(const GaussianScene&)>& f,
                                          double eps = 1e-6) {
  GaussianGradients g = GaussianGradients::zeros(scene.size());
  GaussianScene s = scene;
  auto probe = [&](double& value) {
    const double keep = value;
    value = keep + eps;
    const double up = f(s);
    value = keep - eps;
    const double down = f(s);
    value = keep;
    return (up - down) / (2.0 * eps);
  };
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    Gaussian& gi = s.gaussians[i];
    for (int k = 0; k < 3; ++k) g.position(r, k) = probe(gi.position[k]);
    for (int k = 0; k < 4; ++k) g.rotation(r, k) = probe(gi.rotation[k]);
    for (int k = 0; k < 3; ++k) g.scale(r, k) = probe(gi.scale[k]);
    g.opacity[r] = probe(gi.opacity);
    for (int k = 0; k < 3; ++k) g.color(r, k) = probe(gi.color[k]);
  }
  return g;
}

struct GroupErrors {
  double position, rotation, scale, opacity, color;
  double max() const { return std::max({position, rotation, scale, opacity, color}); }
};

inline GroupErrors compare(const GaussianGradients& a, const GaussianGradients& b) {
  return {rel_error(a.position, b.position), rel_error(a.rotation, b.rotation), rel_error(a.scale, b.scale),
          rel_error(a.opacity, b.opacity), rel_error(a.color, b.color)};
}

/// Fresh empty directory under the system temp folder.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("splatstyle_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
