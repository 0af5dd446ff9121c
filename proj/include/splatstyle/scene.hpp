#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace splatstyle {

/// Degree-0 spherical-harmonic normalisation constant.
inline constexpr double kShC0 = 0.28209479177387814;

/// One anisotropic 3D Gaussian. Rotation is a unit quaternion stored as
/// (w, x, y, z); scale holds linear (not log) axis lengths.
struct Gaussian {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();
  double opacity = 1.0;
  Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
  std::optional<int> label;
};

/// Pinhole camera with a world-to-camera rigid transform. Pixel (u, v) has
/// its center at image coordinates (u, v).
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Matrix4d world_to_camera() const;
  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return rotation * world + translation; }

  /// Camera looking from `eye` toward `target`; +y of the image points along -up.
  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                        const Eigen::Vector3d& up, int width, int height, double focal);
};

/// Appearance values frozen when a scene is loaded; the scale and opacity
/// regularizers measure drift against these.
struct InitialState {
  Eigen::Vector3d scale;
  double opacity;
  Eigen::Vector3d color;
};

class GaussianScene {
 public:
  GaussianScene() = default;
  explicit GaussianScene(std::vector<Gaussian> gaussians, std::vector<Camera> cameras = {})
      : gaussians(std::move(gaussians)), cameras(std::move(cameras)) {
    capture_snapshot();
  }

  std::vector<Gaussian> gaussians;
  std::vector<Camera> cameras;

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }

  const std::vector<InitialState>& initial_snapshot() const { return snapshot_; }
  void capture_snapshot();

 private:
  std::vector<InitialState> snapshot_;
};

/// Rotation matrix of the normalised quaternion (w, x, y, z).
Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& quaternion);

/// R diag(s)^2 R^T.
Eigen::Matrix3d covariance_of(const Gaussian& g);

/// Reads a 3DGS PLY (binary little-endian or ascii) or the JSON scene format,
/// chosen by extension. A `<path>.labels.json` sidecar, when present, restores
/// labels.
GaussianScene load_scene(const std::filesystem::path& path);

/// Writes PLY (binary little-endian, float32) or JSON by extension. PLY output
/// gets a labels sidecar when any Gaussian is labelled.
void save_scene(const GaussianScene& scene, const std::filesystem::path& path);

std::filesystem::path labels_sidecar_path(const std::filesystem::path& scene_path);

std::vector<Camera> load_cameras(const std::filesystem::path& path);
void save_cameras(std::span<const Camera> cameras, const std::filesystem::path& path);

struct OutlierFilter {
  double opacity_min = 0.005;
  double scale_max = std::numeric_limits<double>::infinity();
  double neighbor_radius = 0.0;
  int min_neighbors = 0;

  /// Defaults scaled to the scene: scale_max = 0.1 x bbox diagonal,
  /// neighbor_radius = 0.02 x bbox diagonal, min_neighbors = 3.
  static OutlierFilter defaults_for(const GaussianScene& scene);
};

/// Drops low-opacity, oversized and isolated Gaussians and re-captures the
/// snapshot on the survivors. Throws NumericalError if nothing survives.
GaussianScene filter_outliers(const GaussianScene& scene, const OutlierFilter& filter);

/// Checks the quaternion / scale / opacity invariants; throws ValidationError.
void validate(const Gaussian& g, std::size_t index);

}  // namespace splatstyle
