#include "splatstyle/toy.hpp"

#include "splatstyle/error.hpp"
#include "splatstyle/render.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace splatstyle {

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) { return lo + (hi - lo) * unit(engine_); }
  double normal() { return gauss(engine_); }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit{0.0, 1.0};
  std::normal_distribution<double> gauss{0.0, 1.0};
};

Eigen::Vector4d random_quaternion(Rng& rng) {
  Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q / q.norm();
}

Gaussian make_gaussian(Rng& rng, const Eigen::Vector3d& position, const Eigen::Vector3d& color) {
  Gaussian g;
  g.position = position;
  g.rotation = random_quaternion(rng);
  const double base = rng.uniform(0.10, 0.15);
  g.scale = Eigen::Vector3d(base * rng.uniform(0.8, 1.2), base * rng.uniform(0.8, 1.2), base * rng.uniform(0.5, 0.8));
  g.opacity = rng.uniform(0.75, 0.9);
  g.color = color.cwiseMax(0.05).cwiseMin(0.95);
  return g;
}

const Eigen::Vector3d kSphereCenter(-0.65, 0.0, 0.0);
const Eigen::Vector3d kCubeCenter(0.65, 0.0, 0.0);

Gaussian sphere_gaussian(Rng& rng) {
  Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
  dir.normalize();
  const Eigen::Vector3d p = kSphereCenter + 0.5 * dir;
  const Eigen::Vector3d color(0.72 + 0.15 * dir.x(), 0.35 + 0.12 * std::sin(4.0 * dir.y()), 0.28 + 0.1 * dir.z());
  return make_gaussian(rng, p, color);
}

Gaussian cube_gaussian(Rng& rng) {
  const int face = static_cast<int>(rng.uniform(0.0, 6.0)) % 6;
  Eigen::Vector3d local(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4));
  local[face / 2] = face % 2 == 0 ? -0.4 : 0.4;
  const Eigen::Vector3d p = kCubeCenter + local;
  const Eigen::Vector3d color(0.3 + 0.1 * std::sin(6.0 * local.y()), 0.45 + 0.12 * std::cos(5.0 * local.x()),
                              0.72 + 0.1 * local.z() / 0.4);
  return make_gaussian(rng, p, color);
}

Image make_style_a(int size, Rng& rng) {
  Image img(size, size, 3);
  const Eigen::Vector3d orange(0.85, 0.42, 0.15), yellow(0.95, 0.82, 0.32);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double s = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (x + y) / 12.0);
      Eigen::Vector3d c = (1.0 - s) * orange + s * yellow;
      c += Eigen::Vector3d::Constant(0.03 * rng.normal());
      img.set_rgb(x, y, c.cwiseMax(0.0).cwiseMin(1.0));
    }
  return img;
}

Image make_style_b(int size, Rng& rng) {
  Image img(size, size, 3);
  const Eigen::Vector3d teal(0.1, 0.45, 0.5), purple(0.5, 0.2, 0.6);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double s = 0.5 + 0.25 * (std::sin(x / 7.0) + std::cos(y / 5.0));
      Eigen::Vector3d c = (1.0 - s) * teal + s * purple;
      c += Eigen::Vector3d(0.03 * rng.normal(), 0.03 * rng.normal(), 0.03 * rng.normal());
      img.set_rgb(x, y, c.cwiseMax(0.0).cwiseMin(1.0));
    }
  return img;
}

// Dominant object label per pixel where accumulated coverage reaches 0.5.
LabelMask object_mask(const RenderOutput& r, const std::vector<std::optional<int>>& labels) {
  const int w = r.color.width(), h = r.color.height();
  LabelGrid grid = LabelGrid::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (r.alpha_acc(x, y) < 0.5) continue;
      double weight[3] = {0.0, 0.0, 0.0};
      for (const Contribution& c : r.contribs[static_cast<std::size_t>(y) * w + x])
        weight[labels[static_cast<std::size_t>(c.gaussian_index)].value_or(0)] += c.weight;
      grid(y, x) = weight[1] >= weight[2] ? 1 : 2;
    }
  return LabelMask::from_grid(std::move(grid));
}

}  // namespace

ToyAssets make_toy(const ToyOptions& options) {
  Rng rng(options.seed);
  ToyAssets toy;
  std::vector<Gaussian> gaussians;
  for (int i = 0; i < options.gaussians_per_object; ++i) {
    gaussians.push_back(sphere_gaussian(rng));
    toy.true_labels.push_back(1);
  }
  for (int i = 0; i < options.gaussians_per_object; ++i) {
    gaussians.push_back(cube_gaussian(rng));
    toy.true_labels.push_back(2);
  }

  std::vector<Camera> cameras;
  for (int v = 0; v < options.views; ++v) {
    const double angle = 2.0 * std::numbers::pi * (v + 0.25) / options.views;
    const Eigen::Vector3d eye(4.0 * std::sin(angle), -1.2 + 0.3 * (v % 2), 4.0 * std::cos(angle));
    cameras.push_back(Camera::look_at(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d(0.0, 1.0, 0.0), options.width,
                                      options.height, options.focal));
  }
  toy.scene = GaussianScene(std::move(gaussians), std::move(cameras));

  for (const Camera& cam : toy.scene.cameras) {
    const RenderOutput r = render(toy.scene, cam, true);
    toy.content.push_back(r.color);
    toy.masks.push_back(object_mask(r, toy.true_labels));
  }

  toy.style_a = make_style_a(options.style_size, rng);
  toy.style_b = make_style_b(options.style_size, rng);
  const int s = options.style_size;
  toy.style_split = Image(s, s, 3);
  toy.style_split_mask = LabelGrid::Zero(s, s);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const bool left = x < s / 2;
      toy.style_split.set_rgb(x, y, left ? toy.style_a.rgb(x, y) : toy.style_b.rgb(x, y));
      toy.style_split_mask(y, x) = left ? 1 : 2;
    }
  return toy;
}

namespace {

void write_json(const nlohmann::ordered_json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::string indexed(const char* prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02zu.png", prefix, i);
  return buf;
}

}  // namespace

void write_toy(const ToyAssets& toy, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_scene(toy.scene, dir / "scene.ply");
  save_cameras(toy.scene.cameras, dir / "cameras.json");
  nlohmann::ordered_json images = nlohmann::ordered_json::array(), masks = nlohmann::ordered_json::array();
  for (std::size_t v = 0; v < toy.content.size(); ++v) {
    write_png_rgb(toy.content[v], dir / indexed("content", v));
    write_png_labels(toy.masks[v].grid, dir / indexed("mask", v));
    images.push_back(indexed("content", v));
    masks.push_back(indexed("mask", v));
  }
  write_png_rgb(toy.style_a, dir / "style_a.png");
  write_png_rgb(toy.style_b, dir / "style_b.png");
  write_png_rgb(toy.style_split, dir / "style_split.png");
  write_png_labels(toy.style_split_mask, dir / "style_split_mask.png");

  auto base = [&](const char* type, const char* out) {
    nlohmann::ordered_json j;
    j["scene"] = "scene.ply";
    j["cameras"] = "cameras.json";
    j["content_images"] = images;
    j["content_masks"] = masks;
    j["transfer_type"] = type;
    j["loss"] = {{"fast", 2.0}, {"content", 0.005}, {"tv", 0.02}, {"depth", 0.01},
                 {"scale", 1.0}, {"opacity", 1.0},  {"k", 5},      {"style_loss", "fast"}};
    j["tau"] = 0.6;
    j["erosion_radius"] = 2;
    j["extractor"] = {{"kind", "patch_stats"}, {"patch", 8}, {"step", 8}};
    j["outlier_filter"] = {{"opacity_min", 0.005}, {"scale_max", nullptr}, {"neighbor_radius", 0.0},
                           {"min_neighbors", 0}};
    j["optimizer"] = {{"reconstruction_iterations", 300}, {"stylization_iterations", 600}, {"lambda_dssim", 0.2}};
    j["seed"] = 1;
    j["output"] = out;
    return j;
  };

  auto single = base("single", "out_single");
  single["styles"] = {{{"image", "style_a.png"}, {"completion", "mirror"}}};
  single["mapping"] = {{"1", 0}, {"2", 0}};
  write_json(single, dir / "config_single.json");

  auto comp = base("compositional", "out_compositional");
  comp["styles"] = {{{"image", "style_a.png"}, {"completion", "mirror"}},
                    {{"image", "style_b.png"}, {"completion", "mirror"}}};
  comp["mapping"] = {{"1", 0}, {"2", 1}};
  write_json(comp, dir / "config_compositional.json");

  auto sem = base("semantic", "out_semantic");
  sem["styles"] = {
      {{"image", "style_split.png"}, {"mask", "style_split_mask.png"}, {"region_label", 1}, {"completion", "mirror"}},
      {{"image", "style_split.png"}, {"mask", "style_split_mask.png"}, {"region_label", 2}, {"completion", "translate"}}};
  sem["mapping"] = {{"1", 0}, {"2", 1}};
  write_json(sem, dir / "config_semantic.json");
}

}  // namespace splatstyle
