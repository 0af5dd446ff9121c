#include "splatstyle/scene.hpp"

#include "splatstyle/error.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace splatstyle {

using json = nlohmann::json;

Eigen::Matrix4d Camera::world_to_camera() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, int width, int height, double focal) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  const Eigen::Vector3d right = forward.cross(up).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  return cam;
}

void GaussianScene::capture_snapshot() {
  snapshot_.clear();
  snapshot_.reserve(gaussians.size());
  for (const Gaussian& g : gaussians) snapshot_.push_back({g.scale, g.opacity, g.color});
}

Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q) {
  const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  return quat.normalized().toRotationMatrix();
}

Eigen::Matrix3d covariance_of(const Gaussian& g) {
  const Eigen::Matrix3d r = rotation_matrix(g.rotation);
  const Eigen::Matrix3d m = r * g.scale.asDiagonal();
  return m * m.transpose();
}

void validate(const Gaussian& g, std::size_t index) {
  const std::string where = "gaussian " + std::to_string(index) + ": ";
  if (!g.position.allFinite()) throw ValidationError(where + "non-finite position");
  if (!g.rotation.allFinite() || std::abs(g.rotation.norm() - 1.0) > 1e-6)
    throw ValidationError(where + "rotation is not a unit quaternion");
  if (!g.scale.allFinite() || (g.scale.array() <= 0.0).any())
    throw ValidationError(where + "scale must be positive");
  if (!std::isfinite(g.opacity) || g.opacity < 0.0 || g.opacity > 1.0)
    throw ValidationError(where + "opacity outside [0,1]");
  if (!g.color.allFinite()) throw ValidationError(where + "non-finite color");
}

std::filesystem::path labels_sidecar_path(const std::filesystem::path& scene_path) {
  return std::filesystem::path(scene_path.string() + ".labels.json");
}

namespace {

// ---------------------------------------------------------------------------
// PLY

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType parse_ply_type(const std::string& name) {
  static const std::map<std::string, PlyType> types = {
      {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
      {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
      {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
      {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
      {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
      {"float64", PlyType::Float64}};
  const auto it = types.find(name);
  if (it == types.end()) throw LoadError("PLY: unsupported property type '" + name + "'");
  return it->second;
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

template <typename T>
T read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;  // host is little-endian (x86_64 / aarch64)
}

double decode_value(PlyType t, const char* p) {
  switch (t) {
    case PlyType::Int8: return read_le<std::int8_t>(p);
    case PlyType::UInt8: return read_le<std::uint8_t>(p);
    case PlyType::Int16: return read_le<std::int16_t>(p);
    case PlyType::UInt16: return read_le<std::uint16_t>(p);
    case PlyType::Int32: return read_le<std::int32_t>(p);
    case PlyType::UInt32: return read_le<std::uint32_t>(p);
    case PlyType::Float32: return read_le<float>(p);
    case PlyType::Float64: return read_le<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type;
  std::size_t offset;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
  std::size_t stride = 0;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
  p = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return std::log(p / (1.0 - p));
}

GaussianScene load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());

  std::string line;
  std::getline(in, line);
  if (line != "ply" && line != "ply\r") throw LoadError("PLY: missing 'ply' magic in " + path.string());

  bool binary = false;
  std::vector<PlyElement> elements;
  while (true) {
    if (!std::getline(in, line)) throw LoadError("PLY: unterminated header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt == "ascii") binary = false;
      else throw LoadError("PLY: unsupported format '" + fmt + "'");
    } else if (keyword == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      if (!ls) throw LoadError("PLY: malformed element line '" + line + "'");
      elements.push_back(e);
    } else if (keyword == "property") {
      if (elements.empty()) throw LoadError("PLY: property before element");
      std::string type_name, name;
      ls >> type_name;
      if (type_name == "list") throw LoadError("PLY: list properties are not supported");
      ls >> name;
      if (!ls) throw LoadError("PLY: malformed property line '" + line + "'");
      PlyElement& e = elements.back();
      const PlyType t = parse_ply_type(type_name);
      e.properties.push_back({name, t, e.stride});
      e.stride += ply_size(t);
    } else if (keyword == "end_header") {
      break;
    } else if (keyword == "comment" || keyword == "obj_info" || keyword.empty()) {
      continue;
    } else {
      throw LoadError("PLY: unknown header keyword '" + keyword + "'");
    }
  }

  const auto vertex_it =
      std::find_if(elements.begin(), elements.end(), [](const PlyElement& e) { return e.name == "vertex"; });
  if (vertex_it == elements.end()) throw LoadError("PLY: no vertex element");
  if (vertex_it != elements.begin()) throw LoadError("PLY: vertex must be the first element");
  const PlyElement& vertex = *vertex_it;

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < vertex.properties.size(); ++i) index[vertex.properties[i].name] = i;
  const std::array<const char*, 16> required = {"x",       "y",       "z",       "scale_0", "scale_1", "scale_2",
                                                "rot_0",   "rot_1",   "rot_2",   "rot_3",   "opacity", "f_dc_0",
                                                "f_dc_1",  "f_dc_2",  nullptr,   nullptr};
  for (const char* name : required) {
    if (name && !index.count(name)) throw LoadError(std::string("PLY: missing property '") + name + "'");
  }
  const bool has_rest = std::any_of(vertex.properties.begin(), vertex.properties.end(),
                                    [](const PlyProperty& p) { return p.name.rfind("f_rest_", 0) == 0; });
  if (has_rest) spdlog::warn("{}: higher-degree SH coefficients discarded", path.string());

  std::vector<Gaussian> gaussians(vertex.count);
  std::vector<double> values(vertex.properties.size());
  std::vector<char> record(vertex.stride);
  auto field = [&](const char* name) { return values[index.at(name)]; };

  for (std::size_t v = 0; v < vertex.count; ++v) {
    if (binary) {
      in.read(record.data(), static_cast<std::streamsize>(vertex.stride));
      if (!in) throw LoadError("PLY: truncated vertex data at vertex " + std::to_string(v));
      for (std::size_t p = 0; p < vertex.properties.size(); ++p)
        values[p] = decode_value(vertex.properties[p].type, record.data() + vertex.properties[p].offset);
    } else {
      for (std::size_t p = 0; p < vertex.properties.size(); ++p) {
        std::string token;
        if (!(in >> token)) throw LoadError("PLY: truncated ascii data at vertex " + std::to_string(v));
        char* end = nullptr;
        values[p] = std::strtod(token.c_str(), &end);
        if (end == token.c_str() || *end != '\0')
          throw LoadError("PLY: malformed value in field '" + vertex.properties[p].name + "' at vertex " +
                          std::to_string(v));
      }
    }
    for (std::size_t p = 0; p < vertex.properties.size(); ++p) {
      if (!std::isfinite(values[p]))
        throw LoadError("PLY: non-finite value in field '" + vertex.properties[p].name + "' at vertex " +
                        std::to_string(v));
    }
    Gaussian& g = gaussians[v];
    g.position = {field("x"), field("y"), field("z")};
    g.scale = {std::exp(field("scale_0")), std::exp(field("scale_1")), std::exp(field("scale_2"))};
    g.rotation = {field("rot_0"), field("rot_1"), field("rot_2"), field("rot_3")};
    const double qn = g.rotation.norm();
    if (qn == 0.0) throw LoadError("PLY: zero quaternion in field 'rot' at vertex " + std::to_string(v));
    g.rotation /= qn;
    g.opacity = sigmoid(field("opacity"));
    g.color = Eigen::Vector3d(field("f_dc_0"), field("f_dc_1"), field("f_dc_2")) * kShC0 +
              Eigen::Vector3d::Constant(0.5);
  }
  return GaussianScene(std::move(gaussians));
}

void save_ply(const GaussianScene& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  static const std::array<const char*, 17> names = {"x",      "y",      "z",      "nx",      "ny",      "nz",
                                                    "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1",
                                                    "scale_2", "rot_0", "rot_1",  "rot_2",   "rot_3"};
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << scene.size() << "\n";
  for (const char* n : names) out << "property float " << n << "\n";
  out << "end_header\n";
  std::array<float, names.size()> row{};
  for (const Gaussian& g : scene.gaussians) {
    const Eigen::Vector3d dc = (g.color - Eigen::Vector3d::Constant(0.5)) / kShC0;
    const double values[names.size()] = {g.position.x(),      g.position.y(),      g.position.z(),
                                         0.0,                 0.0,                 0.0,
                                         dc.x(),              dc.y(),              dc.z(),
                                         logit(g.opacity),    std::log(g.scale.x()), std::log(g.scale.y()),
                                         std::log(g.scale.z()), g.rotation[0],     g.rotation[1],
                                         g.rotation[2],       g.rotation[3]};
    for (std::size_t i = 0; i < names.size(); ++i) row[i] = static_cast<float>(values[i]);
    out.write(reinterpret_cast<const char*>(row.data()), sizeof(row));
  }
  if (!out) throw Error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// JSON

template <int N>
Eigen::Matrix<double, N, 1> json_vec(const json& j, const char* field, std::size_t index) {
  if (!j.contains(field) || !j[field].is_array() || j[field].size() != N)
    throw LoadError("JSON scene: gaussian " + std::to_string(index) + " field '" + field + "' must be an array of " +
                    std::to_string(N));
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    const json& e = j[field][i];
    if (!e.is_number()) throw LoadError(std::string("JSON scene: non-numeric entry in field '") + field + "'");
    v[i] = e.get<double>();
  }
  if (!v.allFinite()) throw LoadError(std::string("JSON scene: non-finite value in field '") + field + "'");
  return v;
}

GaussianScene load_json_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("JSON scene: " + std::string(e.what()));
  }
  if (!doc.contains("gaussians") || !doc["gaussians"].is_array())
    throw LoadError("JSON scene: missing 'gaussians' array");
  std::vector<Gaussian> gaussians;
  std::size_t i = 0;
  for (const json& jg : doc["gaussians"]) {
    Gaussian g;
    g.position = json_vec<3>(jg, "position", i);
    g.rotation = json_vec<4>(jg, "rotation", i);
    if (g.rotation.norm() == 0.0) throw LoadError("JSON scene: zero quaternion in field 'rotation'");
    g.rotation.normalize();
    g.scale = json_vec<3>(jg, "scale", i);
    g.color = json_vec<3>(jg, "color", i);
    if (!jg.contains("opacity") || !jg["opacity"].is_number())
      throw LoadError("JSON scene: gaussian " + std::to_string(i) + " missing field 'opacity'");
    g.opacity = jg["opacity"].get<double>();
    if (!std::isfinite(g.opacity)) throw LoadError("JSON scene: non-finite value in field 'opacity'");
    if (jg.contains("label") && !jg["label"].is_null()) g.label = jg["label"].get<int>();
    try {
      validate(g, i);
    } catch (const ValidationError& e) {
      throw LoadError(std::string("JSON scene: ") + e.what());
    }
    gaussians.push_back(g);
    ++i;
  }
  return GaussianScene(std::move(gaussians));
}

void save_json_scene(const GaussianScene& scene, const std::filesystem::path& path) {
  json doc;
  doc["gaussians"] = json::array();
  for (const Gaussian& g : scene.gaussians) {
    json jg;
    jg["position"] = {g.position.x(), g.position.y(), g.position.z()};
    jg["rotation"] = {g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3]};
    jg["scale"] = {g.scale.x(), g.scale.y(), g.scale.z()};
    jg["opacity"] = g.opacity;
    jg["color"] = {g.color.x(), g.color.y(), g.color.z()};
    if (g.label) jg["label"] = *g.label;
    doc["gaussians"].push_back(jg);
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(1) << "\n";
}

bool is_json(const std::filesystem::path& path) { return path.extension() == ".json"; }

}  // namespace

GaussianScene load_scene(const std::filesystem::path& path) {
  GaussianScene scene = is_json(path) ? load_json_scene(path) : load_ply(path);
  const auto sidecar = labels_sidecar_path(path);
  if (!is_json(path) && std::filesystem::exists(sidecar)) {
    std::ifstream in(sidecar);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw LoadError("labels sidecar: " + std::string(e.what()));
    }
    const json& labels = doc.at("labels");
    if (!labels.is_array() || labels.size() != scene.size())
      throw LoadError("labels sidecar: expected " + std::to_string(scene.size()) + " entries");
    for (std::size_t i = 0; i < scene.size(); ++i) {
      if (!labels[i].is_null()) scene.gaussians[i].label = labels[i].get<int>();
    }
  }
  return scene;
}

void save_scene(const GaussianScene& scene, const std::filesystem::path& path) {
  if (is_json(path)) {
    save_json_scene(scene, path);
    return;
  }
  save_ply(scene, path);
  const auto sidecar = labels_sidecar_path(path);
  const bool any_label =
      std::any_of(scene.gaussians.begin(), scene.gaussians.end(), [](const Gaussian& g) { return g.label.has_value(); });
  if (any_label) {
    json doc;
    doc["labels"] = json::array();
    for (const Gaussian& g : scene.gaussians) doc["labels"].push_back(g.label ? json(*g.label) : json(nullptr));
    std::ofstream out(sidecar);
    if (!out) throw Error("cannot write " + sidecar.string());
    out << doc.dump() << "\n";
  } else if (std::filesystem::exists(sidecar)) {
    std::filesystem::remove(sidecar);
  }
}

std::vector<Camera> load_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("cameras: " + std::string(e.what()));
  }
  if (!doc.contains("cameras") || !doc["cameras"].is_array()) throw LoadError("cameras: missing 'cameras' array");
  std::vector<Camera> cameras;
  for (const json& jc : doc["cameras"]) {
    Camera cam;
    try {
      cam.width = jc.at("width").get<int>();
      cam.height = jc.at("height").get<int>();
      cam.fx = jc.at("fx").get<double>();
      cam.fy = jc.at("fy").get<double>();
      cam.cx = jc.at("cx").get<double>();
      cam.cy = jc.at("cy").get<double>();
      const json& m = jc.at("world_to_camera");
      if (!m.is_array() || m.size() != 16) throw LoadError("cameras: world_to_camera must have 16 entries");
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) cam.rotation(r, c) = m[r * 4 + c].get<double>();
        cam.translation[r] = m[r * 4 + 3].get<double>();
      }
    } catch (const json::exception& e) {
      throw LoadError("cameras: " + std::string(e.what()));
    }
    if (cam.width <= 0 || cam.height <= 0) throw LoadError("cameras: width/height must be positive");
    if (!(cam.fx > 0) || !(cam.fy > 0)) throw LoadError("cameras: focal lengths must be positive");
    if (!(cam.rotation * cam.rotation.transpose()).isIdentity(1e-6))
      throw LoadError("cameras: rotation part is not orthonormal");
    cameras.push_back(cam);
  }
  return cameras;
}

void save_cameras(std::span<const Camera> cameras, const std::filesystem::path& path) {
  json doc;
  doc["cameras"] = json::array();
  for (const Camera& cam : cameras) {
    json jc;
    jc["width"] = cam.width;
    jc["height"] = cam.height;
    jc["fx"] = cam.fx;
    jc["fy"] = cam.fy;
    jc["cx"] = cam.cx;
    jc["cy"] = cam.cy;
    const Eigen::Matrix4d m = cam.world_to_camera();
    json flat = json::array();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) flat.push_back(m(r, c));
    jc["world_to_camera"] = flat;
    doc["cameras"].push_back(jc);
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(1) << "\n";
}

OutlierFilter OutlierFilter::defaults_for(const GaussianScene& scene) {
  OutlierFilter f;
  if (scene.empty()) return f;
  Eigen::Vector3d lo = scene.gaussians.front().position;
  Eigen::Vector3d hi = lo;
  for (const Gaussian& g : scene.gaussians) {
    lo = lo.cwiseMin(g.position);
    hi = hi.cwiseMax(g.position);
  }
  const double diagonal = (hi - lo).norm();
  f.scale_max = 0.1 * diagonal;
  f.neighbor_radius = 0.02 * diagonal;
  f.min_neighbors = 3;
  return f;
}

GaussianScene filter_outliers(const GaussianScene& scene, const OutlierFilter& filter) {
  if (filter.opacity_min < 0 || filter.scale_max < 0 || filter.neighbor_radius < 0 || filter.min_neighbors < 0)
    throw ValidationError("filter_outliers: thresholds must be non-negative");
  const double r2 = filter.neighbor_radius * filter.neighbor_radius;
  std::vector<Gaussian> kept;
  kept.reserve(scene.size());
  for (const Gaussian& g : scene.gaussians) {
    if (g.opacity < filter.opacity_min) continue;
    if ((g.scale.array() > filter.scale_max).any()) continue;
    kept.push_back(g);
  }
  // Iterate to a fixed point.
  bool changed = filter.min_neighbors > 0;
  while (changed && !kept.empty()) {
    std::vector<Gaussian> next;
    next.reserve(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
      int neighbors = 0;
      for (std::size_t j = 0; j < kept.size() && neighbors < filter.min_neighbors; ++j) {
        if (j != i && (kept[j].position - kept[i].position).squaredNorm() <= r2) ++neighbors;
      }
      if (neighbors >= filter.min_neighbors) next.push_back(kept[i]);
    }
    changed = next.size() != kept.size();
    kept = std::move(next);
  }
  if (kept.empty()) throw NumericalError("filter_outliers: every Gaussian was removed (degenerate scene)");
  return GaussianScene(std::move(kept), scene.cameras);
}

}  // namespace splatstyle
