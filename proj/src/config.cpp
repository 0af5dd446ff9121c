#include "splatstyle/config.hpp"

#include "splatstyle/error.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <set>

namespace splatstyle {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(TransferType t) {
  switch (t) {
    case TransferType::Single: return "single";
    case TransferType::Compositional: return "compositional";
    case TransferType::Semantic: return "semantic";
  }
  return "single";
}

TransferType parse_transfer_type(const std::string& name) {
  if (name == "single") return TransferType::Single;
  if (name == "compositional") return TransferType::Compositional;
  if (name == "semantic") return TransferType::Semantic;
  throw ValidationError("transfer_type: unknown value '" + name + "' (expected single, compositional or semantic)");
}

namespace {

template <typename T>
T field(const json& j, const char* key, const T& fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + key + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

StylizeConfig StylizeConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw LoadError("config '" + path.string() + "': " + e.what());
  }
  if (!j.is_object()) throw ValidationError("config root must be an object");
  const fs::path base = fs::absolute(path).parent_path();
  StylizeConfig c;

  auto required_path = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw ValidationError(std::string(key) + ": required path missing");
    return resolve(base, j[key].get<std::string>());
  };
  c.scene = required_path("scene");
  c.cameras = required_path("cameras");
  for (const char* key : {"content_images", "content_masks"}) {
    if (!j.contains(key) || !j[key].is_array()) throw ValidationError(std::string(key) + ": required list missing");
    auto& dst = std::string(key) == "content_images" ? c.content_images : c.content_masks;
    for (const auto& e : j[key]) {
      if (!e.is_string()) throw ValidationError(std::string(key) + ": entries must be paths");
      dst.push_back(resolve(base, e.get<std::string>()));
    }
  }

  if (!j.contains("styles") || !j["styles"].is_array() || j["styles"].empty())
    throw ValidationError("styles: at least one style entry is required");
  for (std::size_t i = 0; i < j["styles"].size(); ++i) {
    const json& s = j["styles"][i];
    const std::string where = "styles[" + std::to_string(i) + "].";
    if (!s.contains("image") || !s["image"].is_string()) throw ValidationError(where + "image: required path missing");
    StyleEntry e;
    e.image = resolve(base, s["image"].get<std::string>());
    if (s.contains("mask")) e.mask = resolve(base, field<std::string>(s, "mask", "", where));
    e.region_label = field<int>(s, "region_label", 1, where);
    e.completion = parse_completion_mode(field<std::string>(s, "completion", "mirror", where));
    c.styles.push_back(std::move(e));
  }

  if (j.contains("mapping")) {
    if (!j["mapping"].is_object()) throw ValidationError("mapping: must map content labels to style indices");
    for (const auto& [label, index] : j["mapping"].items()) {
      int l = 0;
      try {
        l = std::stoi(label);
      } catch (const std::exception&) {
        throw ValidationError("mapping: key '" + label + "' is not an integer label");
      }
      if (!index.is_number_integer()) throw ValidationError("mapping." + label + ": style index must be an integer");
      c.mapping[l] = index.get<int>();
    }
  }
  c.transfer_type = parse_transfer_type(field<std::string>(j, "transfer_type", "single", ""));

  if (j.contains("loss")) {
    const json& l = j["loss"];
    c.weights.fast = field(l, "fast", c.weights.fast, "loss.");
    c.weights.content = field(l, "content", c.weights.content, "loss.");
    c.weights.tv = field(l, "tv", c.weights.tv, "loss.");
    c.weights.depth = field(l, "depth", c.weights.depth, "loss.");
    c.weights.scale = field(l, "scale", c.weights.scale, "loss.");
    c.weights.opacity = field(l, "opacity", c.weights.opacity, "loss.");
    c.weights.k = field(l, "k", c.weights.k, "loss.");
    c.style_loss = parse_style_loss(field<std::string>(l, "style_loss", "fast", "loss."));
    c.ridge = field(l, "ridge", c.ridge, "loss.");
  }
  c.tau = field(j, "tau", c.tau, "");
  c.erosion_radius = field(j, "erosion_radius", c.erosion_radius, "");

  if (j.contains("extractor")) {
    const json& e = j["extractor"];
    const std::string kind = field<std::string>(e, "kind", "patch_stats", "extractor.");
    if (kind == "patch_stats") {
      c.extractor = FeatureExtractorSpec::patch_stats(field(e, "patch", 8, "extractor."), field(e, "step", 8, "extractor."));
    } else if (kind == "file") {
      c.extractor.kind = ExtractorKind::File;
      c.extractor.step = field(e, "stride", 8, "extractor.");
      c.extractor.file_receptive_field = field(e, "receptive_field", 8, "extractor.");
      c.extractor.path_template = resolve(base, field<std::string>(e, "path_template", "{key}.fmap", "extractor.")).string();
    } else {
      throw ValidationError("extractor.kind: unknown value '" + kind + "' (expected patch_stats or file)");
    }
  }

  if (j.contains("recolor")) {
    c.recolor.global = field(j["recolor"], "global", false, "recolor.");
    c.recolor.eig_floor = field(j["recolor"], "eig_floor", c.recolor.eig_floor, "recolor.");
  }
  if (j.contains("outlier_filter")) {
    const json& o = j["outlier_filter"];
    OutlierFilter f;
    f.opacity_min = field(o, "opacity_min", f.opacity_min, "outlier_filter.");
    if (o.contains("scale_max") && !o["scale_max"].is_null()) f.scale_max = field(o, "scale_max", 0.0, "outlier_filter.");
    f.neighbor_radius = field(o, "neighbor_radius", f.neighbor_radius, "outlier_filter.");
    f.min_neighbors = field(o, "min_neighbors", f.min_neighbors, "outlier_filter.");
    c.outlier_filter = f;
  }

  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    c.reconstruction_iterations = field(o, "reconstruction_iterations", c.reconstruction_iterations, "optimizer.");
    c.stylization_iterations = field(o, "stylization_iterations", c.stylization_iterations, "optimizer.");
    c.lambda_dssim = field(o, "lambda_dssim", c.lambda_dssim, "optimizer.");
    c.snapshot_every = field(o, "snapshot_every", c.snapshot_every, "optimizer.");
    if (o.contains("lr")) {
      const json& lr = o["lr"];
      c.lr.position = field(lr, "position", c.lr.position, "optimizer.lr.");
      c.lr.rotation = field(lr, "rotation", c.lr.rotation, "optimizer.lr.");
      c.lr.scale = field(lr, "scale", c.lr.scale, "optimizer.lr.");
      c.lr.opacity = field(lr, "opacity", c.lr.opacity, "optimizer.lr.");
      c.lr.color = field(lr, "color", c.lr.color, "optimizer.lr.");
    }
    if (o.contains("trainable")) {
      c.trainable = TrainableGroups{false, false, false, false, false};
      for (const auto& g : o["trainable"]) {
        const std::string name = g.is_string() ? g.get<std::string>() : "";
        if (name == "position") c.trainable.position = true;
        else if (name == "rotation") c.trainable.rotation = true;
        else if (name == "scale") c.trainable.scale = true;
        else if (name == "opacity") c.trainable.opacity = true;
        else if (name == "color") c.trainable.color = true;
        else throw ValidationError("optimizer.trainable: unknown group '" + name + "'");
      }
    }
  }
  c.seed = field<std::uint64_t>(j, "seed", 0, "");
  if (j.contains("output")) c.output = resolve(base, field<std::string>(j, "output", "out", ""));
  else c.output = base / "out";
  return c;
}

void StylizeConfig::validate(bool check_files) const {
  if (content_images.empty()) throw ValidationError("content_images: at least one view is required");
  if (content_images.size() != content_masks.size())
    throw ValidationError("content_masks: " + std::to_string(content_masks.size()) + " masks for " +
                          std::to_string(content_images.size()) + " content images");
  weights.validate();
  if (!(tau > 0.0 && tau <= 1.0)) throw ValidationError("tau: must lie in (0, 1]");
  if (erosion_radius < 0) throw ValidationError("erosion_radius: must be >= 0");
  if (extractor.patch < 1 || extractor.step < 1 || extractor.file_receptive_field < 1)
    throw ValidationError("extractor: patch, step and receptive_field must be >= 1");
  if (reconstruction_iterations < 0 || stylization_iterations < 0)
    throw ValidationError("optimizer: iteration counts must be >= 0");
  if (!(lambda_dssim >= 0.0 && lambda_dssim <= 1.0)) throw ValidationError("optimizer.lambda_dssim: must lie in [0, 1]");
  for (double v : {lr.position, lr.rotation, lr.scale, lr.opacity, lr.color})
    if (!(v >= 0.0)) throw ValidationError("optimizer.lr: learning rates must be >= 0");
  if (snapshot_every < 0) throw ValidationError("optimizer.snapshot_every: must be >= 0");

  for (const auto& [label, index] : mapping) {
    if (label <= 0 || label > 255) throw ValidationError("mapping: label " + std::to_string(label) + " is out of 1..255");
    if (index < 0 || index >= static_cast<int>(styles.size()))
      throw ValidationError("mapping." + std::to_string(label) + ": style index " + std::to_string(index) +
                            " out of range (" + std::to_string(styles.size()) + " styles)");
  }

  std::set<fs::path> images;
  for (const auto& s : styles) images.insert(s.image);
  switch (transfer_type) {
    case TransferType::Single:
      if (styles.size() != 1)
        throw ValidationError("transfer_type single: expected exactly one style, got " + std::to_string(styles.size()));
      break;
    case TransferType::Compositional:
      if (styles.size() < 2 || images.size() != styles.size())
        throw ValidationError("transfer_type compositional: expected two or more styles from distinct images");
      if (mapping.empty()) throw ValidationError("transfer_type compositional: mapping is required");
      break;
    case TransferType::Semantic:
      if (styles.size() < 2 || images.size() != 1)
        throw ValidationError("transfer_type semantic: expected two or more regions of a single style image");
      for (std::size_t i = 0; i < styles.size(); ++i)
        if (!styles[i].mask)
          throw ValidationError("styles[" + std::to_string(i) + "].mask: semantic transfer needs a region mask");
      if (mapping.empty()) throw ValidationError("transfer_type semantic: mapping is required");
      break;
  }

  if (!check_files) return;
  auto must_exist = [](const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw ValidationError(what + ": file '" + p.string() + "' does not exist");
  };
  must_exist(scene, "scene");
  must_exist(cameras, "cameras");
  for (std::size_t i = 0; i < content_images.size(); ++i) {
    must_exist(content_images[i], "content_images[" + std::to_string(i) + "]");
    must_exist(content_masks[i], "content_masks[" + std::to_string(i) + "]");
  }
  for (std::size_t i = 0; i < styles.size(); ++i) {
    must_exist(styles[i].image, "styles[" + std::to_string(i) + "].image");
    if (styles[i].mask) must_exist(*styles[i].mask, "styles[" + std::to_string(i) + "].mask");
  }
}

std::string StylizeConfig::to_json() const {
  nlohmann::ordered_json j;
  j["scene"] = scene.string();
  j["cameras"] = cameras.string();
  for (const auto& p : content_images) j["content_images"].push_back(p.string());
  for (const auto& p : content_masks) j["content_masks"].push_back(p.string());
  for (const auto& s : styles) {
    nlohmann::ordered_json e;
    e["image"] = s.image.string();
    if (s.mask) e["mask"] = s.mask->string();
    e["region_label"] = s.region_label;
    e["completion"] = to_string(s.completion);
    j["styles"].push_back(e);
  }
  j["mapping"] = nlohmann::ordered_json::object();
  for (const auto& [label, index] : mapping) j["mapping"][std::to_string(label)] = index;
  j["transfer_type"] = to_string(transfer_type);
  j["loss"] = {{"fast", weights.fast},       {"content", weights.content}, {"tv", weights.tv},
               {"depth", weights.depth},     {"scale", weights.scale},     {"opacity", weights.opacity},
               {"k", weights.k},             {"style_loss", to_string(style_loss)}, {"ridge", ridge}};
  j["tau"] = tau;
  j["erosion_radius"] = erosion_radius;
  if (extractor.kind == ExtractorKind::PatchStats)
    j["extractor"] = {{"kind", "patch_stats"}, {"patch", extractor.patch}, {"step", extractor.step}};
  else
    j["extractor"] = {{"kind", "file"},
                      {"stride", extractor.step},
                      {"receptive_field", extractor.file_receptive_field},
                      {"path_template", extractor.path_template}};
  j["recolor"] = {{"global", recolor.global}, {"eig_floor", recolor.eig_floor}};
  if (outlier_filter) {
    nlohmann::ordered_json o = {{"opacity_min", outlier_filter->opacity_min},
                                {"neighbor_radius", outlier_filter->neighbor_radius},
                                {"min_neighbors", outlier_filter->min_neighbors}};
    o["scale_max"] = std::isfinite(outlier_filter->scale_max) ? nlohmann::ordered_json(outlier_filter->scale_max)
                                                              : nlohmann::ordered_json(nullptr);
    j["outlier_filter"] = o;
  }
  nlohmann::ordered_json trainable = nlohmann::ordered_json::array();
  if (this->trainable.position) trainable.push_back("position");
  if (this->trainable.rotation) trainable.push_back("rotation");
  if (this->trainable.scale) trainable.push_back("scale");
  if (this->trainable.opacity) trainable.push_back("opacity");
  if (this->trainable.color) trainable.push_back("color");
  j["optimizer"] = {{"reconstruction_iterations", reconstruction_iterations},
                    {"stylization_iterations", stylization_iterations},
                    {"lambda_dssim", lambda_dssim},
                    {"snapshot_every", snapshot_every},
                    {"lr",
                     {{"position", lr.position},
                      {"rotation", lr.rotation},
                      {"scale", lr.scale},
                      {"opacity", lr.opacity},
                      {"color", lr.color}}},
                    {"trainable", trainable}};
  j["seed"] = seed;
  j["output"] = output.string();
  return j.dump(2);
}

std::optional<fs::path> default_config_path() {
  const char* v = std::getenv(kConfigEnvVar);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return fs::path(v);
}

}  // namespace splatstyle
