#include "splatstyle/pipeline.hpp"

#include "splatstyle/color_match.hpp"
#include "splatstyle/error.hpp"
#include "splatstyle/mask_match.hpp"
#include "splatstyle/render.hpp"
#include "splatstyle/toy.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

namespace splatstyle {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::uint64_t fnv1a(const char* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string text_hash(const std::string& s) { return hex64(fnv1a(s.data(), s.size())); }

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string indexed(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02zu%s", prefix, i, ext);
  return buf;
}

ojson read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open '" + path.string() + "'");
  try {
    return ojson::parse(in);
  } catch (const ojson::parse_error& e) {
    throw LoadError("'" + path.string() + "': " + e.what());
  }
}

// ---- inputs ---------------------------------------------------------------

struct Inputs {
  std::vector<Camera> cameras;
  std::vector<Image> content;
  std::vector<LabelMask> masks;
};

std::vector<LabelMask> load_masks(const StylizeConfig& c, std::span<const Camera> cameras) {
  std::vector<LabelMask> masks;
  for (std::size_t v = 0; v < c.content_masks.size(); ++v) {
    LabelMask m = LabelMask::from_grid(read_png_labels(c.content_masks[v]));
    if (m.grid.cols() != cameras[v].width || m.grid.rows() != cameras[v].height)
      throw ValidationError("content_masks[" + std::to_string(v) + "]: size " + std::to_string(m.grid.cols()) + "x" +
                            std::to_string(m.grid.rows()) + " does not match camera " + std::to_string(v));
    masks.push_back(std::move(m));
  }
  return masks;
}

Inputs load_inputs(const StylizeConfig& c, bool with_content) {
  Inputs in;
  in.cameras = load_cameras(c.cameras);
  if (in.cameras.size() != c.content_images.size())
    throw ValidationError("cameras: " + std::to_string(in.cameras.size()) + " cameras for " +
                          std::to_string(c.content_images.size()) + " content images");
  in.masks = load_masks(c, in.cameras);
  if (with_content) {
    for (std::size_t v = 0; v < c.content_images.size(); ++v) {
      Image img = read_png_rgb(c.content_images[v]);
      if (img.width() != in.cameras[v].width || img.height() != in.cameras[v].height)
        throw ValidationError("content_images[" + std::to_string(v) + "]: size does not match camera " +
                              std::to_string(v));
      in.content.push_back(std::move(img));
    }
  }
  return in;
}

std::vector<StyleSpec> load_styles(const StylizeConfig& c) {
  std::vector<StyleSpec> styles;
  for (std::size_t i = 0; i < c.styles.size(); ++i) {
    const StyleEntry& e = c.styles[i];
    StyleSpec s;
    s.image = read_png_rgb(e.image);
    s.mode = e.completion;
    if (e.mask) {
      const LabelGrid labels = read_png_labels(*e.mask);
      if (labels.rows() != s.image.height() || labels.cols() != s.image.width())
        throw ValidationError("styles[" + std::to_string(i) + "].mask: size does not match the style image");
      s.region = labels == e.region_label;
      if (!s.region.any())
        throw ValidationError("styles[" + std::to_string(i) + "]: mask has no pixels with region_label " +
                              std::to_string(e.region_label));
    } else {
      s.region = BoolGrid::Constant(s.image.height(), s.image.width(), true);
    }
    styles.push_back(std::move(s));
  }
  return styles;
}

std::map<int, int> resolve_mapping(const StylizeConfig& c, std::span<const LabelMask> masks) {
  std::set<int> present;
  for (const auto& m : masks)
    for (Eigen::Index i = 0; i < m.grid.size(); ++i)
      if (m.grid.data()[i] != 0) present.insert(m.grid.data()[i]);
  std::map<int, int> mapping = c.mapping;
  if (mapping.empty() && c.transfer_type == TransferType::Single)
    for (int l : present) mapping[l] = 0;
  std::string missing;
  for (int l : present)
    if (!mapping.count(l)) missing += (missing.empty() ? "" : ", ") + std::to_string(l);
  if (!missing.empty()) throw ValidationError("mapping: content label(s) " + missing + " have no style");
  return mapping;
}

std::vector<std::optional<int>> labels_of(const GaussianScene& scene) {
  std::vector<std::optional<int>> labels;
  for (const auto& g : scene.gaussians) labels.push_back(g.label);
  return labels;
}

// ---- manifest and gating ----------------------------------------------------

fs::path manifest_path(const StylizeConfig& c) { return c.output / "manifest.json"; }

std::string inputs_key(const StylizeConfig& c) {
  ojson j = ojson::parse(c.to_json());
  ojson key;
  for (const char* k : {"transfer_type", "mapping", "tau", "erosion_radius", "extractor", "outlier_filter"})
    if (j.contains(k)) key[k] = j[k];
  key["styles"] = j["styles"];
  ojson files;
  auto add = [&](const fs::path& p) { files.push_back(file_hash(p)); };
  add(c.scene);
  add(c.cameras);
  for (const auto& p : c.content_images) add(p);
  for (const auto& p : c.content_masks) add(p);
  for (const auto& s : c.styles) {
    add(s.image);
    if (s.mask) add(*s.mask);
  }
  key["files"] = files;
  return text_hash(key.dump());
}

std::string stage_key(const StylizeConfig& c, const std::string& stage) {
  if (stage == "match") return inputs_key(c);
  ojson j = ojson::parse(c.to_json());
  ojson key;
  key["match"] = inputs_key(c);
  key["recolor"] = j["recolor"];
  key["reconstruction_iterations"] = c.reconstruction_iterations;
  key["lambda_dssim"] = c.lambda_dssim;
  key["lr"] = j["optimizer"]["lr"];
  key["seed"] = c.seed;
  return text_hash(key.dump());
}

ojson load_manifest(const StylizeConfig& c) {
  const fs::path p = manifest_path(c);
  if (!fs::exists(p)) return ojson::object();
  return read_json(p);
}

void require_stage(const StylizeConfig& c, const ojson& manifest, const std::string& stage) {
  const std::string hint = " (run '" + stage + "' first)";
  if (!manifest.contains("stages") || !manifest["stages"].contains(stage))
    throw MissingArtifactError("stage '" + stage + "' has not been run for '" + c.output.string() + "'" + hint);
  const ojson& s = manifest["stages"][stage];
  if (s.value("key", "") != stage_key(c, stage))
    throw MissingArtifactError("stage '" + stage + "' artifacts are stale: inputs or settings changed" + hint);
  for (const auto& [rel, hash] : s["outputs"].items()) {
    const fs::path p = c.output / rel;
    if (!fs::exists(p)) throw MissingArtifactError("missing artifact '" + p.string() + "'" + hint);
    if (file_hash(p) != hash.get<std::string>())
      throw MissingArtifactError("artifact '" + p.string() + "' changed since stage '" + stage + "'" + hint);
  }
}

void record_stage(const StylizeConfig& c, const std::string& stage, const std::vector<std::string>& outputs,
                  const std::vector<std::string>& reports) {
  ojson manifest = load_manifest(c);
  manifest["tool_version"] = kToolVersion;
  manifest["config"] = ojson::parse(c.to_json());
  ojson entry;
  entry["key"] = stage_key(c, stage);
  ojson hashes = ojson::object();
  for (const auto& rel : outputs) hashes[rel] = file_hash(c.output / rel);
  entry["outputs"] = hashes;
  entry["reports"] = reports;
  manifest["stages"][stage] = entry;
  write_atomic(manifest_path(c), manifest.dump(2) + "\n");
}

ojson matrix_json(const Eigen::MatrixXd& m) {
  ojson rows = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ojson row = ojson::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(r, k));
    rows.push_back(row);
  }
  return rows;
}

void write_report(const fs::path& dir, const StageReport& report) {
  write_atomic(dir / "report.json", report.summary_json() + "\n");
  write_atomic(dir / "history.csv", report.history_csv());
}

std::vector<SemanticMatchingGroup> rebuild_groups(const StylizeConfig& c, const GaussianScene& scene,
                                                  std::span<const LabelMask> masks) {
  const std::vector<StyleSpec> styles = load_styles(c);
  const auto labels = labels_of(scene);
  return build_matching_groups(styles, resolve_mapping(c, masks), labels, c.erosion_radius, c.extractor);
}

}  // namespace

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read '" + path.string() + "'");
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return hex64(h);
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw ValidationError("output directory '" + dir.string() + "' is locked by another run (delete " +
                            path_.string() + " if it is stale)");
    throw Error("cannot create lock '" + path_.string() + "': " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

StylizeConfig apply_overrides(StylizeConfig config, const RunOptions& options) {
  if (options.output) config.output = fs::absolute(*options.output);
  if (options.seed) config.seed = *options.seed;
  if (options.snapshot_every) config.snapshot_every = *options.snapshot_every;
  return config;
}

void cmd_match(const StylizeConfig& c) {
  c.validate();
  DirectoryLock lock(c.output);
  const fs::path dir = c.output / "match";
  fs::create_directories(dir);

  GaussianScene scene = load_scene(c.scene);
  const Inputs in = load_inputs(c, false);
  const OutlierFilter filter = c.outlier_filter.value_or(OutlierFilter::defaults_for(scene));
  const std::size_t before = scene.size();
  scene = filter_outliers(scene, filter);
  if (scene.size() != before) spdlog::info("outlier filter removed {} of {} Gaussians", before - scene.size(), before);

  const LabelWeights weights = unproject_labels(scene, in.cameras, in.masks);
  const auto labels = assign_labels(weights, c.tau);
  const std::map<int, int> mapping = resolve_mapping(c, in.masks);
  const std::vector<StyleSpec> styles = load_styles(c);
  const auto groups = build_matching_groups(styles, mapping, labels, c.erosion_radius, c.extractor);

  std::size_t unlabeled = 0;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    scene.gaussians[i].label = labels[i];
    unlabeled += !labels[i].has_value();
  }
  if (unlabeled > 0) spdlog::warn("{} of {} Gaussians stay unlabeled (tau = {})", unlabeled, scene.size(), c.tau);
  save_scene(scene, dir / "scene.ply");

  ojson lj;
  lj["labels"] = ojson::array();
  for (const auto& l : labels) lj["labels"].push_back(l ? ojson(*l) : ojson(nullptr));
  write_atomic(dir / "labels.json", lj.dump() + "\n");

  std::vector<std::string> outputs = {"match/scene.ply", "match/scene.ply.labels.json", "match/labels.json"};
  ojson gj;
  gj["transfer_type"] = to_string(c.transfer_type);
  gj["groups"] = ojson::array();
  std::set<int> written;
  for (const auto& g : groups) {
    ojson e;
    e["label"] = g.label;
    e["content_mask_label"] = g.content_mask_label;
    e["style_index"] = g.style_index;
    e["completion_mode"] = to_string(g.style_region.completion_mode);
    e["origin"] = {g.style_region.origin.x(), g.style_region.origin.y()};
    e["crop_size"] = {g.style_region.completed_image.width(), g.style_region.completed_image.height()};
    e["region_pixels"] = g.style_region.region_pixel_mask.count();
    e["region_cells"] = g.style_region.region_cell_mask.count();
    e["gaussian_count"] = g.gaussian_indices.size();
    e["gaussian_indices"] = g.gaussian_indices;
    gj["groups"].push_back(e);
    if (written.insert(g.style_index).second) {
      const auto idx = static_cast<std::size_t>(g.style_index);
      write_png_rgb(g.style_region.completed_image, dir / indexed("region", idx, ".png"));
      write_png_labels(g.style_region.region_pixel_mask.cast<int>(), dir / indexed("region_mask", idx, ".png"));
      outputs.push_back("match/" + indexed("region", idx, ".png"));
      outputs.push_back("match/" + indexed("region_mask", idx, ".png"));
    }
  }
  write_atomic(dir / "groups.json", gj.dump(2) + "\n");
  outputs.push_back("match/groups.json");
  if (!fs::exists(dir / "scene.ply.labels.json")) outputs.erase(outputs.begin() + 1);
  record_stage(c, "match", outputs, {});
  spdlog::info("match: {} group(s), {} labeled Gaussians", groups.size(), scene.size() - unlabeled);
}

void cmd_recolor(const StylizeConfig& c) {
  c.validate();
  DirectoryLock lock(c.output);
  require_stage(c, load_manifest(c), "match");
  const fs::path dir = c.output / "recolor";
  fs::create_directories(dir);

  const GaussianScene scene = load_scene(c.output / "match" / "scene.ply");
  const Inputs in = load_inputs(c, true);
  const auto groups = rebuild_groups(c, scene, in.masks);
  const RecolorResult rr = recolor_groups(groups, in.content, in.masks, scene, c.recolor);

  std::vector<std::string> outputs;
  for (std::size_t v = 0; v < rr.images.size(); ++v) {
    write_png_rgb(rr.images[v], dir / indexed("view", v, ".png"));
    outputs.push_back("recolor/" + indexed("view", v, ".png"));
  }
  ojson tj;
  tj["global"] = c.recolor.global;
  tj["transforms"] = ojson::array();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    ojson e;
    e["label"] = groups[g].label;
    e["style_index"] = groups[g].style_index;
    e["A"] = matrix_json(rr.transforms[g].weight);
    e["b"] = {rr.transforms[g].bias[0], rr.transforms[g].bias[1], rr.transforms[g].bias[2]};
    tj["transforms"].push_back(e);
  }
  write_atomic(dir / "transforms.json", tj.dump(2) + "\n");
  outputs.push_back("recolor/transforms.json");

  ReconstructionOptions ro;
  ro.iterations = c.reconstruction_iterations;
  ro.lambda_dssim = c.lambda_dssim;
  ro.lr = c.lr;
  ro.seed = c.seed;
  const StageResult res = run_reconstruction(rr.scene, rr.images, in.cameras, ro);
  write_report(dir, res.report);
  if (res.report.aborted) throw NumericalError("reconstruction aborted: " + res.report.error);
  save_scene(res.scene, dir / "scene.ply");
  outputs.push_back("recolor/scene.ply");
  if (fs::exists(dir / "scene.ply.labels.json")) outputs.push_back("recolor/scene.ply.labels.json");
  outputs.push_back("recolor/history.csv");
  record_stage(c, "recolor", outputs, {"recolor/report.json"});
  spdlog::info("recolor: {} transform(s), retrain mean L1 {:.4f}", groups.size(), res.report.final_metrics[0].second);
}

void cmd_stylize(const StylizeConfig& c) {
  c.validate();
  if (c.extractor.kind != ExtractorKind::PatchStats)
    throw ValidationError("extractor.kind: stylization needs the differentiable patch_stats extractor");
  DirectoryLock lock(c.output);
  const ojson manifest = load_manifest(c);
  require_stage(c, manifest, "match");
  require_stage(c, manifest, "recolor");
  const fs::path dir = c.output / "stylize";
  fs::create_directories(dir);

  const GaussianScene scene = load_scene(c.output / "recolor" / "scene.ply");
  const Inputs in = load_inputs(c, false);
  const auto groups = rebuild_groups(c, scene, in.masks);

  GroupFeatures style;
  for (const auto& g : groups) {
    const FeatureMap fm = extract(g.style_region.completed_image, c.extractor);
    const BoolGrid& cells = g.style_region.region_cell_mask;
    std::vector<Eigen::Index> keep;
    for (int r = 0; r < fm.rows; ++r)
      for (int k = 0; k < fm.cols; ++k)
        if (cells(r, k)) keep.push_back(fm.cell(r, k));
    if (keep.empty())
      throw ValidationError("style region for label " + std::to_string(g.label) +
                            " has no complete feature cells; use a smaller erosion_radius or patch");
    Eigen::MatrixXd cols(fm.values.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) cols.col(static_cast<Eigen::Index>(j)) = fm.values.col(keep[j]);
    style[g.label] = std::move(cols);
  }

  std::vector<ViewTarget> views;
  for (std::size_t v = 0; v < in.cameras.size(); ++v) {
    const Image recolored = read_png_rgb(c.output / "recolor" / indexed("view", v, ".png"));
    views.push_back({in.cameras[v], in.masks[v].grid, extract(recolored, c.extractor),
                     render(scene, in.cameras[v]).depth});
  }

  StylizationRunOptions so;
  so.iterations = c.stylization_iterations;
  so.loss.weights = c.weights;
  so.loss.style_loss = c.style_loss;
  so.loss.ridge = c.ridge;
  so.lr = c.lr;
  so.trainable = c.trainable;
  so.seed = c.seed;
  so.snapshot_every = c.snapshot_every;
  if (c.snapshot_every > 0) {
    fs::create_directories(dir / "snapshots");
    so.on_snapshot = [&](int it, const GaussianScene& s) {
      char name[64];
      std::snprintf(name, sizeof name, "iter_%06d.png", it);
      write_png_rgb(render(s, in.cameras.front()).color, dir / "snapshots" / name);
    };
  }
  const StageResult res = run_stylization(scene, views, style, c.extractor, so);
  write_report(dir, res.report);
  if (res.report.aborted) throw NumericalError("stylization aborted: " + res.report.error);
  save_scene(res.scene, dir / "scene.ply");
  std::vector<std::string> outputs = {"stylize/scene.ply", "stylize/history.csv"};
  for (std::size_t v = 0; v < in.cameras.size(); ++v) {
    write_png_rgb(render(res.scene, in.cameras[v]).color, dir / indexed("render", v, ".png"));
    outputs.push_back("stylize/" + indexed("render", v, ".png"));
  }
  record_stage(c, "stylize", outputs, {"stylize/report.json"});
  spdlog::info("stylize: {} iterations, final loss {:.6f}", res.report.iterations(),
               res.report.history.empty() ? 0.0 : res.report.history.back()[0]);
}

void cmd_render(const fs::path& scene_path, const fs::path& cameras_path, const fs::path& out_dir) {
  const GaussianScene scene = load_scene(scene_path);
  const std::vector<Camera> cameras = load_cameras(cameras_path);
  DirectoryLock lock(out_dir);
  std::vector<RenderOutput> outs;
  double max_depth = 0.0;
  for (const Camera& cam : cameras) {
    outs.push_back(render(scene, cam));
    max_depth = std::max(max_depth, outs.back().depth.data().maxCoeff());
  }
  if (!(max_depth > 0.0)) max_depth = 1.0;
  for (std::size_t v = 0; v < outs.size(); ++v) {
    write_png_rgb(outs[v].color, out_dir / indexed("view", v, ".png"));
    write_png_depth16(outs[v].depth, max_depth, out_dir / indexed("depth", v, ".png"));
    write_depth_f32(outs[v].depth, out_dir / indexed("depth", v, ".f32"));
  }
  spdlog::info("rendered {} view(s) to {}", outs.size(), out_dir.string());
}

namespace {

std::vector<fs::path> color_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && e.path().extension() == ".png" && name.rfind("depth_", 0) != 0)
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

EvalResult cmd_eval(const fs::path& rendered_dir, const fs::path& reference_dir,
                    const std::optional<fs::path>& metrics_path) {
  const auto rendered = color_pngs(rendered_dir);
  const auto reference = color_pngs(reference_dir);
  if (rendered.empty()) throw ValidationError("no PNG views in '" + rendered_dir.string() + "'");
  if (rendered.size() != reference.size())
    throw ValidationError("view count mismatch: " + std::to_string(rendered.size()) + " rendered vs " +
                          std::to_string(reference.size()) + " reference");
  EvalResult r;
  ojson views = ojson::array();
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const Image a = read_png_rgb(rendered[i]);
    const Image b = read_png_rgb(reference[i]);
    if (!a.same_shape(b))
      throw ValidationError("'" + rendered[i].filename().string() + "' and '" + reference[i].filename().string() +
                            "' differ in size");
    const double s = ssim(a, b);
    r.views.push_back(rendered[i].filename().string());
    r.ssim.push_back(s);
    views.push_back({{"rendered", rendered[i].filename().string()},
                     {"reference", reference[i].filename().string()},
                     {"ssim", s}});
  }
  r.mean_ssim = std::accumulate(r.ssim.begin(), r.ssim.end(), 0.0) / double(r.ssim.size());
  if (metrics_path) {
    ojson j;
    j["views"] = views;
    j["mean_ssim"] = r.mean_ssim;
    j["artfid"] = "unsupported";
    j["lpips"] = "unsupported";
    if (metrics_path->has_parent_path()) fs::create_directories(metrics_path->parent_path());
    write_atomic(*metrics_path, j.dump(2) + "\n");
  }
  return r;
}

void cmd_toy(const fs::path& dir, std::uint64_t seed) {
  ToyOptions o;
  o.seed = seed;
  write_toy(make_toy(o), dir);
  spdlog::info("toy assets written to {}", dir.string());
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const MissingArtifactError*>(&e)) return 4;
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const LoadError*>(&e)) return 2;
  return 1;
}

}  // namespace splatstyle
