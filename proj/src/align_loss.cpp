#include "splatstyle/align_loss.hpp"

#include <cmath>
#include <set>

namespace splatstyle {

void LossWeights::validate() const {
  const std::pair<const char*, double> entries[] = {{"fast", fast}, {"content", content}, {"tv", tv},
                                                    {"depth", depth}, {"scale", scale}, {"opacity", opacity}};
  for (const auto& [name, value] : entries)
    if (!(value >= 0.0) || !std::isfinite(value))
      throw ValidationError(std::string("loss weight '") + name + "' must be a finite value >= 0");
  if (k < 1) throw ValidationError("loss weight 'k' must be >= 1");
}

std::string to_string(StyleLossKind kind) {
  switch (kind) {
    case StyleLossKind::Fast: return "fast";
    case StyleLossKind::Nnfm: return "nnfm";
    case StyleLossKind::Knnfm: return "knnfm";
    case StyleLossKind::Gram: return "gram";
  }
  return "fast";
}

StyleLossKind parse_style_loss(const std::string& name) {
  if (name == "fast") return StyleLossKind::Fast;
  if (name == "nnfm") return StyleLossKind::Nnfm;
  if (name == "knnfm") return StyleLossKind::Knnfm;
  if (name == "gram") return StyleLossKind::Gram;
  throw ValidationError("unknown style loss '" + name + "' (expected fast, nnfm, knnfm or gram)");
}

int cell_group(const FeatureMap& fm, Eigen::Index cell) { return fm.label_grid ? fm.label_of(cell) : 1; }

Eigen::MatrixXd group_columns(const FeatureMap& fm, int group) {
  std::vector<Eigen::Index> cells;
  for (Eigen::Index i = 0; i < fm.cells(); ++i)
    if (cell_group(fm, i) == group) cells.push_back(i);
  Eigen::MatrixXd out(fm.values.rows(), static_cast<Eigen::Index>(cells.size()));
  for (std::size_t j = 0; j < cells.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = fm.values.col(cells[j]);
  return out;
}

FeatureMap align_features(const FeatureMap& rendered, const GroupFeatures& alignment) {
  FeatureMap out = rendered;
  for (Eigen::Index i = 0; i < rendered.cells(); ++i) {
    const int g = cell_group(rendered, i);
    if (g == 0) continue;
    const auto it = alignment.find(g);
    if (it == alignment.end())
      throw ValidationError("align_features: no alignment matrix for group " + std::to_string(g));
    if (it->second.rows() != rendered.values.rows() || it->second.cols() != rendered.values.rows())
      throw ValidationError("align_features: alignment matrix for group " + std::to_string(g) + " is not C x C");
    out.values.col(i) = it->second.transpose() * rendered.values.col(i);
  }
  return out;
}

namespace {

// 1 - cos(v, t) and its gradient in v; zero-norm vectors give (0, 0).
double cosine_distance(const Eigen::Ref<const Eigen::VectorXd>& v, const Eigen::Ref<const Eigen::VectorXd>& t,
                       Eigen::Ref<Eigen::VectorXd> grad, double weight) {
  const double nv = v.norm(), nt = t.norm();
  if (nv == 0.0 || nt == 0.0) return 0.0;
  const double dot = v.dot(t);
  const double cos = dot / (nv * nt);
  grad -= weight * (t / (nv * nt) - dot / (nv * nv * nv * nt) * v);
  return 1.0 - std::clamp(cos, -1.0, 1.0);
}

Eigen::Index labeled_cells(const FeatureMap& fm) {
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < fm.cells(); ++i) n += cell_group(fm, i) != 0;
  return n;
}

const Eigen::MatrixXd& style_for(const GroupFeatures& style, int group, Eigen::Index channels, const char* who) {
  const auto it = style.find(group);
  if (it == style.end() || it->second.cols() == 0)
    throw ValidationError(std::string(who) + ": no style features for group " + std::to_string(group));
  if (it->second.rows() != channels) throw ValidationError(std::string(who) + ": channel mismatch");
  return it->second;
}

}  // namespace

FeatureLoss fast_loss(const FeatureMap& rendered, const FeatureMap& target) {
  if (rendered.values.rows() != target.values.rows() || rendered.values.cols() != target.values.cols())
    throw ValidationError("fast_loss: feature maps differ in shape");
  FeatureLoss out{0.0, Eigen::MatrixXd::Zero(rendered.values.rows(), rendered.values.cols())};
  const Eigen::Index n = labeled_cells(rendered);
  if (n == 0) return out;
  const double w = 1.0 / double(n);
  for (Eigen::Index i = 0; i < rendered.cells(); ++i) {
    if (cell_group(rendered, i) == 0) continue;
    out.value += w * cosine_distance(rendered.values.col(i), target.values.col(i), out.gradient.col(i), w);
  }
  return out;
}

FeatureLoss knnfm_loss(const FeatureMap& rendered, const GroupFeatures& style, int k) {
  if (k < 1) throw ValidationError("knnfm_loss: k must be >= 1");
  const Eigen::Index channels = rendered.values.rows();
  FeatureLoss out{0.0, Eigen::MatrixXd::Zero(channels, rendered.values.cols())};
  const Eigen::Index n = labeled_cells(rendered);
  if (n == 0) return out;
  for (Eigen::Index i = 0; i < rendered.cells(); ++i) {
    const int g = cell_group(rendered, i);
    if (g == 0) continue;
    const Eigen::MatrixXd& fs = style_for(style, g, channels, "knnfm_loss");
    const Eigen::RowVectorXd sim = normalized_similarity(rendered.values.col(i), fs);
    const auto nearest = top_k_indices(sim, k);
    const double w = 1.0 / (double(n) * double(nearest.size()));
    for (Eigen::Index j : nearest)
      out.value += w * cosine_distance(rendered.values.col(i), fs.col(j), out.gradient.col(i), w);
  }
  return out;
}

FeatureLoss nnfm_loss(const FeatureMap& rendered, const GroupFeatures& style) { return knnfm_loss(rendered, style, 1); }

FeatureLoss gram_loss(const FeatureMap& rendered, const GroupFeatures& style) {
  const Eigen::Index channels = rendered.values.rows();
  FeatureLoss out{0.0, Eigen::MatrixXd::Zero(channels, rendered.values.cols())};
  std::set<int> groups;
  for (Eigen::Index i = 0; i < rendered.cells(); ++i)
    if (const int g = cell_group(rendered, i); g != 0) groups.insert(g);
  if (groups.empty()) return out;
  const double c2 = double(channels) * double(channels);
  const double per_group = 1.0 / double(groups.size());
  for (int g : groups) {
    const Eigen::MatrixXd& fs = style_for(style, g, channels, "gram_loss");
    const Eigen::MatrixXd fr = group_columns(rendered, g);
    const Eigen::MatrixXd diff =
        fr * fr.transpose() / double(fr.cols()) - fs * fs.transpose() / double(fs.cols());
    out.value += per_group * diff.squaredNorm() / c2;
    const Eigen::MatrixXd dg = per_group * 4.0 / (c2 * double(fr.cols())) * diff;
    for (Eigen::Index i = 0; i < rendered.cells(); ++i)
      if (cell_group(rendered, i) == g) out.gradient.col(i) += dg * rendered.values.col(i);
  }
  return out;
}

FeatureLoss content_loss(const FeatureMap& content, const FeatureMap& rendered) {
  if (content.values.rows() != rendered.values.rows() || content.values.cols() != rendered.values.cols())
    throw ValidationError("content_loss: feature maps differ in shape (" + std::to_string(content.rows) + "x" +
                          std::to_string(content.cols) + " vs " + std::to_string(rendered.rows) + "x" +
                          std::to_string(rendered.cols) + ")");
  const Eigen::MatrixXd diff = rendered.values - content.values;
  const double n = double(diff.size());
  if (n == 0.0) return {0.0, diff};
  return {diff.squaredNorm() / n, 2.0 / n * diff};
}

ImageLossResult tv_loss(const Image& image) {
  ImageLossResult out{0.0, Image(image.width(), image.height(), image.channels())};
  const int w = image.width(), h = image.height(), ch = image.channels();
  const double nx = double(w - 1) * h * ch, ny = double(h - 1) * w * ch;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        if (x + 1 < w) {
          const double d = image(x + 1, y, c) - image(x, y, c);
          out.value += d * d / nx;
          out.gradient(x + 1, y, c) += 2.0 * d / nx;
          out.gradient(x, y, c) -= 2.0 * d / nx;
        }
        if (y + 1 < h) {
          const double d = image(x, y + 1, c) - image(x, y, c);
          out.value += d * d / ny;
          out.gradient(x, y + 1, c) += 2.0 * d / ny;
          out.gradient(x, y, c) -= 2.0 * d / ny;
        }
      }
  return out;
}

ImageLossResult depth_loss(const Image& initial, const Image& rendered) {
  if (!initial.same_shape(rendered)) throw ValidationError("depth_loss: depth maps differ in shape");
  ImageLossResult out{0.0, Image(rendered.width(), rendered.height(), rendered.channels())};
  const Eigen::VectorXd diff = rendered.data() - initial.data();
  const double n = double(diff.size());
  if (n == 0.0) return out;
  out.value = diff.squaredNorm() / n;
  out.gradient.data() = 2.0 / n * diff;
  return out;
}

namespace {

const std::vector<InitialState>& snapshot_of(const GaussianScene& scene) {
  const auto& snap = scene.initial_snapshot();
  if (snap.size() != scene.size())
    throw ValidationError("regularizer: initial snapshot has " + std::to_string(snap.size()) +
                          " entries for " + std::to_string(scene.size()) + " Gaussians");
  return snap;
}

}  // namespace

RegularizerResult scale_reg(const GaussianScene& scene) {
  const auto& snap = snapshot_of(scene);
  RegularizerResult out{0.0, GaussianGradients::zeros(scene.size())};
  for (std::size_t i = 0; i < scene.size(); ++i)
    out.gradient.scale.row(static_cast<Eigen::Index>(i)) = (scene.gaussians[i].scale - snap[i].scale).transpose();
  out.value = out.gradient.scale.norm();
  if (out.value > 0.0) out.gradient.scale /= out.value;
  return out;
}

RegularizerResult opacity_reg(const GaussianScene& scene) {
  const auto& snap = snapshot_of(scene);
  RegularizerResult out{0.0, GaussianGradients::zeros(scene.size())};
  for (std::size_t i = 0; i < scene.size(); ++i)
    out.gradient.opacity[static_cast<Eigen::Index>(i)] = scene.gaussians[i].opacity - snap[i].opacity;
  out.value = out.gradient.opacity.norm();
  if (out.value > 0.0) out.gradient.opacity /= out.value;
  return out;
}

StylizationLoss total_stylization_loss(const GaussianScene& scene, const ViewTarget& view, const GroupFeatures& style,
                                       const FeatureExtractorSpec& extractor, const StylizationOptions& options) {
  const LossWeights& w = options.weights;
  w.validate();
  if (extractor.kind != ExtractorKind::PatchStats)
    throw ValidationError("stylization needs a differentiable extractor (patch-stats)");
  if (view.mask.rows() != view.camera.height || view.mask.cols() != view.camera.width)
    throw ValidationError("total_stylization_loss: mask does not match the camera resolution");

  StylizationLoss out;
  out.gradient = GaussianGradients::zeros(scene.size());
  const RenderOutput r = render(scene, view.camera, false, options.render);

  FeatureMap fr = extract(r.color, extractor);
  LabelGrid labels = downsample_labels(view.mask, fr);
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (!style.count(labels.data()[i])) labels.data()[i] = 0;
  fr.label_grid = labels;

  Eigen::MatrixXd grad_features = Eigen::MatrixXd::Zero(fr.values.rows(), fr.values.cols());
  bool feature_grad = false;

  if (w.fast > 0.0) {
    for (const auto& [group, fs] : style)
      if ((labels == group).count() == 0) ++out.skipped_groups;
    FeatureLoss s;
    switch (options.style_loss) {
      case StyleLossKind::Fast: {
        GroupFeatures alignment;
        for (const auto& [group, fs] : style) {
          const Eigen::MatrixXd cols = group_columns(fr, group);
          if (cols.cols() == 0) continue;
          const AffinityMatrix a = build_affinity(cols, fs, w.k);
          alignment[group] = solve_alignment(cols, fs, a, options.ridge);
        }
        s = fast_loss(fr, align_features(fr, alignment));
        break;
      }
      case StyleLossKind::Nnfm: s = nnfm_loss(fr, style); break;
      case StyleLossKind::Knnfm: s = knnfm_loss(fr, style, w.k); break;
      case StyleLossKind::Gram: s = gram_loss(fr, style); break;
    }
    out.terms.style = s.value;
    grad_features += w.fast * s.gradient;
    feature_grad = true;
  }

  const FeatureLoss c = content_loss(view.content, fr);
  out.terms.content = c.value;
  if (w.content > 0.0) {
    grad_features += w.content * c.gradient;
    feature_grad = true;
  }

  Image grad_color(r.color.width(), r.color.height(), 3);
  if (feature_grad) grad_color = extract_adjoint(r.color, extractor, grad_features);

  const ImageLossResult tv = tv_loss(r.color);
  out.terms.tv = tv.value;
  if (w.tv > 0.0) grad_color.data() += w.tv * tv.gradient.data();

  Image grad_depth(r.depth.width(), r.depth.height(), 1);
  const ImageLossResult d = depth_loss(view.initial_depth, r.depth);
  out.terms.depth = d.value;
  if (w.depth > 0.0) grad_depth.data() = w.depth * d.gradient.data();

  if (feature_grad || w.tv > 0.0 || w.depth > 0.0)
    out.gradient = render_adjoint(scene, view.camera, grad_color, grad_depth, options.render);

  const RegularizerResult sr = scale_reg(scene);
  out.terms.scale = sr.value;
  if (w.scale > 0.0) out.gradient.scale += w.scale * sr.gradient.scale;
  const RegularizerResult orr = opacity_reg(scene);
  out.terms.opacity = orr.value;
  if (w.opacity > 0.0) out.gradient.opacity += w.opacity * orr.gradient.opacity;

  out.total = w.fast * out.terms.style + w.content * out.terms.content + w.tv * out.terms.tv +
              w.depth * out.terms.depth + w.scale * out.terms.scale + w.opacity * out.terms.opacity;
  return out;
}

}  // namespace splatstyle
