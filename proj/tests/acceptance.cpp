#include "splatstyle/align_loss.hpp"
#include "splatstyle/color_match.hpp"
#include "splatstyle/config.hpp"
#include "splatstyle/features.hpp"
#include "splatstyle/mask_match.hpp"
#include "splatstyle/pipeline.hpp"
#include "splatstyle/render.hpp"
#include "support.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

using namespace splatstyle;
using testing::Rng;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > limit_seconds) {
    o.pass = false;
    o.detail += " (runtime over " + std::to_string(limit_seconds) + " s)";
  }
  failures += !o.pass;
  std::printf("%s criterion %d %s [%.2f s] %s\n", o.pass ? "PASS" : "FAIL", id, name, secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string printf_str(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Eigen::Matrix3d random_spd(Rng& rng) {
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) m.data()[i] = rng.normal();
  return m * m.transpose() * rng.uniform(0.01, 0.1) + 1e-3 * Eigen::Matrix3d::Identity();
}

// ---- 1 ----------------------------------------------------------------------

Outcome color_identities() {
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    ColorMoments<double> c, s;
    c.mean = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());
    s.mean = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());
    c.cov = random_spd(rng);
    s.cov = random_spd(rng);
    c.count = s.count = 1000;
    const auto x = solve_color_transform(c, s);
    worst = std::max(worst, (x.weight * c.cov * x.weight.transpose() - s.cov).norm() / s.cov.norm());
    worst = std::max(worst, (x.weight * c.mean + x.bias - s.mean).norm() / s.mean.norm());
  }
  return {worst <= 1e-6, printf_str("max relative error %.3e", worst)};
}

// ---- 2 ----------------------------------------------------------------------

// Objective and gradient from the dense affinity, independent of the library's
// sparse path.
double objective(const Eigen::MatrixXd& p, const Eigen::MatrixXd& fr, const Eigen::MatrixXd& fs,
                 const Eigen::MatrixXd& a, double ridge) {
  const Eigen::MatrixXd pr = p.transpose() * fr;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0.0) sum += (pr.col(i) - fs.col(j)).squaredNorm();
  return sum / a.sum() + ridge * p.squaredNorm();
}

Eigen::MatrixXd gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& fr, const Eigen::MatrixXd& fs,
                         const Eigen::MatrixXd& a, double ridge) {
  const Eigen::MatrixXd pr = p.transpose() * fr;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0.0) g += 2.0 * fr.col(i) * (pr.col(i) - fs.col(j)).transpose();
  return g / a.sum() + 2.0 * ridge * p;
}

Outcome alignment_optimality() {
  Rng rng(202);
  double worst_gap = 0.0, worst_fd = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::MatrixXd fr = rng.matrix(8, 64);
    const Eigen::MatrixXd fs = rng.matrix(8, 64) + Eigen::MatrixXd::Constant(8, 64, rng.uniform(-0.5, 0.5));
    const AffinityMatrix aff = build_affinity(fr, fs, 5);
    const Eigen::MatrixXd a = aff.dense();
    const double ridge = default_ridge(fr, aff);
    const Eigen::MatrixXd p = solve_alignment(fr, fs, aff);

    // Plain gradient descent with step 1/L from the Hessian's largest eigenvalue.
    const Eigen::MatrixXd hess = fr * (a.rowwise().sum() / a.sum()).asDiagonal() * fr.transpose();
    const double lmax = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(hess).eigenvalues().maxCoeff();
    const double step = 1.0 / (2.0 * (lmax + ridge));
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(8, 8);
    const Eigen::MatrixXd m = hess + ridge * Eigen::MatrixXd::Identity(8, 8);
    const Eigen::MatrixXd rhs = fr * a * fs.transpose() / a.sum();
    for (int it = 0; it < 5000; ++it) q -= step * 2.0 * (m * q - rhs);
    const double jp = objective(p, fr, fs, a, ridge), jq = objective(q, fr, fs, a, ridge);
    if (gradient(q, fr, fs, a, ridge).norm() > 1e-3) return {false, printf_str("GD did not converge on trial %.0f", t)};
    worst_gap = std::max(worst_gap, std::abs(jp - jq) / std::abs(jq));

    Eigen::MatrixXd fd(8, 8);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < fd.size(); ++i) {
      Eigen::MatrixXd up = p, down = p;
      up.data()[i] += h;
      down.data()[i] -= h;
      fd.data()[i] = (objective(up, fr, fs, a, ridge) - objective(down, fr, fs, a, ridge)) / (2 * h);
    }
    worst_fd = std::max(worst_fd, fd.norm());
  }
  return {worst_gap <= 1e-4 && worst_fd < 1e-5,
          printf_str("max objective gap %.3e, max FD gradient norm %.3e", worst_gap, worst_fd)};
}

// ---- 3 ----------------------------------------------------------------------

Eigen::MatrixXd brute_affinity(const Eigen::MatrixXd& fr, const Eigen::MatrixXd& fs, int k) {
  const Eigen::Index nr = fr.cols(), ns = fs.cols();
  Eigen::MatrixXd sim(nr, ns);
  for (Eigen::Index i = 0; i < nr; ++i)
    for (Eigen::Index j = 0; j < ns; ++j) {
      const double d = fr.col(i).norm() * fs.col(j).norm();
      sim(i, j) = d == 0 ? 0.0 : fr.col(i).dot(fs.col(j)) / d;
    }
  auto beats = [](double sa, Eigen::Index a, double sb, Eigen::Index b) { return sa > sb || (sa == sb && a < b); };
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(nr, ns);
  for (Eigen::Index i = 0; i < nr; ++i)
    for (Eigen::Index j = 0; j < ns; ++j) {
      int rank_s = 0, rank_r = 0;
      for (Eigen::Index jj = 0; jj < ns; ++jj) rank_s += beats(sim(i, jj), jj, sim(i, j), j);
      for (Eigen::Index ii = 0; ii < nr; ++ii) rank_r += beats(sim(ii, j), ii, sim(i, j), i);
      if (rank_s < k || rank_r < k) out(i, j) = 1.0;
    }
  return out;
}

Outcome affinity_correctness() {
  Rng rng(303);
  int mismatches = 0, degree_failures = 0, instances = 0;
  for (int t = 0; t < 20; ++t) {
    const int n = rng.integer(16, 48), ns = rng.integer(16, 48);
    const Eigen::MatrixXd fr = rng.matrix(8, n), fs = rng.matrix(8, ns);
    for (int k : {1, 5, n}) {
      ++instances;
      const AffinityMatrix a = build_affinity(fr, fs, k);
      const Eigen::MatrixXd dense = a.dense();
      mismatches += (dense - brute_affinity(fr, fs, k)).norm() != 0.0;
      const int kr = std::min(k, ns), kc = std::min(k, n);
      const bool degree_ok = dense.rowwise().sum().minCoeff() >= kr && dense.colwise().sum().minCoeff() >= kc &&
                             a.pair_count == Eigen::Index(dense.sum()) && (dense.array() == 1.0 || dense.array() == 0.0).all();
      degree_failures += !degree_ok;
    }
  }
  return {mismatches == 0 && degree_failures == 0,
          printf_str("%.0f instances, %.0f mismatches, %.0f degree failures", instances, mismatches, degree_failures)};
}

// ---- 4 ----------------------------------------------------------------------

double weighted(const RenderOutput& r, const Image& wc, const Image& wd) {
  return r.color.data().dot(wc.data()) + r.depth.data().dot(wd.data());
}

Outcome renderer_gradients() {
  const Camera cam = testing::front_camera(16, 16, 16);
  double worst = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(4000 + seed);
    const GaussianScene s = testing::random_scene(5, rng);
    Image wc(16, 16, 3), wd(16, 16, 1);
    for (Eigen::Index i = 0; i < wc.data().size(); ++i) wc.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < wd.data().size(); ++i) wd.data()[i] = rng.normal();
    const auto e = testing::compare(
        render_adjoint(s, cam, wc, wd),
        testing::numeric_gradient(s, [&](const GaussianScene& x) { return weighted(render(x, cam), wc, wd); }, 1e-4));
    worst = std::max(worst, e.max());
  }

  double worst_total = 0.0;
  for (int seed = 0; seed < 3; ++seed) {
    Rng rng(4100 + seed);
    GaussianScene scene = testing::random_scene(5, rng);
    const FeatureExtractorSpec extractor = FeatureExtractorSpec::patch_stats(4, 4);
    ViewTarget view;
    view.camera = cam;
    const RenderOutput original = render(scene, cam);
    view.initial_depth = original.depth;
    view.content = extract(original.color, extractor);
    view.mask = LabelGrid::Constant(16, 16, 1);
    view.mask.rightCols(8).setConstant(2);
    const GroupFeatures style = {{1, rng.matrix(12, 15).cwiseAbs()}, {2, rng.matrix(12, 10).cwiseAbs()}};
    for (auto& g : scene.gaussians) {
      g.scale *= rng.uniform(0.9, 1.1);
      g.opacity += rng.uniform(-0.05, 0.05);
      g.color = (g.color + 0.1 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal())).cwiseMax(0.0).cwiseMin(1.0);
    }
    StylizationOptions opts;
    opts.style_loss = StyleLossKind::Knnfm;
    opts.weights = {2.0, 0.5, 0.5, 0.2, 1.0, 1.0, 3};
    const StylizationLoss l = total_stylization_loss(scene, view, style, extractor, opts);
    const auto numeric = testing::numeric_gradient(
        scene, [&](const GaussianScene& s) { return total_stylization_loss(s, view, style, extractor, opts).total; });
    worst_total = std::max(worst_total, testing::compare(l.gradient, numeric).max());
  }
  return {worst <= 1e-3 && worst_total <= 2e-3,
          printf_str("renderer max rel error %.3e, total-loss max rel error %.3e", worst, worst_total)};
}

// ---- 5 ----------------------------------------------------------------------

Outcome style_isolation() {
  Rng rng(505);
  const FeatureExtractorSpec spec = FeatureExtractorSpec::patch_stats(4, 4);
  int checked = 0, broken = 0;
  for (CompletionMode mode : {CompletionMode::Mirror, CompletionMode::Translate, CompletionMode::MeanFill}) {
    for (int trial = 0; trial < 4; ++trial) {
      const int w = 48, h = 40;
      Image img(w, h, 3);
      for (Eigen::Index i = 0; i < img.data().size(); ++i) img.data()[i] = rng.uniform();
      BoolGrid region = BoolGrid::Constant(h, w, false);
      for (int b = 0; b < 3; ++b) {
        const double cx = rng.uniform(8, w - 8), cy = rng.uniform(8, h - 8), r = rng.uniform(7, 14);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r) region(y, x) = true;
      }
      Image mutated = img;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (!region(y, x)) mutated.set_rgb(x, y, Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform()));
      const auto a = isolate_style_region(img, region, mode, 2, spec);
      const auto b = isolate_style_region(mutated, region, mode, 2, spec);
      if (!(a.region_cell_mask == b.region_cell_mask).all()) {
        ++broken;
        continue;
      }
      const FeatureMap fa = extract(a.completed_image, spec), fb = extract(b.completed_image, spec);
      for (int r = 0; r < fa.rows; ++r)
        for (int c = 0; c < fa.cols; ++c)
          if (a.region_cell_mask(r, c)) {
            ++checked;
            broken += !(fa.values.col(fa.cell(r, c)) == fb.values.col(fb.cell(r, c)));
          }
    }
  }
  return {broken == 0 && checked > 0, printf_str("%.0f selected feature vectors, %.0f differ", checked, broken)};
}

// ---- 6 ----------------------------------------------------------------------

Outcome loss_reductions() {
  Rng rng(606);
  bool ok = true;
  double worst_fast = 0.0, worst_gram = 0.0, lo = 1e9, hi = -1e9;
  for (int t = 0; t < 20; ++t) {
    FeatureMap fr;
    fr.rows = 5;
    fr.cols = 6;
    fr.values = rng.matrix(10, 30);
    LabelGrid labels(5, 6);
    for (int i = 0; i < 30; ++i) labels.data()[i] = rng.integer(0, 2);
    labels(0, 0) = 1;
    labels(0, 1) = 2;
    fr.label_grid = labels;
    const GroupFeatures style = {{1, rng.matrix(10, 17)}, {2, rng.matrix(10, 9)}};

    const FeatureLoss nn = nnfm_loss(fr, style), k1 = knnfm_loss(fr, style, 1);
    ok = ok && nn.value == k1.value && nn.gradient == k1.gradient;
    worst_fast = std::max(worst_fast, std::abs(fast_loss(fr, fr).value));

    GroupFeatures same;
    for (int g : {1, 2}) {
      Eigen::MatrixXd cols = group_columns(fr, g);
      std::vector<Eigen::Index> order(static_cast<std::size_t>(cols.cols()));
      std::iota(order.begin(), order.end(), Eigen::Index(0));
      std::shuffle(order.begin(), order.end(), rng.engine());
      Eigen::MatrixXd permuted(cols.rows(), cols.cols());
      for (std::size_t j = 0; j < order.size(); ++j) permuted.col(Eigen::Index(j)) = cols.col(order[j]);
      same[g] = permuted;
    }
    worst_gram = std::max(worst_gram, std::abs(gram_loss(fr, same).value));

    FeatureMap target = fr;
    target.values = rng.matrix(10, 30);
    for (double v : {fast_loss(fr, target).value, nnfm_loss(fr, style).value, knnfm_loss(fr, style, 5).value}) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    FeatureMap neg = fr;
    neg.values = -fr.values;
    const double opposite = fast_loss(fr, neg).value;
    lo = std::min(lo, opposite);
    hi = std::max(hi, opposite);
  }
  ok = ok && worst_fast < 1e-12 && worst_gram < 1e-12 && lo >= 0.0 && hi <= 2.0 + 1e-12;
  return {ok, printf_str("fast(F,F) %.1e, gram(same multiset) %.1e, cosine losses within [0, %.6f]", worst_fast, worst_gram,
                  hi)};
}

// ---- 7 and 8 ----------------------------------------------------------------

using ojson = nlohmann::ordered_json;

ojson read_json(const fs::path& p) {
  std::ifstream in(p);
  return ojson::parse(in);
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string indexed(const char* prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02zu.png", prefix, i);
  return buf;
}

double rel(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) { return (got - want).norm() / want.norm(); }

// Pre-clamp recolored content pixels of each group against its style region.
double recolor_moment_error(const StylizeConfig& c) {
  const fs::path out = c.output;
  const ojson transforms = read_json(out / "recolor" / "transforms.json");
  const ojson groups = read_json(out / "match" / "groups.json");
  double worst = 0.0;
  for (std::size_t g = 0; g < transforms["transforms"].size(); ++g) {
    const ojson& t = transforms["transforms"][g];
    Eigen::Matrix3d a;
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) a(r, k) = t["A"][r][k].get<double>();
    const Eigen::Vector3d b(t["b"][0].get<double>(), t["b"][1].get<double>(), t["b"][2].get<double>());
    const int mask_label = groups["groups"][g]["content_mask_label"].get<int>();
    std::vector<Eigen::Vector3d> content;
    for (std::size_t v = 0; v < c.content_images.size(); ++v) {
      const Image img = read_png_rgb(c.content_images[v]);
      const LabelGrid mask = read_png_labels(c.content_masks[v]);
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
          if (mask(y, x) == mask_label) content.push_back(a * img.rgb(x, y) + b);
    }
    Eigen::Matrix3Xd cm(3, Eigen::Index(content.size()));
    for (std::size_t i = 0; i < content.size(); ++i) cm.col(Eigen::Index(i)) = content[i];

    const std::size_t si = t["style_index"].get<std::size_t>();
    const Image region = read_png_rgb(out / "match" / indexed("region", si));
    const LabelGrid rmask = read_png_labels(out / "match" / indexed("region_mask", si));
    std::vector<Eigen::Vector3d> style;
    for (int y = 0; y < region.height(); ++y)
      for (int x = 0; x < region.width(); ++x)
        if (rmask(y, x) != 0) style.push_back(region.rgb(x, y));
    Eigen::Matrix3Xd sm(3, Eigen::Index(style.size()));
    for (std::size_t i = 0; i < style.size(); ++i) sm.col(Eigen::Index(i)) = style[i];

    const Eigen::Vector3d mc = cm.rowwise().mean(), ms = sm.rowwise().mean();
    const Eigen::Matrix3Xd dc = cm.colwise() - mc, ds = sm.colwise() - ms;
    const Eigen::Matrix3d cc = dc * dc.transpose() / double(cm.cols()), cs = ds * ds.transpose() / double(sm.cols());
    worst = std::max({worst, rel(mc, ms), rel(cc, cs)});
  }
  return worst;
}

struct StylizeMetrics {
  double depth_rmse = 0.0;
  double depth_range = 0.0;
  double loss_start = 0.0, loss_end = 0.0;
  double ssim = 0.0;
};

StylizeMetrics stylize_metrics(const StylizeConfig& c) {
  const std::vector<Camera> cameras = load_cameras(c.cameras);
  const GaussianScene before = load_scene(c.output / "recolor" / "scene.ply");
  const GaussianScene after = load_scene(c.output / "stylize" / "scene.ply");
  StylizeMetrics m;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    const RenderOutput r0 = render(before, cameras[v]);
    const RenderOutput r1 = render(after, cameras[v]);
    m.depth_rmse += std::sqrt((r1.depth.data() - r0.depth.data()).squaredNorm() / double(r0.depth.data().size()));
    for (int y = 0; y < r0.depth.height(); ++y)
      for (int x = 0; x < r0.depth.width(); ++x)
        if (r0.alpha_acc(x, y) >= 0.5) {
          lo = std::min(lo, r0.depth(x, y, 0));
          hi = std::max(hi, r0.depth(x, y, 0));
        }
    m.ssim += ssim(r1.color, read_png_rgb(c.content_images[v]));
  }
  m.depth_rmse /= double(cameras.size());
  m.ssim /= double(cameras.size());
  m.depth_range = hi - lo;

  std::istringstream csv(read_bytes(c.output / "stylize" / "history.csv"));
  std::string line;
  std::getline(csv, line);
  std::vector<double> total;
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string it, view, value;
    std::getline(row, it, ',');
    std::getline(row, view, ',');
    std::getline(row, value, ',');
    total.push_back(std::stod(value));
  }
  const std::size_t w = std::min<std::size_t>(50, total.size());
  for (std::size_t i = 0; i < w; ++i) {
    m.loss_start += total[i] / double(w);
    m.loss_end += total[total.size() - w + i] / double(w);
  }
  return m;
}

void copy_tree(const fs::path& from, const fs::path& to) {
  fs::remove_all(to);
  fs::copy(from, to, fs::copy_options::recursive);
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  report(1, "color-transform identities", 1.0, color_identities);
  report(2, "alignment optimality", 30.0, alignment_optimality);
  report(3, "affinity correctness", 5.0, affinity_correctness);
  report(4, "renderer gradients", 60.0, renderer_gradients);
  report(5, "style isolation", 5.0, style_isolation);
  report(6, "loss reductions", 5.0, loss_reductions);

  const fs::path toy = testing::temp_dir("acceptance");
  StylizeConfig base;
  report(7, "pipeline smoke on the toy scene", 600.0, [&]() -> Outcome {
    cmd_toy(toy, 7);
    double worst_moment = 0.0;
    for (const char* type : {"single", "compositional", "semantic"}) {
      StylizeConfig c = StylizeConfig::load(toy / ("config_" + std::string(type) + ".json"));
      cmd_match(c);
      cmd_recolor(c);
      worst_moment = std::max(worst_moment, recolor_moment_error(c));
      if (std::string(type) == "compositional") base = c;
    }
    const fs::path no_content_dir = toy / "out_no_content";
    copy_tree(base.output, no_content_dir);
    copy_tree(base.output, toy / "out_rerun");

    cmd_stylize(base);
    const StylizeMetrics m = stylize_metrics(base);

    StylizeConfig ablation = base;
    ablation.output = no_content_dir;
    ablation.weights.content = 0.0;
    cmd_stylize(ablation);
    const StylizeMetrics n = stylize_metrics(ablation);

    const double depth_ratio = m.depth_rmse / m.depth_range;
    const bool a = worst_moment <= 0.05;
    const bool geometry = depth_ratio < 0.05;
    const bool descent = m.loss_end < m.loss_start;
    const bool content = m.ssim > n.ssim;
    std::string detail = printf_str("(a) max moment rel error %.3e; ", worst_moment) +
                         printf_str("(b) depth RMSE %.4f of range %.3f (%.2f%%); ", m.depth_rmse, m.depth_range,
                             100.0 * depth_ratio) +
                         printf_str("smoothed loss %.5f -> %.5f; ", m.loss_start, m.loss_end) +
                         printf_str("SSIM vs content %.6f, without content term %.6f", m.ssim, n.ssim);
    return {a && geometry && descent && content, detail};
  });

  report(8, "stylize determinism", 600.0, [&]() -> Outcome {
    if (base.output.empty()) return {false, "pipeline run from criterion 7 is unavailable"};
    StylizeConfig rerun = base;
    rerun.output = toy / "out_rerun";
    cmd_stylize(rerun);
    const bool history = read_bytes(base.output / "stylize" / "history.csv") ==
                         read_bytes(rerun.output / "stylize" / "history.csv");
    const bool ply = read_bytes(base.output / "stylize" / "scene.ply") ==
                     read_bytes(rerun.output / "stylize" / "scene.ply");
    return {history && ply, std::string("history ") + (history ? "identical" : "differs") + ", final PLY " +
                                (ply ? "identical" : "differs")};
  });

  std::printf("%s: %d of 8 criteria failed\n", failures == 0 ? "ALL PASS" : "SOME FAIL", failures);
  return failures == 0 ? 0 : 1;
}
