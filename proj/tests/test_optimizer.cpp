#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "splatstyle/color_match.hpp"
#include "splatstyle/error.hpp"
#include "splatstyle/optimizer.hpp"
#include "support.hpp"

using namespace splatstyle;
using testing::Rng;

namespace {

GaussianGradients random_grads(Rng& rng, std::size_t n) {
  GaussianGradients g = GaussianGradients::zeros(n);
  g.position = rng.matrix(Eigen::Index(n), 3);
  g.rotation = rng.matrix(Eigen::Index(n), 4);
  g.scale = rng.matrix(Eigen::Index(n), 3);
  g.opacity = rng.matrix(Eigen::Index(n), 1);
  g.color = rng.matrix(Eigen::Index(n), 3);
  return g;
}

double scene_distance(const GaussianScene& a, const GaussianScene& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Gaussian &x = a.gaussians[i], &y = b.gaussians[i];
    d += (x.position - y.position).squaredNorm() + (x.rotation - y.rotation).squaredNorm() +
         (x.scale - y.scale).squaredNorm() + (x.opacity - y.opacity) * (x.opacity - y.opacity) +
         (x.color - y.color).squaredNorm();
  }
  return std::sqrt(d);
}

bool identical(const GaussianScene& a, const GaussianScene& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Gaussian &x = a.gaussians[i], &y = b.gaussians[i];
    if (x.position != y.position || x.rotation != y.rotation || x.scale != y.scale || x.opacity != y.opacity ||
        x.color != y.color)
      return false;
  }
  return true;
}

std::vector<Image> renders(const GaussianScene& scene, std::span<const Camera> cams) {
  std::vector<Image> out;
  for (const Camera& c : cams) out.push_back(render(scene, c).color);
  return out;
}

}  // namespace

TEST_CASE("adam_step: single step matches a hand computation") {
  Rng rng(1);
  GaussianScene scene = testing::random_scene(3, rng);
  const GaussianScene before = scene;
  GaussianGradients g = random_grads(rng, 3);
  OptimState state = OptimState::for_scene(scene);
  adam_step(scene, g, state);
  CHECK(state.step == 1);
  const double eps = 1e-15;
  auto expect = [&](double grad, double lr) {
    const double m = 0.1 * grad, v = 0.001 * grad * grad;
    const double mh = m / (1 - 0.9), vh = v / (1 - 0.999);
    return -lr * mh / (std::sqrt(vh) + eps);
  };
  const LearningRates lr;
  for (int i = 0; i < 3; ++i) {
    const Gaussian &a = before.gaussians[i], &b = scene.gaussians[i];
    for (int k = 0; k < 3; ++k) {
      CHECK(b.position[k] - a.position[k] == doctest::Approx(expect(g.position(i, k), lr.position)).epsilon(1e-9));
      CHECK(b.color[k] - a.color[k] == doctest::Approx(expect(g.color(i, k), lr.color)).epsilon(1e-9));
      const double log_step = expect(g.scale(i, k) * a.scale[k], lr.scale);
      CHECK(b.scale[k] == doctest::Approx(a.scale[k] * std::exp(log_step)).epsilon(1e-12));
    }
    const double logit = std::log(a.opacity / (1 - a.opacity)) +
                         expect(g.opacity[i] * a.opacity * (1 - a.opacity), lr.opacity);
    CHECK(b.opacity == doctest::Approx(1 / (1 + std::exp(-logit))).epsilon(1e-12));
    Eigen::Vector4d q = a.rotation;
    for (int k = 0; k < 4; ++k) q[k] += expect(g.rotation(i, k), lr.rotation);
    CHECK((b.rotation - q.normalized()).norm() < 1e-12);
    CHECK(std::abs(b.color[0] - a.color[0]) == doctest::Approx(lr.color).epsilon(1e-9));
  }
}

TEST_CASE("adam_step: zero gradients") {
  Rng rng(2);
  GaussianScene scene = testing::random_scene(4, rng);
  const GaussianScene before = scene;
  OptimState state = OptimState::for_scene(scene);
  for (int i = 0; i < 10; ++i) adam_step(scene, GaussianGradients::zeros(4), state);
  CHECK(identical(scene, before));

  adam_step(scene, random_grads(rng, 4), state);
  const Eigen::MatrixXd m = state.m.color;
  adam_step(scene, GaussianGradients::zeros(4), state);
  CHECK((state.m.color - 0.9 * m).norm() < 1e-15);
}

TEST_CASE("adam_step: legality after many random steps") {
  Rng rng(3);
  GaussianScene scene = testing::random_scene(6, rng);
  LearningRates lr;
  lr.opacity = 0.3;
  lr.scale = 0.2;
  OptimState state = OptimState::for_scene(scene, lr);
  for (int i = 0; i < 100; ++i) {
    adam_step(scene, random_grads(rng, 6), state);
    for (const Gaussian& g : scene.gaussians) {
      CHECK(std::abs(g.rotation.norm() - 1.0) < 1e-12);
      CHECK(g.opacity > 0.0);
      CHECK(g.opacity < 1.0);
      CHECK(g.scale.minCoeff() > 0.0);
    }
  }
}

TEST_CASE("adam_step: frozen groups and errors") {
  Rng rng(4);
  GaussianScene scene = testing::random_scene(2, rng);
  const GaussianScene before = scene;
  OptimState state = OptimState::for_scene(scene);
  adam_step(scene, random_grads(rng, 2), state, TrainableGroups{});
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(scene.gaussians[i].position == before.gaussians[i].position);
    CHECK(scene.gaussians[i].rotation == before.gaussians[i].rotation);
    CHECK(scene.gaussians[i].color != before.gaussians[i].color);
  }
  GaussianGradients bad = random_grads(rng, 2);
  bad.scale(1, 2) = std::numeric_limits<double>::infinity();
  try {
    adam_step(scene, bad, state);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("scale") != std::string::npos);
    CHECK(msg.find("iteration 2") != std::string::npos);
  }
  CHECK_THROWS_AS(adam_step(scene, GaussianGradients::zeros(3), state), ValidationError);
}

TEST_CASE("smooth") {
  const std::vector<double> v = {1, 2, 3, 4, 5};
  const auto s = smooth(v, 2);
  CHECK(s == std::vector<double>{1, 1.5, 2.5, 3.5, 4.5});
}

TEST_CASE("run_reconstruction: fixed point") {
  Rng rng(5);
  const GaussianScene scene = testing::random_scene(6, rng);
  const std::vector<Camera> cams = {testing::front_camera(16, 16, 16), testing::front_camera(16, 16, 14)};
  const auto targets = renders(scene, cams);
  ReconstructionOptions opts;
  opts.iterations = 50;
  const StageResult r = run_reconstruction(scene, targets, cams, opts);
  CHECK(!r.report.aborted);
  CHECK(r.report.iterations() == 50);
  CHECK(r.report.history.front()[0] == doctest::Approx(0.0));
  for (const auto& row : r.report.history)
    for (double v : row) CHECK(std::isfinite(v));
  CHECK(r.report.series("total").back() < 1e-3);
  CHECK(scene_distance(r.scene, scene) < 1e-3);
}

TEST_CASE("run_reconstruction: one Gaussian converges to a recolored target") {
  Gaussian g;
  g.position = Eigen::Vector3d(0, 0, 3);
  g.scale = Eigen::Vector3d(0.5, 0.4, 0.3);
  g.opacity = 0.8;
  g.color = Eigen::Vector3d(0.6, 0.4, 0.3);
  const GaussianScene scene({g});
  const std::vector<Camera> cams = {testing::front_camera(16, 16, 16)};
  ColorTransform<double> t;
  t.weight << 0.8, 0.1, 0.0, 0.0, 0.7, 0.2, 0.1, 0.0, 0.9;
  t.bias = Eigen::Vector3d(0.05, 0.1, 0.2);
  GaussianScene recolored = scene;
  recolored.gaussians[0].color = apply_transform(t, g.color).col(0);
  const auto targets = renders(recolored, cams);
  ReconstructionOptions opts;
  opts.iterations = 400;
  const StageResult r = run_reconstruction(scene, targets, cams, opts);
  CHECK(!r.report.aborted);
  REQUIRE(r.report.final_metrics.size() == 1);
  CHECK(r.report.final_metrics[0].first == "mean_l1");
  CHECK(r.report.final_metrics[0].second < 0.01);
  CHECK_THROWS_AS(run_reconstruction(scene, targets, std::vector<Camera>{}, opts), ValidationError);
}

TEST_CASE("run_reconstruction: deterministic under a seed") {
  Rng rng(6);
  const GaussianScene scene = testing::random_scene(5, rng);
  const std::vector<Camera> cams = {testing::front_camera(16, 16, 16), testing::front_camera(16, 16, 12)};
  GaussianScene moved = scene;
  for (auto& g : moved.gaussians) g.color = Eigen::Vector3d::Constant(1.0) - g.color;
  const auto targets = renders(moved, cams);
  ReconstructionOptions opts;
  opts.iterations = 30;
  opts.seed = 99;
  const StageResult a = run_reconstruction(scene, targets, cams, opts);
  const StageResult b = run_reconstruction(scene, targets, cams, opts);
  CHECK(a.report.history_csv() == b.report.history_csv());
  CHECK(a.report.views == b.report.views);
  CHECK(identical(a.scene, b.scene));
  CHECK(a.report.series("total").back() < a.report.series("total").front());
}

namespace {

struct StyleSetup {
  GaussianScene scene;
  std::vector<ViewTarget> views;
  FeatureExtractorSpec extractor = FeatureExtractorSpec::patch_stats(4, 4);
};

StyleSetup style_setup(std::uint64_t seed) {
  Rng rng(seed);
  StyleSetup s;
  s.scene = testing::random_scene(6, rng);
  for (double f : {16.0, 14.0, 18.0}) {
    ViewTarget v;
    v.camera = testing::front_camera(16, 16, f);
    const RenderOutput r = render(s.scene, v.camera);
    v.initial_depth = r.depth;
    v.content = extract(r.color, s.extractor);
    v.mask = LabelGrid::Constant(16, 16, 1);
    s.views.push_back(v);
  }
  return s;
}

}  // namespace

TEST_CASE("run_stylization: all weights zero leaves the scene unchanged") {
  StyleSetup s = style_setup(7);
  Rng rng(7);
  StylizationRunOptions opts;
  opts.iterations = 20;
  opts.trainable = TrainableGroups::all();
  opts.loss.weights = {0, 0, 0, 0, 0, 0, 5};
  const StageResult r = run_stylization(s.scene, s.views, {{1, rng.matrix(12, 20)}}, s.extractor, opts);
  CHECK(r.report.iterations() == 20);
  CHECK(identical(r.scene, s.scene));
}

TEST_CASE("run_stylization: round-robin order, determinism and snapshots") {
  StyleSetup s = style_setup(8);
  Rng rng(8);
  const GroupFeatures style = {{1, rng.matrix(12, 20).cwiseAbs()}};
  StylizationRunOptions opts;
  opts.iterations = 9;
  opts.seed = 3;
  opts.snapshot_every = 4;
  std::vector<int> snaps;
  opts.on_snapshot = [&](int it, const GaussianScene&) { snaps.push_back(it); };
  const StageResult a = run_stylization(s.scene, s.views, style, s.extractor, opts);
  CHECK(snaps == std::vector<int>{4, 8});
  for (int pass = 0; pass < 3; ++pass) {
    std::vector<int> seen(a.report.views.begin() + 3 * pass, a.report.views.begin() + 3 * pass + 3);
    std::sort(seen.begin(), seen.end());
    CHECK(seen == std::vector<int>{0, 1, 2});
  }
  opts.on_snapshot = nullptr;
  const StageResult b = run_stylization(s.scene, s.views, style, s.extractor, opts);
  CHECK(a.report.history_csv() == b.report.history_csv());
  CHECK(identical(a.scene, b.scene));
  CHECK(a.report.term_names.size() == 7);
  CHECK(a.report.final_metrics.size() == 7);
}

TEST_CASE("run_stylization: style equal to content stays near the start") {
  StyleSetup s = style_setup(9);
  GroupFeatures style;
  Eigen::MatrixXd all(12, 0);
  for (const ViewTarget& v : s.views) {
    Eigen::MatrixXd next(12, all.cols() + v.content.values.cols());
    next << all, v.content.values;
    all = next;
  }
  style[1] = all;
  StylizationRunOptions opts;
  opts.iterations = 60;
  const StageResult same = run_stylization(s.scene, s.views, style, s.extractor, opts);
  CHECK(same.report.series("style").front() < 0.05);

  Rng rng(9);
  const GroupFeatures other = {{1, rng.matrix(12, all.cols()).cwiseAbs()}};
  const StageResult different = run_stylization(s.scene, s.views, other, s.extractor, opts);
  CHECK(different.report.series("style").front() > 4 * same.report.series("style").front());
  CHECK(scene_distance(same.scene, s.scene) < scene_distance(different.scene, s.scene));
}

TEST_CASE("StageReport serialization") {
  StageReport r;
  r.stage = "x";
  r.term_names = {"total", "a"};
  r.history = {{1.0, 0.1}, {0.5, 1.0 / 3.0}};
  r.views = {0, 1};
  const std::string csv = r.history_csv();
  CHECK(csv.find("iteration,view,total,a\n") == 0);
  CHECK(csv.find("0.33333333333333331") != std::string::npos);
  CHECK(r.summary_json().find("\"iterations\": 2") != std::string::npos);
  CHECK(r.series("a")[1] == 1.0 / 3.0);
  CHECK_THROWS_AS(r.series("b"), ValidationError);
}
