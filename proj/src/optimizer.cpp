#include "splatstyle/optimizer.hpp"

#include "splatstyle/color_match.hpp"
#include "splatstyle/error.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace splatstyle {

OptimState OptimState::for_scene(const GaussianScene& scene, const LearningRates& lr) {
  OptimState s;
  s.m = GaussianGradients::zeros(scene.size());
  s.v = GaussianGradients::zeros(scene.size());
  s.lr = lr;
  return s;
}

namespace {

template <typename Grad>
void check_finite(const Grad& g, const char* group, std::int64_t iteration) {
  if (!g.allFinite())
    throw NumericalError(std::string("non-finite gradient in group '") + group + "' at iteration " +
                         std::to_string(iteration));
}

// Bias-corrected Adam increment for one parameter block.
template <typename M>
M adam_delta(const M& grad, M& m, M& v, double lr, const AdamConfig& cfg, std::int64_t step) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, double(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(step));
  return (-lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon)).matrix();
}

}  // namespace

void adam_step(GaussianScene& scene, const GaussianGradients& grads, OptimState& state, const TrainableGroups& groups) {
  const auto n = static_cast<Eigen::Index>(scene.size());
  if (static_cast<Eigen::Index>(grads.size()) != n || static_cast<Eigen::Index>(state.m.size()) != n)
    throw ValidationError("adam_step: gradient / state size does not match the scene");
  const std::int64_t iteration = state.step + 1;
  check_finite(grads.position, "position", iteration);
  check_finite(grads.rotation, "rotation", iteration);
  check_finite(grads.scale, "scale", iteration);
  check_finite(grads.opacity, "opacity", iteration);
  check_finite(grads.color, "color", iteration);
  state.step = iteration;
  const AdamConfig& cfg = state.adam;

  if (groups.position) {
    const auto d = adam_delta(grads.position, state.m.position, state.v.position, state.lr.position, cfg, iteration);
    for (Eigen::Index i = 0; i < n; ++i) scene.gaussians[i].position += d.row(i).transpose();
  }
  if (groups.color) {
    const auto d = adam_delta(grads.color, state.m.color, state.v.color, state.lr.color, cfg, iteration);
    for (Eigen::Index i = 0; i < n; ++i) scene.gaussians[i].color += d.row(i).transpose();
  }
  if (groups.rotation) {
    const auto d = adam_delta(grads.rotation, state.m.rotation, state.v.rotation, state.lr.rotation, cfg, iteration);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d.row(i).isZero(0.0)) continue;
      Eigen::Vector4d& q = scene.gaussians[i].rotation;
      q += d.row(i).transpose();
      const double norm = q.norm();
      if (!(norm > 0.0)) throw NumericalError("adam_step: quaternion collapsed at iteration " + std::to_string(iteration));
      q /= norm;
    }
  }
  if (groups.scale) {
    Eigen::Matrix<double, Eigen::Dynamic, 3> g_log(n, 3);
    for (Eigen::Index i = 0; i < n; ++i)
      g_log.row(i) = grads.scale.row(i).cwiseProduct(scene.gaussians[i].scale.transpose());
    const auto d = adam_delta(g_log, state.m.scale, state.v.scale, state.lr.scale, cfg, iteration);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Vector3d& s = scene.gaussians[i].scale;
      for (int k = 0; k < 3; ++k)
        if (d(i, k) != 0.0) s[k] = std::max(s[k] * std::exp(d(i, k)), 1e-6);
    }
  }
  if (groups.opacity) {
    Eigen::VectorXd g_logit(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = scene.gaussians[i].opacity;
      g_logit[i] = grads.opacity[i] * a * (1.0 - a);
    }
    const Eigen::VectorXd d = adam_delta(g_logit, state.m.opacity, state.v.opacity, state.lr.opacity, cfg, iteration);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d[i] == 0.0) continue;
      double& a = scene.gaussians[i].opacity;
      const double logit = std::log(a / (1.0 - a)) + d[i];
      a = std::clamp(1.0 / (1.0 + std::exp(-logit)), 1e-4, 1.0 - 1e-4);
    }
  }
}

std::vector<double> StageReport::series(const std::string& name) const {
  const auto it = std::find(term_names.begin(), term_names.end(), name);
  if (it == term_names.end()) throw ValidationError("report has no term '" + name + "'");
  const auto col = static_cast<std::size_t>(it - term_names.begin());
  std::vector<double> out;
  out.reserve(history.size());
  for (const auto& row : history) out.push_back(row[col]);
  return out;
}

std::string StageReport::summary_json() const {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["iterations"] = iterations();
  j["terms"] = term_names;
  j["wall_clock_seconds"] = wall_clock_seconds;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const auto& [k, v] : final_metrics) metrics[k] = v;
  j["final_metrics"] = metrics;
  j["skipped_groups"] = skipped_groups;
  j["aborted"] = aborted;
  if (aborted) j["error"] = error;
  if (!history.empty()) {
    nlohmann::ordered_json first, last;
    for (std::size_t c = 0; c < term_names.size(); ++c) {
      first[term_names[c]] = history.front()[c];
      last[term_names[c]] = history.back()[c];
    }
    j["first"] = first;
    j["last"] = last;
  }
  return j.dump(2);
}

std::string StageReport::history_csv() const {
  std::ostringstream os;
  os << "iteration,view";
  for (const auto& name : term_names) os << ',' << name;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < history.size(); ++i) {
    os << i << ',' << (i < views.size() ? views[i] : -1);
    for (double v : history[i]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::vector<double> smooth(std::span<const double> values, std::size_t window) {
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / double(std::min(i + 1, window));
  }
  return out;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool finite_row(const std::vector<double>& row) {
  return std::all_of(row.begin(), row.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

StageResult run_reconstruction(const GaussianScene& scene, std::span<const Image> targets,
                               std::span<const Camera> cameras, const ReconstructionOptions& options) {
  if (targets.size() != cameras.size())
    throw ValidationError("run_reconstruction: " + std::to_string(targets.size()) + " targets for " +
                          std::to_string(cameras.size()) + " cameras");
  if (targets.empty()) throw ValidationError("run_reconstruction: no views");
  for (std::size_t v = 0; v < targets.size(); ++v)
    if (targets[v].width() != cameras[v].width || targets[v].height() != cameras[v].height ||
        targets[v].channels() != 3)
      throw ValidationError("run_reconstruction: target " + std::to_string(v) + " does not match its camera");
  if (options.iterations < 0) throw ValidationError("run_reconstruction: iterations must be >= 0");

  const auto t0 = std::chrono::steady_clock::now();
  StageResult result{scene, {}};
  StageReport& report = result.report;
  report.stage = "reconstruction";
  report.term_names = {"total", "l1", "dssim"};
  OptimState state = OptimState::for_scene(scene, options.lr);
  std::mt19937_64 rng(options.seed);

  for (int it = 0; it < options.iterations; ++it) {
    const auto view = static_cast<std::size_t>(rng() % targets.size());
    const RenderOutput r = render(result.scene, cameras[view], false, options.render);
    const ImageLoss loss = reconstruction_loss(r.color, targets[view], options.lambda_dssim);
    const double l1 = (r.color.data() - targets[view].data()).cwiseAbs().mean();
    const double dssim =
        options.lambda_dssim > 0.0 ? (loss.value - (1.0 - options.lambda_dssim) * l1) / options.lambda_dssim : 0.0;
    const std::vector<double> row{loss.value, l1, dssim};
    if (!finite_row(row)) {
      report.aborted = true;
      report.error = "non-finite reconstruction loss at iteration " + std::to_string(it);
      break;
    }
    report.history.push_back(row);
    report.views.push_back(static_cast<int>(view));
    const Image zero_depth(cameras[view].width, cameras[view].height, 1);
    const GaussianGradients g = render_adjoint(result.scene, cameras[view], loss.gradient, zero_depth, options.render);
    try {
      adam_step(result.scene, g, state, options.trainable);
    } catch (const NumericalError& e) {
      report.aborted = true;
      report.error = e.what();
      break;
    }
  }

  double l1_sum = 0.0;
  for (std::size_t v = 0; v < targets.size(); ++v)
    l1_sum += (render(result.scene, cameras[v], false, options.render).color.data() - targets[v].data())
                  .cwiseAbs()
                  .mean();
  report.final_metrics.emplace_back("mean_l1", l1_sum / double(targets.size()));
  report.wall_clock_seconds = seconds_since(t0);
  return result;
}

StageResult run_stylization(const GaussianScene& scene, std::span<const ViewTarget> views, const GroupFeatures& style,
                            const FeatureExtractorSpec& extractor, const StylizationRunOptions& options) {
  if (views.empty()) throw ValidationError("run_stylization: no views");
  if (options.iterations < 0) throw ValidationError("run_stylization: iterations must be >= 0");
  options.loss.weights.validate();

  const auto t0 = std::chrono::steady_clock::now();
  StageResult result{scene, {}};
  StageReport& report = result.report;
  report.stage = "stylization";
  report.term_names = {"total", "style", "content", "tv", "depth", "scale", "opacity"};
  OptimState state = OptimState::for_scene(scene, options.lr);
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(views.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::size_t cursor = order.size();

  for (int it = 0; it < options.iterations; ++it) {
    if (cursor == order.size()) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
      cursor = 0;
    }
    const std::size_t view = order[cursor++];
    StylizationLoss loss;
    try {
      loss = total_stylization_loss(result.scene, views[view], style, extractor, options.loss);
    } catch (const NumericalError& e) {
      report.aborted = true;
      report.error = std::string(e.what()) + " (iteration " + std::to_string(it) + ")";
      break;
    }
    const auto& t = loss.terms;
    const std::vector<double> row{loss.total, t.style, t.content, t.tv, t.depth, t.scale, t.opacity};
    if (!finite_row(row)) {
      report.aborted = true;
      report.error = "non-finite stylization loss at iteration " + std::to_string(it);
      break;
    }
    report.history.push_back(row);
    report.views.push_back(static_cast<int>(view));
    if (loss.skipped_groups > 0) {
      report.skipped_groups += loss.skipped_groups;
      spdlog::debug("iteration {}: {} group(s) without cells in view {}", it, loss.skipped_groups, view);
    }
    try {
      adam_step(result.scene, loss.gradient, state, options.trainable);
    } catch (const NumericalError& e) {
      report.aborted = true;
      report.error = e.what();
      break;
    }
    if (options.snapshot_every > 0 && options.on_snapshot && (it + 1) % options.snapshot_every == 0)
      options.on_snapshot(it + 1, result.scene);
  }
  if (report.skipped_groups > 0)
    spdlog::warn("stylization skipped {} group-view pair(s) with no labeled feature cells", report.skipped_groups);

  if (!report.history.empty()) {
    for (std::size_t c = 0; c < report.term_names.size(); ++c)
      report.final_metrics.emplace_back(report.term_names[c], report.history.back()[c]);
  }
  report.wall_clock_seconds = seconds_since(t0);
  return result;
}

}  // namespace splatstyle
