#pragma once

#include "splatstyle/align_loss.hpp"
#include "splatstyle/render.hpp"
#include "splatstyle/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace splatstyle {

struct LearningRates {
  double position = 1.6e-4;
  double rotation = 1e-3;
  double scale = 5e-3;
  double opacity = 5e-2;
  double color = 2.5e-3;
};

/// Parameter groups the optimizer may update.
struct TrainableGroups {
  bool position = false;
  bool rotation = false;
  bool scale = true;
  bool opacity = true;
  bool color = true;

  static TrainableGroups all() { return {true, true, true, true, true}; }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-15;
};

/// First and second moments per parameter, plus the step counter.
struct OptimState {
  GaussianGradients m;
  GaussianGradients v;
  std::int64_t step = 0;
  LearningRates lr;
  AdamConfig adam;

  static OptimState for_scene(const GaussianScene& scene, const LearningRates& lr = {});
};

/// One bias-corrected Adam update of the enabled groups. Scales are stepped in
/// log space and opacities in logit space (moments live there too); the
/// gradients passed in are with respect to the linear values. Afterwards
/// opacity is clamped to [1e-4, 1 - 1e-4], scales are floored at 1e-6 and
/// quaternions renormalised (only where the update is nonzero).
/// Throws NumericalError naming the group and iteration on a non-finite
/// gradient.
void adam_step(GaussianScene& scene, const GaussianGradients& grads, OptimState& state,
               const TrainableGroups& groups = TrainableGroups::all());

struct StageReport {
  std::string stage;
  std::vector<std::string> term_names;       // column names of `history`
  std::vector<std::vector<double>> history;  // one row per iteration run
  std::vector<int> views;                    // view index used at each iteration
  double wall_clock_seconds = 0.0;
  std::vector<std::pair<std::string, double>> final_metrics;
  std::int64_t skipped_groups = 0;
  bool aborted = false;
  std::string error;

  std::size_t iterations() const { return history.size(); }
  /// Column of `history` by name.
  std::vector<double> series(const std::string& name) const;
  /// Report without the history, as JSON text.
  std::string summary_json() const;
  /// History as CSV (full double precision; byte-stable across runs).
  std::string history_csv() const;
};

/// Moving average with the given window (shorter at the start).
std::vector<double> smooth(std::span<const double> values, std::size_t window);

using SnapshotFn = std::function<void(int iteration, const GaussianScene& scene)>;

struct ReconstructionOptions {
  int iterations = 1000;
  double lambda_dssim = 0.2;
  LearningRates lr;
  TrainableGroups trainable = TrainableGroups::all();
  std::uint64_t seed = 0;
  RenderSettings render;
};

struct StageResult {
  GaussianScene scene;
  StageReport report;
};

/// Retrains all Gaussian parameters against fixed target images, one random
/// view per step, with (1 - lambda) L1 + lambda D-SSIM.
StageResult run_reconstruction(const GaussianScene& scene, std::span<const Image> targets,
                               std::span<const Camera> cameras, const ReconstructionOptions& options);

struct StylizationRunOptions {
  int iterations = 2000;
  StylizationOptions loss;
  LearningRates lr;
  TrainableGroups trainable;
  std::uint64_t seed = 0;
  int snapshot_every = 0;
  SnapshotFn on_snapshot;
};

/// Visits views round-robin in a freshly shuffled order each pass and takes
/// one Adam step per view on total_stylization_loss().
StageResult run_stylization(const GaussianScene& scene, std::span<const ViewTarget> views, const GroupFeatures& style,
                            const FeatureExtractorSpec& extractor, const StylizationRunOptions& options);

}  // namespace splatstyle
