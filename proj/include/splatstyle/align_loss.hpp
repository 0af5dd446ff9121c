#pragma once

#include "splatstyle/error.hpp"
#include "splatstyle/features.hpp"
#include "splatstyle/image.hpp"
#include "splatstyle/render.hpp"
#include "splatstyle/scene.hpp"

#include <Eigen/Core>
#include <Eigen/Cholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace splatstyle {

/// Cosine similarity between the columns of `a` (C x N_a) and `b` (C x N_b).
/// Zero columns have similarity 0 with everything.
template <typename DA, typename DB>
Eigen::Matrix<typename DA::Scalar, Eigen::Dynamic, Eigen::Dynamic> normalized_similarity(
    const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (a.rows() != b.rows())
    throw ValidationError("normalized_similarity: channel mismatch (" + std::to_string(a.rows()) + " vs " +
                          std::to_string(b.rows()) + ")");
  auto unit = [](const auto& m) {
    Matrix out = m;
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      const Scalar n = out.col(j).norm();
      if (n > Scalar(0)) out.col(j) /= n;
      else out.col(j).setZero();
    }
    return out;
  };
  Matrix s = unit(a).transpose() * unit(b);
  return s.cwiseMax(Scalar(-1)).cwiseMin(Scalar(1));
}

/// Indices of the k largest entries of `row`, ties broken by smaller index.
template <typename Derived>
std::vector<Eigen::Index> top_k_indices(const Eigen::DenseBase<Derived>& row, Eigen::Index k) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(row.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index(0));
  k = std::min<Eigen::Index>(k, row.size());
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](Eigen::Index i, Eigen::Index j) {
    return row(i) > row(j) || (row(i) == row(j) && i < j);
  });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

/// Binary incidence between rendered (rows) and style (columns) vectors.
struct AffinityMatrix {
  Eigen::SparseMatrix<double, Eigen::RowMajor> incidence;
  Eigen::Index pair_count = 0;

  Eigen::Index rows() const { return incidence.rows(); }
  Eigen::Index cols() const { return incidence.cols(); }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(incidence); }
};

/// A_ij = 1 when style j is among the k most similar style vectors of
/// rendered i, or rendered i is among the k most similar rendered vectors of
/// style j.
template <typename DR, typename DS>
AffinityMatrix build_affinity(const Eigen::MatrixBase<DR>& rendered, const Eigen::MatrixBase<DS>& style, int k) {
  if (k < 1) throw ValidationError("build_affinity: k must be >= 1");
  if (rendered.cols() == 0 || style.cols() == 0) throw ValidationError("build_affinity: empty feature set");
  const Eigen::MatrixXd sim = normalized_similarity(rendered.template cast<double>(), style.template cast<double>());
  const Eigen::Index nr = sim.rows(), ns = sim.cols();
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> hit = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(nr, ns, false);
  for (Eigen::Index i = 0; i < nr; ++i)
    for (Eigen::Index j : top_k_indices(sim.row(i), k)) hit(i, j) = true;
  for (Eigen::Index j = 0; j < ns; ++j)
    for (Eigen::Index i : top_k_indices(sim.col(j), k)) hit(i, j) = true;

  std::vector<Eigen::Triplet<double>> triplets;
  for (Eigen::Index i = 0; i < nr; ++i)
    for (Eigen::Index j = 0; j < ns; ++j)
      if (hit(i, j)) triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), 1.0);
  AffinityMatrix a;
  a.incidence.resize(nr, ns);
  a.incidence.setFromTriplets(triplets.begin(), triplets.end());
  a.pair_count = static_cast<Eigen::Index>(triplets.size());
  return a;
}

/// Default ridge: 1e-6 * trace(F_r D_r F_r^T) / C.
template <typename DR>
double default_ridge(const Eigen::MatrixBase<DR>& rendered, const AffinityMatrix& a) {
  const Eigen::VectorXd d = Eigen::VectorXd(a.incidence * Eigen::VectorXd::Ones(a.cols())) / double(a.pair_count);
  const Eigen::MatrixXd fr = rendered.template cast<double>();
  const double trace = (fr.array().square().rowwise() * d.transpose().array()).sum();
  return 1e-6 * trace / double(fr.rows());
}

/// Closed-form minimiser of alignment_objective():
///   P = (F_r D_r F_r^T + ridge I)^-1 F_r U F_s^T,  U = A / N_pair,
///   D_r = diag(row sums of A) / N_pair.
/// A negative `ridge` selects default_ridge().
template <typename DR, typename DS>
Eigen::Matrix<typename DR::Scalar, Eigen::Dynamic, Eigen::Dynamic> solve_alignment(
    const Eigen::MatrixBase<DR>& rendered, const Eigen::MatrixBase<DS>& style, const AffinityMatrix& a,
    double ridge = -1.0) {
  using Scalar = typename DR::Scalar;
  if (rendered.rows() != style.rows()) throw ValidationError("solve_alignment: channel mismatch");
  if (a.rows() != rendered.cols() || a.cols() != style.cols())
    throw ValidationError("solve_alignment: affinity shape does not match the feature sets");
  if (a.pair_count <= 0) throw ValidationError("solve_alignment: affinity has no pairs");
  if (ridge < 0.0) ridge = default_ridge(rendered, a);

  const Eigen::MatrixXd fr = rendered.template cast<double>();
  const Eigen::MatrixXd fs = style.template cast<double>();
  const double inv_pairs = 1.0 / double(a.pair_count);
  const Eigen::VectorXd d = Eigen::VectorXd(a.incidence * Eigen::VectorXd::Ones(a.cols())) * inv_pairs;
  Eigen::MatrixXd m = fr * d.asDiagonal() * fr.transpose();
  m.diagonal().array() += ridge;
  const Eigen::MatrixXd rhs = fr * (Eigen::MatrixXd(a.incidence * fs.transpose()) * inv_pairs);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
    throw NumericalError("solve_alignment: singular normal matrix (degenerate features)");
  const Eigen::MatrixXd p = ldlt.solve(rhs);
  if (!p.allFinite()) throw NumericalError("solve_alignment: non-finite alignment matrix");
  return p.template cast<Scalar>();
}

/// (1/N_pair) sum_ij A_ij ||P^T v_r^i - v_s^j||^2 + ridge ||P||_F^2.
template <typename DP, typename DR, typename DS>
double alignment_objective(const Eigen::MatrixBase<DP>& p, const Eigen::MatrixBase<DR>& rendered,
                           const Eigen::MatrixBase<DS>& style, const AffinityMatrix& a, double ridge = 0.0) {
  const Eigen::MatrixXd pr = p.template cast<double>().transpose() * rendered.template cast<double>();
  const Eigen::MatrixXd fs = style.template cast<double>();
  double sum = 0.0;
  for (int i = 0; i < a.incidence.outerSize(); ++i)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(a.incidence, i); it; ++it)
      sum += it.value() * (pr.col(it.row()) - fs.col(it.col())).squaredNorm();
  return sum / double(a.pair_count) + ridge * p.template cast<double>().squaredNorm();
}

/// Gradient of alignment_objective() with respect to P.
template <typename DP, typename DR, typename DS>
Eigen::MatrixXd alignment_gradient(const Eigen::MatrixBase<DP>& p, const Eigen::MatrixBase<DR>& rendered,
                                   const Eigen::MatrixBase<DS>& style, const AffinityMatrix& a, double ridge = 0.0) {
  const Eigen::MatrixXd fr = rendered.template cast<double>();
  const Eigen::MatrixXd fs = style.template cast<double>();
  const Eigen::MatrixXd pd = p.template cast<double>();
  const double inv_pairs = 1.0 / double(a.pair_count);
  const Eigen::VectorXd d = Eigen::VectorXd(a.incidence * Eigen::VectorXd::Ones(a.cols())) * inv_pairs;
  const Eigen::MatrixXd m = fr * d.asDiagonal() * fr.transpose();
  const Eigen::MatrixXd b = fr * (Eigen::MatrixXd(a.incidence * fs.transpose()) * inv_pairs);
  return 2.0 * (m * pd - b) + 2.0 * ridge * pd;
}

/// Loss weights of the stylization objective.
struct LossWeights {
  double fast = 2.0;
  double content = 0.005;
  double tv = 0.02;
  double depth = 0.01;
  double scale = 1.0;
  double opacity = 1.0;
  int k = 5;

  void validate() const;
};

enum class StyleLossKind { Fast, Nnfm, Knnfm, Gram };

std::string to_string(StyleLossKind kind);
StyleLossKind parse_style_loss(const std::string& name);

/// Value and gradient of a loss over a C x cells feature matrix.
struct FeatureLoss {
  double value = 0.0;
  Eigen::MatrixXd gradient;
};

/// Group of a cell: its label when the map carries a label grid (0 means
/// unlabeled), otherwise 1 for every cell.
int cell_group(const FeatureMap& fm, Eigen::Index cell);

/// Style feature vectors per group (C x N_s^z).
using GroupFeatures = std::map<int, Eigen::MatrixXd>;

/// Rendered feature columns of one group.
Eigen::MatrixXd group_columns(const FeatureMap& fm, int group);

/// Per labeled cell v -> P_{group}^T v; unlabeled cells are copied.
FeatureMap align_features(const FeatureMap& rendered, const GroupFeatures& alignment);

/// Mean over labeled cells of 1 - cos(v_r, v_rs), target detached.
FeatureLoss fast_loss(const FeatureMap& rendered, const FeatureMap& target);

/// Mean over labeled cells of the cosine distance to the nearest style vector
/// of the cell's group.
FeatureLoss nnfm_loss(const FeatureMap& rendered, const GroupFeatures& style);

/// As nnfm_loss, averaged over the k nearest style vectors.
FeatureLoss knnfm_loss(const FeatureMap& rendered, const GroupFeatures& style, int k);

/// ||G(F_r) - G(F_s)||_F^2 / C^2 per group, averaged over groups;
/// G(F) = F F^T / N.
FeatureLoss gram_loss(const FeatureMap& rendered, const GroupFeatures& style);

/// Mean squared difference over all cells and channels.
FeatureLoss content_loss(const FeatureMap& content, const FeatureMap& rendered);

struct ImageLossResult {
  double value = 0.0;
  Image gradient;
};

/// Mean squared forward difference along x plus the same along y.
ImageLossResult tv_loss(const Image& image);

/// Mean squared difference; gradient with respect to `rendered`.
ImageLossResult depth_loss(const Image& initial, const Image& rendered);

struct RegularizerResult {
  double value = 0.0;
  GaussianGradients gradient;
};

/// ||s - s_0||_2 over all Gaussians (linear scales).
RegularizerResult scale_reg(const GaussianScene& scene);
/// ||alpha - alpha_0||_2 over all Gaussians.
RegularizerResult opacity_reg(const GaussianScene& scene);

/// Per-view inputs that stay fixed during stylization.
struct ViewTarget {
  Camera camera;
  LabelGrid mask;          // content labels at image resolution
  FeatureMap content;      // features of the content image
  Image initial_depth;     // rendered once from the frozen scene
};

struct StylizationTerms {
  double style = 0.0;
  double content = 0.0;
  double tv = 0.0;
  double depth = 0.0;
  double scale = 0.0;
  double opacity = 0.0;
};

struct StylizationLoss {
  double total = 0.0;
  StylizationTerms terms;
  GaussianGradients gradient;
  int skipped_groups = 0;
};

struct StylizationOptions {
  LossWeights weights;
  StyleLossKind style_loss = StyleLossKind::Fast;
  double ridge = -1.0;  // negative: default_ridge()
  RenderSettings render;
};

/// Full objective for one view, with gradients through the extractor and
/// renderer adjoints. Groups present in `style` but without cells in this
/// view are counted in `skipped_groups`.
StylizationLoss total_stylization_loss(const GaussianScene& scene, const ViewTarget& view, const GroupFeatures& style,
                                       const FeatureExtractorSpec& extractor, const StylizationOptions& options);

}  // namespace splatstyle
