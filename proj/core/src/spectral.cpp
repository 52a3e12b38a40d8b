#include "grtp/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace grtp {

namespace {

/// Flip so the component with the largest magnitude is positive; among equal
/// magnitudes the first index decides.
void canonicalize_sign(Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  double bv = std::abs(v(0));
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v(i)) > bv) {
      bv = std::abs(v(i));
      best = i;
    }
  }
  if (v(best) < 0.0) v = -v;
}

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) < b(i)) return true;
    if (a(i) > b(i)) return false;
  }
  return false;
}

}  // namespace

LaplacianFeatures laplacian_features(const PredictionScene& scene, const SceneConfig& cfg) {
  cfg.validate();
  const int v = scene.vehicle_count();
  if (v < 2) throw ValidationError("laplacian_features: scene needs at least 2 vehicles");
  const int t_h = static_cast<int>(scene.target_history.size());
  if (t_h < 1) throw ValidationError("laplacian_features: empty history");
  for (const Track& t : scene.neighbor_histories)
    if (static_cast<int>(t.size()) != t_h)
      throw ValidationError("laplacian_features: neighbor history off the time grid");

  std::vector<const Track*> tracks;
  tracks.push_back(&scene.target_history);
  for (const Track& t : scene.neighbor_histories) tracks.push_back(&t);

  Eigen::VectorXd w(t_h);
  for (int k = 1; k <= t_h; ++k) w(k - 1) = std::pow(cfg.decay_lambda, t_h - k);
  const double w_sum = w.sum();

  LaplacianFeatures out;
  out.n_vehicles = v;
  out.adjacency = Eigen::MatrixXd::Zero(v, v);
  for (int i = 0; i < v; ++i) {
    for (int j = i + 1; j < v; ++j) {
      double acc = 0.0;
      for (int k = 0; k < t_h; ++k)
        acc += w(k) * ((*tracks[static_cast<std::size_t>(i)])[static_cast<std::size_t>(k)] -
                       (*tracks[static_cast<std::size_t>(j)])[static_cast<std::size_t>(k)])
                          .norm();
      const double a = std::exp(-acc / w_sum);
      out.adjacency(i, j) = a;
      out.adjacency(j, i) = a;
    }
  }
  out.degree = Eigen::MatrixXd::Zero(v, v);
  for (int i = 0; i < v; ++i) out.degree(i, i) = out.adjacency.row(i).sum();
  out.laplacian = out.degree - out.adjacency;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(out.laplacian);
  if (solver.info() != Eigen::Success)
    throw NumericError("laplacian_features: eigendecomposition failed");

  struct Pair {
    double value;
    Eigen::VectorXd vec;
  };
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(v));
  for (int i = v - 1; i >= 0; --i) {  // solver returns ascending; we keep descending
    Eigen::VectorXd vec = solver.eigenvectors().col(i);
    canonicalize_sign(vec);
    pairs.push_back(Pair{solver.eigenvalues()(i), std::move(vec)});
  }
  // deterministic order inside degenerate eigenspaces
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (std::abs(a.value - b.value) > 1e-12 * std::max({1.0, std::abs(a.value), std::abs(b.value)}))
      return a.value > b.value;
    return lex_less(a.vec, b.vec);
  });

  out.eigenvalues.resize(v);
  out.eigenvectors = Eigen::MatrixXd::Zero(cfg.n_v, v);
  for (int i = 0; i < v; ++i) {
    out.eigenvalues(i) = pairs[static_cast<std::size_t>(i)].value;
    out.eigenvectors.col(i).head(v) = pairs[static_cast<std::size_t>(i)].vec;
  }
  return out;
}

ConditionVector condition_vector(const PredictionScene& scene, const LaplacianFeatures& feats,
                                 const SceneConfig& cfg) {
  cfg.validate();
  const int t_h = static_cast<int>(scene.target_history.size());
  if (t_h != cfg.t_h) throw DimensionError("condition_vector: history length does not match config");
  ConditionVector out;
  out.values.resize(condition_dimension(cfg));
  out.values.setZero();
  for (int k = 0; k < t_h; ++k) {
    out.values(2 * k) = scene.target_history[static_cast<std::size_t>(k)].x();
    out.values(2 * k + 1) = scene.target_history[static_cast<std::size_t>(k)].y();
  }
  const int base = 2 * t_h;
  const int available = std::min(cfg.eig_k, feats.n_vehicles);
  for (int i = 0; i < available; ++i)
    out.values.segment(base + i * cfg.n_v, cfg.n_v) = feats.eigenvectors.col(i);
  return out;
}

}  // namespace grtp
