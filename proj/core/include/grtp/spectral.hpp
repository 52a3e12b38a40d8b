#pragma once

#include <Eigen/Core>

#include "grtp/traj_data.hpp"

namespace grtp {

/// Time-decay-weighted graph features of one scene over its history window.
/// Vehicle 0 is the target, then neighbors in scene order. Matrices are sized
/// to the vehicles actually present (v <= n_v); eigenvectors are zero-padded
/// to n_v rows so the condition layout stays fixed.
struct LaplacianFeatures {
  Eigen::MatrixXd adjacency;     // v x v, symmetric, zero diagonal, entries in (0, 1]
  Eigen::MatrixXd degree;        // v x v diagonal
  Eigen::MatrixXd laplacian;     // D - A, positive semidefinite
  Eigen::VectorXd eigenvalues;   // length v, descending
  Eigen::MatrixXd eigenvectors;  // n_v x v, column i pairs with eigenvalues[i], zero-padded
  int n_vehicles = 0;
};

/// Adjacency a_ij = exp(-sum_k w_k d(x_k^i, x_k^j) / sum_k w_k) with
/// w_k = lambda^(t_h - k) over history steps k = 1..t_h, d the per-step
/// Euclidean distance in the scene's stored units. Eigenvectors are
/// sign-canonicalized (largest-magnitude component positive) and tied
/// eigenvalues are ordered lexicographically so features are deterministic.
LaplacianFeatures laplacian_features(const PredictionScene& scene, const SceneConfig& cfg);

/// Fixed-dimension condition: flattened target history (2 t_h) followed by
/// the top eig_k eigenvectors (eig_k * n_v entries, zero-padded when the
/// scene has fewer vehicles or eigenpairs than the config allows).
struct ConditionVector {
  Eigen::VectorXd values;
};

ConditionVector condition_vector(const PredictionScene& scene, const LaplacianFeatures& feats,
                                 const SceneConfig& cfg);

inline int condition_dimension(const SceneConfig& cfg) { return 2 * cfg.t_h + cfg.eig_k * cfg.n_v; }

}  // namespace grtp
