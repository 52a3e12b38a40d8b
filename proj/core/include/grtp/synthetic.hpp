#pragma once

#include "grtp/traj_data.hpp"

namespace grtp {

// Built-in synthetic corpora. The task chain is not distributable with real
// recordings, so these stand in: two highway-like tasks with deliberately
// different dynamics, plus helpers for loader tests and for divergence
// experiments with a known conditional law.

/// Lane-keeping task ("chainA"): pairs of vehicles driving straight at
/// constant speed (8..12 m/s), target in lane y=0, neighbor ahead in the left
/// lane (y=+4). One record per pair, record length = record_steps frames.
/// Lane-change task ("chainB"): fast pairs (20..30 m/s); the target slides
/// from lane 0 to lane +4 on a half-cosine ramp while a neighbor trails in
/// the right lane (y=-4).
enum class ChainTask { LaneKeep, LaneChange };

struct ChainCorpusParams {
  int n_pairs = 500;
  int record_steps = 18;   // frames per vehicle
  double hz = 5.0;
};

Corpus make_chain_corpus(ChainTask task, const ChainCorpusParams& params, std::uint64_t seed);

/// Grid corpus for loader tests: n_vehicles each with n_frames records at hz,
/// straight motion with per-vehicle random speed and lane.
Corpus make_grid_corpus(int n_vehicles, int n_frames, double hz, std::uint64_t seed);

/// Writes a corpus in the vehicle_id,frame,x,y interchange format.
void write_corpus_csv(const std::string& path, const Corpus& corpus);

/// Scene-level corpus with an exactly known conditional law: the target moves
/// on a quadratic arc that is zero at step t_h, the future is the arc's
/// continuation plus isotropic Gaussian noise (sigma) plus an optional
/// constant shift. A stationary neighbor pinned at x=1 makes the max-norm of
/// every scene exactly 1, so normalization is the identity and the working
/// units are exact: Y | X ~ N(mu(X) + shift, sigma^2 I).
struct GaussianSceneParams {
  int n_scenes = 4000;
  int t_h = 4;
  int t_f = 2;
  double sigma = 0.1;            // working units
  Point shift = Point::Zero();   // constant displacement of the future
  std::uint64_t seed = 1;
};

std::vector<PredictionScene> make_gaussian_scene_corpus(const GaussianSceneParams& params);

/// Analytic conditional KL divergence between two corpora generated with the
/// same GaussianSceneParams up to shift: |shift1 - shift2|^2 / (2 sigma^2).
double gaussian_corpus_ckld(const GaussianSceneParams& p1, const GaussianSceneParams& p2);

}  // namespace grtp
