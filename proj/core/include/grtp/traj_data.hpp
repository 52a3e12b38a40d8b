#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "grtp/common.hpp"

namespace grtp {

struct TrajectoryRecord {
  long vehicle_id = 0;
  long frame = 0;  // uniform time grid shared by all vehicles
  double x = 0.0;  // meters
  double y = 0.0;  // meters
};

struct SceneConfig {
  int t_h = 16;               // history steps
  int t_f = 25;               // future steps
  double step_seconds = 0.2;  // 5 Hz grid; 16 + 25 steps span 8 s
  int n_v = 5;                // max vehicles considered per scene (target included)
  double decay_lambda = 0.9;  // time-decay weight for adjacency
  int eig_k = 3;              // eigenvectors kept in the condition vector

  int total_steps() const { return t_h + t_f; }
  void validate() const;
};

/// Invertible per-scene transform: meters <-> working coordinates.
/// working = (meters - offset) / scale.
struct NormTransform {
  double offset_x = 0.0;
  double offset_y = 0.0;
  double scale = 1.0;
};

using Point = Eigen::Vector2d;
using Track = std::vector<Point>;

/// One supervised item: the target vehicle's history and future plus the
/// neighbors' histories, all on one time grid. neighbor_full carries the
/// neighbors' full-span tracks when available (required to train the
/// generative memory, absent otherwise).
struct PredictionScene {
  Track target_history;                // length t_h
  Track target_future;                 // length t_f
  std::vector<Track> neighbor_histories;  // each length t_h
  std::vector<Track> neighbor_full;       // each length t_h + t_f, or empty()
  std::vector<int> position_labels;    // [target, neighbors...]; target is 0
  std::optional<NormTransform> norm;   // set iff the scene is in working coords
  bool synthetic = false;
  std::string provenance;

  int vehicle_count() const { return 1 + static_cast<int>(neighbor_histories.size()); }
  bool normalized() const { return norm.has_value(); }
  /// True when every neighbor has a full-span track.
  bool gan_ready() const;
};

struct Corpus {
  // one vector per vehicle, sorted by frame
  std::vector<std::vector<TrajectoryRecord>> vehicles;
  double hz = 0.0;
};

/// Reads a delimited trajectory file with header vehicle_id,frame,x,y. Records
/// come back grouped per vehicle and frame-sorted; hz is recorded as corpus
/// metadata. Duplicated (vehicle, frame) pairs and non-finite coordinates are
/// validation errors; malformed rows are parse errors carrying the line number.
Corpus load_corpus(const std::string& path, double hz);

/// Decimates to to_hz, which must divide corpus.hz evenly. Keeps frames on the
/// shared grid (frame % k == 0) and renumbers them contiguously so cross-vehicle
/// alignment survives.
Corpus resample(const Corpus& corpus, double to_hz);

struct SceneFilter {
  int min_vehicles = 2;   // scenes with fewer total vehicles are dropped
  int max_vehicles = 0;   // 0 = no upper bound
};

/// One scene per (target vehicle, anchor frame) where the target has t_h
/// history and t_f future steps present. Neighbors are the closest vehicles
/// (Euclidean at the anchor frame, ties to the smaller vehicle_id) present
/// over the full history window, at most n_v - 1 of them. Zero-neighbor
/// scenes are discarded.
std::vector<PredictionScene> extract_scenes(const Corpus& corpus, const SceneConfig& cfg,
                                            const SceneFilter& filter = {});

/// Centers on the target position at step t_h and divides by the max absolute
/// coordinate over every vehicle's full track. The transform is retained so
/// the scene can be mapped back to meters exactly.
PredictionScene normalize_scene(const PredictionScene& scene);
PredictionScene denormalize_scene(const PredictionScene& scene);

/// Relative slot of a vehicle versus the target at scene start: a 9-slot grid,
/// lane offset in {-1,0,+1} (lane width 4 m) by longitudinal {-1,0,+1}
/// (threshold 2 m), encoded as 3*lane + longitudinal. The target maps to 0.
int relative_slot_label(const Point& target_start, const Point& vehicle_start);
inline constexpr int kLabelAlphabetSize = 9;  // labels -4..4
int label_to_index(int label);                // 0..8
int index_to_label(int index);

// --- scene archives (line JSON; header line then one scene per line) ---

void write_scene_archive(const std::string& path, const std::vector<PredictionScene>& scenes,
                         const SceneConfig& cfg, const std::string& provenance);

struct SceneArchive {
  std::vector<PredictionScene> scenes;
  SceneConfig cfg;
  std::string provenance;
};

SceneArchive read_scene_archive(const std::string& path);

}  // namespace grtp
