#include "grtp/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"

namespace grtp {

Corpus make_chain_corpus(ChainTask task, const ChainCorpusParams& params, std::uint64_t seed) {
  Rng rng(seed);
  Corpus corpus;
  corpus.hz = params.hz;
  const double dt = 1.0 / params.hz;
  const int T = params.record_steps;
  long next_id = 1;
  for (int pair = 0; pair < params.n_pairs; ++pair) {
    // each pair lives in its own stretch of road so pairs never mix
    const double x0 = 1000.0 * pair + rng.uniform(0.0, 200.0);
    std::vector<TrajectoryRecord> target, neighbor;
    target.reserve(static_cast<std::size_t>(T));
    neighbor.reserve(static_cast<std::size_t>(T));
    if (task == ChainTask::LaneKeep) {
      // same-lane following pair with a small relative drift
      const double v_t = rng.uniform(8.0, 12.0);
      const double v_n = v_t + rng.uniform(-0.5, 0.5);
      const double gap = rng.uniform(6.0, 14.0);
      for (int f = 0; f < T; ++f) {
        target.push_back({next_id, f, x0 + v_t * f * dt, 0.0});
        neighbor.push_back({next_id + 1, f, x0 + gap + v_n * f * dt, 0.0});
      }
    } else {
      const double v_t = rng.uniform(20.0, 30.0);
      const double v_n = rng.uniform(20.0, 30.0);
      const double gap = rng.uniform(6.0, 14.0);
      for (int f = 0; f < T; ++f) {
        const double phase = static_cast<double>(f) / static_cast<double>(T - 1);
        const double y = 2.0 * (1.0 - std::cos(std::numbers::pi * phase));  // 0 -> 4 ramp
        target.push_back({next_id, f, x0 + v_t * f * dt, y});
        neighbor.push_back({next_id + 1, f, x0 - gap + v_n * f * dt, -4.0});
      }
    }
    corpus.vehicles.push_back(std::move(target));
    corpus.vehicles.push_back(std::move(neighbor));
    next_id += 2;
  }
  return corpus;
}

Corpus make_grid_corpus(int n_vehicles, int n_frames, double hz, std::uint64_t seed) {
  Rng rng(seed);
  Corpus corpus;
  corpus.hz = hz;
  const double dt = 1.0 / hz;
  for (int v = 0; v < n_vehicles; ++v) {
    const double speed = rng.uniform(5.0, 30.0);
    const double lane = 4.0 * static_cast<double>(rng.uniform_int(4));
    const double x0 = rng.uniform(0.0, 500.0);
    std::vector<TrajectoryRecord> recs;
    recs.reserve(static_cast<std::size_t>(n_frames));
    for (int f = 0; f < n_frames; ++f)
      recs.push_back({static_cast<long>(v + 1), f, x0 + speed * f * dt, lane});
    corpus.vehicles.push_back(std::move(recs));
  }
  return corpus;
}

void write_corpus_csv(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file: " + path);
  out << "vehicle_id,frame,x,y\n";
  // doubles via the JSON writer so the text round-trips exactly
  for (const auto& recs : corpus.vehicles)
    for (const TrajectoryRecord& r : recs)
      out << r.vehicle_id << "," << r.frame << "," << nlohmann::json(r.x).dump() << ","
          << nlohmann::json(r.y).dump() << "\n";
}

std::vector<PredictionScene> make_gaussian_scene_corpus(const GaussianSceneParams& p) {
  if (p.t_h < 2 || p.t_f < 1) throw ConfigError("gaussian scene corpus: t_h >= 2, t_f >= 1");
  Rng rng(p.seed);
  std::vector<PredictionScene> scenes;
  scenes.reserve(static_cast<std::size_t>(p.n_scenes));
  for (int i = 0; i < p.n_scenes; ++i) {
    const double vx = rng.uniform(-0.05, 0.05);
    const double vy = rng.uniform(-0.03, 0.03);
    const double ax = rng.uniform(-0.004, 0.004);
    const double ay = rng.uniform(-0.004, 0.004);
    PredictionScene s;
    s.synthetic = true;
    s.provenance = "synthetic:gauss";
    for (int k = 1; k <= p.t_h; ++k) {
      const double d = static_cast<double>(k - p.t_h);
      s.target_history.emplace_back(vx * d + 0.5 * ax * d * d, vy * d + 0.5 * ay * d * d);
    }
    for (int k = 1; k <= p.t_f; ++k) {
      const double d = static_cast<double>(k);
      const double mx = vx * d + 0.5 * ax * d * d;
      const double my = vy * d + 0.5 * ay * d * d;
      s.target_future.emplace_back(mx + p.shift.x() + p.sigma * rng.normal(),
                                   my + p.shift.y() + p.sigma * rng.normal());
    }
    // Stationary neighbor with |x| = 1 exactly: pins the scene max-norm at 1.
    Track nb(static_cast<std::size_t>(p.t_h), Point(1.0, 0.3 + 0.1 * rng.uniform()));
    s.neighbor_histories.push_back(std::move(nb));
    s.position_labels = {0, relative_slot_label(s.target_history.front(),
                                                s.neighbor_histories.front().front())};
    scenes.push_back(std::move(s));
  }
  return scenes;
}

double gaussian_corpus_ckld(const GaussianSceneParams& p1, const GaussianSceneParams& p2) {
  if (p1.sigma != p2.sigma || p1.t_f != p2.t_f || p1.t_h != p2.t_h)
    throw ConfigError("gaussian_corpus_ckld: corpora must share sigma and shape");
  const Point d = p1.shift - p2.shift;
  const double sq_per_step = d.squaredNorm();
  // the shift applies at every future step, so the displacement norm scales with t_f
  return static_cast<double>(p1.t_f) * sq_per_step / (2.0 * p1.sigma * p1.sigma);
}

}  // namespace grtp
