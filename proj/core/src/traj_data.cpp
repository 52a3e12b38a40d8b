#include "grtp/traj_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "json.hpp"

namespace grtp {

using json = nlohmann::ordered_json;

void SceneConfig::validate() const {
  if (t_h < 2) throw ConfigError("scene config: t_h must be >= 2");
  if (t_f < 1) throw ConfigError("scene config: t_f must be >= 1");
  if (step_seconds <= 0.0) throw ConfigError("scene config: step_seconds must be positive");
  if (n_v < 2) throw ConfigError("scene config: n_v must be >= 2");
  if (eig_k < 1 || eig_k > n_v) throw ConfigError("scene config: eig_k must be in [1, n_v]");
  if (decay_lambda <= 0.0 || decay_lambda > 1.0)
    throw ConfigError("scene config: decay_lambda must be in (0, 1]");
}

bool PredictionScene::gan_ready() const {
  if (neighbor_histories.empty()) return false;
  if (neighbor_full.size() != neighbor_histories.size()) return false;
  for (const Track& t : neighbor_full)
    if (t.empty()) return false;
  return true;
}

namespace {

struct Cell {
  std::string_view text;
};

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

long parse_long(std::string_view s, int line_no, const char* col) {
  s = trim(s);
  long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ParseError("line " + std::to_string(line_no) + ": bad " + col + " value '" +
                     std::string(s) + "'");
  return v;
}

double parse_double(std::string_view s, int line_no, const char* col) {
  s = trim(s);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ParseError("line " + std::to_string(line_no) + ": bad " + col + " value '" +
                     std::string(s) + "'");
  return v;
}

}  // namespace

Corpus load_corpus(const std::string& path, double hz) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  {
    auto cols = split_csv(line);
    const char* expected[] = {"vehicle_id", "frame", "x", "y"};
    if (cols.size() != 4) throw ParseError(path + ": header must be vehicle_id,frame,x,y");
    for (int i = 0; i < 4; ++i)
      if (trim(cols[static_cast<std::size_t>(i)]) != expected[i])
        throw ParseError(path + ": header must be vehicle_id,frame,x,y");
  }

  std::unordered_map<long, std::vector<TrajectoryRecord>> groups;
  std::vector<long> order;  // first-seen vehicle order, for deterministic output
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cols = split_csv(line);
    if (cols.size() != 4)
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 columns, got " +
                       std::to_string(cols.size()));
    TrajectoryRecord rec;
    rec.vehicle_id = parse_long(cols[0], line_no, "vehicle_id");
    rec.frame = parse_long(cols[1], line_no, "frame");
    rec.x = parse_double(cols[2], line_no, "x");
    rec.y = parse_double(cols[3], line_no, "y");
    if (!std::isfinite(rec.x) || !std::isfinite(rec.y))
      throw ValidationError("line " + std::to_string(line_no) + ": non-finite coordinate for vehicle " +
                            std::to_string(rec.vehicle_id));
    auto [it, inserted] = groups.try_emplace(rec.vehicle_id);
    if (inserted) order.push_back(rec.vehicle_id);
    it->second.push_back(rec);
  }

  Corpus corpus;
  corpus.hz = hz;
  std::sort(order.begin(), order.end());
  corpus.vehicles.reserve(order.size());
  for (long vid : order) {
    auto& recs = groups[vid];
    std::sort(recs.begin(), recs.end(),
              [](const TrajectoryRecord& a, const TrajectoryRecord& b) { return a.frame < b.frame; });
    for (std::size_t i = 1; i < recs.size(); ++i)
      if (recs[i].frame == recs[i - 1].frame)
        throw ValidationError("vehicle " + std::to_string(vid) + ": duplicated frame " +
                              std::to_string(recs[i].frame));
    corpus.vehicles.push_back(std::move(recs));
  }
  return corpus;
}

Corpus resample(const Corpus& corpus, double to_hz) {
  if (to_hz <= 0.0) throw ConfigError("resample: target rate must be positive");
  const double ratio = corpus.hz / to_hz;
  const long k = std::lround(ratio);
  if (k < 1 || std::abs(ratio - static_cast<double>(k)) > 1e-9)
    throw ConfigError("resample: unsupported rate " + std::to_string(corpus.hz) + " Hz -> " +
                      std::to_string(to_hz) + " Hz (ratio must be an integer)");
  Corpus out;
  out.hz = to_hz;
  out.vehicles.reserve(corpus.vehicles.size());
  for (const auto& recs : corpus.vehicles) {
    std::vector<TrajectoryRecord> kept;
    for (const TrajectoryRecord& r : recs) {
      if (r.frame % k != 0) continue;
      TrajectoryRecord nr = r;
      nr.frame = r.frame / k;
      kept.push_back(nr);
    }
    if (!kept.empty()) out.vehicles.push_back(std::move(kept));
  }
  return out;
}

namespace {

struct VehicleIndex {
  const std::vector<TrajectoryRecord>* recs;
  std::unordered_map<long, std::size_t> frame_to_pos;
};

/// Position index of `frame` if the vehicle covers [frame, frame + span)
/// contiguously, else nullopt.
std::optional<std::size_t> covers(const VehicleIndex& v, long frame, int span) {
  auto it = v.frame_to_pos.find(frame);
  if (it == v.frame_to_pos.end()) return std::nullopt;
  const std::size_t pos = it->second;
  if (pos + static_cast<std::size_t>(span) > v.recs->size()) return std::nullopt;
  if ((*v.recs)[pos + static_cast<std::size_t>(span) - 1].frame != frame + span - 1)
    return std::nullopt;
  return pos;
}

Track slice_track(const std::vector<TrajectoryRecord>& recs, std::size_t pos, int n) {
  Track t;
  t.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const TrajectoryRecord& r = recs[pos + static_cast<std::size_t>(i)];
    t.emplace_back(r.x, r.y);
  }
  return t;
}

}  // namespace

int relative_slot_label(const Point& target_start, const Point& vehicle_start) {
  constexpr double kLaneWidth = 4.0;
  constexpr double kLongitudinalGap = 2.0;
  const double dy = vehicle_start.y() - target_start.y();
  const double dx = vehicle_start.x() - target_start.x();
  int lane = static_cast<int>(std::lround(dy / kLaneWidth));
  lane = std::clamp(lane, -1, 1);
  int lon = 0;
  if (dx > kLongitudinalGap) lon = 1;
  else if (dx < -kLongitudinalGap) lon = -1;
  return 3 * lane + lon;
}

int label_to_index(int label) {
  if (label < -4 || label > 4) throw ValidationError("position label out of range: " + std::to_string(label));
  return label + 4;
}

int index_to_label(int index) {
  if (index < 0 || index >= kLabelAlphabetSize)
    throw ValidationError("label index out of range: " + std::to_string(index));
  return index - 4;
}

std::vector<PredictionScene> extract_scenes(const Corpus& corpus, const SceneConfig& cfg,
                                            const SceneFilter& filter) {
  cfg.validate();
  const int t_h = cfg.t_h;
  const int t_f = cfg.t_f;
  const int t = cfg.total_steps();

  std::vector<VehicleIndex> index(corpus.vehicles.size());
  for (std::size_t v = 0; v < corpus.vehicles.size(); ++v) {
    index[v].recs = &corpus.vehicles[v];
    for (std::size_t i = 0; i < corpus.vehicles[v].size(); ++i)
      index[v].frame_to_pos.emplace(corpus.vehicles[v][i].frame, i);
  }

  std::vector<PredictionScene> scenes;
  for (std::size_t tv = 0; tv < corpus.vehicles.size(); ++tv) {
    const auto& target_recs = corpus.vehicles[tv];
    for (std::size_t p = 0; p < target_recs.size(); ++p) {
      const long anchor = target_recs[p].frame;
      const long window_start = anchor - t_h + 1;
      auto target_pos = covers(index[tv], window_start, t);
      if (!target_pos) continue;

      const Point target_at_anchor(target_recs[p].x, target_recs[p].y);

      struct Candidate {
        std::size_t vehicle;
        std::size_t hist_pos;
        double dist;
        long vid;
      };
      std::vector<Candidate> candidates;
      for (std::size_t ov = 0; ov < corpus.vehicles.size(); ++ov) {
        if (ov == tv) continue;
        auto hist_pos = covers(index[ov], window_start, t_h);
        if (!hist_pos) continue;
        const TrajectoryRecord& at_anchor =
            corpus.vehicles[ov][*hist_pos + static_cast<std::size_t>(t_h) - 1];
        const double dx = at_anchor.x - target_at_anchor.x();
        const double dy = at_anchor.y - target_at_anchor.y();
        candidates.push_back(Candidate{ov, *hist_pos, std::sqrt(dx * dx + dy * dy),
                                       corpus.vehicles[ov].front().vehicle_id});
      }
      if (candidates.empty()) continue;
      std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.vid < b.vid;
      });
      if (static_cast<int>(candidates.size()) > cfg.n_v - 1)
        candidates.resize(static_cast<std::size_t>(cfg.n_v - 1));

      const int total_vehicles = 1 + static_cast<int>(candidates.size());
      if (total_vehicles < filter.min_vehicles) continue;
      if (filter.max_vehicles > 0 && total_vehicles > filter.max_vehicles) continue;

      PredictionScene scene;
      scene.target_history = slice_track(target_recs, *target_pos, t_h);
      scene.target_future =
          slice_track(target_recs, *target_pos + static_cast<std::size_t>(t_h), t_f);
      const Point target_start = scene.target_history.front();
      scene.position_labels.push_back(0);
      bool all_full = true;
      std::vector<Track> fulls;
      for (const Candidate& c : candidates) {
        const auto& recs = corpus.vehicles[c.vehicle];
        scene.neighbor_histories.push_back(slice_track(recs, c.hist_pos, t_h));
        scene.position_labels.push_back(
            relative_slot_label(target_start, scene.neighbor_histories.back().front()));
        auto full_pos = covers(index[c.vehicle], window_start, t);
        if (full_pos) {
          fulls.push_back(slice_track(recs, *full_pos, t));
        } else {
          all_full = false;
        }
      }
      if (all_full) scene.neighbor_full = std::move(fulls);
      scenes.push_back(std::move(scene));
    }
  }
  return scenes;
}

namespace {

void apply_transform(Track& t, double ox, double oy, double inv_scale) {
  for (Point& p : t) {
    p.x() = (p.x() - ox) * inv_scale;
    p.y() = (p.y() - oy) * inv_scale;
  }
}

double track_max_abs(const Track& t) {
  double m = 0.0;
  for (const Point& p : t) m = std::max({m, std::abs(p.x()), std::abs(p.y())});
  return m;
}

}  // namespace

PredictionScene normalize_scene(const PredictionScene& scene) {
  if (scene.target_history.empty()) throw ValidationError("normalize_scene: empty scene");
  PredictionScene out = scene;
  const Point anchor = scene.target_history.back();

  auto shift = [&](Track& t) {
    for (Point& p : t) p -= anchor;
  };
  shift(out.target_history);
  shift(out.target_future);
  for (Track& t : out.neighbor_histories) shift(t);
  for (Track& t : out.neighbor_full) shift(t);

  double scale = std::max(track_max_abs(out.target_history), track_max_abs(out.target_future));
  for (const Track& t : out.neighbor_histories) scale = std::max(scale, track_max_abs(t));
  for (const Track& t : out.neighbor_full) scale = std::max(scale, track_max_abs(t));
  if (scale == 0.0) throw ValidationError("normalize_scene: degenerate scene, all zero after centering");

  const double inv = 1.0 / scale;
  auto rescale = [&](Track& t) {
    for (Point& p : t) p *= inv;
  };
  rescale(out.target_history);
  rescale(out.target_future);
  for (Track& t : out.neighbor_histories) rescale(t);
  for (Track& t : out.neighbor_full) rescale(t);

  NormTransform nt;
  if (scene.norm) {
    // compose with the existing transform: meters -> old working -> new working
    nt.offset_x = scene.norm->offset_x + anchor.x() * scene.norm->scale;
    nt.offset_y = scene.norm->offset_y + anchor.y() * scene.norm->scale;
    nt.scale = scene.norm->scale * scale;
  } else {
    nt.offset_x = anchor.x();
    nt.offset_y = anchor.y();
    nt.scale = scale;
  }
  out.norm = nt;
  return out;
}

PredictionScene denormalize_scene(const PredictionScene& scene) {
  if (!scene.norm) throw ValidationError("denormalize_scene: scene has no transform");
  PredictionScene out = scene;
  const NormTransform nt = *scene.norm;
  auto restore = [&](Track& t) {
    for (Point& p : t) {
      p.x() = p.x() * nt.scale + nt.offset_x;
      p.y() = p.y() * nt.scale + nt.offset_y;
    }
  };
  restore(out.target_history);
  restore(out.target_future);
  for (Track& t : out.neighbor_histories) restore(t);
  for (Track& t : out.neighbor_full) restore(t);
  out.norm.reset();
  return out;
}

namespace {

json track_to_json(const Track& t) {
  json arr = json::array();
  for (const Point& p : t) arr.push_back(json::array({p.x(), p.y()}));
  return arr;
}

Track track_from_json(const json& arr) {
  Track t;
  t.reserve(arr.size());
  for (const auto& p : arr) t.emplace_back(p[0].get<double>(), p[1].get<double>());
  return t;
}

json scene_cfg_to_json(const SceneConfig& cfg) {
  json j;
  j["t_h"] = cfg.t_h;
  j["t_f"] = cfg.t_f;
  j["step_seconds"] = cfg.step_seconds;
  j["n_v"] = cfg.n_v;
  j["decay_lambda"] = cfg.decay_lambda;
  j["eig_k"] = cfg.eig_k;
  return j;
}

SceneConfig scene_cfg_from_json(const json& j) {
  SceneConfig cfg;
  cfg.t_h = j.value("t_h", cfg.t_h);
  cfg.t_f = j.value("t_f", cfg.t_f);
  cfg.step_seconds = j.value("step_seconds", cfg.step_seconds);
  cfg.n_v = j.value("n_v", cfg.n_v);
  cfg.decay_lambda = j.value("decay_lambda", cfg.decay_lambda);
  cfg.eig_k = j.value("eig_k", cfg.eig_k);
  return cfg;
}

}  // namespace

void write_scene_archive(const std::string& path, const std::vector<PredictionScene>& scenes,
                         const SceneConfig& cfg, const std::string& provenance) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write scene archive: " + path);
  json header;
  header["format"] = "grtp-scenes";
  header["version"] = 1;
  header["config"] = scene_cfg_to_json(cfg);
  header["provenance"] = provenance;
  header["count"] = scenes.size();
  out << header.dump() << "\n";
  for (const PredictionScene& s : scenes) {
    json line;
    line["h"] = track_to_json(s.target_history);
    line["f"] = track_to_json(s.target_future);
    json nh = json::array();
    for (const Track& t : s.neighbor_histories) nh.push_back(track_to_json(t));
    line["nh"] = std::move(nh);
    if (!s.neighbor_full.empty()) {
      json nf = json::array();
      for (const Track& t : s.neighbor_full) nf.push_back(track_to_json(t));
      line["nf"] = std::move(nf);
    } else {
      line["nf"] = nullptr;
    }
    line["labels"] = s.position_labels;
    if (s.norm) {
      line["norm"] = json::array({s.norm->offset_x, s.norm->offset_y, s.norm->scale});
    } else {
      line["norm"] = nullptr;
    }
    line["synthetic"] = s.synthetic;
    out << line.dump() << "\n";
  }
}

SceneArchive read_scene_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read scene archive: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty archive");
  SceneArchive archive;
  json header;
  try {
    header = json::parse(line);
  } catch (const std::exception& e) {
    throw ParseError(path + ": bad header: " + e.what());
  }
  if (header.value("format", "") != "grtp-scenes")
    throw ParseError(path + ": not a grtp-scenes archive");
  if (header.value("version", 0) != 1) throw ParseError(path + ": unsupported archive version");
  archive.cfg = scene_cfg_from_json(header["config"]);
  archive.provenance = header.value("provenance", "");
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw ParseError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    PredictionScene s;
    s.target_history = track_from_json(j["h"]);
    s.target_future = track_from_json(j["f"]);
    for (const auto& t : j["nh"]) s.neighbor_histories.push_back(track_from_json(t));
    if (!j["nf"].is_null())
      for (const auto& t : j["nf"]) s.neighbor_full.push_back(track_from_json(t));
    s.position_labels = j["labels"].get<std::vector<int>>();
    if (!j["norm"].is_null()) {
      NormTransform nt;
      nt.offset_x = j["norm"][0].get<double>();
      nt.offset_y = j["norm"][1].get<double>();
      nt.scale = j["norm"][2].get<double>();
      s.norm = nt;
    }
    s.synthetic = j.value("synthetic", false);
    s.provenance = archive.provenance;
    archive.scenes.push_back(std::move(s));
  }
  return archive;
}

}  // namespace grtp
