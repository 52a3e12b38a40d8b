#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "grtp/synthetic.hpp"
#include "grtp/traj_data.hpp"

using namespace grtp;
namespace fs = std::filesystem;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = (fs::temp_directory_path() / name).string();
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

PredictionScene random_scene(Rng& rng, int t_h, int t_f, int neighbors) {
  PredictionScene s;
  const double x0 = rng.uniform(-200.0, 200.0), y0 = rng.uniform(-50.0, 50.0);
  for (int k = 0; k < t_h; ++k) s.target_history.emplace_back(x0 + k + rng.normal(), y0 + rng.normal());
  for (int k = 0; k < t_f; ++k) s.target_future.emplace_back(x0 + t_h + k + rng.normal(), y0 + rng.normal());
  s.position_labels.push_back(0);
  for (int n = 0; n < neighbors; ++n) {
    Track t;
    const double nx = x0 + rng.uniform(-20.0, 20.0), ny = y0 + rng.uniform(-8.0, 8.0);
    for (int k = 0; k < t_h; ++k) t.emplace_back(nx + k + rng.normal(), ny + rng.normal());
    s.neighbor_histories.push_back(std::move(t));
    s.position_labels.push_back(relative_slot_label(s.target_history.front(),
                                                    s.neighbor_histories.back().front()));
  }
  return s;
}

}  // namespace

TEST_SUITE("traj_data") {

TEST_CASE("loading a 4-row file yields 4 records in 2 vehicle groups") {
  const std::string path = write_temp("grtp_corpus_ok.csv",
                                      "vehicle_id,frame,x,y\n"
                                      "1,0,0.0,0.0\n"
                                      "1,1,1.0,0.0\n"
                                      "2,0,5.0,4.0\n"
                                      "2,1,6.0,4.0\n");
  Corpus corpus = load_corpus(path, 10.0);
  CHECK(corpus.vehicles.size() == 2);
  std::size_t total = 0;
  for (const auto& v : corpus.vehicles) total += v.size();
  CHECK(total == 4);
  CHECK(corpus.hz == 10.0);
  fs::remove(path);
}

TEST_CASE("duplicated (vehicle, frame) pair is a validation error naming the vehicle") {
  const std::string path = write_temp("grtp_corpus_dup.csv",
                                      "vehicle_id,frame,x,y\n"
                                      "7,3,0.0,0.0\n"
                                      "7,3,1.0,0.0\n");
  CHECK_THROWS_WITH_AS(load_corpus(path, 10.0), doctest::Contains("vehicle 7"), ValidationError);
  fs::remove(path);
}

TEST_CASE("malformed row is a parse error carrying the line number") {
  const std::string path = write_temp("grtp_corpus_bad.csv",
                                      "vehicle_id,frame,x,y\n"
                                      "1,0,0.0,0.0\n"
                                      "1,oops,1.0,0.0\n");
  CHECK_THROWS_WITH_AS(load_corpus(path, 10.0), doctest::Contains("line 3"), ParseError);
  fs::remove(path);
}

TEST_CASE("synthetic grid corpus: 50 vehicles x 200 frames at 10 Hz is 10000 records") {
  Corpus corpus = make_grid_corpus(50, 200, 10.0, 42);
  std::size_t total = 0;
  for (const auto& v : corpus.vehicles) total += v.size();
  CHECK(total == 10000);
  CHECK(corpus.vehicles.size() == 50);

  // and it survives a round trip through the interchange format
  const std::string path = (fs::temp_directory_path() / "grtp_grid.csv").string();
  write_corpus_csv(path, corpus);
  Corpus reloaded = load_corpus(path, 10.0);
  std::size_t total2 = 0;
  for (const auto& v : reloaded.vehicles) total2 += v.size();
  CHECK(total2 == 10000);
  fs::remove(path);
}

TEST_CASE("resample 10 Hz -> 5 Hz keeps every other frame") {
  Corpus corpus = make_grid_corpus(3, 10, 10.0, 1);
  Corpus out = resample(corpus, 5.0);
  CHECK(out.hz == 5.0);
  for (const auto& v : out.vehicles) {
    CHECK(v.size() == 5);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i].frame == static_cast<long>(i));
  }
  // the kept samples are the even-frame originals
  CHECK(out.vehicles[0][1].x == corpus.vehicles[0][2].x);
}

TEST_CASE("resample 25 Hz -> 5 Hz keeps every fifth frame") {
  Corpus corpus = make_grid_corpus(2, 25, 25.0, 2);
  Corpus out = resample(corpus, 5.0);
  for (const auto& v : out.vehicles) CHECK(v.size() == 5);
}

TEST_CASE("resample with a non-integer ratio is an unsupported-rate error") {
  Corpus corpus = make_grid_corpus(1, 10, 10.0, 3);
  CHECK_THROWS_AS(resample(corpus, 4.0), ConfigError);
}

TEST_CASE("resampling to the same rate is the identity (idempotence)") {
  Corpus corpus = make_grid_corpus(4, 40, 10.0, 4);
  Corpus once = resample(corpus, 5.0);
  Corpus twice = resample(once, 5.0);
  REQUIRE(once.vehicles.size() == twice.vehicles.size());
  for (std::size_t v = 0; v < once.vehicles.size(); ++v) {
    REQUIRE(once.vehicles[v].size() == twice.vehicles[v].size());
    for (std::size_t i = 0; i < once.vehicles[v].size(); ++i) {
      CHECK(once.vehicles[v][i].frame == twice.vehicles[v][i].frame);
      CHECK(once.vehicles[v][i].x == twice.vehicles[v][i].x);
    }
  }
}

TEST_CASE("a lone vehicle with full coverage produces no scenes") {
  SceneConfig cfg;  // t_h 16, t_f 25
  Corpus corpus = make_grid_corpus(1, 41, 5.0, 5);
  CHECK(extract_scenes(corpus, cfg).empty());
}

TEST_CASE("two parallel vehicles over exactly t_h + t_f frames give two scenes") {
  SceneConfig cfg;
  Corpus corpus;
  corpus.hz = 5.0;
  std::vector<TrajectoryRecord> a, b;
  for (int f = 0; f < 41; ++f) {
    a.push_back({1, f, 2.0 * f, 0.0});
    b.push_back({2, f, 2.0 * f + 8.0, 4.0});
  }
  corpus.vehicles = {a, b};
  std::vector<PredictionScene> scenes = extract_scenes(corpus, cfg);
  REQUIRE(scenes.size() == 2);
  for (const PredictionScene& s : scenes) {
    CHECK(s.target_history.size() == 16);
    CHECK(s.target_future.size() == 25);
    CHECK(s.neighbor_histories.size() == 1);
    CHECK(s.gan_ready());
    CHECK(s.target_history.size() + s.target_future.size() == 41);  // 8 s at 5 Hz
  }
  // determinism of the extraction count
  CHECK(extract_scenes(corpus, cfg).size() == 2);
}

TEST_CASE("neighbor selection keeps the n_v - 1 closest, ties to the smaller id") {
  SceneConfig cfg;
  cfg.t_h = 2;
  cfg.t_f = 1;
  cfg.n_v = 2;  // one neighbor slot
  cfg.eig_k = 1;
  Corpus corpus;
  corpus.hz = 5.0;
  std::vector<TrajectoryRecord> target, near_small, near_big, far;
  for (int f = 0; f < 3; ++f) {
    target.push_back({10, f, 0.0, 0.0});
    near_small.push_back({3, f, 3.0, 0.0});
    near_big.push_back({5, f, -3.0, 0.0});  // same distance as id 3
    far.push_back({4, f, 50.0, 0.0});
  }
  corpus.vehicles = {near_small, far, near_big, target};
  std::vector<PredictionScene> scenes = extract_scenes(corpus, cfg);
  bool found = false;
  for (const PredictionScene& s : scenes) {
    if (s.target_history.front().x() == 0.0 && s.target_history.front().y() == 0.0) {
      found = true;
      REQUIRE(s.neighbor_histories.size() == 1);
      CHECK(s.neighbor_histories.front().front().x() == 3.0);  // id 3 beats id 5
    }
  }
  CHECK(found);
}

TEST_CASE("normalize: already centered, max-norm-1 scene is a fixed point") {
  PredictionScene s;
  s.target_history = {{-0.5, 0.0}, {0.0, 0.0}};
  s.target_future = {{0.25, 0.1}};
  s.neighbor_histories = {{{1.0, 0.3}, {1.0, 0.3}}};
  s.position_labels = {0, 1};
  PredictionScene n = normalize_scene(s);
  CHECK(n.norm->scale == 1.0);
  CHECK(n.norm->offset_x == 0.0);
  CHECK(n.norm->offset_y == 0.0);
  CHECK(n.target_history[0].x() == -0.5);
  CHECK(n.neighbor_histories[0][0].x() == 1.0);
}

TEST_CASE("normalize maps the target position at step t_h to the origin") {
  Rng rng(17);
  PredictionScene s = random_scene(rng, 8, 4, 2);
  s.target_history.back() = Point(100.0, 50.0);
  PredictionScene n = normalize_scene(s);
  CHECK(n.target_history.back().x() == 0.0);
  CHECK(n.target_history.back().y() == 0.0);
  CHECK(n.norm->offset_x == 100.0);
  CHECK(n.norm->offset_y == 50.0);
}

TEST_CASE("normalize/denormalize round-trips 100 random scenes within 1e-9 m") {
  Rng rng(23);
  for (int i = 0; i < 100; ++i) {
    PredictionScene s = random_scene(rng, 10, 5, 1 + static_cast<int>(rng.uniform_int(3)));
    PredictionScene n = normalize_scene(s);

    // the normalized infinity norm over all vehicles is exactly 1
    double max_abs = 0.0;
    auto scan = [&](const Track& t) {
      for (const Point& p : t) max_abs = std::max({max_abs, std::abs(p.x()), std::abs(p.y())});
    };
    scan(n.target_history);
    scan(n.target_future);
    for (const Track& t : n.neighbor_histories) scan(t);
    CHECK(std::abs(max_abs - 1.0) < 1e-12);

    PredictionScene back = denormalize_scene(n);
    double err = 0.0;
    for (std::size_t k = 0; k < s.target_history.size(); ++k)
      err = std::max(err, (back.target_history[k] - s.target_history[k]).cwiseAbs().maxCoeff());
    for (std::size_t k = 0; k < s.target_future.size(); ++k)
      err = std::max(err, (back.target_future[k] - s.target_future[k]).cwiseAbs().maxCoeff());
    for (std::size_t j = 0; j < s.neighbor_histories.size(); ++j)
      for (std::size_t k = 0; k < s.neighbor_histories[j].size(); ++k)
        err = std::max(err,
                       (back.neighbor_histories[j][k] - s.neighbor_histories[j][k]).cwiseAbs().maxCoeff());
    CHECK(err < 1e-9);
  }
}

TEST_CASE("normalizing an all-zero scene after centering is a degenerate-scene error") {
  PredictionScene s;
  s.target_history = {{3.0, 4.0}, {3.0, 4.0}};
  s.target_future = {{3.0, 4.0}};
  s.neighbor_histories = {{{3.0, 4.0}, {3.0, 4.0}}};
  s.position_labels = {0, 0};
  CHECK_THROWS_AS(normalize_scene(s), ValidationError);
}

TEST_CASE("scene archives round-trip bit-exactly and are byte-stable across writes") {
  Rng rng(29);
  SceneConfig cfg;
  cfg.t_h = 6;
  cfg.t_f = 3;
  std::vector<PredictionScene> scenes;
  for (int i = 0; i < 20; ++i) scenes.push_back(random_scene(rng, 6, 3, 2));
  scenes[3] = normalize_scene(scenes[3]);

  const std::string p1 = (fs::temp_directory_path() / "grtp_arch1.jsonl").string();
  const std::string p2 = (fs::temp_directory_path() / "grtp_arch2.jsonl").string();
  write_scene_archive(p1, scenes, cfg, "unit-test");
  SceneArchive loaded = read_scene_archive(p1);
  REQUIRE(loaded.scenes.size() == scenes.size());
  CHECK(loaded.cfg.t_h == 6);
  CHECK(loaded.provenance == "unit-test");
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (std::size_t k = 0; k < scenes[i].target_history.size(); ++k) {
      CHECK(loaded.scenes[i].target_history[k].x() == scenes[i].target_history[k].x());
      CHECK(loaded.scenes[i].target_history[k].y() == scenes[i].target_history[k].y());
    }
    CHECK(loaded.scenes[i].position_labels == scenes[i].position_labels);
    CHECK(loaded.scenes[i].normalized() == scenes[i].normalized());
  }
  write_scene_archive(p2, loaded.scenes, loaded.cfg, loaded.provenance);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("relative slot labels cover the 9-slot grid with the target at 0") {
  const Point target(0.0, 0.0);
  CHECK(relative_slot_label(target, target) == 0);
  CHECK(relative_slot_label(target, {10.0, 4.0}) == 4);    // ahead, left lane
  CHECK(relative_slot_label(target, {-10.0, -4.0}) == -4); // behind, right lane
  CHECK(relative_slot_label(target, {10.0, 0.0}) == 1);    // ahead, same lane
  CHECK(relative_slot_label(target, {-10.0, 0.0}) == -1);
  CHECK(relative_slot_label(target, {0.0, 4.0}) == 3);     // beside, left lane
  CHECK(relative_slot_label(target, {0.0, -40.0}) == -3);  // clamped to one lane
  CHECK(label_to_index(-4) == 0);
  CHECK(index_to_label(8) == 4);
}

TEST_CASE("chain corpora: lane-keep and lane-change tasks have disjoint label sets") {
  SceneConfig cfg;
  cfg.t_h = 8;
  cfg.t_f = 10;
  cfg.n_v = 2;
  cfg.eig_k = 1;
  ChainCorpusParams params;
  params.n_pairs = 40;
  params.record_steps = cfg.total_steps();
  params.hz = 5.0;
  auto labels_of = [&](ChainTask task) {
    Corpus corpus = make_chain_corpus(task, params, 7);
    std::vector<PredictionScene> scenes = extract_scenes(corpus, cfg);
    REQUIRE(scenes.size() == 2 * static_cast<std::size_t>(params.n_pairs));
    std::set<int> labels;
    for (const PredictionScene& s : scenes)
      for (std::size_t i = 1; i < s.position_labels.size(); ++i) labels.insert(s.position_labels[i]);
    return labels;
  };
  std::set<int> keep = labels_of(ChainTask::LaneKeep);
  std::set<int> change = labels_of(ChainTask::LaneChange);
  for (int l : keep) CHECK(change.count(l) == 0);
}

TEST_CASE("gaussian scene corpus is an exact fixed point of normalization") {
  GaussianSceneParams params;
  params.n_scenes = 50;
  params.seed = 5;
  std::vector<PredictionScene> scenes = make_gaussian_scene_corpus(params);
  for (const PredictionScene& s : scenes) {
    PredictionScene n = normalize_scene(s);
    CHECK(n.norm->scale == 1.0);
    CHECK(n.norm->offset_x == 0.0);
    CHECK(n.norm->offset_y == 0.0);
    for (std::size_t k = 0; k < s.target_future.size(); ++k)
      CHECK(n.target_future[k] == s.target_future[k]);
  }
}

}  // TEST_SUITE
