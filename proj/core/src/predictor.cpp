#include "grtp/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "grtp/gan.hpp"  // canonical_neighbor_order
#include "json.hpp"

namespace grtp {

using nn::Matrix;
using nn::MlpSpec;
using nn::ParamVars;
using nn::RnnSpec;
using nn::Tape;
using nn::Var;

void PredictorConfig::validate() const {
  if (t_h < 2 || t_f < 1) throw ConfigError("predictor: t_h >= 2 and t_f >= 1 required");
  if (step_embed < 1 || enc_hidden < 1 || nei_embed < 1 || fuse < 1)
    throw ConfigError("predictor: layer widths must be positive");
  if (batch < 1 || steps < 0) throw ConfigError("predictor: invalid batch/steps");
}

namespace {

MlpSpec hist_pre_spec(const PredictorConfig& c) { return {{2, c.step_embed}, true}; }
MlpSpec fuse_hist_spec(const PredictorConfig& c) { return {{c.enc_hidden, c.fuse}, true}; }
MlpSpec nei_enc_spec(const PredictorConfig& c) { return {{2 * c.t_h, c.nei_embed}, true}; }
MlpSpec fuse_nei_spec(const PredictorConfig& c) { return {{c.nei_embed, c.fuse}, true}; }

}  // namespace

PredictorModel make_predictor(const PredictorConfig& cfg) {
  cfg.validate();
  PredictorModel model;
  model.cfg = cfg;
  Rng rng = Rng(cfg.seed).derive("predictor-init");
  init_mlp(model.params, "hist_pre", hist_pre_spec(cfg), rng);
  init_lstm(model.params, "hist_lstm", RnnSpec{cfg.step_embed, cfg.enc_hidden}, rng);
  init_mlp(model.params, "fuse_hist", fuse_hist_spec(cfg), rng);
  init_mlp(model.params, "nei_enc", nei_enc_spec(cfg), rng);
  init_mlp(model.params, "fuse_nei", fuse_nei_spec(cfg), rng);
  init_lstm(model.params, "dec_lstm", RnnSpec{2, cfg.fuse}, rng);
  nn::init_dense(model.params, "head", cfg.fuse, 2, rng);
  return model;
}

std::vector<Var> predictor_graph(Tape& tape, const ParamVars& vars, const PredictorConfig& cfg,
                                 const std::vector<Var>& target_hist,
                                 const std::vector<std::vector<Var>>& neighbor_hist) {
  if (neighbor_hist.empty()) throw ValidationError("predictor: scene has zero neighbors");
  if (static_cast<int>(target_hist.size()) != cfg.t_h)
    throw DimensionError("predictor: history length mismatch");
  const Eigen::Index B = tape.value(target_hist.front()).cols();

  // history branch
  std::vector<Var> embedded;
  embedded.reserve(target_hist.size());
  for (Var x : target_hist) embedded.push_back(mlp_forward(tape, vars, "hist_pre", hist_pre_spec(cfg), x));
  nn::LstmState enc{nn::zeros(tape, cfg.enc_hidden, B), nn::zeros(tape, cfg.enc_hidden, B)};
  std::vector<Var> hs = lstm_sequence(tape, vars, "hist_lstm", embedded, enc);
  Var hist_code = mlp_forward(tape, vars, "fuse_hist", fuse_hist_spec(cfg), hs.back());

  // neighbor branch: sum over target-minus-neighbor relative histories
  Var nei_sum{};
  bool first = true;
  for (const std::vector<Var>& nb : neighbor_hist) {
    if (static_cast<int>(nb.size()) != cfg.t_h)
      throw DimensionError("predictor: neighbor history length mismatch");
    std::vector<Var> rel;
    rel.reserve(nb.size());
    for (int s = 0; s < cfg.t_h; ++s)
      rel.push_back(tape.sub(target_hist[static_cast<std::size_t>(s)], nb[static_cast<std::size_t>(s)]));
    Var enc_nb = mlp_forward(tape, vars, "nei_enc", nei_enc_spec(cfg), tape.concat_rows(rel));
    nei_sum = first ? enc_nb : tape.add(nei_sum, enc_nb);
    first = false;
  }
  Var nei_code = mlp_forward(tape, vars, "fuse_nei", fuse_nei_spec(cfg), nei_sum);

  // decoder: fused code seeds the hidden state, previous output is the input
  nn::LstmState dec{tape.add(hist_code, nei_code), nn::zeros(tape, cfg.fuse, B)};
  Var input = target_hist.back();  // the origin in normalized scenes
  std::vector<Var> outputs;
  outputs.reserve(static_cast<std::size_t>(cfg.t_f));
  for (int s = 0; s < cfg.t_f; ++s) {
    dec = lstm_step(tape, vars, "dec_lstm", input, dec);
    Var out = dense_forward(tape, vars, "head", dec.h);
    outputs.push_back(out);
    input = out;
  }
  return outputs;
}

namespace {

struct SceneBatchData {
  std::vector<Matrix> target_hist;                 // t_h of (2 x B)
  std::vector<std::vector<Matrix>> neighbor_hist;  // [neighbor][t_h]
  Matrix future;                                   // (2 t_f x B)
};

SceneBatchData assemble(const std::vector<const PredictionScene*>& scenes, int t_h, int t_f) {
  const int B = static_cast<int>(scenes.size());
  const int n_nb = static_cast<int>(scenes.front()->neighbor_histories.size());
  SceneBatchData out;
  std::vector<std::vector<std::size_t>> orders;
  orders.reserve(scenes.size());
  for (const PredictionScene* s : scenes) orders.push_back(canonical_neighbor_order(*s));
  for (int s = 0; s < t_h; ++s) {
    Matrix step(2, B);
    for (int b = 0; b < B; ++b) {
      const Point& p = scenes[static_cast<std::size_t>(b)]->target_history[static_cast<std::size_t>(s)];
      step(0, b) = p.x();
      step(1, b) = p.y();
    }
    out.target_hist.push_back(std::move(step));
  }
  out.neighbor_hist.resize(static_cast<std::size_t>(n_nb));
  for (int k = 0; k < n_nb; ++k)
    for (int s = 0; s < t_h; ++s) {
      Matrix step(2, B);
      for (int b = 0; b < B; ++b) {
        const PredictionScene& sc = *scenes[static_cast<std::size_t>(b)];
        const Point& p =
            sc.neighbor_histories[orders[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)]]
                                 [static_cast<std::size_t>(s)];
        step(0, b) = p.x();
        step(1, b) = p.y();
      }
      out.neighbor_hist[static_cast<std::size_t>(k)].push_back(std::move(step));
    }
  out.future.resize(2 * t_f, B);
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < t_f; ++s) {
      const Point& p = scenes[static_cast<std::size_t>(b)]->target_future[static_cast<std::size_t>(s)];
      out.future(2 * s, b) = p.x();
      out.future(2 * s + 1, b) = p.y();
    }
  return out;
}

/// Batched forward; returns (2 t_f x B) predictions in working coordinates.
Matrix predict_batch(const PredictorModel& model, const std::vector<const PredictionScene*>& scenes) {
  const PredictorConfig& cfg = model.cfg;
  SceneBatchData data = assemble(scenes, cfg.t_h, cfg.t_f);
  Tape tape;
  ParamVars vars = lift(tape, model.params, false);
  std::vector<Var> hist;
  for (const Matrix& m : data.target_hist) hist.push_back(tape.constant(m));
  std::vector<std::vector<Var>> nbs(data.neighbor_hist.size());
  for (std::size_t k = 0; k < data.neighbor_hist.size(); ++k)
    for (const Matrix& m : data.neighbor_hist[k]) nbs[k].push_back(tape.constant(m));
  std::vector<Var> outs = predictor_graph(tape, vars, cfg, hist, nbs);
  Matrix result(2 * cfg.t_f, static_cast<Eigen::Index>(scenes.size()));
  for (int s = 0; s < cfg.t_f; ++s) result.middleRows(2 * s, 2) = tape.value(outs[static_cast<std::size_t>(s)]);
  return result;
}

void check_scene_for_model(const PredictorModel& model, const PredictionScene& scene) {
  if (!scene.normalized()) throw ValidationError("predict: scene must be normalized");
  if (scene.neighbor_histories.empty()) throw ValidationError("predict: scene has zero neighbors");
  if (static_cast<int>(scene.target_history.size()) != model.cfg.t_h)
    throw DimensionError("predict: scene history does not match the model's grid");
}

}  // namespace

Track predict(const PredictorModel& model, const PredictionScene& scene) {
  check_scene_for_model(model, scene);
  Matrix out = predict_batch(model, {&scene});
  Track track;
  track.reserve(static_cast<std::size_t>(model.cfg.t_f));
  for (int s = 0; s < model.cfg.t_f; ++s) track.emplace_back(out(2 * s, 0), out(2 * s + 1, 0));
  return track;
}

PredictorTrainResult train_predictor(const std::vector<PredictionScene>& scenes, PredictorConfig cfg,
                                     const PredictorModel* warm_start) {
  cfg.validate();
  std::vector<const PredictionScene*> usable;
  for (const PredictionScene& s : scenes) {
    if (!s.normalized() || s.neighbor_histories.empty()) continue;
    if (static_cast<int>(s.target_history.size()) != cfg.t_h ||
        static_cast<int>(s.target_future.size()) != cfg.t_f)
      continue;
    usable.push_back(&s);
  }
  if (usable.empty()) throw ValidationError("train_predictor: no usable scenes");

  PredictorTrainResult result;
  if (warm_start) {
    result.model = *warm_start;
    result.model.cfg = cfg;
  } else {
    result.model = make_predictor(cfg);
  }

  Rng rng = Rng(cfg.seed).derive("predictor-train");
  for (std::size_t i = usable.size(); i > 1; --i)
    std::swap(usable[i - 1], usable[rng.uniform_int(i)]);
  std::size_t n_val = static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(usable.size()));
  n_val = std::min(n_val, usable.size() - 1);
  std::vector<const PredictionScene*> val(usable.end() - static_cast<long>(n_val), usable.end());
  usable.resize(usable.size() - n_val);

  // group by neighbor count so batches share a layout
  std::map<int, std::vector<const PredictionScene*>> groups;
  for (const PredictionScene* s : usable) groups[static_cast<int>(s->neighbor_histories.size())].push_back(s);
  std::vector<std::pair<int, std::vector<const PredictionScene*>>> group_list(groups.begin(), groups.end());

  auto val_rmse = [&]() {
    if (val.empty()) return 0.0;
    std::map<int, std::vector<const PredictionScene*>> vgroups;
    for (const PredictionScene* s : val) vgroups[static_cast<int>(s->neighbor_histories.size())].push_back(s);
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& [n, group] : vgroups) {
      Matrix pred = predict_batch(result.model, group);
      SceneBatchData data = assemble(group, cfg.t_h, cfg.t_f);
      acc += (pred - data.future).squaredNorm();
      count += static_cast<std::size_t>(data.future.size());
    }
    return std::sqrt(acc / static_cast<double>(count));
  };

  nn::AdamState adam = nn::AdamState::init(result.model.params, {cfg.learning_rate, 0.9, 0.999, 1e-8});
  for (int step = 0; step < cfg.steps; ++step) {
    // weighted group pick, then a bootstrap batch within the group
    std::size_t pos = rng.uniform_int(usable.size());
    std::size_t gi = 0;
    for (; gi < group_list.size(); ++gi) {
      if (pos < group_list[gi].second.size()) break;
      pos -= group_list[gi].second.size();
    }
    const auto& group = group_list[gi].second;
    std::vector<const PredictionScene*> batch;
    const int B = std::min<int>(cfg.batch, static_cast<int>(group.size()));
    batch.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) batch.push_back(group[rng.uniform_int(group.size())]);

    SceneBatchData data = assemble(batch, cfg.t_h, cfg.t_f);
    Tape tape;
    ParamVars vars = lift(tape, result.model.params, true);
    std::vector<Var> hist;
    for (const Matrix& m : data.target_hist) hist.push_back(tape.constant(m));
    std::vector<std::vector<Var>> nbs(data.neighbor_hist.size());
    for (std::size_t k = 0; k < data.neighbor_hist.size(); ++k)
      for (const Matrix& m : data.neighbor_hist[k]) nbs[k].push_back(tape.constant(m));
    std::vector<Var> outs = predictor_graph(tape, vars, cfg, hist, nbs);
    Var loss = tape.mean_all(tape.square(tape.sub(tape.concat_rows(outs), tape.constant(data.future))));
    const double loss_v = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_v))
      throw NumericError("train_predictor: loss diverged at step " + std::to_string(step));
    tape.backward(loss);
    nn::GradResult grads = collect_grads(tape, vars, result.model.params);
    nn::AdamResult res = adam_step(result.model.params, grads.grads, adam);
    if (!res.applied) throw NumericError("train_predictor: " + res.diagnostic);
    result.log.losses.push_back(loss_v);
    if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps)
      result.log.val_rmse.emplace_back(step + 1, val_rmse());
  }
  return result;
}

EvalReport evaluate_rmse(const PredictorModel& model, const std::vector<PredictionScene>& scenes,
                         const SceneConfig& cfg, const std::string& task_id,
                         const std::string& model_id) {
  if (scenes.empty()) throw ValidationError("evaluate_rmse: empty scene set");
  const int t_f = model.cfg.t_f;

  // per-scene squared errors, then a sorted sum per step so the result cannot
  // depend on scene ordering
  std::vector<std::vector<double>> sq(static_cast<std::size_t>(t_f));
  for (auto& v : sq) v.reserve(scenes.size());

  std::map<int, std::vector<std::size_t>> groups;
  std::vector<PredictionScene> normalized(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const PredictionScene& raw = scenes[i];
    if (raw.neighbor_histories.empty())
      throw ValidationError("evaluate_rmse: scene has zero neighbors");
    normalized[i] = raw.normalized() ? raw : normalize_scene(raw);
    if (!normalized[i].norm.has_value())
      throw ValidationError("evaluate_rmse: scene carries no denormalization transform");
    groups[static_cast<int>(raw.neighbor_histories.size())].push_back(i);
  }
  for (const auto& [n, idx] : groups) {
    constexpr std::size_t kMaxBatch = 512;
    for (std::size_t start = 0; start < idx.size(); start += kMaxBatch) {
      const std::size_t stop = std::min(idx.size(), start + kMaxBatch);
      std::vector<const PredictionScene*> batch;
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&normalized[idx[i]]);
      Matrix pred = predict_batch(model, batch);
      for (std::size_t i = start; i < stop; ++i) {
        const PredictionScene& s = normalized[idx[i]];
        const double scale = s.norm->scale;
        for (int step = 0; step < t_f; ++step) {
          const Eigen::Index col = static_cast<Eigen::Index>(i - start);
          const double dx = (pred(2 * step, col) - s.target_future[static_cast<std::size_t>(step)].x()) * scale;
          const double dy =
              (pred(2 * step + 1, col) - s.target_future[static_cast<std::size_t>(step)].y()) * scale;
          sq[static_cast<std::size_t>(step)].push_back(dx * dx + dy * dy);
        }
      }
    }
  }

  EvalReport report;
  report.batch_size = static_cast<int>(scenes.size());
  report.task_id = task_id;
  report.model_id = model_id;
  report.rmse_per_step.resize(static_cast<std::size_t>(t_f));
  for (int step = 0; step < t_f; ++step) {
    std::vector<double>& v = sq[static_cast<std::size_t>(step)];
    std::sort(v.begin(), v.end());
    double acc = 0.0;
    for (double e : v) acc += e;
    report.rmse_per_step[static_cast<std::size_t>(step)] =
        std::sqrt(acc / static_cast<double>(scenes.size()));
  }
  for (int h = 1;; ++h) {
    const int step_index = static_cast<int>(std::lround(static_cast<double>(h) / cfg.step_seconds)) - 1;
    if (step_index >= t_f) break;
    report.horizons.emplace_back(static_cast<double>(h),
                                 report.rmse_per_step[static_cast<std::size_t>(step_index)]);
  }
  return report;
}

std::string eval_report_json(const EvalReport& report, const std::string& run_config_json) {
  nlohmann::ordered_json doc;
  doc["format"] = "grtp-eval-report";
  doc["version"] = 1;
  doc["task"] = report.task_id;
  doc["model"] = report.model_id;
  doc["run_config"] = run_config_json.empty() ? nlohmann::ordered_json::object()
                                              : nlohmann::ordered_json::parse(run_config_json);
  doc["batch_size"] = report.batch_size;
  doc["rmse_per_step"] = report.rmse_per_step;
  nlohmann::ordered_json horizons = nlohmann::ordered_json::array();
  for (const auto& [sec, rmse] : report.horizons)
    horizons.push_back(nlohmann::ordered_json{{"seconds", sec}, {"rmse", rmse}});
  doc["horizons"] = std::move(horizons);
  return doc.dump(2) + "\n";
}

std::string eval_reports_csv(const std::vector<EvalReport>& reports) {
  if (reports.empty()) return "horizon_s\n";
  std::string out = "horizon_s";
  for (const EvalReport& r : reports) {
    out += ",";
    out += r.task_id.empty() ? "task" : r.task_id;
    if (!r.model_id.empty()) out += "/" + r.model_id;
  }
  out += "\n";
  for (std::size_t h = 0; h < reports.front().horizons.size(); ++h) {
    out += nlohmann::json(reports.front().horizons[h].first).dump();
    for (const EvalReport& r : reports)
      out += "," + (h < r.horizons.size() ? nlohmann::json(r.horizons[h].second).dump() : std::string("nan"));
    out += "\n";
  }
  return out;
}

}  // namespace grtp
