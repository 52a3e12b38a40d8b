#pragma once

#include <string>
#include <vector>

#include "grtp/nn/adam.hpp"
#include "grtp/nn/layers.hpp"
#include "grtp/traj_data.hpp"

namespace grtp {

struct PredictorConfig {
  int t_h = 16;
  int t_f = 25;
  int step_embed = 64;   // per-step history embedding
  int enc_hidden = 128;  // history LSTM
  int nei_embed = 64;    // relative-difference encoder
  int fuse = 128;        // fused code; doubles as the decoder hidden size
  double learning_rate = 1e-3;
  int batch = 64;
  int steps = 2000;
  double val_fraction = 0.1;
  int log_every = 100;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Encoder-decoder task model: target history through a step embedding and an
/// LSTM, target-minus-neighbor history differences sum-pooled through an
/// encoder, the two branches fused into the decoder LSTM's initial hidden
/// state. The decoder feeds its own previous output back as input and a
/// linear head emits (x, y) per future step.
struct PredictorModel {
  PredictorConfig cfg;
  nn::ModelParams params;
};

PredictorModel make_predictor(const PredictorConfig& cfg);

/// Predicted future in the scene's working coordinates, t_f points.
/// Requires a normalized scene with at least one neighbor. Neighbors pool in
/// canonical order, so the prediction is invariant to their storage order.
Track predict(const PredictorModel& model, const PredictionScene& scene);

struct PredictorTrainLog {
  std::vector<double> losses;                      // per step (normalized MSE)
  std::vector<std::pair<int, double>> val_rmse;    // (step, per-coordinate RMSE, working units)
};

struct PredictorTrainResult {
  PredictorModel model;
  PredictorTrainLog log;
};

/// Minimizes the per-step mean squared error in working coordinates with Adam.
/// warm_start continues from an existing model instead of a fresh init.
PredictorTrainResult train_predictor(const std::vector<PredictionScene>& scenes,
                                     PredictorConfig cfg,
                                     const PredictorModel* warm_start = nullptr);

struct EvalReport {
  std::vector<double> rmse_per_step;               // meters, length t_f
  std::vector<std::pair<double, double>> horizons; // (seconds, rmse in meters)
  int batch_size = 0;                              // scene count
  std::string task_id;
  std::string model_id;
};

/// Root-mean-square Euclidean error per future step over the scene set,
/// denormalized to meters through each scene's stored transform before
/// scoring. Horizon rows are reported at whole seconds.
EvalReport evaluate_rmse(const PredictorModel& model, const std::vector<PredictionScene>& scenes,
                         const SceneConfig& cfg, const std::string& task_id = "",
                         const std::string& model_id = "");

std::string eval_report_json(const EvalReport& report, const std::string& run_config_json);
/// Rows are horizons (seconds); one column per report, labeled by task/model.
std::string eval_reports_csv(const std::vector<EvalReport>& reports);

/// Graph builder, exposed for gradient checks: target_hist has t_h entries of
/// (2 x B); neighbor_hist one entry per neighbor. Returns t_f outputs (2 x B).
std::vector<nn::Var> predictor_graph(nn::Tape& tape, const nn::ParamVars& vars,
                                     const PredictorConfig& cfg,
                                     const std::vector<nn::Var>& target_hist,
                                     const std::vector<std::vector<nn::Var>>& neighbor_hist);

}  // namespace grtp
