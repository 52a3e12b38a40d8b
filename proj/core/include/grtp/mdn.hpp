#pragma once

#include <optional>
#include <string>
#include <vector>

#include "grtp/nn/adam.hpp"
#include "grtp/nn/layers.hpp"
#include "grtp/spectral.hpp"

namespace grtp {

/// Isotropic Gaussian mixture over a d_Y-dimensional future, as one condition's
/// output of the density network.
struct GmmParams {
  Eigen::VectorXd weights;  // m, sums to 1
  Eigen::MatrixXd means;    // m x d_Y
  Eigen::VectorXd stds;     // m, strictly positive

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(means.cols()); }
  bool valid(double tol = 1e-9) const;
};

struct MdnConfig {
  int m = 20;                           // mixture components
  std::vector<int> trunk_hidden{64, 64};
  int d_x = 0;
  int d_y = 0;
  double learning_rate = 4e-4;
  int batch = 4096;
  int steps = 2000;
  double val_fraction = 0.1;
  double sigma_floor = 1e-3;            // working units
  std::uint64_t seed = 1;
};

struct MdnModel {
  MdnConfig cfg;
  nn::ModelParams params;

  nn::MlpSpec trunk_spec() const;
};

MdnModel make_mdn(const MdnConfig& cfg);

/// Head mapping: mixture weights through softmax, standard deviations through
/// softplus with a floor, means unconstrained.
GmmParams mdn_forward(const MdnModel& model, const Eigen::VectorXd& x);
std::vector<GmmParams> mdn_forward_batch(const MdnModel& model, const Eigen::MatrixXd& X);

/// log p(y) for the mixture, evaluated through log-sum-exp.
double gmm_log_density(const GmmParams& g, const Eigen::VectorXd& y);

/// Draws component by weight, then an isotropic Gaussian around its mean.
Eigen::VectorXd gmm_sample(const GmmParams& g, Rng& rng);

/// Batched negative log-likelihood node for training; X is (d_x x B),
/// Y is (d_y x B).
nn::Var mdn_nll(nn::Tape& tape, const nn::ParamVars& vars, const MdnModel& model,
                const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

struct MdnTrainLogEntry {
  int step;
  double train_nll;
  double val_nll;
};

struct MdnTrainResult {
  MdnModel model;
  std::vector<MdnTrainLogEntry> log;
  double initial_val_nll = 0.0;
  double final_val_nll = 0.0;
};

/// Adam on the mixture NLL. Divergence (non-finite loss) raises NumericError
/// with the variance-floor hit count and last gradient norm in the message.
MdnTrainResult train_mdn(const std::vector<Eigen::VectorXd>& X,
                         const std::vector<Eigen::VectorXd>& Y, MdnConfig cfg);

struct KldEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  int n = 0;
};

/// Monte-Carlo KL(g1 || g2): draws from g1 and averages the log density
/// ratio. Raw estimate, may be slightly negative by sampling noise.
KldEstimate kld_mc(const GmmParams& g1, const GmmParams& g2, int n_mc, Rng& rng);

struct CkldConfig {
  int n_mc = 1000;
  int n_conditions = 2000;
  std::uint64_t rng_seed = 1;
  int threads = 1;
};

struct CkldResult {
  double mean = 0.0;
  double standard_error = 0.0;  // spread of per-condition estimates
  int n_conditions = 0;
  int n_mc = 0;
  std::vector<double> per_condition;
  bool shared_model = false;
};

/// Averages the per-condition Monte-Carlo KLD of the two fitted models over
/// conditions drawn from the first corpus. Each condition gets its own
/// derived random stream, so the result is independent of scheduling.
CkldResult ckld(const MdnModel& m1, const MdnModel& m2,
                const std::vector<Eigen::VectorXd>& conditions_from_corpus1,
                const CkldConfig& cfg);

/// Condition/target pairs of a scene corpus: graph features on the stored
/// (meter-scale) scenes, then per-scene normalization, then the fixed-layout
/// condition with the flattened normalized future as target.
struct ConditionedData {
  std::vector<Eigen::VectorXd> conditions;
  std::vector<Eigen::VectorXd> futures;
  int d_x = 0;
  int d_y = 0;
};

ConditionedData condition_scenes(const std::vector<PredictionScene>& scenes,
                                 const SceneConfig& cfg);

/// End-to-end divergence between two scene corpora: fits one density network
/// per corpus, then runs the Monte-Carlo average. With shared_model the first
/// fit is reused on both sides (the self-divergence is then exactly zero).
struct CkldRun {
  CkldResult result;
  MdnModel model1;
  MdnModel model2;
};

CkldRun ckld_between_corpora(const std::vector<PredictionScene>& corpus1,
                             const std::vector<PredictionScene>& corpus2, const SceneConfig& scene_cfg,
                             MdnConfig mdn_cfg, const CkldConfig& ckld_cfg, bool shared_model = false);

/// JSON report with config echo, mean, standard error and a per-condition
/// histogram. Deterministic byte-for-byte given the same inputs.
std::string ckld_report_json(const CkldResult& result, const std::string& corpus1_id,
                             const std::string& corpus2_id, const std::string& run_config_json);

}  // namespace grtp
