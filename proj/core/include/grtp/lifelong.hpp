#pragma once

#include <optional>
#include <string>
#include <vector>

#include "grtp/gan.hpp"
#include "grtp/mdn.hpp"
#include "grtp/predictor.hpp"

namespace grtp {

enum class Strategy { GrtpD, GrtpT, JointTraining, FixedModel, FineTuning };

Strategy parse_strategy(const std::string& name);  // GRTP-D, GRTP-T, JT, FM, FT
std::string strategy_name(Strategy s);
const std::vector<std::string>& strategy_names();

struct TaskSpec {
  std::string id;
  std::string archive_path;
};

struct ChainConfig {
  std::vector<TaskSpec> tasks;
  Strategy strategy = Strategy::JointTraining;
  std::uint64_t seed = 1;
  SceneConfig scene;
  GanConfig gan;
  PredictorConfig predictor;
  MdnConfig mdn;      // only used when with_ckld is set
  CkldConfig ckld;
  double replay_ratio = 1.0;     // replayed scenes per real scene when merging
  int n_replay = 0;              // predictor-side replay count; 0 = current task size
  bool replay_plus_current = true;  // predictor sees replay + current real data
  double eval_fraction = 0.15;
  bool with_ckld = false;
  int threads = 1;
};

/// Every archive access of a chain run. purpose is "train" for learner-facing
/// reads and "evaluate"/"divergence" for harness-side reads; the storage
/// contract only constrains the former.
struct AccessRecord {
  int step = 0;
  std::string task;
  std::string purpose;
  std::size_t scenes_read = 0;
};

struct StepReport {
  std::string task;
  std::vector<EvalReport> evals;  // one per visited task, chain order
  bool gan_collapse_warning = false;
  bool partial = false;
  std::string failure;
};

struct TaskChainReport {
  std::string strategy;
  std::uint64_t seed = 0;
  double step_seconds = 0.2;
  std::vector<std::string> task_ids;
  std::vector<StepReport> steps;
  std::vector<AccessRecord> ledger;
  int storage_violations = 0;  // learner reads of a past task's raw scenes
  std::vector<std::vector<double>> ckld_matrix;  // empty unless with_ckld
};

/// Runs the task chain under the configured strategy: updates the generative
/// memory (GRTP-D/T), accumulates data (JT), keeps the first model (FM) or
/// fine-tunes in place (FT); retrains/refreshes the predictor; evaluates on
/// every visited task after each step. A stage failure marks the report
/// partial instead of aborting the chain.
TaskChainReport run_chain(const ChainConfig& cfg);

/// Data-merge fusion: retrains the long-term generator on replayed scenes
/// mixed with the new task's real scenes (first task: real data only).
GeneratorModel run_ldm_step(const GeneratorModel* longterm,
                            const std::vector<PredictionScene>& new_scenes, const GanConfig& cfg,
                            double replay_ratio, Rng& rng, GanTrainLog* log_out = nullptr);

/// Temporal-merge fusion: trains a throwaway generator on the new task, then
/// retrains the long-term generator on replays from both; the raw scenes are
/// untouched during the merge phase.
GeneratorModel run_ltm_step(const GeneratorModel* longterm,
                            const std::vector<PredictionScene>& new_scenes, const GanConfig& cfg,
                            double replay_ratio, Rng& rng, GanTrainLog* log_out = nullptr);

// --- config and report serialization ---

ChainConfig parse_chain_config(const std::string& json_text);
ChainConfig load_chain_config(const std::string& path);
std::string chain_config_json(const ChainConfig& cfg);

std::string chain_report_json(const TaskChainReport& report, const std::string& config_echo_json);
/// Final-step matrix: rows horizons, columns visited tasks.
std::string chain_report_rmse_csv(const TaskChainReport& report);
/// Long format: chain_step, evaluated task, future step, seconds, rmse.
std::string chain_report_curves_csv(const TaskChainReport& report);

}  // namespace grtp
