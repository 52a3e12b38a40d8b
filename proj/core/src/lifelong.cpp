#include "grtp/lifelong.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace grtp {

using json = nlohmann::ordered_json;

Strategy parse_strategy(const std::string& name) {
  if (name == "GRTP-D") return Strategy::GrtpD;
  if (name == "GRTP-T") return Strategy::GrtpT;
  if (name == "JT") return Strategy::JointTraining;
  if (name == "FM") return Strategy::FixedModel;
  if (name == "FT") return Strategy::FineTuning;
  std::string valid;
  for (const std::string& s : strategy_names()) valid += (valid.empty() ? "" : ", ") + s;
  throw ConfigError("unknown strategy '" + name + "' (valid: " + valid + ")");
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::GrtpD: return "GRTP-D";
    case Strategy::GrtpT: return "GRTP-T";
    case Strategy::JointTraining: return "JT";
    case Strategy::FixedModel: return "FM";
    case Strategy::FineTuning: return "FT";
  }
  throw ConfigError("invalid strategy value");
}

const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names{"GRTP-D", "GRTP-T", "JT", "FM", "FT"};
  return names;
}

namespace {

/// Owns every task's scenes and logs all access. Train/eval splits are fixed
/// up front from the master seed. Learner-facing reads of a task after its
/// own step are the storage-contract violations the report counts.
class TaskVault {
public:
  TaskVault(const ChainConfig& cfg) : cfg_(cfg) {
    for (const TaskSpec& task : cfg.tasks) {
      SceneArchive archive = read_scene_archive(task.archive_path);
      TaskData data;
      Rng rng = Rng(cfg.seed).derive("split", tasks_.size());
      std::vector<std::size_t> order(archive.scenes.size());
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_int(i)]);
      std::size_t n_eval =
          static_cast<std::size_t>(cfg.eval_fraction * static_cast<double>(order.size()));
      n_eval = std::min(n_eval, order.size() > 1 ? order.size() - 1 : std::size_t{0});
      for (std::size_t i = 0; i < order.size(); ++i) {
        PredictionScene scene = std::move(archive.scenes[order[i]]);
        if (i < order.size() - n_eval) {
          data.train_raw.push_back(std::move(scene));
        } else {
          data.eval_raw.push_back(std::move(scene));
        }
      }
      data.train_normalized.reserve(data.train_raw.size());
      for (const PredictionScene& s : data.train_raw)
        data.train_normalized.push_back(s.normalized() ? s : normalize_scene(s));
      tasks_.push_back(std::move(data));
    }
  }

  void advance_to(int step) { step_ = step; }

  const std::vector<PredictionScene>& train_scenes(std::size_t task, const std::string& purpose) {
    log(task, purpose, tasks_[task].train_normalized.size());
    return tasks_[task].train_normalized;
  }

  const std::vector<PredictionScene>& train_scenes_raw_for_divergence(std::size_t task) {
    log(task, "divergence", tasks_[task].train_raw.size());
    return tasks_[task].train_raw;
  }

  const std::vector<PredictionScene>& eval_scenes(std::size_t task) {
    log(task, "evaluate", tasks_[task].eval_raw.size());
    return tasks_[task].eval_raw;
  }

  std::size_t train_size(std::size_t task) const { return tasks_[task].train_normalized.size(); }

  const std::vector<AccessRecord>& ledger() const { return ledger_; }

  int violations(Strategy strategy) const {
    if (strategy == Strategy::JointTraining) return 0;  // JT declares full retention
    int count = 0;
    for (const AccessRecord& rec : ledger_)
      if (rec.purpose == "train" && rec.step > task_index(rec.task)) ++count;
    return count;
  }

private:
  struct TaskData {
    std::vector<PredictionScene> train_raw;
    std::vector<PredictionScene> train_normalized;
    std::vector<PredictionScene> eval_raw;
  };

  int task_index(const std::string& id) const {
    for (std::size_t i = 0; i < cfg_.tasks.size(); ++i)
      if (cfg_.tasks[i].id == id) return static_cast<int>(i);
    return -1;
  }

  void log(std::size_t task, const std::string& purpose, std::size_t count) {
    ledger_.push_back(AccessRecord{step_, cfg_.tasks[task].id, purpose, count});
  }

  ChainConfig cfg_;
  std::vector<TaskData> tasks_;
  std::vector<AccessRecord> ledger_;
  int step_ = -1;
};

int replay_count(double ratio, std::size_t new_size) {
  return static_cast<int>(std::lround(ratio * static_cast<double>(new_size)));
}

}  // namespace

GeneratorModel run_ldm_step(const GeneratorModel* longterm,
                            const std::vector<PredictionScene>& new_scenes, const GanConfig& cfg,
                            double replay_ratio, Rng& rng, GanTrainLog* log_out) {
  GanConfig step_cfg = cfg;
  step_cfg.seed = rng.derive("ldm-train").seed();
  std::vector<PredictionScene> training_set;
  if (longterm) {
    Rng replay_rng = rng.derive("ldm-replay");
    std::vector<PredictionScene> replayed =
        replay(*longterm, replay_count(replay_ratio, new_scenes.size()), longterm->labels, replay_rng);
    training_set.reserve(replayed.size() + new_scenes.size());
    for (PredictionScene& s : replayed) training_set.push_back(std::move(s));
  }
  training_set.insert(training_set.end(), new_scenes.begin(), new_scenes.end());
  R2Gan trained = train_r2gan(training_set, step_cfg);
  if (log_out) *log_out = trained.log;
  return std::move(trained.gen);
}

GeneratorModel run_ltm_step(const GeneratorModel* longterm,
                            const std::vector<PredictionScene>& new_scenes, const GanConfig& cfg,
                            double replay_ratio, Rng& rng, GanTrainLog* log_out) {
  GanConfig temporal_cfg = cfg;
  temporal_cfg.seed = rng.derive("ltm-temporal").seed();
  R2Gan temporal = train_r2gan(new_scenes, temporal_cfg);
  if (!longterm) {
    if (log_out) *log_out = temporal.log;
    return std::move(temporal.gen);  // first task: the temporal model is the long-term model
  }
  Rng replay_long = rng.derive("ltm-replay-long");
  Rng replay_temp = rng.derive("ltm-replay-temporal");
  std::vector<PredictionScene> merged =
      replay(*longterm, replay_count(replay_ratio, new_scenes.size()), longterm->labels, replay_long);
  std::vector<PredictionScene> from_temporal =
      replay(temporal.gen, static_cast<int>(new_scenes.size()), temporal.gen.labels, replay_temp);
  merged.insert(merged.end(), std::make_move_iterator(from_temporal.begin()),
                std::make_move_iterator(from_temporal.end()));
  GanConfig merge_cfg = cfg;
  merge_cfg.seed = rng.derive("ltm-merge").seed();
  R2Gan fused = train_r2gan(merged, merge_cfg);
  if (log_out) *log_out = fused.log;
  return std::move(fused.gen);
}

TaskChainReport run_chain(const ChainConfig& cfg) {
  if (cfg.tasks.empty()) throw ConfigError("run_chain: no tasks");
  cfg.scene.validate();

  TaskChainReport report;
  report.strategy = strategy_name(cfg.strategy);
  report.seed = cfg.seed;
  report.step_seconds = cfg.scene.step_seconds;
  for (const TaskSpec& t : cfg.tasks) report.task_ids.push_back(t.id);

  TaskVault vault(cfg);
  Rng master(cfg.seed);

  std::optional<GeneratorModel> memory;
  std::optional<PredictorModel> predictor;
  std::vector<PredictionScene> accumulated;  // JT only

  for (std::size_t step = 0; step < cfg.tasks.size(); ++step) {
    vault.advance_to(static_cast<int>(step));
    StepReport step_report;
    step_report.task = cfg.tasks[step].id;
    Rng step_rng = master.derive("chain-step", step);
    try {
      PredictorConfig pred_cfg = cfg.predictor;
      pred_cfg.seed = step_rng.derive("predictor").seed();

      switch (cfg.strategy) {
        case Strategy::GrtpD:
        case Strategy::GrtpT: {
          const std::vector<PredictionScene>& current = vault.train_scenes(step, "train");
          GanTrainLog gan_log;
          Rng fusion_rng = step_rng.derive("fusion");
          memory = cfg.strategy == Strategy::GrtpD
                       ? run_ldm_step(memory ? &*memory : nullptr, current, cfg.gan,
                                      cfg.replay_ratio, fusion_rng, &gan_log)
                       : run_ltm_step(memory ? &*memory : nullptr, current, cfg.gan,
                                      cfg.replay_ratio, fusion_rng, &gan_log);
          step_report.gan_collapse_warning = gan_log.collapse_warning;

          const int n_replay = cfg.n_replay > 0 ? cfg.n_replay : static_cast<int>(current.size());
          Rng replay_rng = step_rng.derive("predictor-replay");
          std::vector<PredictionScene> train_set = replay(*memory, n_replay, memory->labels, replay_rng);
          if (cfg.replay_plus_current)
            train_set.insert(train_set.end(), current.begin(), current.end());
          predictor = train_predictor(train_set, pred_cfg).model;
          break;
        }
        case Strategy::JointTraining: {
          const std::vector<PredictionScene>& current = vault.train_scenes(step, "train");
          accumulated.insert(accumulated.end(), current.begin(), current.end());
          predictor = train_predictor(accumulated, pred_cfg).model;
          break;
        }
        case Strategy::FixedModel: {
          if (step == 0)
            predictor = train_predictor(vault.train_scenes(step, "train"), pred_cfg).model;
          break;
        }
        case Strategy::FineTuning: {
          const std::vector<PredictionScene>& current = vault.train_scenes(step, "train");
          predictor = train_predictor(current, pred_cfg, predictor ? &*predictor : nullptr).model;
          break;
        }
      }

      if (!predictor) throw NumericError("run_chain: no predictor after step");
      for (std::size_t visited = 0; visited <= step; ++visited) {
        EvalReport eval =
            evaluate_rmse(*predictor, vault.eval_scenes(visited), cfg.scene, cfg.tasks[visited].id,
                          report.strategy + "@step" + std::to_string(step));
        step_report.evals.push_back(std::move(eval));
      }
    } catch (const Error& e) {
      step_report.partial = true;
      step_report.failure = e.what();
    }
    report.steps.push_back(std::move(step_report));
  }

  if (cfg.with_ckld) {
    const std::size_t n = cfg.tasks.size();
    std::vector<MdnModel> models;
    std::vector<std::vector<Eigen::VectorXd>> conditions;
    for (std::size_t i = 0; i < n; ++i) {
      ConditionedData data = condition_scenes(vault.train_scenes_raw_for_divergence(i), cfg.scene);
      MdnConfig mcfg = cfg.mdn;
      mcfg.d_x = data.d_x;
      mcfg.d_y = data.d_y;
      mcfg.seed = master.derive("ckld-mdn", i).seed();
      models.push_back(train_mdn(data.conditions, data.futures, mcfg).model);
      conditions.push_back(std::move(data.conditions));
    }
    report.ckld_matrix.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        CkldConfig ccfg = cfg.ckld;
        ccfg.rng_seed = master.derive("ckld-pair", i * n + j).seed();
        ccfg.threads = cfg.threads;
        report.ckld_matrix[i][j] =
            i == j ? ckld(models[i], models[i], conditions[i], ccfg).mean
                   : ckld(models[i], models[j], conditions[i], ccfg).mean;
      }
  }

  report.ledger = vault.ledger();
  report.storage_violations = vault.violations(cfg.strategy);
  return report;
}

// --- config and report serialization ---

namespace {

GanConfig gan_from_json(const json& j, GanConfig base) {
  base.t_h = j.value("t_h", base.t_h);
  base.t_f = j.value("t_f", base.t_f);
  base.noise_embed = j.value("noise_embed", base.noise_embed);
  base.gru_hidden = j.value("gru_hidden", base.gru_hidden);
  base.seq_embed = j.value("seq_embed", base.seq_embed);
  base.pair_embed = j.value("pair_embed", base.pair_embed);
  base.mix_hidden = j.value("mix_hidden", base.mix_hidden);
  base.disc_step_embed = j.value("disc_step_embed", base.disc_step_embed);
  base.disc_nei_embed = j.value("disc_nei_embed", base.disc_nei_embed);
  base.disc_fuse1 = j.value("disc_fuse1", base.disc_fuse1);
  base.disc_fuse2 = j.value("disc_fuse2", base.disc_fuse2);
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.batch = j.value("batch", base.batch);
  base.steps = j.value("steps", base.steps);
  base.disc_updates_per_step = j.value("disc_updates_per_step", base.disc_updates_per_step);
  base.log_every = j.value("log_every", base.log_every);
  base.gp.samples_per_vehicle = j.value("gp_samples_per_vehicle", base.gp.samples_per_vehicle);
  base.gp.rbf_lengthscale = j.value("gp_lengthscale", base.gp.rbf_lengthscale);
  base.gp.rbf_variance = j.value("gp_variance", base.gp.rbf_variance);
  return base;
}

json gan_to_json(const GanConfig& c) {
  json j;
  j["t_h"] = c.t_h;
  j["t_f"] = c.t_f;
  j["noise_embed"] = c.noise_embed;
  j["gru_hidden"] = c.gru_hidden;
  j["seq_embed"] = c.seq_embed;
  j["pair_embed"] = c.pair_embed;
  j["mix_hidden"] = c.mix_hidden;
  j["disc_step_embed"] = c.disc_step_embed;
  j["disc_nei_embed"] = c.disc_nei_embed;
  j["disc_fuse1"] = c.disc_fuse1;
  j["disc_fuse2"] = c.disc_fuse2;
  j["learning_rate"] = c.learning_rate;
  j["batch"] = c.batch;
  j["steps"] = c.steps;
  j["disc_updates_per_step"] = c.disc_updates_per_step;
  j["log_every"] = c.log_every;
  j["gp_samples_per_vehicle"] = c.gp.samples_per_vehicle;
  j["gp_lengthscale"] = c.gp.rbf_lengthscale;
  j["gp_variance"] = c.gp.rbf_variance;
  return j;
}

PredictorConfig predictor_from_json(const json& j, PredictorConfig base) {
  base.t_h = j.value("t_h", base.t_h);
  base.t_f = j.value("t_f", base.t_f);
  base.step_embed = j.value("step_embed", base.step_embed);
  base.enc_hidden = j.value("enc_hidden", base.enc_hidden);
  base.nei_embed = j.value("nei_embed", base.nei_embed);
  base.fuse = j.value("fuse", base.fuse);
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.batch = j.value("batch", base.batch);
  base.steps = j.value("steps", base.steps);
  base.val_fraction = j.value("val_fraction", base.val_fraction);
  base.log_every = j.value("log_every", base.log_every);
  return base;
}

json predictor_to_json(const PredictorConfig& c) {
  json j;
  j["t_h"] = c.t_h;
  j["t_f"] = c.t_f;
  j["step_embed"] = c.step_embed;
  j["enc_hidden"] = c.enc_hidden;
  j["nei_embed"] = c.nei_embed;
  j["fuse"] = c.fuse;
  j["learning_rate"] = c.learning_rate;
  j["batch"] = c.batch;
  j["steps"] = c.steps;
  j["val_fraction"] = c.val_fraction;
  j["log_every"] = c.log_every;
  return j;
}

SceneConfig scene_from_json(const json& j, SceneConfig base) {
  base.t_h = j.value("t_h", base.t_h);
  base.t_f = j.value("t_f", base.t_f);
  base.step_seconds = j.value("step_seconds", base.step_seconds);
  base.n_v = j.value("n_v", base.n_v);
  base.decay_lambda = j.value("decay_lambda", base.decay_lambda);
  base.eig_k = j.value("eig_k", base.eig_k);
  return base;
}

json scene_to_json(const SceneConfig& c) {
  json j;
  j["t_h"] = c.t_h;
  j["t_f"] = c.t_f;
  j["step_seconds"] = c.step_seconds;
  j["n_v"] = c.n_v;
  j["decay_lambda"] = c.decay_lambda;
  j["eig_k"] = c.eig_k;
  return j;
}

}  // namespace

ChainConfig parse_chain_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    throw ParseError(std::string("chain config: ") + e.what());
  }
  ChainConfig cfg;
  if (!j.contains("tasks") || !j["tasks"].is_array() || j["tasks"].empty())
    throw ConfigError("chain config: 'tasks' must be a non-empty array");
  for (const auto& t : j["tasks"]) {
    TaskSpec spec;
    spec.id = t.value("id", "");
    spec.archive_path = t.value("archive", "");
    if (spec.id.empty() || spec.archive_path.empty())
      throw ConfigError("chain config: every task needs 'id' and 'archive'");
    cfg.tasks.push_back(std::move(spec));
  }
  cfg.strategy = parse_strategy(j.value("strategy", "JT"));
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("scene")) cfg.scene = scene_from_json(j["scene"], cfg.scene);
  if (j.contains("gan")) cfg.gan = gan_from_json(j["gan"], cfg.gan);
  if (j.contains("predictor")) cfg.predictor = predictor_from_json(j["predictor"], cfg.predictor);
  cfg.gan.t_h = cfg.scene.t_h;
  cfg.gan.t_f = cfg.scene.t_f;
  cfg.predictor.t_h = cfg.scene.t_h;
  cfg.predictor.t_f = cfg.scene.t_f;
  cfg.replay_ratio = j.value("replay_ratio", cfg.replay_ratio);
  cfg.n_replay = j.value("n_replay", cfg.n_replay);
  cfg.replay_plus_current = j.value("replay_plus_current", cfg.replay_plus_current);
  cfg.eval_fraction = j.value("eval_fraction", cfg.eval_fraction);
  cfg.with_ckld = j.value("with_ckld", cfg.with_ckld);
  cfg.threads = j.value("threads", cfg.threads);
  if (j.contains("mdn")) {
    cfg.mdn.m = j["mdn"].value("m", cfg.mdn.m);
    cfg.mdn.steps = j["mdn"].value("steps", cfg.mdn.steps);
    cfg.mdn.batch = j["mdn"].value("batch", cfg.mdn.batch);
    cfg.mdn.learning_rate = j["mdn"].value("learning_rate", cfg.mdn.learning_rate);
  }
  if (j.contains("ckld")) {
    cfg.ckld.n_mc = j["ckld"].value("n_mc", cfg.ckld.n_mc);
    cfg.ckld.n_conditions = j["ckld"].value("n_conditions", cfg.ckld.n_conditions);
  }
  return cfg;
}

ChainConfig load_chain_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read chain config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_chain_config(text);
}

std::string chain_config_json(const ChainConfig& cfg) {
  json j;
  json tasks = json::array();
  for (const TaskSpec& t : cfg.tasks) tasks.push_back(json{{"id", t.id}, {"archive", t.archive_path}});
  j["tasks"] = std::move(tasks);
  j["strategy"] = strategy_name(cfg.strategy);
  j["seed"] = cfg.seed;
  j["scene"] = scene_to_json(cfg.scene);
  j["gan"] = gan_to_json(cfg.gan);
  j["predictor"] = predictor_to_json(cfg.predictor);
  j["replay_ratio"] = cfg.replay_ratio;
  j["n_replay"] = cfg.n_replay;
  j["replay_plus_current"] = cfg.replay_plus_current;
  j["eval_fraction"] = cfg.eval_fraction;
  j["with_ckld"] = cfg.with_ckld;
  j["threads"] = cfg.threads;
  return j.dump();
}

std::string chain_report_json(const TaskChainReport& report, const std::string& config_echo_json) {
  json doc;
  doc["format"] = "grtp-chain-report";
  doc["version"] = 1;
  doc["strategy"] = report.strategy;
  doc["seed"] = report.seed;
  doc["tasks"] = report.task_ids;
  doc["run_config"] = config_echo_json.empty() ? json::object() : json::parse(config_echo_json);
  json steps = json::array();
  for (const StepReport& s : report.steps) {
    json js;
    js["task"] = s.task;
    js["gan_collapse_warning"] = s.gan_collapse_warning;
    js["partial"] = s.partial;
    if (s.partial) js["failure"] = s.failure;
    json evals = json::array();
    for (const EvalReport& e : s.evals) {
      json je;
      je["task"] = e.task_id;
      je["batch_size"] = e.batch_size;
      je["rmse_per_step"] = e.rmse_per_step;
      json horizons = json::array();
      for (const auto& [sec, rmse] : e.horizons)
        horizons.push_back(json{{"seconds", sec}, {"rmse", rmse}});
      je["horizons"] = std::move(horizons);
      evals.push_back(std::move(je));
    }
    js["evals"] = std::move(evals);
    steps.push_back(std::move(js));
  }
  doc["steps"] = std::move(steps);
  json ledger = json::array();
  for (const AccessRecord& rec : report.ledger)
    ledger.push_back(json{{"step", rec.step}, {"task", rec.task}, {"purpose", rec.purpose},
                          {"scenes_read", rec.scenes_read}});
  doc["access_ledger"] = std::move(ledger);
  doc["storage_violations"] = report.storage_violations;
  if (report.ckld_matrix.empty()) {
    doc["ckld_matrix"] = nullptr;
  } else {
    doc["ckld_matrix"] = report.ckld_matrix;
  }
  return doc.dump(2) + "\n";
}

std::string chain_report_rmse_csv(const TaskChainReport& report) {
  if (report.steps.empty()) return "";
  const StepReport& last = report.steps.back();
  std::vector<EvalReport> evals = last.evals;
  return eval_reports_csv(evals);
}

std::string chain_report_curves_csv(const TaskChainReport& report) {
  std::string out = "chain_step,trained_on,eval_task,future_step,seconds,rmse_m\n";
  for (std::size_t step = 0; step < report.steps.size(); ++step) {
    const StepReport& s = report.steps[step];
    for (const EvalReport& e : s.evals) {
      for (std::size_t k = 0; k < e.rmse_per_step.size(); ++k) {
        out += std::to_string(step) + "," + s.task + "," + e.task_id + "," + std::to_string(k) + "," +
               nlohmann::json((static_cast<double>(k) + 1.0) * report.step_seconds).dump() + "," +
               nlohmann::json(e.rmse_per_step[k]).dump() + "\n";
      }
    }
  }
  return out;
}

}  // namespace grtp
