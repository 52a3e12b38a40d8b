// grtp command line: one subcommand per pipeline stage.
//
//   ingest           corpus file or built-in synthetic corpus -> scene archive
//   ckld             divergence between two (or all pairs of) scene archives
//   train-gan        fit the generative memory on one archive
//   replay           draw scenes from a trained generator into an archive
//   train-predictor  fit the task model on one or more archives
//   evaluate         per-horizon RMSE of a predictor checkpoint on an archive
//   chain            run a full lifelong task chain from a declarative config
//
// Exit codes: 0 success, 1 internal error, 2 invalid input or config.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "grtp/lifelong.hpp"
#include "grtp/nn/checkpoint.hpp"
#include "grtp/synthetic.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace grtp;

namespace {

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write: " + path);
  out << text;
}

/// Applies config-file values for options the user did not pass on the
/// command line; explicit flags always win.
void apply_config_file(CLI::App* cmd, const std::string& config_path) {
  if (config_path.empty()) return;
  std::ifstream in(config_path, std::ios::binary);
  if (!in) throw IoError("cannot read config file: " + config_path);
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw ParseError("config file '" + config_path + "': " + e.what());
  }
  for (auto& [key, value] : doc.items()) {
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (!opt) throw ConfigError("config file '" + config_path + "': unknown option '" + key + "'");
    if (opt->count() > 0) continue;
    if (value.is_boolean()) {
      opt->add_result(value.get<bool>() ? "true" : "false");
    } else if (value.is_string()) {
      opt->add_result(value.get<std::string>());
    } else {
      opt->add_result(value.dump());
    }
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError("config file '" + config_path + "': bad value for '" + key + "': " + e.what());
    }
  }
}

struct SceneFlags {
  SceneConfig cfg;
  int min_vehicles = 2;
  int max_vehicles = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--t-h", cfg.t_h, "history steps");
    cmd->add_option("--t-f", cfg.t_f, "future steps");
    cmd->add_option("--step-seconds", cfg.step_seconds, "time grid step");
    cmd->add_option("--n-v", cfg.n_v, "max vehicles per scene");
    cmd->add_option("--lambda", cfg.decay_lambda, "adjacency time-decay");
    cmd->add_option("--eig-k", cfg.eig_k, "eigenvectors in the condition");
    cmd->add_option("--min-vehicles", min_vehicles, "drop scenes with fewer vehicles");
    cmd->add_option("--max-vehicles", max_vehicles, "drop scenes with more vehicles (0 = no cap)");
  }
};

json scene_cfg_echo(const SceneConfig& c) {
  return json{{"t_h", c.t_h},   {"t_f", c.t_f},           {"step_seconds", c.step_seconds},
              {"n_v", c.n_v},   {"decay_lambda", c.decay_lambda}, {"eig_k", c.eig_k}};
}

// ---------------------------------------------------------------- ingest ---

struct IngestArgs {
  std::string input;
  std::string synthetic;
  std::string out;
  std::string config_file;
  SceneFlags scene;
  double from_hz = 0.0;
  std::uint64_t seed = 1;
  int synth_pairs = 500;
  int synth_scenes = 4000;
  int synth_vehicles = 50;
  int synth_frames = 200;
  double synth_sigma = 0.1;
  double shift_x = 0.0, shift_y = 0.0;
};

int run_ingest(const IngestArgs& a) {
  a.scene.cfg.validate();
  std::vector<PredictionScene> scenes;
  std::string provenance;
  const double target_hz = 1.0 / a.scene.cfg.step_seconds;

  if (!a.synthetic.empty()) {
    provenance = "synthetic:" + a.synthetic + ":seed=" + std::to_string(a.seed);
    if (a.synthetic == "chainA" || a.synthetic == "chainB") {
      ChainCorpusParams params;
      params.n_pairs = a.synth_pairs;
      params.record_steps = a.scene.cfg.total_steps();
      params.hz = target_hz;
      Corpus corpus = make_chain_corpus(
          a.synthetic == "chainA" ? ChainTask::LaneKeep : ChainTask::LaneChange, params, a.seed);
      scenes = extract_scenes(corpus, a.scene.cfg, {a.scene.min_vehicles, a.scene.max_vehicles});
    } else if (a.synthetic == "grid") {
      Corpus corpus = make_grid_corpus(a.synth_vehicles, a.synth_frames, target_hz, a.seed);
      scenes = extract_scenes(corpus, a.scene.cfg, {a.scene.min_vehicles, a.scene.max_vehicles});
    } else if (a.synthetic == "gauss") {
      GaussianSceneParams params;
      params.n_scenes = a.synth_scenes;
      params.t_h = a.scene.cfg.t_h;
      params.t_f = a.scene.cfg.t_f;
      params.sigma = a.synth_sigma;
      params.shift = Point(a.shift_x, a.shift_y);
      params.seed = a.seed;
      scenes = make_gaussian_scene_corpus(params);
    } else {
      throw ConfigError("unknown synthetic corpus '" + a.synthetic +
                        "' (valid: chainA, chainB, grid, gauss)");
    }
  } else {
    if (a.input.empty()) throw ConfigError("ingest: either --input or --synthetic is required");
    if (!fs::exists(a.input)) throw IoError("input file does not exist: " + a.input);
    provenance = "file:" + a.input;
    const double from = a.from_hz > 0.0 ? a.from_hz : target_hz;
    Corpus corpus = load_corpus(a.input, from);
    if (from != target_hz) corpus = resample(corpus, target_hz);
    scenes = extract_scenes(corpus, a.scene.cfg, {a.scene.min_vehicles, a.scene.max_vehicles});
  }

  write_scene_archive(a.out, scenes, a.scene.cfg, provenance);
  json summary;
  summary["archive"] = a.out;
  summary["scenes"] = scenes.size();
  summary["provenance"] = provenance;
  summary["run_config"] = json{{"command", "ingest"},
                               {"input", a.input},
                               {"synthetic", a.synthetic},
                               {"from_hz", a.from_hz},
                               {"seed", a.seed},
                               {"scene", scene_cfg_echo(a.scene.cfg)}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------------------ ckld ---

struct CkldArgs {
  std::string archive1, archive2;
  std::vector<std::string> archives;
  std::string pairs;  // "all" for the full matrix
  std::string out;
  std::string csv;
  std::string config_file;
  bool shared_mdn = false;
  CkldConfig ckld_cfg;
  int mdn_m = 20;
  int mdn_steps = 2000;
  int mdn_batch = 4096;
  double mdn_lr = 4e-4;
  std::vector<int> mdn_hidden{64, 64};
  std::uint64_t seed = 1;
  int threads = 1;
};

MdnConfig mdn_cfg_from(const CkldArgs& a) {
  MdnConfig cfg;
  cfg.m = a.mdn_m;
  cfg.steps = a.mdn_steps;
  cfg.batch = a.mdn_batch;
  cfg.learning_rate = a.mdn_lr;
  cfg.trunk_hidden = a.mdn_hidden;
  cfg.seed = a.seed;
  return cfg;
}

json ckld_run_config(const CkldArgs& a, const std::string& c1, const std::string& c2) {
  return json{{"command", "ckld"},
              {"corpus1", c1},
              {"corpus2", c2},
              {"n_mc", a.ckld_cfg.n_mc},
              {"n_conditions", a.ckld_cfg.n_conditions},
              {"mdn", json{{"m", a.mdn_m},
                           {"steps", a.mdn_steps},
                           {"batch", a.mdn_batch},
                           {"learning_rate", a.mdn_lr},
                           {"hidden", a.mdn_hidden}}},
              {"seed", a.seed},
              {"threads", a.threads}};
}

int run_ckld(CkldArgs a) {
  a.ckld_cfg.rng_seed = Rng(a.seed).derive("ckld").seed();
  a.ckld_cfg.threads = a.threads;
  MdnConfig mdn_cfg = mdn_cfg_from(a);

  if (a.pairs == "all") {
    if (a.archives.size() < 2) throw ConfigError("ckld --pairs all needs at least two --archives");
    std::vector<SceneArchive> archives;
    for (const std::string& path : a.archives) archives.push_back(read_scene_archive(path));
    const SceneConfig& scene_cfg = archives.front().cfg;

    // one fitted model per archive, reused across the matrix
    std::vector<MdnModel> models;
    std::vector<std::vector<Eigen::VectorXd>> conditions;
    for (std::size_t i = 0; i < archives.size(); ++i) {
      ConditionedData data = condition_scenes(archives[i].scenes, scene_cfg);
      MdnConfig cfg_i = mdn_cfg;
      cfg_i.d_x = data.d_x;
      cfg_i.d_y = data.d_y;
      cfg_i.seed = Rng(a.seed).derive("mdn", i).seed();
      models.push_back(train_mdn(data.conditions, data.futures, cfg_i).model);
      conditions.push_back(std::move(data.conditions));
    }
    const std::size_t n = archives.size();
    std::vector<std::vector<double>> matrix(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        CkldConfig cfg_ij = a.ckld_cfg;
        cfg_ij.rng_seed = Rng(a.seed).derive("ckld-pair", i * n + j).seed();
        matrix[i][j] = i == j ? ckld(models[i], models[i], conditions[i], cfg_ij).mean
                              : ckld(models[i], models[j], conditions[i], cfg_ij).mean;
      }
    json doc;
    doc["format"] = "grtp-ckld-matrix";
    doc["version"] = 1;
    doc["archives"] = a.archives;
    doc["matrix"] = matrix;
    doc["run_config"] = ckld_run_config(a, "(all)", "(all)");
    if (!a.out.empty()) write_text(a.out, doc.dump(2) + "\n");
    std::string csv = "corpus";
    for (const std::string& p : a.archives) csv += "," + fs::path(p).stem().string();
    csv += "\n";
    for (std::size_t i = 0; i < n; ++i) {
      csv += fs::path(a.archives[i]).stem().string();
      for (std::size_t j = 0; j < n; ++j) csv += "," + nlohmann::json(matrix[i][j]).dump();
      csv += "\n";
    }
    if (!a.csv.empty())
      write_text(a.csv, "# grtp-ckld-matrix v1\n# config: " +
                            ckld_run_config(a, "(all)", "(all)").dump() + "\n" + csv);
    std::cout << doc.dump(2) << "\n";
    return 0;
  }

  if (a.archive1.empty() || a.archive2.empty())
    throw ConfigError("ckld needs --archive1 and --archive2 (or --archives with --pairs all)");
  SceneArchive arc1 = read_scene_archive(a.archive1);
  const bool shared = a.shared_mdn || a.archive1 == a.archive2;
  std::vector<PredictionScene> empty;
  SceneArchive arc2;
  if (!shared) arc2 = read_scene_archive(a.archive2);
  CkldRun run = ckld_between_corpora(arc1.scenes, shared ? empty : arc2.scenes, arc1.cfg, mdn_cfg,
                                     a.ckld_cfg, shared);
  const std::string report = ckld_report_json(run.result, a.archive1, a.archive2,
                                              ckld_run_config(a, a.archive1, a.archive2).dump());
  if (!a.out.empty()) write_text(a.out, report);
  std::cout << report;
  return 0;
}

// ------------------------------------------------------------- train-gan ---

struct TrainGanArgs {
  std::string archive;
  std::string out;
  std::string log_out;
  std::string config_file;
  GanConfig gan;
  std::uint64_t seed = 1;
};

json gan_cfg_echo(const GanConfig& c, std::uint64_t seed) {
  return json{{"t_h", c.t_h},
              {"t_f", c.t_f},
              {"noise_embed", c.noise_embed},
              {"gru_hidden", c.gru_hidden},
              {"seq_embed", c.seq_embed},
              {"pair_embed", c.pair_embed},
              {"mix_hidden", c.mix_hidden},
              {"disc_step_embed", c.disc_step_embed},
              {"disc_nei_embed", c.disc_nei_embed},
              {"disc_fuse1", c.disc_fuse1},
              {"disc_fuse2", c.disc_fuse2},
              {"learning_rate", c.learning_rate},
              {"batch", c.batch},
              {"steps", c.steps},
              {"gp_samples_per_vehicle", c.gp.samples_per_vehicle},
              {"gp_lengthscale", c.gp.rbf_lengthscale},
              {"gp_variance", c.gp.rbf_variance},
              {"seed", seed}};
}

json sampler_to_json(const LabelSampler& s) {
  json j;
  j["tuples"] = s.tuples;
  j["weights"] = s.weights;
  return j;
}

LabelSampler sampler_from_json(const json& j) {
  LabelSampler s;
  s.tuples = j["tuples"].get<std::vector<std::vector<int>>>();
  s.weights = j["weights"].get<std::vector<double>>();
  return s;
}

GanConfig gan_cfg_from_checkpoint(const json& c) {
  GanConfig cfg;
  cfg.t_h = c.value("t_h", cfg.t_h);
  cfg.t_f = c.value("t_f", cfg.t_f);
  cfg.noise_embed = c.value("noise_embed", cfg.noise_embed);
  cfg.gru_hidden = c.value("gru_hidden", cfg.gru_hidden);
  cfg.seq_embed = c.value("seq_embed", cfg.seq_embed);
  cfg.pair_embed = c.value("pair_embed", cfg.pair_embed);
  cfg.mix_hidden = c.value("mix_hidden", cfg.mix_hidden);
  cfg.disc_step_embed = c.value("disc_step_embed", cfg.disc_step_embed);
  cfg.disc_nei_embed = c.value("disc_nei_embed", cfg.disc_nei_embed);
  cfg.disc_fuse1 = c.value("disc_fuse1", cfg.disc_fuse1);
  cfg.disc_fuse2 = c.value("disc_fuse2", cfg.disc_fuse2);
  cfg.learning_rate = c.value("learning_rate", cfg.learning_rate);
  cfg.batch = c.value("batch", cfg.batch);
  cfg.steps = c.value("steps", cfg.steps);
  cfg.gp.samples_per_vehicle = c.value("gp_samples_per_vehicle", cfg.gp.samples_per_vehicle);
  cfg.gp.rbf_lengthscale = c.value("gp_lengthscale", cfg.gp.rbf_lengthscale);
  cfg.gp.rbf_variance = c.value("gp_variance", cfg.gp.rbf_variance);
  cfg.gp.sequence_length = cfg.t_h + cfg.t_f;
  return cfg;
}

int run_train_gan(TrainGanArgs a) {
  SceneArchive archive = read_scene_archive(a.archive);
  a.gan.t_h = archive.cfg.t_h;
  a.gan.t_f = archive.cfg.t_f;
  a.gan.seed = a.seed;
  std::vector<PredictionScene> normalized;
  normalized.reserve(archive.scenes.size());
  for (const PredictionScene& s : archive.scenes)
    normalized.push_back(s.normalized() ? s : normalize_scene(s));
  R2Gan trained = train_r2gan(normalized, a.gan);

  json cfg_echo = gan_cfg_echo(a.gan, a.seed);
  cfg_echo["labels"] = sampler_to_json(trained.gen.labels);
  cfg_echo["kind"] = "generator";
  nn::save_params(a.out, trained.gen.params, cfg_echo.dump(), a.seed);
  json dis_echo = gan_cfg_echo(a.gan, a.seed);
  dis_echo["kind"] = "discriminator";
  nn::save_params(a.out + ".dis", trained.dis.params, dis_echo.dump(), a.seed);

  json log;
  log["format"] = "grtp-gan-log";
  log["version"] = 1;
  log["steps_run"] = trained.log.steps_run;
  log["collapse_warning"] = trained.log.collapse_warning;
  log["early_stopped"] = trained.log.early_stopped;
  log["final_d_loss"] = trained.log.d_losses.empty() ? 0.0 : trained.log.d_losses.back();
  log["final_g_loss"] = trained.log.g_losses.empty() ? 0.0 : trained.log.g_losses.back();
  json ex = json::array(), ey = json::array();
  for (const auto& [step, v] : trained.log.energy_x) ex.push_back(json{{"step", step}, {"value", v}});
  for (const auto& [step, v] : trained.log.energy_y) ey.push_back(json{{"step", step}, {"value", v}});
  log["energy_distance_x"] = std::move(ex);
  log["energy_distance_y"] = std::move(ey);
  log["run_config"] = cfg_echo;
  if (!a.log_out.empty()) write_text(a.log_out, log.dump(2) + "\n");
  std::cout << log.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------- replay ---

struct ReplayArgs {
  std::string model;
  std::string out;
  int n = 1000;
  std::uint64_t seed = 1;
};

GeneratorModel load_generator(const std::string& path) {
  nn::LoadedParams loaded = nn::load_params(path);
  json cfg = json::parse(loaded.config_json);
  if (cfg.value("kind", "") != "generator")
    throw ConfigError("checkpoint '" + path + "' is not a generator");
  GeneratorModel gen;
  gen.cfg = gan_cfg_from_checkpoint(cfg);
  gen.params = std::move(loaded.params);
  gen.labels = sampler_from_json(cfg["labels"]);
  gen.provenance = "checkpoint:" + path;
  return gen;
}

int run_replay(const ReplayArgs& a) {
  GeneratorModel gen = load_generator(a.model);
  Rng rng = Rng(a.seed).derive("replay");
  std::vector<PredictionScene> scenes = replay(gen, a.n, gen.labels, rng);
  SceneConfig cfg;
  cfg.t_h = gen.cfg.t_h;
  cfg.t_f = gen.cfg.t_f;
  write_scene_archive(a.out, scenes, cfg, gen.provenance + ":replay-seed=" + std::to_string(a.seed));
  json summary;
  summary["archive"] = a.out;
  summary["scenes"] = scenes.size();
  summary["run_config"] = json{{"command", "replay"}, {"model", a.model}, {"n", a.n}, {"seed", a.seed}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------- train-predictor ---

struct TrainPredictorArgs {
  std::vector<std::string> archives;
  std::string out;
  std::string init;
  std::string config_file;
  PredictorConfig cfg;
  std::uint64_t seed = 1;
};

json predictor_cfg_echo(const PredictorConfig& c, std::uint64_t seed) {
  return json{{"t_h", c.t_h},
              {"t_f", c.t_f},
              {"step_embed", c.step_embed},
              {"enc_hidden", c.enc_hidden},
              {"nei_embed", c.nei_embed},
              {"fuse", c.fuse},
              {"learning_rate", c.learning_rate},
              {"batch", c.batch},
              {"steps", c.steps},
              {"seed", seed}};
}

PredictorModel load_predictor(const std::string& path) {
  nn::LoadedParams loaded = nn::load_params(path);
  json cfg = json::parse(loaded.config_json);
  if (cfg.value("kind", "") != "predictor")
    throw ConfigError("checkpoint '" + path + "' is not a predictor");
  PredictorModel model;
  model.cfg.t_h = cfg.value("t_h", model.cfg.t_h);
  model.cfg.t_f = cfg.value("t_f", model.cfg.t_f);
  model.cfg.step_embed = cfg.value("step_embed", model.cfg.step_embed);
  model.cfg.enc_hidden = cfg.value("enc_hidden", model.cfg.enc_hidden);
  model.cfg.nei_embed = cfg.value("nei_embed", model.cfg.nei_embed);
  model.cfg.fuse = cfg.value("fuse", model.cfg.fuse);
  model.params = std::move(loaded.params);
  return model;
}

int run_train_predictor(TrainPredictorArgs a) {
  if (a.archives.empty()) throw ConfigError("train-predictor: at least one --archive required");
  std::vector<PredictionScene> scenes;
  SceneConfig scene_cfg;
  for (std::size_t i = 0; i < a.archives.size(); ++i) {
    SceneArchive archive = read_scene_archive(a.archives[i]);
    if (i == 0) scene_cfg = archive.cfg;
    for (PredictionScene& s : archive.scenes)
      scenes.push_back(s.normalized() ? std::move(s) : normalize_scene(s));
  }
  a.cfg.t_h = scene_cfg.t_h;
  a.cfg.t_f = scene_cfg.t_f;
  a.cfg.seed = a.seed;
  std::optional<PredictorModel> warm;
  if (!a.init.empty()) warm = load_predictor(a.init);
  PredictorTrainResult result = train_predictor(scenes, a.cfg, warm ? &*warm : nullptr);

  json echo = predictor_cfg_echo(a.cfg, a.seed);
  echo["kind"] = "predictor";
  nn::save_params(a.out, result.model.params, echo.dump(), a.seed);
  json summary;
  summary["checkpoint"] = a.out;
  summary["final_loss"] = result.log.losses.empty() ? 0.0 : result.log.losses.back();
  summary["final_val_rmse"] = result.log.val_rmse.empty() ? 0.0 : result.log.val_rmse.back().second;
  summary["run_config"] = echo;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// -------------------------------------------------------------- evaluate ---

struct EvaluateArgs {
  std::string model;
  std::string archive;
  std::string out;
  std::string csv;
  std::string task_id;
};

int run_evaluate(const EvaluateArgs& a) {
  PredictorModel model = load_predictor(a.model);
  SceneArchive archive = read_scene_archive(a.archive);
  const std::string task = a.task_id.empty() ? fs::path(a.archive).stem().string() : a.task_id;
  EvalReport report = evaluate_rmse(model, archive.scenes, archive.cfg, task,
                                    fs::path(a.model).stem().string());
  json run_cfg{{"command", "evaluate"}, {"model", a.model}, {"archive", a.archive}, {"task", task}};
  const std::string text = eval_report_json(report, run_cfg.dump());
  if (!a.out.empty()) write_text(a.out, text);
  if (!a.csv.empty())
    write_text(a.csv, "# grtp-eval v1\n# config: " + run_cfg.dump() + "\n" + eval_reports_csv({report}));
  std::cout << text;
  return 0;
}

// ----------------------------------------------------------------- chain ---

struct ChainArgs {
  std::string config_file;
  std::string strategy;
  std::string tasks;  // id=path,id=path overrides
  std::string out_dir = "chain-out";
  std::uint64_t seed = 0;
  bool dry_run = false;
  bool with_ckld = false;
  int threads = 0;
};

int run_chain_cmd(const ChainArgs& a) {
  ChainConfig cfg;
  if (!a.config_file.empty()) {
    cfg = load_chain_config(a.config_file);
  } else if (!a.tasks.empty()) {
    std::string spec = "{\"tasks\":[";
    std::size_t start = 0;
    bool first = true;
    while (start <= a.tasks.size()) {
      std::size_t end = a.tasks.find(',', start);
      if (end == std::string::npos) end = a.tasks.size();
      const std::string item = a.tasks.substr(start, end - start);
      const std::size_t eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("--tasks expects id=archive[,id=archive...]");
      if (!first) spec += ",";
      spec += "{\"id\":\"" + item.substr(0, eq) + "\",\"archive\":\"" + item.substr(eq + 1) + "\"}";
      first = false;
      if (end == a.tasks.size()) break;
      start = end + 1;
    }
    spec += "]}";
    cfg = parse_chain_config(spec);
  } else {
    throw ConfigError("chain: --config or --tasks is required");
  }
  if (!a.strategy.empty()) cfg.strategy = parse_strategy(a.strategy);
  if (a.seed != 0) cfg.seed = a.seed;
  if (a.with_ckld) cfg.with_ckld = true;
  if (a.threads > 0) cfg.threads = a.threads;

  for (const TaskSpec& t : cfg.tasks)
    if (!fs::exists(t.archive_path)) throw IoError("task archive does not exist: " + t.archive_path);

  if (a.dry_run) {
    std::cout << "chain config ok: " << cfg.tasks.size() << " tasks, strategy "
              << strategy_name(cfg.strategy) << "\n";
    return 0;
  }

  TaskChainReport report = run_chain(cfg);
  const std::string echo = chain_config_json(cfg);
  fs::create_directories(a.out_dir);
  write_text(a.out_dir + "/report.json", chain_report_json(report, echo));
  write_text(a.out_dir + "/rmse_final.csv",
             "# grtp-chain-rmse v1\n# config: " + echo + "\n" + chain_report_rmse_csv(report));
  write_text(a.out_dir + "/rmse_curves.csv",
             "# grtp-chain-curves v1\n# config: " + echo + "\n" + chain_report_curves_csv(report));

  bool partial = false;
  for (const StepReport& s : report.steps) partial = partial || s.partial;
  json summary;
  summary["report_dir"] = a.out_dir;
  summary["strategy"] = report.strategy;
  summary["partial"] = partial;
  summary["storage_violations"] = report.storage_violations;
  std::cout << summary.dump(2) << "\n";
  return partial ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lifelong trajectory-prediction workbench"};
  app.require_subcommand(1);

  IngestArgs ingest;
  CLI::App* cmd_ingest = app.add_subcommand("ingest", "build a scene archive from a corpus");
  cmd_ingest->add_option("--input", ingest.input, "corpus file (vehicle_id,frame,x,y)");
  cmd_ingest->add_option("--synthetic", ingest.synthetic, "built-in corpus: chainA|chainB|grid|gauss");
  cmd_ingest->add_option("--out", ingest.out, "output archive path")->required();
  cmd_ingest->add_option("--from-hz", ingest.from_hz, "corpus sampling rate (resampled to the grid)");
  cmd_ingest->add_option("--seed", ingest.seed, "synthetic corpus seed");
  cmd_ingest->add_option("--synth-pairs", ingest.synth_pairs, "vehicle pairs in chainA/chainB");
  cmd_ingest->add_option("--synth-scenes", ingest.synth_scenes, "scenes in gauss corpus");
  cmd_ingest->add_option("--synth-vehicles", ingest.synth_vehicles, "vehicles in grid corpus");
  cmd_ingest->add_option("--synth-frames", ingest.synth_frames, "frames in grid corpus");
  cmd_ingest->add_option("--sigma", ingest.synth_sigma, "gauss corpus noise (working units)");
  cmd_ingest->add_option("--shift-x", ingest.shift_x, "gauss corpus future shift x");
  cmd_ingest->add_option("--shift-y", ingest.shift_y, "gauss corpus future shift y");
  cmd_ingest->add_option("--config", ingest.config_file, "JSON config file (flags win)");
  ingest.scene.attach(cmd_ingest);

  CkldArgs ckld_args;
  CLI::App* cmd_ckld = app.add_subcommand("ckld", "divergence between scene archives");
  cmd_ckld->add_option("--archive1", ckld_args.archive1, "first archive (conditions come from here)");
  cmd_ckld->add_option("--archive2", ckld_args.archive2, "second archive");
  cmd_ckld->add_option("--archives", ckld_args.archives, "archives for --pairs all")->delimiter(',');
  cmd_ckld->add_option("--pairs", ckld_args.pairs, "'all' to emit the pairwise matrix");
  cmd_ckld->add_flag("--shared-mdn", ckld_args.shared_mdn, "fit one model and use it on both sides");
  cmd_ckld->add_option("--n-mc", ckld_args.ckld_cfg.n_mc, "Monte-Carlo samples per condition");
  cmd_ckld->add_option("--n-conditions", ckld_args.ckld_cfg.n_conditions,
                       "conditions drawn from corpus 1");
  cmd_ckld->add_option("--mdn-m", ckld_args.mdn_m, "mixture components");
  cmd_ckld->add_option("--mdn-steps", ckld_args.mdn_steps, "training steps");
  cmd_ckld->add_option("--mdn-batch", ckld_args.mdn_batch, "batch size");
  cmd_ckld->add_option("--mdn-lr", ckld_args.mdn_lr, "learning rate");
  cmd_ckld->add_option("--mdn-hidden", ckld_args.mdn_hidden, "trunk hidden widths")->delimiter(',');
  cmd_ckld->add_option("--seed", ckld_args.seed, "master seed");
  cmd_ckld->add_option("--threads", ckld_args.threads, "worker threads for the MC loop");
  cmd_ckld->add_option("--out", ckld_args.out, "report JSON path");
  cmd_ckld->add_option("--csv", ckld_args.csv, "matrix CSV path (--pairs all)");
  cmd_ckld->add_option("--config", ckld_args.config_file, "JSON config file (flags win)");

  TrainGanArgs gan_args;
  CLI::App* cmd_gan = app.add_subcommand("train-gan", "fit the generative memory on an archive");
  cmd_gan->add_option("--archive", gan_args.archive, "scene archive")->required();
  cmd_gan->add_option("--out", gan_args.out, "generator checkpoint path")->required();
  cmd_gan->add_option("--log-out", gan_args.log_out, "training log JSON path");
  cmd_gan->add_option("--steps", gan_args.gan.steps, "adversarial steps");
  cmd_gan->add_option("--batch", gan_args.gan.batch, "batch size");
  cmd_gan->add_option("--lr", gan_args.gan.learning_rate, "learning rate");
  cmd_gan->add_option("--gru-hidden", gan_args.gan.gru_hidden, "recurrent width");
  cmd_gan->add_option("--noise-embed", gan_args.gan.noise_embed, "noise embedding width");
  cmd_gan->add_option("--seq-embed", gan_args.gan.seq_embed, "sequence code width");
  cmd_gan->add_option("--pair-embed", gan_args.gan.pair_embed, "pairwise code width");
  cmd_gan->add_option("--mix-hidden", gan_args.gan.mix_hidden, "output mixer width");
  cmd_gan->add_option("--gp-samples", gan_args.gan.gp.samples_per_vehicle, "GP paths per vehicle");
  cmd_gan->add_option("--gp-lengthscale", gan_args.gan.gp.rbf_lengthscale, "RBF lengthscale (steps)");
  cmd_gan->add_option("--seed", gan_args.seed, "master seed");
  cmd_gan->add_option("--config", gan_args.config_file, "JSON config file (flags win)");

  ReplayArgs replay_args;
  CLI::App* cmd_replay = app.add_subcommand("replay", "draw scenes from a trained generator");
  cmd_replay->add_option("--model", replay_args.model, "generator checkpoint")->required();
  cmd_replay->add_option("--out", replay_args.out, "output archive")->required();
  cmd_replay->add_option("--n", replay_args.n, "scene count");
  cmd_replay->add_option("--seed", replay_args.seed, "replay seed");

  TrainPredictorArgs pred_args;
  CLI::App* cmd_pred = app.add_subcommand("train-predictor", "fit the task model");
  cmd_pred->add_option("--archive", pred_args.archives, "scene archives (repeatable)")
      ->required()
      ->delimiter(',');
  cmd_pred->add_option("--out", pred_args.out, "predictor checkpoint path")->required();
  cmd_pred->add_option("--init", pred_args.init, "warm-start checkpoint (fine-tune)");
  cmd_pred->add_option("--steps", pred_args.cfg.steps, "training steps");
  cmd_pred->add_option("--batch", pred_args.cfg.batch, "batch size");
  cmd_pred->add_option("--lr", pred_args.cfg.learning_rate, "learning rate");
  cmd_pred->add_option("--enc-hidden", pred_args.cfg.enc_hidden, "encoder LSTM width");
  cmd_pred->add_option("--fuse", pred_args.cfg.fuse, "fused code / decoder width");
  cmd_pred->add_option("--seed", pred_args.seed, "master seed");
  cmd_pred->add_option("--config", pred_args.config_file, "JSON config file (flags win)");

  EvaluateArgs eval_args;
  CLI::App* cmd_eval = app.add_subcommand("evaluate", "per-horizon RMSE of a predictor");
  cmd_eval->add_option("--model", eval_args.model, "predictor checkpoint")->required();
  cmd_eval->add_option("--archive", eval_args.archive, "scene archive")->required();
  cmd_eval->add_option("--out", eval_args.out, "report JSON path");
  cmd_eval->add_option("--csv", eval_args.csv, "report CSV path");
  cmd_eval->add_option("--task-id", eval_args.task_id, "task label in the report");

  ChainArgs chain_args;
  CLI::App* cmd_chain = app.add_subcommand("chain", "run a lifelong task chain");
  cmd_chain->add_option("--config", chain_args.config_file, "chain config JSON");
  cmd_chain->add_option("--strategy", chain_args.strategy, "GRTP-D|GRTP-T|JT|FM|FT");
  cmd_chain->add_option("--tasks", chain_args.tasks, "id=archive[,id=archive...]");
  cmd_chain->add_option("--out-dir", chain_args.out_dir, "report directory");
  cmd_chain->add_option("--seed", chain_args.seed, "master seed override");
  cmd_chain->add_flag("--dry-run", chain_args.dry_run, "validate config and exit");
  cmd_chain->add_flag("--with-ckld", chain_args.with_ckld, "also compute the task divergence matrix");
  cmd_chain->add_option("--threads", chain_args.threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (cmd_ingest->parsed()) {
      apply_config_file(cmd_ingest, ingest.config_file);
      return run_ingest(ingest);
    }
    if (cmd_ckld->parsed()) {
      apply_config_file(cmd_ckld, ckld_args.config_file);
      return run_ckld(ckld_args);
    }
    if (cmd_gan->parsed()) {
      apply_config_file(cmd_gan, gan_args.config_file);
      return run_train_gan(gan_args);
    }
    if (cmd_replay->parsed()) return run_replay(replay_args);
    if (cmd_pred->parsed()) {
      apply_config_file(cmd_pred, pred_args.config_file);
      return run_train_predictor(pred_args);
    }
    if (cmd_eval->parsed()) return run_evaluate(eval_args);
    if (cmd_chain->parsed()) return run_chain_cmd(chain_args);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
