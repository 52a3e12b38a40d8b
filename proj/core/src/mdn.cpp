#include "grtp/mdn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "json.hpp"

namespace grtp {

using nn::Matrix;
using nn::Tape;
using nn::Var;

bool GmmParams::valid(double tol) const {
  if (weights.size() == 0 || stds.size() != weights.size() || means.rows() != weights.size())
    return false;
  if (std::abs(weights.sum() - 1.0) > tol) return false;
  if ((weights.array() < 0.0).any()) return false;
  if ((stds.array() <= 0.0).any()) return false;
  return true;
}

nn::MlpSpec MdnModel::trunk_spec() const {
  nn::MlpSpec spec;
  spec.dims.push_back(cfg.d_x);
  for (int h : cfg.trunk_hidden) spec.dims.push_back(h);
  spec.tanh_output = true;  // trunk emits the shared feature encoding
  return spec;
}

MdnModel make_mdn(const MdnConfig& cfg) {
  if (cfg.d_x < 1 || cfg.d_y < 1) throw ConfigError("mdn: d_x and d_y must be set");
  if (cfg.m < 1) throw ConfigError("mdn: m must be >= 1");
  if (cfg.trunk_hidden.empty()) throw ConfigError("mdn: trunk needs at least one hidden layer");
  MdnModel model;
  model.cfg = cfg;
  Rng rng = Rng(cfg.seed).derive("mdn-init");
  init_mlp(model.params, "trunk", model.trunk_spec(), rng);
  const int z = cfg.trunk_hidden.back();
  nn::init_dense(model.params, "head_alpha", z, cfg.m, rng);
  nn::init_dense(model.params, "head_mu", z, cfg.m * cfg.d_y, rng);
  nn::init_dense(model.params, "head_sigma", z, cfg.m, rng);
  return model;
}

namespace {

struct HeadOutputs {
  Matrix alpha_logits;  // m x B
  Matrix mu;            // (m d_y) x B
  Matrix sigma_raw;     // m x B
};

HeadOutputs mdn_heads(const MdnModel& model, const Matrix& X) {
  Tape tape;
  nn::ParamVars vars = lift(tape, model.params, false);
  Var x = tape.constant(X);
  Var z = mlp_forward(tape, vars, "trunk", model.trunk_spec(), x);
  HeadOutputs out;
  out.alpha_logits = tape.value(dense_forward(tape, vars, "head_alpha", z));
  out.mu = tape.value(dense_forward(tape, vars, "head_mu", z));
  out.sigma_raw = tape.value(dense_forward(tape, vars, "head_sigma", z));
  return out;
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

GmmParams gmm_from_columns(const MdnConfig& cfg, const HeadOutputs& h, Eigen::Index col) {
  GmmParams g;
  const int m = cfg.m;
  g.weights.resize(m);
  g.stds.resize(m);
  g.means.resize(m, cfg.d_y);
  const double mx = h.alpha_logits.col(col).maxCoeff();
  double denom = 0.0;
  for (int i = 0; i < m; ++i) denom += std::exp(h.alpha_logits(i, col) - mx);
  for (int i = 0; i < m; ++i) {
    g.weights(i) = std::exp(h.alpha_logits(i, col) - mx) / denom;
    g.stds(i) = std::max(stable_softplus(h.sigma_raw(i, col)), cfg.sigma_floor);
    for (int d = 0; d < cfg.d_y; ++d) g.means(i, d) = h.mu(i * cfg.d_y + d, col);
  }
  return g;
}

}  // namespace

GmmParams mdn_forward(const MdnModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.cfg.d_x)
    throw DimensionError("mdn_forward: condition has dimension " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(model.cfg.d_x));
  HeadOutputs h = mdn_heads(model, x);
  return gmm_from_columns(model.cfg, h, 0);
}

std::vector<GmmParams> mdn_forward_batch(const MdnModel& model, const Eigen::MatrixXd& X) {
  if (X.rows() != model.cfg.d_x) throw DimensionError("mdn_forward_batch: condition dimension mismatch");
  HeadOutputs h = mdn_heads(model, X);
  std::vector<GmmParams> out;
  out.reserve(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index c = 0; c < X.cols(); ++c) out.push_back(gmm_from_columns(model.cfg, h, c));
  return out;
}

double gmm_log_density(const GmmParams& g, const Eigen::VectorXd& y) {
  if (y.size() != g.dim()) throw DimensionError("gmm_log_density: dimension mismatch");
  const double d = static_cast<double>(g.dim());
  const double log2pi = std::log(2.0 * std::numbers::pi);
  double best = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd terms(g.components());
  for (int i = 0; i < g.components(); ++i) {
    const double s = g.stds(i);
    const double sq = (y - g.means.row(i).transpose()).squaredNorm();
    terms(i) = std::log(g.weights(i)) - sq / (2.0 * s * s) - d * std::log(s) - 0.5 * d * log2pi;
    best = std::max(best, terms(i));
  }
  double acc = 0.0;
  for (int i = 0; i < g.components(); ++i) acc += std::exp(terms(i) - best);
  return best + std::log(acc);
}

Eigen::VectorXd gmm_sample(const GmmParams& g, Rng& rng) {
  const double u = rng.uniform();
  int comp = g.components() - 1;
  double acc = 0.0;
  for (int i = 0; i < g.components(); ++i) {
    acc += g.weights(i);
    if (u < acc) {
      comp = i;
      break;
    }
  }
  Eigen::VectorXd y(g.dim());
  for (int d = 0; d < g.dim(); ++d) y(d) = g.means(comp, d) + g.stds(comp) * rng.normal();
  return y;
}

Var mdn_nll(Tape& tape, const nn::ParamVars& vars, const MdnModel& model, const Eigen::MatrixXd& X,
            const Eigen::MatrixXd& Y) {
  const MdnConfig& cfg = model.cfg;
  if (X.rows() != cfg.d_x || Y.rows() != cfg.d_y || X.cols() != Y.cols())
    throw DimensionError("mdn_nll: batch shape mismatch");
  const double d = static_cast<double>(cfg.d_y);
  const double log2pi = std::log(2.0 * std::numbers::pi);

  Var x = tape.constant(X);
  Var y = tape.constant(Y);
  Var z = mlp_forward(tape, vars, "trunk", model.trunk_spec(), x);
  Var alpha_logits = dense_forward(tape, vars, "head_alpha", z);            // m x B
  Var mu = dense_forward(tape, vars, "head_mu", z);                         // (m d_y) x B
  Var sigma = tape.max_floor(tape.softplus(dense_forward(tape, vars, "head_sigma", z)),
                             cfg.sigma_floor);                              // m x B
  Var log_alpha = tape.sub(alpha_logits,
                           tape.concat_rows(std::vector<Var>(
                               static_cast<std::size_t>(cfg.m), tape.logsumexp_colwise(alpha_logits))));

  std::vector<Var> component_rows;
  component_rows.reserve(static_cast<std::size_t>(cfg.m));
  for (int i = 0; i < cfg.m; ++i) {
    Var mu_i = tape.slice_rows(mu, i * cfg.d_y, cfg.d_y);
    Var diff = tape.sub(mu_i, y);
    Var sq = tape.colwise_sum(tape.square(diff));      // 1 x B
    Var s_i = tape.slice_rows(sigma, i, 1);            // 1 x B
    Var var2 = tape.scale(tape.square(s_i), 2.0);
    Var quad = tape.neg(tape.div(sq, var2));
    Var log_norm = tape.affine(tape.scale(tape.log_(s_i), -d), 1.0, -0.5 * d * log2pi);
    Var log_alpha_i = tape.slice_rows(log_alpha, i, 1);
    component_rows.push_back(tape.add(tape.add(quad, log_norm), log_alpha_i));
  }
  Var log_density = tape.logsumexp_colwise(tape.concat_rows(component_rows));  // 1 x B
  return tape.neg(tape.mean_all(log_density));
}

namespace {

double eval_nll(const MdnModel& model, const Matrix& X, const Matrix& Y) {
  Tape tape;
  nn::ParamVars vars = lift(tape, model.params, false);
  return tape.value(mdn_nll(tape, vars, model, X, Y))(0, 0);
}

Matrix columns(const std::vector<Eigen::VectorXd>& data, const std::vector<std::size_t>& idx,
               std::size_t from, std::size_t to) {
  Matrix out(data.front().size(), static_cast<Eigen::Index>(to - from));
  for (std::size_t i = from; i < to; ++i) out.col(static_cast<Eigen::Index>(i - from)) = data[idx[i]];
  return out;
}

}  // namespace

MdnTrainResult train_mdn(const std::vector<Eigen::VectorXd>& X,
                         const std::vector<Eigen::VectorXd>& Y, MdnConfig cfg) {
  if (X.empty() || X.size() != Y.size()) throw ConfigError("train_mdn: empty or mismatched data");
  if (cfg.d_x == 0) cfg.d_x = static_cast<int>(X.front().size());
  if (cfg.d_y == 0) cfg.d_y = static_cast<int>(Y.front().size());

  MdnTrainResult result;
  result.model = make_mdn(cfg);
  MdnModel& model = result.model;

  Rng rng = Rng(cfg.seed).derive("mdn-train");
  std::vector<std::size_t> order(X.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(i)]);

  std::size_t n_val = static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(X.size()));
  n_val = std::min(n_val, X.size() - 1);
  const std::size_t n_train = X.size() - n_val;

  Matrix val_x, val_y;
  if (n_val > 0) {
    val_x = columns(X, order, n_train, X.size());
    val_y = columns(Y, order, n_train, X.size());
    result.initial_val_nll = eval_nll(model, val_x, val_y);
  }

  nn::AdamState adam = nn::AdamState::init(model.params, {cfg.learning_rate, 0.9, 0.999, 1e-8});
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), n_train);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<long>(n_train));

  std::size_t cursor = n_train;  // forces a reshuffle on the first step
  double last_grad_norm = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    if (cursor + batch > n_train) {
      for (std::size_t i = train_idx.size(); i > 1; --i)
        std::swap(train_idx[i - 1], train_idx[rng.uniform_int(i)]);
      cursor = 0;
    }
    std::vector<std::size_t> batch_idx(train_idx.begin() + static_cast<long>(cursor),
                                       train_idx.begin() + static_cast<long>(cursor + batch));
    cursor += batch;
    Matrix bx(cfg.d_x, static_cast<Eigen::Index>(batch)), by(cfg.d_y, static_cast<Eigen::Index>(batch));
    for (std::size_t i = 0; i < batch; ++i) {
      bx.col(static_cast<Eigen::Index>(i)) = X[batch_idx[i]];
      by.col(static_cast<Eigen::Index>(i)) = Y[batch_idx[i]];
    }

    Tape tape;
    nn::ParamVars vars = lift(tape, model.params);
    Var loss = mdn_nll(tape, vars, model, bx, by);
    const double loss_v = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_v)) {
      int floor_hits = 0;
      GmmParams probe = mdn_forward(model, bx.col(0));
      for (int i = 0; i < probe.components(); ++i)
        if (probe.stds(i) <= cfg.sigma_floor) ++floor_hits;
      throw NumericError("train_mdn: NLL diverged at step " + std::to_string(step) +
                         " (variance-floor hits: " + std::to_string(floor_hits) +
                         ", last grad norm: " + std::to_string(last_grad_norm) + ")");
    }
    tape.backward(loss);
    nn::GradResult grads = collect_grads(tape, vars, model.params);
    last_grad_norm = 0.0;
    for (const auto& [name, g] : grads.grads.blocks) last_grad_norm += g.squaredNorm();
    last_grad_norm = std::sqrt(last_grad_norm);
    nn::AdamResult res = adam_step(model.params, grads.grads, adam);
    if (!res.applied)
      throw NumericError("train_mdn: " + res.diagnostic + " at step " + std::to_string(step));

    if (step % 50 == 0 || step == cfg.steps - 1) {
      MdnTrainLogEntry e;
      e.step = step;
      e.train_nll = loss_v;
      e.val_nll = n_val > 0 ? eval_nll(model, val_x, val_y) : loss_v;
      result.log.push_back(e);
    }
  }
  result.final_val_nll = n_val > 0 ? eval_nll(model, val_x, val_y) : result.log.back().train_nll;
  return result;
}

KldEstimate kld_mc(const GmmParams& g1, const GmmParams& g2, int n_mc, Rng& rng) {
  if (g1.dim() != g2.dim()) throw DimensionError("kld_mc: mixtures have different dimensions");
  if (n_mc < 1) throw ConfigError("kld_mc: n_mc must be >= 1");
  double sum = 0.0, sum_sq = 0.0;
  for (int j = 0; j < n_mc; ++j) {
    const Eigen::VectorXd y = gmm_sample(g1, rng);
    const double v = gmm_log_density(g1, y) - gmm_log_density(g2, y);
    sum += v;
    sum_sq += v * v;
  }
  KldEstimate est;
  est.n = n_mc;
  est.mean = sum / n_mc;
  if (n_mc > 1) {
    const double var = std::max(0.0, (sum_sq - sum * sum / n_mc) / (n_mc - 1));
    est.standard_error = std::sqrt(var / n_mc);
  }
  return est;
}

CkldResult ckld(const MdnModel& m1, const MdnModel& m2,
                const std::vector<Eigen::VectorXd>& conditions_from_corpus1, const CkldConfig& cfg) {
  if (conditions_from_corpus1.empty()) throw ConfigError("ckld: no conditions supplied");
  if (cfg.n_conditions < 1 || cfg.n_mc < 1) throw ConfigError("ckld: invalid config");

  Rng master(cfg.rng_seed);
  // uniform subsample without replacement when the corpus is larger than the cap
  std::vector<std::size_t> pick(conditions_from_corpus1.size());
  std::iota(pick.begin(), pick.end(), 0);
  const std::size_t n_cond =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.n_conditions), pick.size());
  {
    Rng shuffle_rng = master.derive("ckld-conditions");
    for (std::size_t i = pick.size(); i > 1; --i)
      std::swap(pick[i - 1], pick[shuffle_rng.uniform_int(i)]);
  }
  pick.resize(n_cond);

  CkldResult result;
  result.n_conditions = static_cast<int>(n_cond);
  result.n_mc = cfg.n_mc;
  result.shared_model = &m1 == &m2;
  result.per_condition.assign(n_cond, 0.0);

  parallel_for(n_cond, cfg.threads, [&](std::size_t i) {
    const Eigen::VectorXd& x = conditions_from_corpus1[pick[i]];
    const GmmParams g1 = mdn_forward(m1, x);
    const GmmParams g2 = result.shared_model ? g1 : mdn_forward(m2, x);
    Rng stream = master.derive("ckld-mc", i);
    result.per_condition[i] = kld_mc(g1, g2, cfg.n_mc, stream).mean;
  });

  double sum = 0.0;
  for (double v : result.per_condition) sum += v;
  result.mean = sum / static_cast<double>(n_cond);
  if (n_cond > 1) {
    double ss = 0.0;
    for (double v : result.per_condition) ss += (v - result.mean) * (v - result.mean);
    result.standard_error = std::sqrt(ss / static_cast<double>(n_cond - 1) / static_cast<double>(n_cond));
  }
  return result;
}

ConditionedData condition_scenes(const std::vector<PredictionScene>& scenes,
                                 const SceneConfig& cfg) {
  ConditionedData out;
  out.d_x = condition_dimension(cfg);
  out.d_y = 2 * cfg.t_f;
  out.conditions.reserve(scenes.size());
  out.futures.reserve(scenes.size());
  for (const PredictionScene& scene : scenes) {
    LaplacianFeatures feats = laplacian_features(scene, cfg);
    PredictionScene norm = scene.normalized() ? scene : normalize_scene(scene);
    out.conditions.push_back(condition_vector(norm, feats, cfg).values);
    Eigen::VectorXd y(out.d_y);
    if (static_cast<int>(norm.target_future.size()) != cfg.t_f)
      throw DimensionError("condition_scenes: future length does not match config");
    for (int k = 0; k < cfg.t_f; ++k) {
      y(2 * k) = norm.target_future[static_cast<std::size_t>(k)].x();
      y(2 * k + 1) = norm.target_future[static_cast<std::size_t>(k)].y();
    }
    out.futures.push_back(std::move(y));
  }
  return out;
}

CkldRun ckld_between_corpora(const std::vector<PredictionScene>& corpus1,
                             const std::vector<PredictionScene>& corpus2,
                             const SceneConfig& scene_cfg, MdnConfig mdn_cfg,
                             const CkldConfig& ckld_cfg, bool shared_model) {
  ConditionedData data1 = condition_scenes(corpus1, scene_cfg);
  mdn_cfg.d_x = data1.d_x;
  mdn_cfg.d_y = data1.d_y;

  CkldRun run;
  MdnConfig cfg1 = mdn_cfg;
  cfg1.seed = Rng(mdn_cfg.seed).derive("corpus1").seed();
  run.model1 = train_mdn(data1.conditions, data1.futures, cfg1).model;
  if (shared_model) {
    run.model2 = run.model1;
    run.result = ckld(run.model1, run.model1, data1.conditions, ckld_cfg);
  } else {
    ConditionedData data2 = condition_scenes(corpus2, scene_cfg);
    if (data2.d_x != data1.d_x || data2.d_y != data1.d_y)
      throw DimensionError("ckld_between_corpora: corpora condition layouts differ");
    MdnConfig cfg2 = mdn_cfg;
    cfg2.seed = Rng(mdn_cfg.seed).derive("corpus2").seed();
    run.model2 = train_mdn(data2.conditions, data2.futures, cfg2).model;
    run.result = ckld(run.model1, run.model2, data1.conditions, ckld_cfg);
  }
  return run;
}

std::string ckld_report_json(const CkldResult& result, const std::string& corpus1_id,
                             const std::string& corpus2_id, const std::string& run_config_json) {
  nlohmann::ordered_json doc;
  doc["format"] = "grtp-ckld-report";
  doc["version"] = 1;
  doc["corpus1"] = corpus1_id;
  doc["corpus2"] = corpus2_id;
  doc["run_config"] =
      run_config_json.empty() ? nlohmann::ordered_json::object() : nlohmann::ordered_json::parse(run_config_json);
  doc["shared_model"] = result.shared_model;
  doc["n_conditions"] = result.n_conditions;
  doc["n_mc"] = result.n_mc;
  doc["mean"] = result.mean;
  doc["standard_error"] = result.standard_error;

  // fixed 24-bin histogram of the per-condition estimates
  nlohmann::ordered_json hist;
  if (!result.per_condition.empty()) {
    const auto [mn_it, mx_it] = std::minmax_element(result.per_condition.begin(), result.per_condition.end());
    double lo = *mn_it, hi = *mx_it;
    if (hi == lo) hi = lo + 1.0;
    const int bins = 24;
    std::vector<int> counts(bins, 0);
    for (double v : result.per_condition) {
      int b = static_cast<int>((v - lo) / (hi - lo) * bins);
      counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))]++;
    }
    hist["lo"] = lo;
    hist["hi"] = hi;
    hist["counts"] = counts;
  }
  doc["per_condition_histogram"] = std::move(hist);
  return doc.dump(2) + "\n";
}

}  // namespace grtp
