#include "grtp/gan.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace grtp {

using nn::Matrix;
using nn::MlpSpec;
using nn::ParamVars;
using nn::RnnSpec;
using nn::Tape;
using nn::Var;

void GanConfig::validate() const {
  if (t_h < 2 || t_f < 1) throw ConfigError("gan: t_h >= 2 and t_f >= 1 required");
  if (gp.samples_per_vehicle < 1) throw ConfigError("gan: samples_per_vehicle must be >= 1");
  if (gp.rbf_lengthscale <= 0.0 || gp.rbf_variance <= 0.0)
    throw ConfigError("gan: RBF kernel needs positive lengthscale and variance");
  if (gp.jitter < 0.0 || gp.jitter > 1e-8) throw ConfigError("gan: jitter must be in [0, 1e-8]");
  if (batch < 1 || steps < 0) throw ConfigError("gan: invalid batch/steps");
}

Eigen::MatrixXd sample_gp_prior(const GpPriorConfig& cfg, int n_vehicles, Rng& rng) {
  if (n_vehicles < 1) throw ConfigError("sample_gp_prior: n_vehicles must be >= 1");
  const int t = cfg.sequence_length;
  Eigen::MatrixXd kernel(t, t);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < t; ++j) {
      const double d = static_cast<double>(i - j);
      kernel(i, j) = cfg.rbf_variance * std::exp(-d * d / (2.0 * cfg.rbf_lengthscale * cfg.rbf_lengthscale));
    }
  kernel.diagonal().array() += cfg.jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(kernel);
  if (llt.info() != Eigen::Success)
    throw NumericError("sample_gp_prior: kernel not positive definite after jitter");
  const Eigen::MatrixXd L = llt.matrixL();

  const int paths = cfg.samples_per_vehicle * n_vehicles;
  Eigen::MatrixXd z(paths, t);
  for (int p = 0; p < paths; ++p)
    for (int s = 0; s < t; ++s) z(p, s) = rng.normal();
  return z * L.transpose();  // rows are L * z_p
}

Eigen::MatrixXd sample_gp_prior(const GpPriorConfig& cfg, int n_vehicles) {
  Rng rng(cfg.rng_seed);
  return sample_gp_prior(cfg, n_vehicles, rng);
}

const std::vector<int>& LabelSampler::sample(Rng& rng) const {
  if (tuples.empty()) throw ConfigError("label sampler: empty");
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    acc += weights[i];
    if (u < acc) return tuples[i];
  }
  return tuples.back();
}

std::vector<std::size_t> canonical_neighbor_order(const PredictionScene& scene) {
  std::vector<std::size_t> idx(scene.neighbor_histories.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto lex_less = [&](std::size_t a, std::size_t b) {
    const int la = scene.position_labels[a + 1];
    const int lb = scene.position_labels[b + 1];
    if (la != lb) return la < lb;
    const Track& ta = scene.neighbor_histories[a];
    const Track& tb = scene.neighbor_histories[b];
    for (std::size_t k = 0; k < std::min(ta.size(), tb.size()); ++k) {
      if (ta[k].x() != tb[k].x()) return ta[k].x() < tb[k].x();
      if (ta[k].y() != tb[k].y()) return ta[k].y() < tb[k].y();
    }
    return ta.size() < tb.size();
  };
  std::stable_sort(idx.begin(), idx.end(), lex_less);
  return idx;
}

namespace {

std::vector<int> canonical_tuple(const PredictionScene& scene) {
  std::vector<int> tuple;
  tuple.reserve(scene.position_labels.size());
  tuple.push_back(0);
  for (std::size_t k : canonical_neighbor_order(scene)) tuple.push_back(scene.position_labels[k + 1]);
  return tuple;
}

}  // namespace

LabelSampler LabelSampler::from_scenes(const std::vector<PredictionScene>& scenes) {
  if (scenes.empty()) throw ConfigError("label sampler: no scenes");
  std::map<std::vector<int>, std::size_t> counts;
  for (const PredictionScene& s : scenes) counts[canonical_tuple(s)]++;
  LabelSampler out;
  const double total = static_cast<double>(scenes.size());
  for (const auto& [tuple, count] : counts) {
    out.tuples.push_back(tuple);
    out.weights.push_back(static_cast<double>(count) / total);
  }
  return out;
}

LabelSampler LabelSampler::merge(const LabelSampler& a, double wa, const LabelSampler& b, double wb) {
  const double total = wa + wb;
  std::map<std::vector<int>, double> acc;
  for (std::size_t i = 0; i < a.tuples.size(); ++i) acc[a.tuples[i]] += wa / total * a.weights[i];
  for (std::size_t i = 0; i < b.tuples.size(); ++i) acc[b.tuples[i]] += wb / total * b.weights[i];
  LabelSampler out;
  for (const auto& [tuple, w] : acc) {
    out.tuples.push_back(tuple);
    out.weights.push_back(w);
  }
  return out;
}

namespace {

MlpSpec noise_enc_spec(const GanConfig& c) { return {{c.gp.samples_per_vehicle, c.noise_embed}, true}; }
MlpSpec cond_spec(const GanConfig& c) { return {{kLabelAlphabetSize, c.gru_hidden}, true}; }
MlpSpec seq_enc_spec(const GanConfig& c) { return {{c.gru_hidden, c.seq_embed}, true}; }
MlpSpec pair_enc_spec(const GanConfig& c) { return {{c.seq_embed, c.pair_embed}, true}; }
MlpSpec mix_spec(const GanConfig& c) { return {{c.seq_embed + c.pair_embed, c.mix_hidden}, true}; }

MlpSpec step_enc_spec(const GanConfig& c) { return {{2, c.disc_step_embed}, true}; }
MlpSpec nei_enc_spec(const GanConfig& c) { return {{2 * c.t_h, c.disc_nei_embed}, true}; }
MlpSpec fuse_spec(const GanConfig& c) {
  return {{c.disc_step_embed * (c.t_h + c.t_f) + c.disc_nei_embed, c.disc_fuse1, c.disc_fuse2}, true};
}

}  // namespace

GeneratorModel make_generator(const GanConfig& cfg) {
  cfg.validate();
  GeneratorModel gen;
  gen.cfg = cfg;
  gen.cfg.gp.sequence_length = cfg.total_steps();
  Rng rng = Rng(cfg.seed).derive("gen-init");
  init_mlp(gen.params, "noise_enc", noise_enc_spec(cfg), rng);
  init_mlp(gen.params, "cond_f", cond_spec(cfg), rng);
  init_mlp(gen.params, "cond_b", cond_spec(cfg), rng);
  init_gru(gen.params, "gru_f", RnnSpec{cfg.noise_embed, cfg.gru_hidden}, rng);
  init_gru(gen.params, "gru_b", RnnSpec{cfg.noise_embed, cfg.gru_hidden}, rng);
  init_mlp(gen.params, "seq_enc", seq_enc_spec(cfg), rng);
  init_mlp(gen.params, "pair_enc", pair_enc_spec(cfg), rng);
  init_mlp(gen.params, "mix", mix_spec(cfg), rng);
  nn::init_dense(gen.params, "head", cfg.mix_hidden, 2, rng);
  gen.provenance = "r2gan:seed=" + std::to_string(cfg.seed);
  return gen;
}

DiscriminatorModel make_discriminator(const GanConfig& cfg) {
  cfg.validate();
  DiscriminatorModel dis;
  dis.cfg = cfg;
  Rng rng = Rng(cfg.seed).derive("dis-init");
  init_mlp(dis.params, "step_enc", step_enc_spec(cfg), rng);
  init_mlp(dis.params, "nei_enc", nei_enc_spec(cfg), rng);
  init_mlp(dis.params, "fuse", fuse_spec(cfg), rng);
  nn::init_dense(dis.params, "head", cfg.disc_fuse2, 1, rng);
  return dis;
}

std::vector<std::vector<Var>> generator_graph(Tape& tape, const ParamVars& vars, const GanConfig& cfg,
                                              const std::vector<std::vector<Var>>& noise,
                                              const std::vector<Var>& onehot_labels) {
  const int n = static_cast<int>(noise.size());
  if (n < 2) throw ValidationError("generator: at least two vehicles required for pairwise pooling");
  if (onehot_labels.size() != noise.size())
    throw DimensionError("generator: one condition per vehicle required");
  const int t = cfg.total_steps();

  // per-vehicle sequence codes
  std::vector<std::vector<Var>> seq_codes(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    std::vector<Var> embedded;
    embedded.reserve(static_cast<std::size_t>(t));
    for (int s = 0; s < t; ++s)
      embedded.push_back(mlp_forward(tape, vars, "noise_enc", noise_enc_spec(cfg),
                                     noise[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)]));
    Var hf0 = mlp_forward(tape, vars, "cond_f", cond_spec(cfg), onehot_labels[static_cast<std::size_t>(j)]);
    Var hb0 = mlp_forward(tape, vars, "cond_b", cond_spec(cfg), onehot_labels[static_cast<std::size_t>(j)]);
    nn::BiGruOut gru = bigru_sequence(tape, vars, "gru_f", "gru_b", embedded, hf0, hb0);
    std::vector<Var>& codes = seq_codes[static_cast<std::size_t>(j)];
    codes.reserve(static_cast<std::size_t>(t));
    for (int s = 0; s < t; ++s) {
      Var avg = tape.scale(tape.add(gru.forward[static_cast<std::size_t>(s)],
                                    gru.backward[static_cast<std::size_t>(s)]),
                           0.5);
      codes.push_back(mlp_forward(tape, vars, "seq_enc", seq_enc_spec(cfg), avg));
    }
  }

  // pairwise relation pooling and output head
  std::vector<std::vector<Var>> out(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    out[static_cast<std::size_t>(j)].reserve(static_cast<std::size_t>(t));
    for (int s = 0; s < t; ++s) {
      Var pooled{};
      bool first = true;
      for (int i = 0; i < n; ++i) {
        if (i == j) continue;
        Var diff = tape.sub(seq_codes[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)],
                            seq_codes[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)]);
        Var enc = mlp_forward(tape, vars, "pair_enc", pair_enc_spec(cfg), diff);
        pooled = first ? enc : tape.add(pooled, enc);
        first = false;
      }
      pooled = tape.scale(pooled, 1.0 / static_cast<double>(n - 1));
      Var mixed = mlp_forward(
          tape, vars, "mix", mix_spec(cfg),
          tape.concat_rows({seq_codes[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)], pooled}));
      out[static_cast<std::size_t>(j)].push_back(tape.tanh_(dense_forward(tape, vars, "head", mixed)));
    }
  }
  return out;
}

std::vector<std::vector<Var>> preprocess_scene_graph(Tape& tape,
                                                     const std::vector<std::vector<Var>>& vehicles,
                                                     int t_h) {
  if (vehicles.empty() || vehicles.front().empty())
    throw DimensionError("preprocess: empty scene");
  Var offset = vehicles[0][static_cast<std::size_t>(t_h - 1)];
  std::vector<std::vector<Var>> centered(vehicles.size());
  std::vector<Var> all;
  for (std::size_t j = 0; j < vehicles.size(); ++j) {
    centered[j].reserve(vehicles[j].size());
    for (Var v : vehicles[j]) {
      Var c = tape.sub(v, offset);
      centered[j].push_back(c);
      all.push_back(c);
    }
  }
  Var scale = tape.max_floor(tape.colwise_max_abs(tape.concat_rows(all)), 1e-12);
  std::vector<std::vector<Var>> out(vehicles.size());
  for (std::size_t j = 0; j < vehicles.size(); ++j) {
    out[j].reserve(centered[j].size());
    for (Var c : centered[j]) out[j].push_back(tape.div_rowvec(c, scale));
  }
  return out;
}

Var discriminator_graph(Tape& tape, const ParamVars& vars, const GanConfig& cfg,
                        const std::vector<Var>& target_steps,
                        const std::vector<std::vector<Var>>& neighbor_hist) {
  if (neighbor_hist.empty())
    throw ValidationError("discriminator: scene has zero neighbors");
  if (static_cast<int>(target_steps.size()) != cfg.total_steps())
    throw DimensionError("discriminator: target track length mismatch");

  std::vector<Var> hist_parts, fut_parts;
  for (int s = 0; s < cfg.t_h; ++s)
    hist_parts.push_back(mlp_forward(tape, vars, "step_enc", step_enc_spec(cfg),
                                     target_steps[static_cast<std::size_t>(s)]));
  for (int s = cfg.t_h; s < cfg.total_steps(); ++s)
    fut_parts.push_back(mlp_forward(tape, vars, "step_enc", step_enc_spec(cfg),
                                    target_steps[static_cast<std::size_t>(s)]));

  Var nei_sum{};
  bool first = true;
  for (const std::vector<Var>& nb : neighbor_hist) {
    if (static_cast<int>(nb.size()) != cfg.t_h)
      throw DimensionError("discriminator: neighbor history length mismatch");
    std::vector<Var> rel;
    rel.reserve(nb.size());
    for (int s = 0; s < cfg.t_h; ++s)
      rel.push_back(tape.sub(target_steps[static_cast<std::size_t>(s)], nb[static_cast<std::size_t>(s)]));
    Var enc = mlp_forward(tape, vars, "nei_enc", nei_enc_spec(cfg), tape.concat_rows(rel));
    nei_sum = first ? enc : tape.add(nei_sum, enc);
    first = false;
  }
  Var nei = tape.scale(nei_sum, 1.0 / static_cast<double>(neighbor_hist.size()));

  std::vector<Var> fused_in;
  fused_in.push_back(tape.concat_rows(hist_parts));
  fused_in.push_back(tape.concat_rows(fut_parts));
  fused_in.push_back(nei);
  Var fused = mlp_forward(tape, vars, "fuse", fuse_spec(cfg), tape.concat_rows(fused_in));
  return dense_forward(tape, vars, "head", fused);
}

namespace {

Matrix onehot_column(int label) {
  Matrix m = Matrix::Zero(kLabelAlphabetSize, 1);
  m(label_to_index(label), 0) = 1.0;
  return m;
}

/// Noise chunks [vehicle][step] of (m x B) from stacked GP paths laid out as
/// path index ((b * n) + j) * m + r.
std::vector<std::vector<Matrix>> split_noise(const Eigen::MatrixXd& paths, int n, int m, int t, int B) {
  std::vector<std::vector<Matrix>> noise(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    noise[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(t));
    for (int s = 0; s < t; ++s) {
      Matrix chunk(m, B);
      for (int b = 0; b < B; ++b)
        for (int r = 0; r < m; ++r) chunk(r, b) = paths((static_cast<long>(b) * n + j) * m + r, s);
      noise[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)] = std::move(chunk);
    }
  }
  return noise;
}

struct FakeBatch {
  std::vector<std::vector<Var>> vehicles;  // preprocessed, [vehicle][step]
};

FakeBatch build_fake(Tape& tape, const ParamVars& gen_vars, const GanConfig& cfg,
                     const std::vector<std::vector<int>>& tuples, Rng& rng) {
  const int B = static_cast<int>(tuples.size());
  const int n = static_cast<int>(tuples.front().size());
  const int t = cfg.total_steps();
  const int m = cfg.gp.samples_per_vehicle;
  GpPriorConfig gp = cfg.gp;
  gp.sequence_length = t;
  Eigen::MatrixXd paths = sample_gp_prior(gp, n * B, rng);
  std::vector<std::vector<Matrix>> chunks = split_noise(paths, n, m, t, B);
  std::vector<std::vector<Var>> noise(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    for (int s = 0; s < t; ++s)
      noise[static_cast<std::size_t>(j)].push_back(
          tape.constant(chunks[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)]));
  std::vector<Var> onehot;
  for (int j = 0; j < n; ++j) {
    Matrix oh = Matrix::Zero(kLabelAlphabetSize, B);
    for (int b = 0; b < B; ++b) oh(label_to_index(tuples[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)]), b) = 1.0;
    onehot.push_back(tape.constant(oh));
  }
  FakeBatch out;
  out.vehicles = preprocess_scene_graph(tape, generator_graph(tape, gen_vars, cfg, noise, onehot), cfg.t_h);
  return out;
}

struct RealBatch {
  std::vector<Var> target_steps;                 // t of (2 x B)
  std::vector<std::vector<Var>> neighbor_hist;   // [neighbor][t_h]
  std::vector<std::vector<int>> tuples;
};

RealBatch assemble_real(Tape& tape, const std::vector<const PredictionScene*>& scenes, int t_h,
                        int t_f) {
  const int B = static_cast<int>(scenes.size());
  const int n_nb = static_cast<int>(scenes.front()->neighbor_histories.size());
  const int t = t_h + t_f;
  RealBatch out;
  std::vector<std::vector<std::size_t>> orders;
  orders.reserve(scenes.size());
  for (const PredictionScene* s : scenes) orders.push_back(canonical_neighbor_order(*s));

  for (int s = 0; s < t; ++s) {
    Matrix step(2, B);
    for (int b = 0; b < B; ++b) {
      const PredictionScene& sc = *scenes[static_cast<std::size_t>(b)];
      const Point& p = s < t_h ? sc.target_history[static_cast<std::size_t>(s)]
                               : sc.target_future[static_cast<std::size_t>(s - t_h)];
      step(0, b) = p.x();
      step(1, b) = p.y();
    }
    out.target_steps.push_back(tape.constant(step));
  }
  out.neighbor_hist.resize(static_cast<std::size_t>(n_nb));
  for (int k = 0; k < n_nb; ++k) {
    for (int s = 0; s < t_h; ++s) {
      Matrix step(2, B);
      for (int b = 0; b < B; ++b) {
        const PredictionScene& sc = *scenes[static_cast<std::size_t>(b)];
        const Point& p = sc.neighbor_histories[orders[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)]]
                            [static_cast<std::size_t>(s)];
        step(0, b) = p.x();
        step(1, b) = p.y();
      }
      out.neighbor_hist[static_cast<std::size_t>(k)].push_back(tape.constant(step));
    }
  }
  for (const PredictionScene* s : scenes) out.tuples.push_back(canonical_tuple(*s));
  return out;
}

std::vector<Var> fake_target(const FakeBatch& fake) { return fake.vehicles.front(); }

std::vector<std::vector<Var>> fake_neighbors(const FakeBatch& fake, int t_h) {
  std::vector<std::vector<Var>> out;
  for (std::size_t j = 1; j < fake.vehicles.size(); ++j)
    out.emplace_back(fake.vehicles[j].begin(), fake.vehicles[j].begin() + t_h);
  return out;
}

}  // namespace

GeneratedScene generate_scene(const GeneratorModel& gen, const Eigen::MatrixXd& noise,
                              const std::vector<int>& conds) {
  const GanConfig& cfg = gen.cfg;
  const int n = static_cast<int>(conds.size());
  if (n < 2) throw ValidationError("generate_scene: at least two vehicles required");
  const int m = cfg.gp.samples_per_vehicle;
  const int t = cfg.total_steps();
  if (noise.rows() != static_cast<Eigen::Index>(m) * n || noise.cols() != t)
    throw DimensionError("generate_scene: noise must be (samples_per_vehicle * n) x (t_h + t_f)");

  // canonical processing order: by label, then by noise values, so pooling
  // sums run in a data-determined order regardless of input permutation
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto chunk_lex_less = [&](int a, int b) {
    if (conds[static_cast<std::size_t>(a)] != conds[static_cast<std::size_t>(b)])
      return conds[static_cast<std::size_t>(a)] < conds[static_cast<std::size_t>(b)];
    for (int r = 0; r < m; ++r)
      for (int s = 0; s < t; ++s) {
        const double va = noise(static_cast<Eigen::Index>(a) * m + r, s);
        const double vb = noise(static_cast<Eigen::Index>(b) * m + r, s);
        if (va != vb) return va < vb;
      }
    return false;
  };
  std::stable_sort(order.begin(), order.end(), chunk_lex_less);

  Tape tape;
  ParamVars vars = lift(tape, gen.params, false);
  std::vector<std::vector<Var>> noise_vars(static_cast<std::size_t>(n));
  std::vector<Var> onehot;
  for (int slot = 0; slot < n; ++slot) {
    const int src = order[static_cast<std::size_t>(slot)];
    for (int s = 0; s < t; ++s) {
      Matrix chunk(m, 1);
      for (int r = 0; r < m; ++r) chunk(r, 0) = noise(static_cast<Eigen::Index>(src) * m + r, s);
      noise_vars[static_cast<std::size_t>(slot)].push_back(tape.constant(chunk));
    }
    onehot.push_back(tape.constant(onehot_column(conds[static_cast<std::size_t>(src)])));
  }
  std::vector<std::vector<Var>> out_vars = generator_graph(tape, vars, cfg, noise_vars, onehot);

  GeneratedScene scene;
  scene.labels = conds;
  scene.vehicles.resize(static_cast<std::size_t>(n));
  for (int slot = 0; slot < n; ++slot) {
    const int src = order[static_cast<std::size_t>(slot)];
    Track& track = scene.vehicles[static_cast<std::size_t>(src)];
    track.reserve(static_cast<std::size_t>(t));
    for (int s = 0; s < t; ++s) {
      const Matrix& v = tape.value(out_vars[static_cast<std::size_t>(slot)][static_cast<std::size_t>(s)]);
      track.emplace_back(v(0, 0), v(1, 0));
    }
  }
  return scene;
}

double discriminate(const DiscriminatorModel& dis, const PredictionScene& scene) {
  if (!scene.normalized()) throw ValidationError("discriminate: scene must be normalized");
  if (scene.neighbor_histories.empty()) throw ValidationError("discriminate: scene has zero neighbors");
  const GanConfig& cfg = dis.cfg;
  if (static_cast<int>(scene.target_history.size()) != cfg.t_h ||
      static_cast<int>(scene.target_future.size()) != cfg.t_f)
    throw DimensionError("discriminate: scene does not match the model's time grid");

  Tape tape;
  ParamVars vars = lift(tape, dis.params, false);
  RealBatch batch = assemble_real(tape, {&scene}, cfg.t_h, cfg.t_f);
  Var logit = discriminator_graph(tape, vars, cfg, batch.target_steps, batch.neighbor_hist);
  return tape.value(logit)(0, 0);
}

double energy_distance_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ConfigError("energy_distance_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto self_term = [](const std::vector<double>& v) {
    // sum_{i<j} (v_j - v_i) via sorted prefix identities, normalized by n^2
    const double n = static_cast<double>(v.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
      acc += (2.0 * static_cast<double>(i) - n + 1.0) * v[i];
    return 2.0 * acc / (n * n);
  };
  // E|X - Y| with a merge walk over both sorted samples
  double cross = 0.0;
  {
    double acc_b = 0.0;     // sum of b elements seen so far
    std::size_t jb = 0;
    for (double x : a) {
      while (jb < b.size() && b[jb] <= x) acc_b += b[jb++];
      const double nb_left = static_cast<double>(jb);
      cross += x * nb_left - acc_b;  // contributions from b[j] <= x
    }
    // contributions from b[j] > x, by symmetry with roles swapped
    double acc_a = 0.0;
    std::size_t ja = 0;
    for (double y : b) {
      while (ja < a.size() && a[ja] < y) acc_a += a[ja++];
      const double na_left = static_cast<double>(ja);
      cross += y * na_left - acc_a;
    }
    cross /= static_cast<double>(a.size()) * static_cast<double>(b.size());
  }
  return 2.0 * cross - self_term(a) - self_term(b);
}

R2Gan train_r2gan(const std::vector<PredictionScene>& scenes, const GanConfig& cfg) {
  cfg.validate();
  std::vector<const PredictionScene*> usable;
  for (const PredictionScene& s : scenes) {
    if (!s.normalized() || !s.gan_ready()) continue;
    if (static_cast<int>(s.target_history.size()) != cfg.t_h ||
        static_cast<int>(s.target_future.size()) != cfg.t_f)
      continue;
    usable.push_back(&s);
  }
  if (usable.empty())
    throw ValidationError("train_r2gan: no normalized full-span scenes to train on");

  // group by vehicle count so batches share a layout
  std::map<int, std::vector<const PredictionScene*>> groups;
  for (const PredictionScene* s : usable) groups[s->vehicle_count()].push_back(s);
  std::vector<std::pair<int, std::vector<const PredictionScene*>>> group_list(groups.begin(),
                                                                              groups.end());

  R2Gan out;
  out.gen = make_generator(cfg);
  out.dis = make_discriminator(cfg);
  {
    std::vector<PredictionScene> copies;
    copies.reserve(usable.size());
    for (const PredictionScene* s : usable) copies.push_back(*s);
    out.gen.labels = LabelSampler::from_scenes(copies);
  }

  out.log.training_set_size = usable.size();
  nn::AdamState adam_g = nn::AdamState::init(out.gen.params, {cfg.learning_rate, 0.9, 0.999, 1e-8});
  nn::AdamState adam_d = nn::AdamState::init(out.dis.params, {cfg.learning_rate, 0.9, 0.999, 1e-8});
  Rng rng = Rng(cfg.seed).derive("gan-train");

  auto pick_batch = [&](Rng& r) {
    std::size_t total = usable.size();
    std::size_t pos = r.uniform_int(total);
    std::size_t gi = 0;
    for (; gi < group_list.size(); ++gi) {
      if (pos < group_list[gi].second.size()) break;
      pos -= group_list[gi].second.size();
    }
    const auto& g = group_list[gi].second;
    std::vector<const PredictionScene*> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch));
    for (int b = 0; b < cfg.batch; ++b) batch.push_back(g[r.uniform_int(g.size())]);
    return batch;
  };

  int collapse_run = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    double d_loss_v = 0.0;
    for (int du = 0; du < cfg.disc_updates_per_step; ++du) {
      std::vector<const PredictionScene*> batch = pick_batch(rng);
      Tape tape;
      ParamVars dis_vars = lift(tape, out.dis.params, true);
      ParamVars gen_vars = lift(tape, out.gen.params, false);
      RealBatch real = assemble_real(tape, batch, cfg.t_h, cfg.t_f);
      Var l_real = discriminator_graph(tape, dis_vars, cfg, real.target_steps, real.neighbor_hist);
      FakeBatch fake = build_fake(tape, gen_vars, cfg, real.tuples, rng);
      Var l_fake = discriminator_graph(tape, dis_vars, cfg, fake_target(fake), fake_neighbors(fake, cfg.t_h));
      // -log D(real) - log(1 - D(fake)) in a numerically stable form
      Var loss = tape.add(tape.mean_all(tape.softplus(tape.neg(l_real))),
                          tape.mean_all(tape.softplus(l_fake)));
      d_loss_v = tape.value(loss)(0, 0);
      if (!std::isfinite(d_loss_v)) throw NumericError("train_r2gan: discriminator loss diverged");
      tape.backward(loss);
      nn::GradResult grads = collect_grads(tape, dis_vars, out.dis.params);
      nn::AdamResult res = adam_step(out.dis.params, grads.grads, adam_d);
      if (!res.applied) throw NumericError("train_r2gan: " + res.diagnostic);
    }

    std::vector<const PredictionScene*> batch = pick_batch(rng);
    Tape tape;
    ParamVars gen_vars = lift(tape, out.gen.params, true);
    ParamVars dis_vars = lift(tape, out.dis.params, false);
    std::vector<std::vector<int>> tuples;
    tuples.reserve(batch.size());
    for (const PredictionScene* s : batch) tuples.push_back(canonical_tuple(*s));
    FakeBatch fake = build_fake(tape, gen_vars, cfg, tuples, rng);
    Var l_fake = discriminator_graph(tape, dis_vars, cfg, fake_target(fake), fake_neighbors(fake, cfg.t_h));
    Var loss_g = tape.mean_all(tape.softplus(tape.neg(l_fake)));  // non-saturating form
    const double g_loss_v = tape.value(loss_g)(0, 0);
    if (!std::isfinite(g_loss_v)) throw NumericError("train_r2gan: generator loss diverged");
    tape.backward(loss_g);
    nn::GradResult grads = collect_grads(tape, gen_vars, out.gen.params);
    nn::AdamResult res = adam_step(out.gen.params, grads.grads, adam_g);
    if (!res.applied) throw NumericError("train_r2gan: " + res.diagnostic);

    out.log.d_losses.push_back(d_loss_v);
    out.log.g_losses.push_back(g_loss_v);
    out.log.steps_run = step + 1;

    if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps) {
      std::vector<double> rx, ry, fx, fy;
      for (const PredictionScene* s : batch) {
        for (const Point& p : s->target_history) { rx.push_back(p.x()); ry.push_back(p.y()); }
        for (const Point& p : s->target_future) { rx.push_back(p.x()); ry.push_back(p.y()); }
      }
      const std::vector<std::vector<Var>>& fv = fake.vehicles;
      for (const Var v : fv.front()) {
        const Matrix& mv = tape.value(v);
        for (Eigen::Index c = 0; c < mv.cols(); ++c) {
          fx.push_back(mv(0, c));
          fy.push_back(mv(1, c));
        }
      }
      out.log.energy_x.emplace_back(step + 1, energy_distance_1d(rx, fx));
      out.log.energy_y.emplace_back(step + 1, energy_distance_1d(ry, fy));
    }

    if (d_loss_v < cfg.collapse_threshold) {
      if (++collapse_run >= cfg.collapse_patience) {
        out.log.collapse_warning = true;
        out.log.early_stopped = true;
        break;
      }
    } else {
      collapse_run = 0;
    }
  }
  return out;
}

std::vector<PredictionScene> replay(const GeneratorModel& gen, int n_scenes,
                                    const LabelSampler& conds, Rng& rng) {
  if (n_scenes < 0) throw ConfigError("replay: n_scenes must be >= 0");
  std::vector<PredictionScene> out;
  out.reserve(static_cast<std::size_t>(n_scenes));
  const GanConfig& cfg = gen.cfg;
  const int t = cfg.total_steps();
  const int m = cfg.gp.samples_per_vehicle;

  // draw all layouts first, then batch scenes sharing a vehicle count
  std::vector<std::vector<int>> tuples;
  tuples.reserve(static_cast<std::size_t>(n_scenes));
  for (int i = 0; i < n_scenes; ++i) tuples.push_back(conds.sample(rng));
  std::map<int, std::vector<std::size_t>> by_n;
  for (std::size_t i = 0; i < tuples.size(); ++i) by_n[static_cast<int>(tuples[i].size())].push_back(i);

  std::vector<PredictionScene> staged(static_cast<std::size_t>(n_scenes));
  constexpr int kMaxBatch = 256;
  int degenerate = 0;
  for (const auto& [n, idx] : by_n) {
    for (std::size_t start = 0; start < idx.size(); start += kMaxBatch) {
      const std::size_t stop = std::min(idx.size(), start + kMaxBatch);
      const int B = static_cast<int>(stop - start);
      std::vector<std::vector<int>> batch_tuples;
      for (std::size_t i = start; i < stop; ++i) batch_tuples.push_back(tuples[idx[i]]);
      Tape tape;
      ParamVars vars = lift(tape, gen.params, false);
      FakeBatch fake;
      {
        // raw generator output; scene-level normalization happens below
        std::vector<std::vector<Var>> noise(static_cast<std::size_t>(n));
        GpPriorConfig gp = cfg.gp;
        gp.sequence_length = t;
        Eigen::MatrixXd paths = sample_gp_prior(gp, n * B, rng);
        std::vector<std::vector<Matrix>> chunks = split_noise(paths, n, m, t, B);
        for (int j = 0; j < n; ++j)
          for (int s = 0; s < t; ++s)
            noise[static_cast<std::size_t>(j)].push_back(
                tape.constant(chunks[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)]));
        std::vector<Var> onehot;
        for (int j = 0; j < n; ++j) {
          Matrix oh = Matrix::Zero(kLabelAlphabetSize, B);
          for (int b = 0; b < B; ++b)
            oh(label_to_index(batch_tuples[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)]), b) = 1.0;
          onehot.push_back(tape.constant(oh));
        }
        fake.vehicles = generator_graph(tape, vars, cfg, noise, onehot);
      }
      for (int b = 0; b < B; ++b) {
        PredictionScene s;
        s.synthetic = true;
        s.provenance = gen.provenance;
        s.position_labels = batch_tuples[static_cast<std::size_t>(b)];
        for (int step = 0; step < t; ++step) {
          const Matrix& v = tape.value(fake.vehicles[0][static_cast<std::size_t>(step)]);
          if (step < cfg.t_h) s.target_history.emplace_back(v(0, b), v(1, b));
          else s.target_future.emplace_back(v(0, b), v(1, b));
        }
        for (int j = 1; j < n; ++j) {
          Track full;
          for (int step = 0; step < t; ++step) {
            const Matrix& v = tape.value(fake.vehicles[static_cast<std::size_t>(j)][static_cast<std::size_t>(step)]);
            full.emplace_back(v(0, b), v(1, b));
          }
          s.neighbor_histories.emplace_back(full.begin(), full.begin() + cfg.t_h);
          s.neighbor_full.push_back(std::move(full));
        }
        try {
          staged[idx[start + static_cast<std::size_t>(b)]] = normalize_scene(s);
        } catch (const ValidationError&) {
          ++degenerate;
          staged[idx[start + static_cast<std::size_t>(b)]] = PredictionScene{};
        }
      }
    }
  }
  for (PredictionScene& s : staged)
    if (!s.target_history.empty()) out.push_back(std::move(s));
  if (degenerate > 0 && out.empty())
    throw NumericError("replay: every generated scene was degenerate");
  return out;
}

}  // namespace grtp
