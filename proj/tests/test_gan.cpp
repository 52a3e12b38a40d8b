#include <cmath>
#include <map>

#include "doctest.h"
#include "fd_check.hpp"
#include "grtp/gan.hpp"
#include "grtp/synthetic.hpp"

using namespace grtp;
using nn::Matrix;

namespace {

GanConfig small_gan_config() {
  GanConfig cfg;
  cfg.t_h = 8;
  cfg.t_f = 8;
  cfg.noise_embed = 12;
  cfg.gru_hidden = 16;
  cfg.seq_embed = 12;
  cfg.pair_embed = 12;
  cfg.mix_hidden = 12;
  cfg.disc_step_embed = 8;
  cfg.disc_nei_embed = 12;
  cfg.disc_fuse1 = 24;
  cfg.disc_fuse2 = 12;
  cfg.gp.samples_per_vehicle = 3;
  cfg.gp.sequence_length = cfg.total_steps();
  cfg.gp.rbf_lengthscale = 6.0;
  cfg.batch = 16;
  cfg.steps = 0;
  return cfg;
}

std::vector<PredictionScene> lane_keep_scenes(int pairs, std::uint64_t seed, int t_h, int t_f) {
  SceneConfig cfg;
  cfg.t_h = t_h;
  cfg.t_f = t_f;
  cfg.n_v = 2;
  cfg.eig_k = 1;
  ChainCorpusParams params;
  params.n_pairs = pairs;
  params.record_steps = t_h + t_f;
  params.hz = 5.0;
  Corpus corpus = make_chain_corpus(ChainTask::LaneKeep, params, seed);
  std::vector<PredictionScene> scenes = extract_scenes(corpus, cfg);
  for (PredictionScene& s : scenes) s = normalize_scene(s);
  return scenes;
}

/// Straight-line reimplementation of the generation equations for n = 2,
/// written against the raw parameter matrices rather than the tape.
std::vector<Track> reference_generate_pair(const GeneratorModel& gen, const Eigen::MatrixXd& noise,
                                           const std::vector<int>& conds) {
  const GanConfig& c = gen.cfg;
  const int t = c.total_steps();
  const int m = c.gp.samples_per_vehicle;
  auto mlp1 = [&](const std::string& prefix, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return (gen.params.at(prefix + ".w0") * x + gen.params.at(prefix + ".b0").col(0))
        .array()
        .tanh();
  };
  auto sig = [](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return v.unaryExpr([](double x) { return 0.5 * (1.0 + std::tanh(0.5 * x)); });
  };
  auto gru = [&](const std::string& prefix, const std::vector<Eigen::VectorXd>& xs,
                 Eigen::VectorXd h) {
    std::vector<Eigen::VectorXd> out;
    for (const Eigen::VectorXd& x : xs) {
      Eigen::VectorXd z = sig(gen.params.at(prefix + ".wz") * x + gen.params.at(prefix + ".uz") * h +
                              gen.params.at(prefix + ".bz").col(0));
      Eigen::VectorXd r = sig(gen.params.at(prefix + ".wr") * x + gen.params.at(prefix + ".ur") * h +
                              gen.params.at(prefix + ".br").col(0));
      Eigen::VectorXd cand = (gen.params.at(prefix + ".wh") * x +
                              gen.params.at(prefix + ".uh") * r.cwiseProduct(h) +
                              gen.params.at(prefix + ".bh").col(0))
                                 .array()
                                 .tanh();
      h = (Eigen::VectorXd::Ones(h.size()) - z).cwiseProduct(h) + z.cwiseProduct(cand);
      out.push_back(h);
    }
    return out;
  };

  std::vector<std::vector<Eigen::VectorXd>> codes(2);
  for (int j = 0; j < 2; ++j) {
    Eigen::VectorXd onehot = Eigen::VectorXd::Zero(kLabelAlphabetSize);
    onehot(label_to_index(conds[static_cast<std::size_t>(j)])) = 1.0;
    std::vector<Eigen::VectorXd> embedded;
    for (int s = 0; s < t; ++s) {
      Eigen::VectorXd chunk(m);
      for (int r = 0; r < m; ++r) chunk(r) = noise(j * m + r, s);
      embedded.push_back(mlp1("noise_enc", chunk));
    }
    std::vector<Eigen::VectorXd> fwd = gru("gru_f", embedded, mlp1("cond_f", onehot));
    std::vector<Eigen::VectorXd> rev_in(embedded.rbegin(), embedded.rend());
    std::vector<Eigen::VectorXd> bwd_rev = gru("gru_b", rev_in, mlp1("cond_b", onehot));
    for (int s = 0; s < t; ++s) {
      const Eigen::VectorXd avg =
          0.5 * (fwd[static_cast<std::size_t>(s)] +
                 bwd_rev[static_cast<std::size_t>(t - 1 - s)]);
      codes[static_cast<std::size_t>(j)].push_back(mlp1("seq_enc", avg));
    }
  }
  std::vector<Track> out(2);
  for (int j = 0; j < 2; ++j) {
    const int i = 1 - j;
    for (int s = 0; s < t; ++s) {
      const Eigen::VectorXd pooled = mlp1(
          "pair_enc", codes[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)] -
                          codes[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)]);
      Eigen::VectorXd cat(codes[0][0].size() + pooled.size());
      cat << codes[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)], pooled;
      const Eigen::VectorXd mixed = mlp1("mix", cat);
      const Eigen::VectorXd head =
          (gen.params.at("head.w") * mixed + gen.params.at("head.b").col(0)).array().tanh();
      out[static_cast<std::size_t>(j)].emplace_back(head(0), head(1));
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("gan") {

TEST_CASE("gp prior: a huge lengthscale makes each path essentially constant") {
  GpPriorConfig cfg;
  cfg.sequence_length = 20;
  cfg.rbf_lengthscale = 1e6;
  cfg.rng_seed = 3;
  Eigen::MatrixXd paths = sample_gp_prior(cfg, 4);
  REQUIRE(paths.rows() == 16);
  for (Eigen::Index p = 0; p < paths.rows(); ++p) {
    const double spread = paths.row(p).maxCoeff() - paths.row(p).minCoeff();
    CHECK(spread < 1e-3 * std::sqrt(cfg.rbf_variance));
  }
}

TEST_CASE("gp prior: empirical lag-1 covariance matches the kernel within 5% at 10k paths") {
  GpPriorConfig cfg;
  cfg.sequence_length = 8;
  cfg.rbf_lengthscale = 10.0;
  cfg.samples_per_vehicle = 1;
  cfg.rng_seed = 11;
  Eigen::MatrixXd paths = sample_gp_prior(cfg, 10000);
  double acc = 0.0;
  for (Eigen::Index p = 0; p < paths.rows(); ++p) acc += paths(p, 0) * paths(p, 1);
  const double empirical = acc / static_cast<double>(paths.rows());
  const double kernel = cfg.rbf_variance * std::exp(-1.0 / (2.0 * cfg.rbf_lengthscale * cfg.rbf_lengthscale));
  CHECK(std::abs(empirical - kernel) < 0.05 * kernel);
}

TEST_CASE("gp prior: paths for a fixed seed are bit-identical across calls") {
  GpPriorConfig cfg;
  cfg.sequence_length = 12;
  cfg.rng_seed = 7;
  Eigen::MatrixXd a = sample_gp_prior(cfg, 3);
  Eigen::MatrixXd b = sample_gp_prior(cfg, 3);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generator output is bounded in [-1, 1] for arbitrary parameters") {
  GanConfig cfg = small_gan_config();
  cfg.seed = 5;
  GeneratorModel gen = make_generator(cfg);
  for (auto& [name, block] : gen.params.blocks) block.array() *= 25.0;  // exaggerate
  Rng rng(9);
  Eigen::MatrixXd noise =
      sample_gp_prior(cfg.gp, 2, rng) * 3.0;
  GeneratedScene scene = generate_scene(gen, noise, {0, 4});
  for (const Track& track : scene.vehicles)
    for (const Point& p : track) {
      CHECK(std::abs(p.x()) <= 1.0);
      CHECK(std::abs(p.y()) <= 1.0);
    }
}

TEST_CASE("generate_scene with a single vehicle is an error") {
  GanConfig cfg = small_gan_config();
  GeneratorModel gen = make_generator(cfg);
  Eigen::MatrixXd noise(cfg.gp.samples_per_vehicle, cfg.total_steps());
  noise.setZero();
  CHECK_THROWS_AS(generate_scene(gen, noise, {0}), ValidationError);
}

TEST_CASE("permuting the other vehicles leaves a vehicle's output bitwise unchanged") {
  GanConfig cfg = small_gan_config();
  cfg.seed = 13;
  GeneratorModel gen = make_generator(cfg);
  const int n = 4;
  const int m = cfg.gp.samples_per_vehicle;
  Rng rng(17);
  Eigen::MatrixXd noise = sample_gp_prior(cfg.gp, n, rng);
  std::vector<int> conds{0, 1, -3, 4};
  GeneratedScene base = generate_scene(gen, noise, conds);

  // swap vehicles 1 and 3 (noise chunks move with their conditions)
  Eigen::MatrixXd permuted = noise;
  permuted.middleRows(1 * m, m) = noise.middleRows(3 * m, m);
  permuted.middleRows(3 * m, m) = noise.middleRows(1 * m, m);
  std::vector<int> conds_p{0, 4, -3, 1};
  GeneratedScene swapped = generate_scene(gen, permuted, conds_p);

  for (std::size_t s = 0; s < base.vehicles[0].size(); ++s) {
    CHECK(base.vehicles[0][s].x() == swapped.vehicles[0][s].x());
    CHECK(base.vehicles[0][s].y() == swapped.vehicles[0][s].y());
    CHECK(base.vehicles[2][s].x() == swapped.vehicles[2][s].x());
    // vehicle 1 of the base run is vehicle 3 of the swapped run
    CHECK(base.vehicles[1][s].x() == swapped.vehicles[3][s].x());
    CHECK(base.vehicles[1][s].y() == swapped.vehicles[3][s].y());
  }
}

TEST_CASE("two-vehicle generation matches the straight-line reference evaluation") {
  GanConfig cfg = small_gan_config();
  cfg.seed = 19;
  GeneratorModel gen = make_generator(cfg);
  Rng rng(21);
  Eigen::MatrixXd noise = sample_gp_prior(cfg.gp, 2, rng);
  // labels chosen so the canonical order equals the input order
  std::vector<int> conds{-1, 2};
  GeneratedScene got = generate_scene(gen, noise, conds);
  std::vector<Track> expect = reference_generate_pair(gen, noise, conds);
  for (int j = 0; j < 2; ++j)
    for (std::size_t s = 0; s < expect[static_cast<std::size_t>(j)].size(); ++s) {
      CHECK(got.vehicles[static_cast<std::size_t>(j)][s].x() ==
            doctest::Approx(expect[static_cast<std::size_t>(j)][s].x()).epsilon(1e-12));
      CHECK(got.vehicles[static_cast<std::size_t>(j)][s].y() ==
            doctest::Approx(expect[static_cast<std::size_t>(j)][s].y()).epsilon(1e-12));
    }
}

TEST_CASE("discriminator: shuffling neighbor storage order leaves the logit bitwise unchanged") {
  GanConfig cfg = small_gan_config();
  cfg.seed = 23;
  DiscriminatorModel dis = make_discriminator(cfg);
  Rng rng(25);
  PredictionScene s;
  for (int k = 0; k < cfg.t_h; ++k) s.target_history.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1));
  for (int k = 0; k < cfg.t_f; ++k) s.target_future.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1));
  s.position_labels.push_back(0);
  for (int n = 0; n < 3; ++n) {
    Track t;
    for (int k = 0; k < cfg.t_h; ++k) t.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1));
    s.neighbor_histories.push_back(std::move(t));
    s.position_labels.push_back(static_cast<int>(rng.uniform_int(9)) - 4);
  }
  s.norm = NormTransform{};
  const double base = discriminate(dis, s);

  PredictionScene shuffled = s;
  std::swap(shuffled.neighbor_histories[0], shuffled.neighbor_histories[2]);
  std::swap(shuffled.position_labels[1], shuffled.position_labels[3]);
  CHECK(discriminate(dis, shuffled) == base);
}

TEST_CASE("zero-weight discriminator returns its head bias for every scene") {
  GanConfig cfg = small_gan_config();
  DiscriminatorModel dis = make_discriminator(cfg);
  for (auto& [name, block] : dis.params.blocks) block.setZero();
  dis.params.at("head.b")(0, 0) = 0.75;
  Rng rng(27);
  for (int trial = 0; trial < 5; ++trial) {
    PredictionScene s;
    for (int k = 0; k < cfg.t_h; ++k) s.target_history.emplace_back(rng.normal(), rng.normal());
    for (int k = 0; k < cfg.t_f; ++k) s.target_future.emplace_back(rng.normal(), rng.normal());
    Track t;
    for (int k = 0; k < cfg.t_h; ++k) t.emplace_back(rng.normal(), rng.normal());
    s.neighbor_histories.push_back(std::move(t));
    s.position_labels = {0, 1};
    s.norm = NormTransform{};
    CHECK(discriminate(dis, s) == doctest::Approx(0.75).epsilon(1e-15));
  }
}

TEST_CASE("discriminator with zero neighbors is an error") {
  GanConfig cfg = small_gan_config();
  DiscriminatorModel dis = make_discriminator(cfg);
  PredictionScene s;
  for (int k = 0; k < cfg.t_h; ++k) s.target_history.emplace_back(0.1 * k, 0.0);
  for (int k = 0; k < cfg.t_f; ++k) s.target_future.emplace_back(0.1 * (k + cfg.t_h), 0.0);
  s.position_labels = {0};
  s.norm = NormTransform{};
  CHECK_THROWS_AS(discriminate(dis, s), ValidationError);
}

TEST_CASE("discriminator warmup separates real scenes from an untrained generator") {
  const int t_h = 8, t_f = 8;
  std::vector<PredictionScene> real = lane_keep_scenes(120, 31, t_h, t_f);
  GanConfig cfg = small_gan_config();
  cfg.seed = 33;
  GeneratorModel gen = make_generator(cfg);
  Rng replay_rng(35);
  std::vector<PredictionScene> fake =
      replay(gen, 120, LabelSampler::from_scenes(real), replay_rng);

  DiscriminatorModel dis = make_discriminator(cfg);
  nn::AdamState adam = nn::AdamState::init(dis.params, {1e-3, 0.9, 0.999, 1e-8});
  Rng rng(37);
  for (int step = 0; step < 150; ++step) {
    nn::Tape tape;
    nn::ParamVars vars = lift(tape, dis.params, true);
    auto batch_logits = [&](const std::vector<PredictionScene>& pool) {
      std::vector<nn::Var> target_steps;
      std::vector<std::vector<nn::Var>> nb(1);
      const int B = 16;
      std::vector<const PredictionScene*> chosen;
      for (int b = 0; b < B; ++b) chosen.push_back(&pool[rng.uniform_int(pool.size())]);
      for (int s = 0; s < t_h + t_f; ++s) {
        Matrix step_m(2, B);
        for (int b = 0; b < B; ++b) {
          const PredictionScene& sc = *chosen[static_cast<std::size_t>(b)];
          const Point& p = s < t_h ? sc.target_history[static_cast<std::size_t>(s)]
                                   : sc.target_future[static_cast<std::size_t>(s - t_h)];
          step_m(0, b) = p.x();
          step_m(1, b) = p.y();
        }
        target_steps.push_back(tape.constant(step_m));
      }
      for (int s = 0; s < t_h; ++s) {
        Matrix step_m(2, B);
        for (int b = 0; b < B; ++b) {
          const Point& p = chosen[static_cast<std::size_t>(b)]->neighbor_histories[0][static_cast<std::size_t>(s)];
          step_m(0, b) = p.x();
          step_m(1, b) = p.y();
        }
        nb[0].push_back(tape.constant(step_m));
      }
      return discriminator_graph(tape, vars, cfg, target_steps, nb);
    };
    nn::Var l_real = batch_logits(real);
    nn::Var l_fake = batch_logits(fake);
    nn::Var loss = tape.add(tape.mean_all(tape.softplus(tape.neg(l_real))),
                            tape.mean_all(tape.softplus(l_fake)));
    tape.backward(loss);
    nn::GradResult grads = collect_grads(tape, vars, dis.params);
    REQUIRE(adam_step(dis.params, grads.grads, adam).applied);
  }
  int correct = 0, total = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    if (discriminate(dis, real[i]) > 0.0) ++correct;
    if (discriminate(dis, fake[i]) <= 0.0) ++correct;
    total += 2;
  }
  CHECK(static_cast<double>(correct) / total > 0.9);
}

TEST_CASE("a briefly trained discriminator distinguishes time-reversed motion") {
  const int t_h = 8, t_f = 8;
  std::vector<PredictionScene> real = lane_keep_scenes(120, 41, t_h, t_f);
  // time-reversed copies, re-normalized on the reversed grid
  std::vector<PredictionScene> reversed;
  for (const PredictionScene& s : real) {
    PredictionScene raw = denormalize_scene(s);
    PredictionScene r;
    Track full_t(raw.target_history);
    full_t.insert(full_t.end(), raw.target_future.begin(), raw.target_future.end());
    std::reverse(full_t.begin(), full_t.end());
    r.target_history.assign(full_t.begin(), full_t.begin() + t_h);
    r.target_future.assign(full_t.begin() + t_h, full_t.end());
    Track nb(raw.neighbor_full.front());
    std::reverse(nb.begin(), nb.end());
    r.neighbor_histories.push_back(Track(nb.begin(), nb.begin() + t_h));
    r.position_labels = raw.position_labels;
    reversed.push_back(normalize_scene(r));
  }

  GanConfig cfg = small_gan_config();
  cfg.seed = 43;
  DiscriminatorModel dis = make_discriminator(cfg);
  nn::AdamState adam = nn::AdamState::init(dis.params, {1e-3, 0.9, 0.999, 1e-8});
  Rng rng(45);
  for (int step = 0; step < 200; ++step) {
    nn::Tape tape;
    nn::ParamVars vars = lift(tape, dis.params, true);
    const int B = 16;
    auto logits_for = [&](const std::vector<PredictionScene>& pool) {
      std::vector<const PredictionScene*> chosen;
      for (int b = 0; b < B; ++b) chosen.push_back(&pool[rng.uniform_int(pool.size())]);
      std::vector<nn::Var> target_steps;
      std::vector<std::vector<nn::Var>> nb(1);
      for (int s = 0; s < t_h + t_f; ++s) {
        Matrix m(2, B);
        for (int b = 0; b < B; ++b) {
          const PredictionScene& sc = *chosen[static_cast<std::size_t>(b)];
          const Point& p = s < t_h ? sc.target_history[static_cast<std::size_t>(s)]
                                   : sc.target_future[static_cast<std::size_t>(s - t_h)];
          m(0, b) = p.x();
          m(1, b) = p.y();
        }
        target_steps.push_back(tape.constant(m));
      }
      for (int s = 0; s < t_h; ++s) {
        Matrix m(2, B);
        for (int b = 0; b < B; ++b) {
          const Point& p = chosen[static_cast<std::size_t>(b)]->neighbor_histories[0][static_cast<std::size_t>(s)];
          m(0, b) = p.x();
          m(1, b) = p.y();
        }
        nb[0].push_back(tape.constant(m));
      }
      return discriminator_graph(tape, vars, cfg, target_steps, nb);
    };
    nn::Var loss = tape.add(tape.mean_all(tape.softplus(tape.neg(logits_for(real)))),
                            tape.mean_all(tape.softplus(logits_for(reversed))));
    tape.backward(loss);
    nn::GradResult grads = collect_grads(tape, vars, dis.params);
    REQUIRE(adam_step(dis.params, grads.grads, adam).applied);
  }
  double mean_real = 0.0, mean_rev = 0.0;
  for (std::size_t i = 0; i < 80; ++i) {
    mean_real += discriminate(dis, real[i]);
    mean_rev += discriminate(dis, reversed[i]);
  }
  CHECK(mean_real / 80.0 > mean_rev / 80.0);
}

TEST_CASE("finite differences through generator, preprocessing and discriminator") {
  for (int seed = 0; seed < 3; ++seed) {
    GanConfig cfg = small_gan_config();
    cfg.t_h = 4;
    cfg.t_f = 3;
    cfg.gp.sequence_length = 7;
    cfg.noise_embed = 5;
    cfg.gru_hidden = 6;
    cfg.seq_embed = 5;
    cfg.pair_embed = 4;
    cfg.mix_hidden = 5;
    cfg.disc_step_embed = 4;
    cfg.disc_nei_embed = 5;
    cfg.disc_fuse1 = 8;
    cfg.disc_fuse2 = 5;
    cfg.seed = 100 + static_cast<std::uint64_t>(seed);
    GeneratorModel gen = make_generator(cfg);
    DiscriminatorModel dis = make_discriminator(cfg);
    Rng rng(200 + static_cast<std::uint64_t>(seed));
    Eigen::MatrixXd paths = sample_gp_prior(cfg.gp, 2, rng);

    auto build = [&](nn::Tape& tape, const nn::ParamVars& gen_vars, const nn::ParamVars& dis_vars) {
      std::vector<std::vector<nn::Var>> noise(2);
      for (int j = 0; j < 2; ++j)
        for (int s = 0; s < cfg.total_steps(); ++s) {
          Matrix chunk(cfg.gp.samples_per_vehicle, 1);
          for (int r = 0; r < cfg.gp.samples_per_vehicle; ++r) chunk(r, 0) = paths(j * cfg.gp.samples_per_vehicle + r, s);
          noise[static_cast<std::size_t>(j)].push_back(tape.constant(chunk));
        }
      std::vector<nn::Var> onehot;
      for (int label : {0, 3}) {
        Matrix oh = Matrix::Zero(kLabelAlphabetSize, 1);
        oh(label_to_index(label), 0) = 1.0;
        onehot.push_back(tape.constant(oh));
      }
      auto raw = generator_graph(tape, gen_vars, cfg, noise, onehot);
      auto pre = preprocess_scene_graph(tape, raw, cfg.t_h);
      std::vector<nn::Var> target = pre[0];
      std::vector<std::vector<nn::Var>> nbs{
          std::vector<nn::Var>(pre[1].begin(), pre[1].begin() + cfg.t_h)};
      nn::Var logit = discriminator_graph(tape, dis_vars, cfg, target, nbs);
      return tape.mean_all(tape.softplus(tape.neg(logit)));
    };

    // generator side
    {
      auto loss_fn = [&](const nn::ModelParams& p) {
        nn::Tape tape;
        nn::ParamVars gv = lift(tape, p, false);
        nn::ParamVars dv = lift(tape, dis.params, false);
        return tape.value(build(tape, gv, dv))(0, 0);
      };
      nn::Tape tape;
      nn::ParamVars gv = lift(tape, gen.params, true);
      nn::ParamVars dv = lift(tape, dis.params, false);
      tape.backward(build(tape, gv, dv));
      nn::GradResult grads = collect_grads(tape, gv, gen.params);
      auto report = testutil::fd_check(gen.params, grads.grads, loss_fn);
      CHECK_MESSAGE(report.max_rel_error < 1e-4, "generator block ", report.worst_block);
    }
    // discriminator side
    {
      auto loss_fn = [&](const nn::ModelParams& p) {
        nn::Tape tape;
        nn::ParamVars gv = lift(tape, gen.params, false);
        nn::ParamVars dv = lift(tape, p, false);
        return tape.value(build(tape, gv, dv))(0, 0);
      };
      nn::Tape tape;
      nn::ParamVars gv = lift(tape, gen.params, false);
      nn::ParamVars dv = lift(tape, dis.params, true);
      tape.backward(build(tape, gv, dv));
      nn::GradResult grads = collect_grads(tape, dv, dis.params);
      auto report = testutil::fd_check(dis.params, grads.grads, loss_fn);
      CHECK_MESSAGE(report.max_rel_error < 1e-4, "discriminator block ", report.worst_block);
    }
  }
}

TEST_CASE("replay with n = 0 returns an empty list") {
  GanConfig cfg = small_gan_config();
  GeneratorModel gen = make_generator(cfg);
  LabelSampler sampler;
  sampler.tuples = {{0, 1}};
  sampler.weights = {1.0};
  Rng rng(47);
  CHECK(replay(gen, 0, sampler, rng).empty());
}

TEST_CASE("replayed scenes satisfy the scene invariants") {
  GanConfig cfg = small_gan_config();
  cfg.seed = 49;
  GeneratorModel gen = make_generator(cfg);
  LabelSampler sampler;
  sampler.tuples = {{0, 1}, {0, -4, 2}};
  sampler.weights = {0.5, 0.5};
  Rng rng(51);
  std::vector<PredictionScene> scenes = replay(gen, 200, sampler, rng);
  REQUIRE(scenes.size() == 200);
  for (const PredictionScene& s : scenes) {
    CHECK(s.synthetic);
    CHECK(s.normalized());
    CHECK(static_cast<int>(s.target_history.size()) == cfg.t_h);
    CHECK(static_cast<int>(s.target_future.size()) == cfg.t_f);
    CHECK(s.gan_ready());
    CHECK(s.position_labels.front() == 0);
    // centered at t_h and max-norm exactly 1
    CHECK(s.target_history.back().cwiseAbs().maxCoeff() == 0.0);
    double max_abs = 0.0;
    auto scan = [&](const Track& t) {
      for (const Point& p : t) max_abs = std::max({max_abs, std::abs(p.x()), std::abs(p.y())});
    };
    scan(s.target_history);
    scan(s.target_future);
    for (const Track& t : s.neighbor_full) scan(t);
    CHECK(max_abs == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("replayed label tuples match the sampler distribution (chi-squared at 1%)") {
  GanConfig cfg = small_gan_config();
  cfg.seed = 53;
  GeneratorModel gen = make_generator(cfg);
  LabelSampler sampler;
  sampler.tuples = {{0, 1}, {0, -1}};
  sampler.weights = {0.5, 0.5};
  Rng rng(55);
  const int n = 4000;
  std::vector<PredictionScene> scenes = replay(gen, n, sampler, rng);
  REQUIRE(scenes.size() == static_cast<std::size_t>(n));
  int count_first = 0;
  for (const PredictionScene& s : scenes)
    if (s.position_labels[1] == 1) ++count_first;
  const double expect = n / 2.0;
  const double chi2 = (count_first - expect) * (count_first - expect) / expect +
                      (n - count_first - expect) * (n - count_first - expect) / expect;
  CHECK(chi2 < 6.635);  // chi-squared critical value, df = 1, alpha = 0.01
}

TEST_CASE("label sampler merge preserves mass and renormalizes") {
  LabelSampler a, b;
  a.tuples = {{0, 1}};
  a.weights = {1.0};
  b.tuples = {{0, 1}, {0, 2}};
  b.weights = {0.25, 0.75};
  LabelSampler merged = LabelSampler::merge(a, 1.0, b, 1.0);
  double total = 0.0;
  for (double w : merged.weights) total += w;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(merged.tuples.size() == 2);
}

TEST_CASE("seeded GAN training reproduces identical losses for 10 steps") {
  std::vector<PredictionScene> scenes = lane_keep_scenes(60, 57, 8, 8);
  GanConfig cfg = small_gan_config();
  cfg.steps = 10;
  cfg.batch = 8;
  cfg.seed = 59;
  R2Gan a = train_r2gan(scenes, cfg);
  R2Gan b = train_r2gan(scenes, cfg);
  REQUIRE(a.log.d_losses.size() == 10);
  REQUIRE(b.log.d_losses.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(a.log.d_losses[static_cast<std::size_t>(i)] == b.log.d_losses[static_cast<std::size_t>(i)]);
    CHECK(a.log.g_losses[static_cast<std::size_t>(i)] == b.log.g_losses[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("training on straight constant-velocity pairs reproduces the speed statistics") {
  const int t_h = 8, t_f = 8;
  std::vector<PredictionScene> scenes = lane_keep_scenes(400, 61, t_h, t_f);
  GanConfig cfg = small_gan_config();
  cfg.noise_embed = 16;
  cfg.gru_hidden = 32;
  cfg.seq_embed = 16;
  cfg.pair_embed = 16;
  cfg.mix_hidden = 16;
  cfg.disc_nei_embed = 16;
  cfg.disc_fuse1 = 32;
  cfg.disc_fuse2 = 16;
  cfg.batch = 32;
  cfg.steps = 900;
  cfg.learning_rate = 1e-3;
  cfg.seed = 63;
  R2Gan trained = train_r2gan(scenes, cfg);
  CHECK_FALSE(trained.log.collapse_warning);

  auto mean_speed = [&](const std::vector<PredictionScene>& set) {
    double acc = 0.0;
    std::size_t count = 0;
    for (const PredictionScene& s : set) {
      Track full(s.target_history);
      full.insert(full.end(), s.target_future.begin(), s.target_future.end());
      for (std::size_t k = 1; k < full.size(); ++k) {
        acc += (full[k] - full[k - 1]).norm();
        ++count;
      }
    }
    return acc / static_cast<double>(count);
  };
  Rng rng(65);
  std::vector<PredictionScene> generated = replay(trained.gen, 400, trained.gen.labels, rng);
  const double real_speed = mean_speed(scenes);
  const double fake_speed = mean_speed(generated);
  CHECK(std::abs(fake_speed - real_speed) < 0.15 * real_speed);

  // fresh noise produces non-degenerate variety
  double var_x = 0.0, var_y = 0.0, mean_x = 0.0, mean_y = 0.0;
  std::size_t n_pts = 0;
  for (const PredictionScene& s : generated)
    for (const Point& p : s.target_future) {
      mean_x += p.x();
      mean_y += p.y();
      ++n_pts;
    }
  mean_x /= static_cast<double>(n_pts);
  mean_y /= static_cast<double>(n_pts);
  for (const PredictionScene& s : generated)
    for (const Point& p : s.target_future) {
      var_x += (p.x() - mean_x) * (p.x() - mean_x);
      var_y += (p.y() - mean_y) * (p.y() - mean_y);
    }
  CHECK(std::sqrt(var_x / static_cast<double>(n_pts)) > 0.01);
}

TEST_CASE("energy distance: same sample is zero, separated samples are positive") {
  std::vector<double> a{0.0, 1.0, 2.0, 3.0};
  CHECK(energy_distance_1d(a, a) == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<double> b{10.0, 11.0, 12.0, 13.0};
  CHECK(energy_distance_1d(a, b) > 1.0);
}

}  // TEST_SUITE
