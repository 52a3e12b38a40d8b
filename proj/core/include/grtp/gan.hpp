#pragma once

#include <optional>
#include <string>
#include <vector>

#include "grtp/nn/adam.hpp"
#include "grtp/nn/layers.hpp"
#include "grtp/traj_data.hpp"

namespace grtp {

/// Prior stochastic process driving the generator: independent sample paths
/// of a Gaussian process with an RBF kernel over the step grid.
struct GpPriorConfig {
  int samples_per_vehicle = 4;
  int sequence_length = 41;    // t_h + t_f
  double rbf_lengthscale = 10.0;  // steps; roughly 2 s of smoothness at 5 Hz
  double rbf_variance = 1.0;
  double jitter = 1e-8;
  std::uint64_t rng_seed = 1;
};

/// (samples_per_vehicle * n_vehicles) x sequence_length paths, via Cholesky of
/// the kernel matrix. Bit-reproducible per seed.
Eigen::MatrixXd sample_gp_prior(const GpPriorConfig& cfg, int n_vehicles, Rng& rng);
Eigen::MatrixXd sample_gp_prior(const GpPriorConfig& cfg, int n_vehicles);

/// Empirical distribution over position-label tuples (target first, label 0).
/// Part of a trained generator: replay draws its scene layouts from here.
struct LabelSampler {
  std::vector<std::vector<int>> tuples;
  std::vector<double> weights;  // sums to 1

  const std::vector<int>& sample(Rng& rng) const;
  static LabelSampler from_scenes(const std::vector<PredictionScene>& scenes);
  static LabelSampler merge(const LabelSampler& a, double wa, const LabelSampler& b, double wb);
};

struct GanConfig {
  GpPriorConfig gp;
  int t_h = 16;
  int t_f = 25;

  // generator widths
  int noise_embed = 64;
  int gru_hidden = 128;
  int seq_embed = 64;
  int pair_embed = 64;
  int mix_hidden = 64;

  // discriminator widths
  int disc_step_embed = 64;
  int disc_nei_embed = 64;
  int disc_fuse1 = 128;
  int disc_fuse2 = 64;

  double learning_rate = 1e-4;
  int batch = 64;
  int steps = 2000;
  int disc_updates_per_step = 1;
  double collapse_threshold = 1e-6;
  int collapse_patience = 100;
  int log_every = 100;
  std::uint64_t seed = 1;

  int total_steps() const { return t_h + t_f; }
  void validate() const;
};

/// Recurrent generator: per-vehicle GP noise chunks through a step-wise
/// encoder, a bidirectional GRU whose initial hidden states come from the
/// vehicle's position condition, forward/backward codes averaged, pairwise
/// difference codes mean-pooled over the other vehicles, and a tanh head
/// emitting (x, y) per step. Every output coordinate lies in [-1, 1].
struct GeneratorModel {
  GanConfig cfg;
  nn::ModelParams params;
  LabelSampler labels;        // label-tuple distribution of the training data
  std::string provenance;
};

/// Regression discriminator over whole prediction scenes: a shared step-wise
/// encoder for the target history and future, relative-difference neighbor
/// encodings mean-pooled over neighbors, two fusion layers and a scalar logit.
struct DiscriminatorModel {
  GanConfig cfg;
  nn::ModelParams params;
};

GeneratorModel make_generator(const GanConfig& cfg);
DiscriminatorModel make_discriminator(const GanConfig& cfg);

/// One generated scene: full-span tracks per vehicle (target first) in raw
/// generator coordinates, plus the conditions that produced it.
struct GeneratedScene {
  std::vector<Track> vehicles;  // each length t_h + t_f
  std::vector<int> labels;
};

/// Single-scene generation from explicit noise (samples_per_vehicle * n rows,
/// sequence_length columns) and one condition per vehicle. Vehicles are
/// canonically reordered internally (by label, then noise values) so the
/// output for a given vehicle is bitwise independent of input order.
/// Requires at least two vehicles.
GeneratedScene generate_scene(const GeneratorModel& gen, const Eigen::MatrixXd& noise,
                              const std::vector<int>& conds);

/// Scalar logit ("degree of true") for one normalized scene with at least one
/// neighbor. Neighbors are pooled in a canonical order, so the logit is
/// bitwise invariant to neighbor storage order.
double discriminate(const DiscriminatorModel& dis, const PredictionScene& scene);

struct GanTrainLog {
  std::vector<double> d_losses;
  std::vector<double> g_losses;
  std::vector<std::pair<int, double>> energy_x;  // (step, energy distance of x marginals)
  std::vector<std::pair<int, double>> energy_y;
  bool collapse_warning = false;
  bool early_stopped = false;
  int steps_run = 0;
  std::size_t training_set_size = 0;  // usable scenes the run actually drew from
};

struct R2Gan {
  GeneratorModel gen;
  DiscriminatorModel dis;
  GanTrainLog log;
};

/// Alternating non-saturating GAN training on normalized, full-span scenes.
/// The discriminator ascends log D(real) + log(1 - D(fake)); the generator
/// ascends log D(fake). A discriminator loss below collapse_threshold for
/// collapse_patience consecutive steps sets the warning flag and stops early.
R2Gan train_r2gan(const std::vector<PredictionScene>& scenes, const GanConfig& cfg);

/// Draws n_scenes scenes from the generator: label tuples from the sampler,
/// fresh GP noise, output centered/scaled like any other scene and split into
/// history and future at t_h. Scenes come back normalized and tagged synthetic.
std::vector<PredictionScene> replay(const GeneratorModel& gen, int n_scenes,
                                    const LabelSampler& conds, Rng& rng);

/// 1-D energy distance between two samples; the training log's
/// distribution-match diagnostic.
double energy_distance_1d(std::vector<double> a, std::vector<double> b);

// --- graph builders, exposed so the test suites can gradient-check the full
// pipelines ---

/// noise[vehicle][step] is (samples_per_vehicle x B); onehot_labels[vehicle]
/// is (9 x B). Returns per-vehicle, per-step (2 x B) outputs.
std::vector<std::vector<nn::Var>> generator_graph(
    nn::Tape& tape, const nn::ParamVars& vars, const GanConfig& cfg,
    const std::vector<std::vector<nn::Var>>& noise, const std::vector<nn::Var>& onehot_labels);

/// Centering on the target (vehicle 0) position at step t_h and division by
/// the per-scene max absolute coordinate, on the tape.
std::vector<std::vector<nn::Var>> preprocess_scene_graph(
    nn::Tape& tape, const std::vector<std::vector<nn::Var>>& vehicles, int t_h);

/// target_steps has t_h + t_f entries of (2 x B); neighbor_hist entries have
/// t_h entries each. Returns the (1 x B) logits.
nn::Var discriminator_graph(nn::Tape& tape, const nn::ParamVars& vars, const GanConfig& cfg,
                            const std::vector<nn::Var>& target_steps,
                            const std::vector<std::vector<nn::Var>>& neighbor_hist);

/// Neighbor indices of a scene in canonical pooling order: by label, then by
/// lexicographic history coordinates.
std::vector<std::size_t> canonical_neighbor_order(const PredictionScene& scene);

}  // namespace grtp
