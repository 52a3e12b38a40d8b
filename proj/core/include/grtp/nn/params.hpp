#pragma once

#include <string>
#include <utility>
#include <vector>

#include "grtp/nn/tape.hpp"

namespace grtp::nn {

/// Named parameter blocks for one network. Block order is insertion order and
/// is part of the model identity: optimizers and checkpoints walk blocks in
/// this order.
struct ModelParams {
  std::vector<std::pair<std::string, Matrix>> blocks;

  Matrix& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  bool has(const std::string& name) const;
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;

  std::size_t scalar_count() const;
  bool all_finite() const;

  static ModelParams zeros_like(const ModelParams& other);
};

/// Tape handles for every block of a ModelParams, in block order.
struct ParamVars {
  std::vector<std::pair<std::string, Var>> vars;
  Var at(const std::string& name) const;
};

/// Puts every block on the tape. With requires_grad=false the parameters are
/// constants (cheap evaluation-only forward passes).
ParamVars lift(Tape& tape, const ModelParams& params, bool requires_grad = true);

struct GradResult {
  ModelParams grads;                  // congruent with the lifted params
  std::vector<std::string> missing;   // blocks that never received a gradient
};

/// Reads gradients after Tape::backward. Blocks off the recorded path come
/// back as zeros and are listed in `missing` instead of raising.
GradResult collect_grads(const Tape& tape, const ParamVars& vars, const ModelParams& shape);

// --- initializers ---

/// Dense block: uniform in +-sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);
/// Recurrent block: uniform in +-1/sqrt(hidden).
Matrix recurrent_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace grtp::nn
