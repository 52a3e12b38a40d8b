#pragma once

#include <string>

#include "grtp/nn/params.hpp"

namespace grtp::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  long step_count = 0;
  ModelParams first_moment;
  ModelParams second_moment;
  AdamConfig cfg;

  static AdamState init(const ModelParams& params, const AdamConfig& cfg);
};

struct AdamResult {
  bool applied = false;
  std::string diagnostic;  // set when the update was rejected
};

/// Standard Adam with bias correction. A non-finite gradient rejects the whole
/// update and reports which block failed; parameters and moments are left
/// untouched in that case.
AdamResult adam_step(ModelParams& params, const ModelParams& grads, AdamState& state);

}  // namespace grtp::nn
