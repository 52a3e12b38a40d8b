#pragma once

#include <string>
#include <vector>

#include "grtp/nn/params.hpp"

namespace grtp::nn {

// Layer helpers. All forwards are batched: inputs are (feature x batch)
// matrices, recurrent sequences are vectors of such matrices, one per step.

/// dims = {in, hidden..., out}. Hidden layers use tanh; the output layer is
/// linear unless tanh_output is set.
struct MlpSpec {
  std::vector<int> dims;
  bool tanh_output = false;

  int in() const { return dims.front(); }
  int out() const { return dims.back(); }
  int layer_count() const { return static_cast<int>(dims.size()) - 1; }
};

void init_mlp(ModelParams& params, const std::string& prefix, const MlpSpec& spec, Rng& rng);
Var mlp_forward(Tape& tape, const ParamVars& vars, const std::string& prefix, const MlpSpec& spec,
                Var x);

/// Single affine layer W x + b.
void init_dense(ModelParams& params, const std::string& prefix, int in, int out, Rng& rng);
Var dense_forward(Tape& tape, const ParamVars& vars, const std::string& prefix, Var x);

struct RnnSpec {
  int input = 0;
  int hidden = 0;
};

void init_gru(ModelParams& params, const std::string& prefix, const RnnSpec& spec, Rng& rng);
Var gru_step(Tape& tape, const ParamVars& vars, const std::string& prefix, Var x, Var h);
std::vector<Var> gru_sequence(Tape& tape, const ParamVars& vars, const std::string& prefix,
                              const std::vector<Var>& xs, Var h0);

/// Forward and backward hidden sequences, both aligned to input order. The
/// caller combines them (the generator averages the two).
struct BiGruOut {
  std::vector<Var> forward;
  std::vector<Var> backward;
};
BiGruOut bigru_sequence(Tape& tape, const ParamVars& vars, const std::string& fwd_prefix,
                        const std::string& bwd_prefix, const std::vector<Var>& xs, Var hf0, Var hb0);

void init_lstm(ModelParams& params, const std::string& prefix, const RnnSpec& spec, Rng& rng);
struct LstmState {
  Var h;
  Var c;
};
LstmState lstm_step(Tape& tape, const ParamVars& vars, const std::string& prefix, Var x,
                    LstmState state);
std::vector<Var> lstm_sequence(Tape& tape, const ParamVars& vars, const std::string& prefix,
                               const std::vector<Var>& xs, LstmState init);

/// Convenience all-zero constant on the tape.
Var zeros(Tape& tape, Eigen::Index rows, Eigen::Index cols);

}  // namespace grtp::nn
