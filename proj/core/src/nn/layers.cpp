#include "grtp/nn/layers.hpp"

namespace grtp::nn {

namespace {

std::string key(const std::string& prefix, const char* suffix) { return prefix + "." + suffix; }
std::string key(const std::string& prefix, const char* suffix, int i) {
  return prefix + "." + suffix + std::to_string(i);
}

void check_input(const Tape& tape, Var x, int expect, const std::string& block) {
  if (tape.value(x).rows() != expect)
    throw DimensionError("block '" + block + "': input has " +
                         std::to_string(tape.value(x).rows()) + " rows, expected " +
                         std::to_string(expect));
}

}  // namespace

void init_dense(ModelParams& params, const std::string& prefix, int in, int out, Rng& rng) {
  params.add(key(prefix, "w"), out, in) = glorot_uniform(out, in, rng);
  params.add(key(prefix, "b"), out, 1);
}

Var dense_forward(Tape& tape, const ParamVars& vars, const std::string& prefix, Var x) {
  Var w = vars.at(key(prefix, "w"));
  Var b = vars.at(key(prefix, "b"));
  check_input(tape, x, static_cast<int>(tape.value(w).cols()), prefix);
  return tape.add_bias(tape.matmul(w, x), b);
}

void init_mlp(ModelParams& params, const std::string& prefix, const MlpSpec& spec, Rng& rng) {
  if (spec.dims.size() < 2) throw ConfigError("mlp '" + prefix + "': needs at least 2 dims");
  for (int l = 0; l < spec.layer_count(); ++l) {
    params.add(key(prefix, "w", l), spec.dims[l + 1], spec.dims[l]) =
        glorot_uniform(spec.dims[l + 1], spec.dims[l], rng);
    params.add(key(prefix, "b", l), spec.dims[l + 1], 1);
  }
}

Var mlp_forward(Tape& tape, const ParamVars& vars, const std::string& prefix, const MlpSpec& spec,
                Var x) {
  check_input(tape, x, spec.in(), prefix);
  Var h = x;
  for (int l = 0; l < spec.layer_count(); ++l) {
    h = tape.add_bias(tape.matmul(vars.at(key(prefix, "w", l)), h), vars.at(key(prefix, "b", l)));
    const bool last = l == spec.layer_count() - 1;
    if (!last || spec.tanh_output) h = tape.tanh_(h);
  }
  return h;
}

void init_gru(ModelParams& params, const std::string& prefix, const RnnSpec& spec, Rng& rng) {
  for (const char* gate : {"z", "r", "h"}) {
    params.add(prefix + ".w" + gate, spec.hidden, spec.input) =
        glorot_uniform(spec.hidden, spec.input, rng);
    params.add(prefix + ".u" + gate, spec.hidden, spec.hidden) =
        recurrent_uniform(spec.hidden, spec.hidden, rng);
    params.add(prefix + ".b" + gate, spec.hidden, 1);
  }
}

Var gru_step(Tape& tape, const ParamVars& vars, const std::string& prefix, Var x, Var h) {
  auto gate = [&](const char* g, Var hh) {
    return tape.add_bias(tape.add(tape.matmul(vars.at(prefix + ".w" + g), x),
                                  tape.matmul(vars.at(prefix + ".u" + g), hh)),
                         vars.at(prefix + ".b" + g));
  };
  Var z = tape.sigmoid(gate("z", h));
  Var r = tape.sigmoid(gate("r", h));
  Var rh = tape.mul(r, h);
  Var cand = tape.tanh_(gate("h", rh));
  // h' = (1 - z) .* h + z .* cand
  Var one_minus_z = tape.affine(z, -1.0, 1.0);
  return tape.add(tape.mul(one_minus_z, h), tape.mul(z, cand));
}

std::vector<Var> gru_sequence(Tape& tape, const ParamVars& vars, const std::string& prefix,
                              const std::vector<Var>& xs, Var h0) {
  std::vector<Var> hs;
  hs.reserve(xs.size());
  Var h = h0;
  for (Var x : xs) {
    h = gru_step(tape, vars, prefix, x, h);
    hs.push_back(h);
  }
  return hs;
}

BiGruOut bigru_sequence(Tape& tape, const ParamVars& vars, const std::string& fwd_prefix,
                        const std::string& bwd_prefix, const std::vector<Var>& xs, Var hf0,
                        Var hb0) {
  BiGruOut out;
  out.forward = gru_sequence(tape, vars, fwd_prefix, xs, hf0);
  std::vector<Var> rev(xs.rbegin(), xs.rend());
  std::vector<Var> back = gru_sequence(tape, vars, bwd_prefix, rev, hb0);
  out.backward.assign(back.rbegin(), back.rend());
  return out;
}

void init_lstm(ModelParams& params, const std::string& prefix, const RnnSpec& spec, Rng& rng) {
  for (const char* gate : {"i", "f", "o", "g"}) {
    params.add(prefix + ".w" + gate, spec.hidden, spec.input) =
        glorot_uniform(spec.hidden, spec.input, rng);
    params.add(prefix + ".u" + gate, spec.hidden, spec.hidden) =
        recurrent_uniform(spec.hidden, spec.hidden, rng);
    params.add(prefix + ".b" + gate, spec.hidden, 1);
  }
}

LstmState lstm_step(Tape& tape, const ParamVars& vars, const std::string& prefix, Var x,
                    LstmState state) {
  auto gate = [&](const char* g) {
    return tape.add_bias(tape.add(tape.matmul(vars.at(prefix + ".w" + g), x),
                                  tape.matmul(vars.at(prefix + ".u" + g), state.h)),
                         vars.at(prefix + ".b" + g));
  };
  Var i = tape.sigmoid(gate("i"));
  Var f = tape.sigmoid(gate("f"));
  Var o = tape.sigmoid(gate("o"));
  Var g = tape.tanh_(gate("g"));
  Var c = tape.add(tape.mul(f, state.c), tape.mul(i, g));
  Var h = tape.mul(o, tape.tanh_(c));
  return LstmState{h, c};
}

std::vector<Var> lstm_sequence(Tape& tape, const ParamVars& vars, const std::string& prefix,
                               const std::vector<Var>& xs, LstmState init) {
  std::vector<Var> hs;
  hs.reserve(xs.size());
  LstmState s = init;
  for (Var x : xs) {
    s = lstm_step(tape, vars, prefix, x, s);
    hs.push_back(s.h);
  }
  return hs;
}

Var zeros(Tape& tape, Eigen::Index rows, Eigen::Index cols) {
  return tape.constant(Matrix::Zero(rows, cols));
}

}  // namespace grtp::nn
