#include "grtp/nn/adam.hpp"

#include <cmath>

namespace grtp::nn {

AdamState AdamState::init(const ModelParams& params, const AdamConfig& cfg) {
  AdamState s;
  s.first_moment = ModelParams::zeros_like(params);
  s.second_moment = ModelParams::zeros_like(params);
  s.cfg = cfg;
  return s;
}

AdamResult adam_step(ModelParams& params, const ModelParams& grads, AdamState& state) {
  if (params.blocks.size() != grads.blocks.size())
    throw DimensionError("adam_step: gradient blocks not congruent with parameters");
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    const auto& [gname, g] = grads.blocks[i];
    const auto& [pname, p] = params.blocks[i];
    if (gname != pname || g.rows() != p.rows() || g.cols() != p.cols())
      throw DimensionError("adam_step: block mismatch at '" + pname + "'");
    if (!g.allFinite())
      return AdamResult{false, "non-finite gradient in block '" + gname + "'"};
  }

  const AdamConfig& c = state.cfg;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    Matrix& p = params.blocks[i].second;
    const Matrix& g = grads.blocks[i].second;
    Matrix& m = state.first_moment.blocks[i].second;
    Matrix& v = state.second_moment.blocks[i].second;
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    const Matrix m_hat = m / bc1;
    const Matrix v_hat = v / bc2;
    p.array() -= c.learning_rate * m_hat.array() / (v_hat.array().sqrt() + c.epsilon);
  }
  return AdamResult{true, ""};
}

}  // namespace grtp::nn
