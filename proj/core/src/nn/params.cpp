#include "grtp/nn/params.hpp"

#include <cmath>

namespace grtp::nn {

Matrix& ModelParams::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (has(name)) throw ConfigError("duplicate parameter block: " + name);
  blocks.emplace_back(name, Matrix::Zero(rows, cols));
  return blocks.back().second;
}

bool ModelParams::has(const std::string& name) const {
  for (const auto& [n, m] : blocks)
    if (n == name) return true;
  return false;
}

Matrix& ModelParams::at(const std::string& name) {
  for (auto& [n, m] : blocks)
    if (n == name) return m;
  throw DimensionError("unknown parameter block: " + name);
}

const Matrix& ModelParams::at(const std::string& name) const {
  for (const auto& [n, m] : blocks)
    if (n == name) return m;
  throw DimensionError("unknown parameter block: " + name);
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : blocks) n += static_cast<std::size_t>(m.size());
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& [name, m] : blocks)
    if (!m.allFinite()) return false;
  return true;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams out;
  out.blocks.reserve(other.blocks.size());
  for (const auto& [name, m] : other.blocks)
    out.blocks.emplace_back(name, Matrix::Zero(m.rows(), m.cols()));
  return out;
}

Var ParamVars::at(const std::string& name) const {
  for (const auto& [n, v] : vars)
    if (n == name) return v;
  throw DimensionError("unknown lifted block: " + name);
}

ParamVars lift(Tape& tape, const ModelParams& params, bool requires_grad) {
  ParamVars out;
  out.vars.reserve(params.blocks.size());
  for (const auto& [name, m] : params.blocks)
    out.vars.emplace_back(name, tape.leaf(m, requires_grad));
  return out;
}

GradResult collect_grads(const Tape& tape, const ParamVars& vars, const ModelParams& shape) {
  GradResult res;
  res.grads = ModelParams::zeros_like(shape);
  for (std::size_t i = 0; i < vars.vars.size(); ++i) {
    const auto& [name, v] = vars.vars[i];
    if (tape.grad_touched(v)) {
      res.grads.blocks[i].second = tape.grad(v);
    } else {
      res.missing.push_back(name);
    }
  }
  return res;
}

Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-limit, limit);
  return m;
}

Matrix recurrent_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(rows));
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-limit, limit);
  return m;
}

}  // namespace grtp::nn
