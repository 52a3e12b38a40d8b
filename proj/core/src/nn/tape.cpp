#include "grtp/nn/tape.hpp"

#include <cmath>
#include <string>

namespace grtp::nn {

namespace {

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  return 0.5 * (1.0 + std::tanh(0.5 * x));
}

}  // namespace

Var Tape::push(Matrix value, bool requires_grad, std::function<void()> back) {
  Node n;
  n.grad = Matrix::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.back = std::move(back);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
const Tape::Node& Tape::node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }

void Tape::check(Var v, const char* op) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw DimensionError(std::string("tape: invalid operand for ") + op);
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

const Matrix& Tape::value(Var v) const {
  check(v, "value");
  return node(v).value;
}

const Matrix& Tape::grad(Var v) const {
  check(v, "grad");
  return node(v).grad;
}

bool Tape::grad_touched(Var v) const {
  check(v, "grad_touched");
  return node(v).touched;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  n.grad += g;
  n.touched = true;
}

Var Tape::matmul(Var a, Var b) {
  check(a, "matmul");
  check(b, "matmul");
  const Matrix& A = node(a).value;
  const Matrix& B = node(b).value;
  if (A.cols() != B.rows())
    throw DimensionError("matmul: inner dimensions " + std::to_string(A.cols()) + " vs " +
                         std::to_string(B.rows()));
  bool rg = node(a).requires_grad || node(b).requires_grad;
  Var out = push(A * B, rg, nullptr);
  if (rg) {
    node(out).back = [this, a, b, out] {
      const Matrix& g = node(out).grad;
      accumulate(a, g * node(b).value.transpose());
      accumulate(b, node(a).value.transpose() * g);
    };
  }
  return out;
}

Var Tape::add(Var a, Var b) {
  check(a, "add");
  check(b, "add");
  const Matrix& A = node(a).value;
  const Matrix& B = node(b).value;
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw DimensionError("add: shape mismatch");
  bool rg = node(a).requires_grad || node(b).requires_grad;
  Var out = push(A + B, rg, nullptr);
  if (rg) {
    node(out).back = [this, a, b, out] {
      accumulate(a, node(out).grad);
      accumulate(b, node(out).grad);
    };
  }
  return out;
}

Var Tape::sub(Var a, Var b) {
  check(a, "sub");
  check(b, "sub");
  const Matrix& A = node(a).value;
  const Matrix& B = node(b).value;
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw DimensionError("sub: shape mismatch");
  bool rg = node(a).requires_grad || node(b).requires_grad;
  Var out = push(A - B, rg, nullptr);
  if (rg) {
    node(out).back = [this, a, b, out] {
      accumulate(a, node(out).grad);
      accumulate(b, -node(out).grad);
    };
  }
  return out;
}

Var Tape::mul(Var a, Var b) {
  check(a, "mul");
  check(b, "mul");
  const Matrix& A = node(a).value;
  const Matrix& B = node(b).value;
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw DimensionError("mul: shape mismatch");
  bool rg = node(a).requires_grad || node(b).requires_grad;
  Var out = push(A.cwiseProduct(B), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, b, out] {
      const Matrix& g = node(out).grad;
      accumulate(a, g.cwiseProduct(node(b).value));
      accumulate(b, g.cwiseProduct(node(a).value));
    };
  }
  return out;
}

Var Tape::div(Var a, Var b) {
  check(a, "div");
  check(b, "div");
  const Matrix& A = node(a).value;
  const Matrix& B = node(b).value;
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw DimensionError("div: shape mismatch");
  bool rg = node(a).requires_grad || node(b).requires_grad;
  Var out = push(A.cwiseQuotient(B), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, b, out] {
      const Matrix& g = node(out).grad;
      const Matrix& bv = node(b).value;
      accumulate(a, g.cwiseQuotient(bv));
      accumulate(b, -g.cwiseProduct(node(out).value).cwiseQuotient(bv));
    };
  }
  return out;
}

Var Tape::add_bias(Var a, Var bias) {
  check(a, "add_bias");
  check(bias, "add_bias");
  const Matrix& A = node(a).value;
  const Matrix& B = node(bias).value;
  if (B.cols() != 1 || A.rows() != B.rows())
    throw DimensionError("add_bias: bias must be (rows x 1) matching input rows");
  bool rg = node(a).requires_grad || node(bias).requires_grad;
  Var out = push(A.colwise() + B.col(0), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, bias, out] {
      const Matrix& g = node(out).grad;
      accumulate(a, g);
      accumulate(bias, g.rowwise().sum());
    };
  }
  return out;
}

Var Tape::affine(Var a, double scale, double shift) {
  check(a, "affine");
  bool rg = node(a).requires_grad;
  Var out = push((node(a).value.array() * scale + shift).matrix(), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out, scale] { accumulate(a, node(out).grad * scale); };
  }
  return out;
}

Var Tape::tanh_(Var a) {
  check(a, "tanh");
  bool rg = node(a).requires_grad;
  Var out = push(node(a).value.array().tanh().matrix(), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out] {
      const Matrix& y = node(out).value;
      accumulate(a, node(out).grad.cwiseProduct((1.0 - y.array().square()).matrix()));
    };
  }
  return out;
}

Var Tape::sigmoid(Var a) {
  check(a, "sigmoid");
  bool rg = node(a).requires_grad;
  Var out = push(node(a).value.unaryExpr([](double x) { return stable_sigmoid(x); }), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out] {
      const Matrix& y = node(out).value;
      accumulate(a, node(out).grad.cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
    };
  }
  return out;
}

Var Tape::softplus(Var a) {
  check(a, "softplus");
  bool rg = node(a).requires_grad;
  Var out = push(node(a).value.unaryExpr([](double x) { return stable_softplus(x); }), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out] {
      const Matrix& x = node(a).value;
      accumulate(a, node(out).grad.cwiseProduct(
                        x.unaryExpr([](double v) { return stable_sigmoid(v); })));
    };
  }
  return out;
}

Var Tape::exp_(Var a) {
  check(a, "exp");
  bool rg = node(a).requires_grad;
  Var out = push(node(a).value.array().exp().matrix(), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out] {
      accumulate(a, node(out).grad.cwiseProduct(node(out).value));
    };
  }
  return out;
}

Var Tape::log_(Var a) {
  check(a, "log");
  bool rg = node(a).requires_grad;
  Var out = push(node(a).value.array().log().matrix(), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out] {
      accumulate(a, node(out).grad.cwiseQuotient(node(a).value));
    };
  }
  return out;
}

Var Tape::square(Var a) {
  check(a, "square");
  bool rg = node(a).requires_grad;
  Var out = push(node(a).value.array().square().matrix(), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out] {
      accumulate(a, 2.0 * node(out).grad.cwiseProduct(node(a).value));
    };
  }
  return out;
}

Var Tape::sqrt_(Var a) {
  check(a, "sqrt");
  bool rg = node(a).requires_grad;
  Var out = push(node(a).value.array().sqrt().matrix(), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out] {
      accumulate(a, 0.5 * node(out).grad.cwiseQuotient(node(out).value));
    };
  }
  return out;
}

Var Tape::max_floor(Var a, double floor) {
  check(a, "max_floor");
  bool rg = node(a).requires_grad;
  Var out = push(node(a).value.cwiseMax(floor), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out, floor] {
      const Matrix mask = (node(a).value.array() > floor).cast<double>().matrix();
      accumulate(a, node(out).grad.cwiseProduct(mask));
    };
  }
  return out;
}

Var Tape::sum_all(Var a) {
  check(a, "sum_all");
  bool rg = node(a).requires_grad;
  Matrix s(1, 1);
  s(0, 0) = node(a).value.sum();
  Var out = push(std::move(s), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out] {
      const Matrix& av = node(a).value;
      accumulate(a, Matrix::Constant(av.rows(), av.cols(), node(out).grad(0, 0)));
    };
  }
  return out;
}

Var Tape::mean_all(Var a) {
  check(a, "mean_all");
  const double n = static_cast<double>(node(a).value.size());
  bool rg = node(a).requires_grad;
  Matrix s(1, 1);
  s(0, 0) = node(a).value.sum() / n;
  Var out = push(std::move(s), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out, n] {
      const Matrix& av = node(a).value;
      accumulate(a, Matrix::Constant(av.rows(), av.cols(), node(out).grad(0, 0) / n));
    };
  }
  return out;
}

Var Tape::colwise_sum(Var a) {
  check(a, "colwise_sum");
  bool rg = node(a).requires_grad;
  Var out = push(node(a).value.colwise().sum(), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out] {
      const Matrix& g = node(out).grad;  // 1 x B
      const Matrix& av = node(a).value;
      accumulate(a, Matrix::Ones(av.rows(), 1) * g);
    };
  }
  return out;
}

Var Tape::logsumexp_colwise(Var a) {
  check(a, "logsumexp_colwise");
  const Matrix& A = node(a).value;
  Matrix mx = A.colwise().maxCoeff();  // 1 x B
  Matrix out_v(1, A.cols());
  for (Eigen::Index c = 0; c < A.cols(); ++c) {
    double s = 0.0;
    for (Eigen::Index r = 0; r < A.rows(); ++r) s += std::exp(A(r, c) - mx(0, c));
    out_v(0, c) = mx(0, c) + std::log(s);
  }
  bool rg = node(a).requires_grad;
  Var out = push(std::move(out_v), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out] {
      const Matrix& A2 = node(a).value;
      const Matrix& y = node(out).value;   // 1 x B
      const Matrix& g = node(out).grad;    // 1 x B
      Matrix ga(A2.rows(), A2.cols());
      for (Eigen::Index c = 0; c < A2.cols(); ++c)
        for (Eigen::Index r = 0; r < A2.rows(); ++r)
          ga(r, c) = std::exp(A2(r, c) - y(0, c)) * g(0, c);
      accumulate(a, ga);
    };
  }
  return out;
}

Var Tape::colwise_max_abs(Var a) {
  check(a, "colwise_max_abs");
  const Matrix& A = node(a).value;
  Matrix out_v(1, A.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(A.cols()));
  for (Eigen::Index c = 0; c < A.cols(); ++c) {
    Eigen::Index best = 0;
    double bv = std::abs(A(0, c));
    for (Eigen::Index r = 1; r < A.rows(); ++r) {
      const double v = std::abs(A(r, c));
      if (v > bv) {
        bv = v;
        best = r;
      }
    }
    out_v(0, c) = bv;
    arg[static_cast<std::size_t>(c)] = best;
  }
  bool rg = node(a).requires_grad;
  Var out = push(std::move(out_v), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out, arg = std::move(arg)] {
      const Matrix& A2 = node(a).value;
      const Matrix& g = node(out).grad;
      Matrix ga = Matrix::Zero(A2.rows(), A2.cols());
      for (Eigen::Index c = 0; c < A2.cols(); ++c) {
        const Eigen::Index r = arg[static_cast<std::size_t>(c)];
        ga(r, c) = (A2(r, c) >= 0.0 ? 1.0 : -1.0) * g(0, c);
      }
      accumulate(a, ga);
    };
  }
  return out;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  Eigen::Index rows = 0;
  const Eigen::Index cols = node(parts.front()).value.cols();
  bool rg = false;
  for (Var p : parts) {
    check(p, "concat_rows");
    if (node(p).value.cols() != cols) throw DimensionError("concat_rows: column mismatch");
    rows += node(p).value.rows();
    rg = rg || node(p).requires_grad;
  }
  Matrix out_v(rows, cols);
  Eigen::Index r0 = 0;
  for (Var p : parts) {
    const Matrix& pv = node(p).value;
    out_v.middleRows(r0, pv.rows()) = pv;
    r0 += pv.rows();
  }
  Var out = push(std::move(out_v), rg, nullptr);
  if (rg) {
    node(out).back = [this, parts, out] {
      const Matrix& g = node(out).grad;
      Eigen::Index r = 0;
      for (Var p : parts) {
        const Eigen::Index n = node(p).value.rows();
        accumulate(p, g.middleRows(r, n));
        r += n;
      }
    };
  }
  return out;
}

Var Tape::slice_rows(Var a, Eigen::Index row0, Eigen::Index nrows) {
  check(a, "slice_rows");
  const Matrix& A = node(a).value;
  if (row0 < 0 || nrows < 0 || row0 + nrows > A.rows())
    throw DimensionError("slice_rows: range out of bounds");
  bool rg = node(a).requires_grad;
  Var out = push(A.middleRows(row0, nrows), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, out, row0, nrows] {
      const Matrix& A2 = node(a).value;
      Matrix ga = Matrix::Zero(A2.rows(), A2.cols());
      ga.middleRows(row0, nrows) = node(out).grad;
      accumulate(a, ga);
    };
  }
  return out;
}

Var Tape::div_rowvec(Var a, Var s) {
  check(a, "div_rowvec");
  check(s, "div_rowvec");
  const Matrix& A = node(a).value;
  const Matrix& S = node(s).value;
  if (S.rows() != 1 || S.cols() != A.cols())
    throw DimensionError("div_rowvec: scale must be (1 x cols)");
  Matrix out_v = A;
  for (Eigen::Index c = 0; c < A.cols(); ++c) out_v.col(c) /= S(0, c);
  bool rg = node(a).requires_grad || node(s).requires_grad;
  Var out = push(std::move(out_v), rg, nullptr);
  if (rg) {
    node(out).back = [this, a, s, out] {
      const Matrix& g = node(out).grad;
      const Matrix& S2 = node(s).value;
      const Matrix& Y = node(out).value;
      Matrix ga = g;
      Matrix gs(1, g.cols());
      for (Eigen::Index c = 0; c < g.cols(); ++c) {
        ga.col(c) /= S2(0, c);
        gs(0, c) = -(g.col(c).cwiseProduct(Y.col(c))).sum() / S2(0, c);
      }
      accumulate(a, ga);
      accumulate(s, gs);
    };
  }
  return out;
}

void Tape::backward(Var root) {
  check(root, "backward");
  Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw DimensionError("backward: root must be scalar (1x1)");
  for (Node& n : nodes_) {
    n.grad.setZero();
    n.touched = false;
  }
  r.grad(0, 0) = 1.0;
  r.touched = true;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back && n.touched) n.back();
  }
}

}  // namespace grtp::nn
