#include "dldmd/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dldmd/errors.hpp"

namespace dldmd::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::add_bias: return "add_bias";
    case Op::add_diagonal: return "add_diagonal";
    case Op::scale: return "scale";
    case Op::relu: return "relu";
    case Op::transpose: return "transpose";
    case Op::inverse: return "inverse";
    case Op::pow: return "pow";
    case Op::mse: return "mse";
    case Op::frobenius: return "frobenius";
    case Op::squared_norm: return "squared_norm";
    case Op::sum: return "sum";
    case Op::slice_cols: return "slice_cols";
    case Op::hcat: return "hcat";
    case Op::rollout: return "rollout";
  }
  return "?";
}

const Matrix& Var::value() const { return tape->value(*this); }

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace

Var Tape::push(Op op, std::vector<std::size_t> inputs, Matrix value,
               std::function<void(Tape&, std::size_t)> backprop) {
  Node n;
  n.op = op;
  n.requires_grad = false;
  for (auto i : inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  if (n.requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.adjoint.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

Matrix& Tape::adjoint_for_update(std::size_t id) {
  Node& n = nodes_[id];
  if (n.adjoint.size() == 0) n.adjoint.setZero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

template <typename Expr>
void Tape::accumulate(std::size_t id, const Expr& delta) {
  Node& n = nodes_[id];
  if (n.adjoint.size() == 0)
    n.adjoint = delta;
  else
    n.adjoint += delta;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: node belongs to another tape");
  const Node& l = nodes_[loss.id];
  if (l.value.rows() != 1 || l.value.cols() != 1)
    throw std::invalid_argument("backward: loss must be a 1x1 scalar node");
  for (auto& n : nodes_) n.adjoint.resize(0, 0);
  nodes_[loss.id].adjoint = scalar(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backprop || n.adjoint.size() == 0) continue;
    n.backprop(*this, i);
  }
}

Var Tape::matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix c = a.value() * b.value();
  const std::size_t ia = a.id, ib = b.id;
  return push(Op::matmul, {ia, ib}, std::move(c), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].adjoint;
    if (t.needs(ia)) t.accumulate(ia, g * t.nodes_[ib].value.transpose());
    if (t.needs(ib)) t.accumulate(ib, t.nodes_[ia].value.transpose() * g);
  });
}

Var Tape::add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shapes differ");
  const std::size_t ia = a.id, ib = b.id;
  return push(Op::add, {ia, ib}, a.value() + b.value(), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].adjoint;
    if (t.needs(ia)) t.accumulate(ia, g);
    if (t.needs(ib)) t.accumulate(ib, g);
  });
}

Var Tape::sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shapes differ");
  const std::size_t ia = a.id, ib = b.id;
  return push(Op::sub, {ia, ib}, a.value() - b.value(), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].adjoint;
    if (t.needs(ia)) t.accumulate(ia, g);
    if (t.needs(ib)) t.accumulate(ib, -g);
  });
}

Var Tape::add_bias(Var a, Var b) {
  require(b.cols() == 1 && b.rows() == a.rows(), "add_bias: bias must be a matching column");
  Matrix c = a.value().colwise() + b.value().col(0);
  const std::size_t ia = a.id, ib = b.id;
  return push(Op::add_bias, {ia, ib}, std::move(c), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].adjoint;
    if (t.needs(ia)) t.accumulate(ia, g);
    if (t.needs(ib)) t.accumulate(ib, g.rowwise().sum());
  });
}

Var Tape::add_diagonal(Var a, double eps) {
  require(a.rows() == a.cols(), "add_diagonal: matrix is not square");
  Matrix c = a.value();
  c.diagonal().array() += eps;
  const std::size_t ia = a.id;
  return push(Op::add_diagonal, {ia}, std::move(c), [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, t.nodes_[self].adjoint);
  });
}

Var Tape::scale(Var a, double s) {
  const std::size_t ia = a.id;
  return push(Op::scale, {ia}, s * a.value(), [ia, s](Tape& t, std::size_t self) {
    t.accumulate(ia, s * t.nodes_[self].adjoint);
  });
}

Var Tape::relu(Var a) {
  const std::size_t ia = a.id;
  return push(Op::relu, {ia}, a.value().cwiseMax(0.0), [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].adjoint;
    // Output > 0 exactly where input > 0; zero subgradient elsewhere.
    t.accumulate(ia, (t.nodes_[self].value.array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

Var Tape::transpose(Var a) {
  const std::size_t ia = a.id;
  return push(Op::transpose, {ia}, a.value().transpose(), [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, t.nodes_[self].adjoint.transpose());
  });
}

Var Tape::inverse(Var a) {
  require(a.rows() == a.cols(), "inverse: matrix is not square");
  Eigen::PartialPivLU<Matrix> lu(a.value());
  Matrix inv = lu.inverse();
  if (!inv.allFinite() || a.rows() == 0)
    throw NumericError("inverse: singular or non-finite matrix");
  const std::size_t ia = a.id;
  return push(Op::inverse, {ia}, std::move(inv), [ia](Tape& t, std::size_t self) {
    const Matrix& c = t.nodes_[self].value;
    const Matrix& g = t.nodes_[self].adjoint;
    t.accumulate(ia, -(c.transpose() * g * c.transpose()));
  });
}

Var Tape::pow(Var a, double p) {
  const std::size_t ia = a.id;
  return push(Op::pow, {ia}, a.value().array().pow(p).matrix(),
              [ia, p](Tape& t, std::size_t self) {
                const Matrix& x = t.nodes_[ia].value;
                const Matrix& g = t.nodes_[self].adjoint;
                t.accumulate(ia, (g.array() * p * x.array().pow(p - 1.0)).matrix());
              });
}

Var Tape::mse(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mse: shapes differ");
  const double n = static_cast<double>(a.value().size());
  require(n > 0, "mse: empty input");
  const double v = (a.value() - b.value()).squaredNorm() / n;
  const std::size_t ia = a.id, ib = b.id;
  return push(Op::mse, {ia, ib}, scalar(v), [ia, ib, n](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].adjoint(0, 0);
    const Matrix d = (2.0 * g / n) * (t.nodes_[ia].value - t.nodes_[ib].value);
    if (t.needs(ia)) t.accumulate(ia, d);
    if (t.needs(ib)) t.accumulate(ib, -d);
  });
}

Var Tape::frobenius(Var a) {
  const double v = a.value().norm();
  const std::size_t ia = a.id;
  return push(Op::frobenius, {ia}, scalar(v), [ia, v](Tape& t, std::size_t self) {
    if (v == 0.0) return;
    const double g = t.nodes_[self].adjoint(0, 0);
    t.accumulate(ia, (g / v) * t.nodes_[ia].value);
  });
}

Var Tape::squared_norm(Var a) {
  const std::size_t ia = a.id;
  return push(Op::squared_norm, {ia}, scalar(a.value().squaredNorm()),
              [ia](Tape& t, std::size_t self) {
                const double g = t.nodes_[self].adjoint(0, 0);
                t.accumulate(ia, (2.0 * g) * t.nodes_[ia].value);
              });
}

Var Tape::sum(Var a) {
  const std::size_t ia = a.id;
  return push(Op::sum, {ia}, scalar(a.value().sum()), [ia](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].adjoint(0, 0);
    const auto& x = t.nodes_[ia].value;
    t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), g));
  });
}

Var Tape::slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(),
          "slice_cols: range out of bounds");
  const std::size_t ia = a.id;
  return push(Op::slice_cols, {ia}, a.value().middleCols(start, count),
              [ia, start, count](Tape& t, std::size_t self) {
                t.adjoint_for_update(ia).middleCols(start, count) += t.nodes_[self].adjoint;
              });
}

Var Tape::hcat(const std::vector<Var>& parts) {
  require(!parts.empty(), "hcat: no inputs");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == parts.front().rows(), "hcat: row counts differ");
    cols += p.cols();
  }
  Matrix c(parts.front().rows(), cols);
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    c.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(off);
    off += p.cols();
  }
  return push(Op::hcat, ids, std::move(c), [ids, offsets](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].adjoint;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs(ids[k])) continue;
      t.accumulate(ids[k], g.middleCols(offsets[k], t.nodes_[ids[k]].value.cols()));
    }
  });
}

Var Tape::rollout(Var K, Var z0, Eigen::Index steps) {
  require(K.rows() == K.cols(), "rollout: K is not square");
  require(z0.cols() == 1 && z0.rows() == K.rows(), "rollout: z0 must be a matching column");
  require(steps >= 1, "rollout: steps must be positive");
  const Matrix& k = K.value();
  Matrix p(k.rows(), steps);
  p.col(0) = k * z0.value();
  for (Eigen::Index j = 1; j < steps; ++j) p.col(j) = k * p.col(j - 1);
  if (!p.allFinite()) throw NumericError("rollout: powers of K overflowed");
  const std::size_t ik = K.id, iz = z0.id;
  return push(Op::rollout, {ik, iz}, std::move(p), [ik, iz, steps](Tape& t, std::size_t self) {
    const Matrix& kv = t.nodes_[ik].value;
    const Matrix& zv = t.nodes_[iz].value;
    const Matrix& pv = t.nodes_[self].value;
    const Matrix& g = t.nodes_[self].adjoint;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(kv.rows());
    Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
    for (Eigen::Index j = steps; j-- > 0;) {
      a += g.col(j);
      if (j == 0)
        dk.noalias() += a * zv.col(0).transpose();
      else
        dk.noalias() += a * pv.col(j - 1).transpose();
      a = kv.transpose() * a;
    }
    if (t.needs(ik)) t.accumulate(ik, dk);
    if (t.needs(iz)) t.accumulate(iz, a);
  });
}

Var diff_koopman(Var minus, Var plus, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("diff_koopman: ridge eps must be positive");
  if (minus.rows() != plus.rows() || minus.cols() != plus.cols())
    throw std::invalid_argument("diff_koopman: snapshot matrices differ in shape");
  Tape& t = *minus.tape;
  const Var mt = t.transpose(minus);
  const Var gram = t.add_diagonal(t.matmul(minus, mt), eps);
  const Var cross = t.matmul(plus, mt);
  return t.matmul(cross, t.inverse(gram));
}

}  // namespace dldmd::ad
