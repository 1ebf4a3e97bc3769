#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace dldmd::ad {

using Matrix = Eigen::MatrixXd;

enum class Op {
  leaf,
  matmul,
  add,
  sub,
  add_bias,
  add_diagonal,
  scale,
  relu,
  transpose,
  inverse,
  pow,
  mse,
  frobenius,
  squared_norm,
  sum,
  slice_cols,
  hcat,
  rollout,
};

const char* op_name(Op op);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order, so the tape is acyclic by construction. One writer per tape.
class Tape {
public:
  struct Node {
    Op op = Op::leaf;
    std::vector<std::size_t> inputs;
    Matrix value;
    Matrix adjoint;  // empty until reached during backward()
    bool requires_grad = false;
    std::function<void(Tape&, std::size_t)> backprop;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf.
  Var variable(Matrix value);
  /// Leaf that never receives a gradient.
  Var constant(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() loss; zeros if the node was not reached.
  Matrix grad(Var v) const;
  const Node& node(Var v) const { return nodes_[v.id]; }
  std::size_t size() const { return nodes_.size(); }

  /// Clears all adjoints, seeds d(loss)/d(loss) = 1 and sweeps the tape in
  /// reverse. Throws std::invalid_argument unless loss is 1x1.
  void backward(Var loss);

  // Primitive operations.
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// a (r x c) plus column vector b (r x 1) broadcast over columns.
  Var add_bias(Var a, Var b);
  /// a + eps * I for square a.
  Var add_diagonal(Var a, double eps);
  Var scale(Var a, double s);
  /// max(a, 0) elementwise; the subgradient at 0 is 0.
  Var relu(Var a);
  Var transpose(Var a);
  /// Matrix inverse; throws NumericError if singular or non-finite.
  Var inverse(Var a);
  /// Elementwise a^p.
  Var pow(Var a, double p);
  /// mean((a - b)^2) over all entries, as a 1x1 node.
  Var mse(Var a, Var b);
  /// ||a||_F as a 1x1 node; gradient 0 at a = 0.
  Var frobenius(Var a);
  /// sum(a^2) as a 1x1 node.
  Var squared_norm(Var a);
  Var sum(Var a);
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
  Var hcat(const std::vector<Var>& parts);
  /// [K z0, K^2 z0, ..., K^steps z0] for square K and column z0.
  Var rollout(Var K, Var z0, Eigen::Index steps);

private:
  friend struct Var;
  Var push(Op op, std::vector<std::size_t> inputs, Matrix value,
           std::function<void(Tape&, std::size_t)> backprop);
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }
  /// adjoint(id) += delta, allocating on first touch.
  template <typename Expr>
  void accumulate(std::size_t id, const Expr& delta);
  Matrix& adjoint_for_update(std::size_t id);

  std::vector<Node> nodes_;
};

inline Var operator*(Var a, Var b) { return a.tape->matmul(a, b); }
inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(double s, Var a) { return a.tape->scale(a, s); }

/// Differentiable ridge-regularised Koopman fit,
/// K = Psi_+ Psi_-^T (Psi_- Psi_-^T + eps I)^-1. Requires eps > 0.
Var diff_koopman(Var minus, Var plus, double eps);

}  // namespace dldmd::ad
