// Shared oracles and fixtures for the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dldmd/autodiff.hpp"
#include "dldmd/dynamics.hpp"
#include "dldmd/network.hpp"
#include "dldmd/random.hpp"
#include "dldmd/training.hpp"

namespace testsupport {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd random_matrix(dldmd::Rng& rng, Eigen::Index r, Eigen::Index c,
                              double lo = -1.0, double hi = 1.0) {
  MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

/// Entries bounded away from zero so ReLU kinks stay out of reach of the
/// finite-difference stencil.
inline MatrixXd off_kink_matrix(dldmd::Rng& rng, Eigen::Index r, Eigen::Index c) {
  MatrixXd m = random_matrix(rng, r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double& v = m.data()[i];
    if (std::abs(v) < 0.05) v = v < 0 ? v - 0.05 : v + 0.05;
  }
  return m;
}

/// exp(A) by scaling and squaring of a long Taylor series; independent of
/// any eigen-decomposition.
inline MatrixXd expm_taylor(const MatrixXd& A) {
  const double norm = A.cwiseAbs().rowwise().sum().maxCoeff();
  int s = 0;
  while (norm / std::ldexp(1.0, s) > 0.25) ++s;
  const MatrixXd B = A / std::ldexp(1.0, s);
  MatrixXd term = MatrixXd::Identity(A.rows(), A.cols());
  MatrixXd sum = term;
  for (int k = 1; k <= 30; ++k) {
    term = term * B / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum;
}

/// Stable A = Q diag-ish Q^-1 with eigenvalue real parts in [-1, -0.1].
inline MatrixXd random_stable(dldmd::Rng& rng, int n) {
  MatrixXd D = MatrixXd::Zero(n, n);
  int i = 0;
  if (n >= 2 && rng.uniform() < 0.5) {
    // complex pair
    const double re = rng.uniform(-1.0, -0.1), im = rng.uniform(0.3, 2.0);
    D(0, 0) = re;
    D(1, 1) = re;
    D(0, 1) = im;
    D(1, 0) = -im;
    i = 2;
  }
  for (; i < n; ++i) D(i, i) = rng.uniform(-1.0, -0.1);
  MatrixXd Q = random_matrix(rng, n, n) + 2.0 * MatrixXd::Identity(n, n);
  return Q * D * Q.inverse();
}

/// Identity autoencoder: relu(x) - relu(-x) = x through every layer.
/// Latent dimension equals state dimension.
inline dldmd::ad::NetworkParams identity_stub(int n, int width = 8, int hidden = 2) {
  auto p = dldmd::ad::NetworkParams::zeros(n, n, width, hidden);
  auto fill = [n, width](std::vector<dldmd::ad::Layer>& layers) {
    const MatrixXd I = MatrixXd::Identity(n, n);
    layers.front().W.topRows(n) = I;
    layers.front().W.middleRows(n, n) = -I;
    for (std::size_t k = 1; k + 1 < layers.size(); ++k)
      layers[k].W = MatrixXd::Identity(width, width);
    layers.back().W.leftCols(n) = I;
    layers.back().W.middleCols(n, n) = -I;
  };
  fill(p.encoder);
  fill(p.decoder);
  return p;
}

inline dldmd::training::Checkpoint stub_checkpoint(int n, const std::string& system, double dt) {
  dldmd::training::Checkpoint c;
  c.params = identity_stub(n);
  c.hyper.latent_dim = n;
  c.system = system;
  c.dt = dt;
  c.normalization = dldmd::dynamics::Normalization::identity(n);
  return c;
}

/// Exact linear flow x_{j+1} = M x_j, tagged with `system`.
inline dldmd::dynamics::Trajectory linear_trajectory(const MatrixXd& M, const VectorXd& x0,
                                                     Eigen::Index samples, double dt,
                                                     const std::string& system) {
  dldmd::dynamics::Trajectory t;
  t.dt = dt;
  t.system = system;
  t.states.resize(x0.size(), samples);
  t.states.col(0) = x0;
  for (Eigen::Index j = 1; j < samples; ++j) t.states.col(j) = M * t.states.col(j - 1);
  return t;
}

inline dldmd::training::TruthProvider linear_truth(const MatrixXd& M) {
  return [M](const dldmd::dynamics::Trajectory& t, double t_end) {
    const auto n = static_cast<Eigen::Index>(std::llround(t_end / t.dt)) + 1;
    return linear_trajectory(M, t.states.col(0), n, t.dt, t.system);
  };
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks

inline constexpr double kFdStep = 1e-5;
/// Denominator floor so entries with near-zero gradient are compared absolutely.
inline constexpr double kFdFloor = 1e-7;

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kFdFloor});
}

struct GradCheck {
  std::string name;
  int probes = 0;
  double max_rel_error = 0.0;
};

/// `build` records a function of the leaves on the tape and returns a matrix
/// node; it is reduced to a scalar through fixed random weights plus a
/// quadratic term. Probes random leaf entries with central differences.
inline GradCheck check_primitive(const std::string& name, std::vector<MatrixXd> inputs,
                                 const std::function<dldmd::ad::Var(
                                     dldmd::ad::Tape&, const std::vector<dldmd::ad::Var>&)>& build,
                                 int probes, dldmd::Rng& rng) {
  using namespace dldmd::ad;
  MatrixXd a, b;
  auto evaluate = [&](const std::vector<MatrixXd>& in, std::vector<MatrixXd>* grads) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& m : in) leaves.push_back(tape.variable(m));
    Var out = build(tape, leaves);
    if (a.size() == 0) {
      a = random_matrix(rng, 1, out.rows());
      b = random_matrix(rng, out.cols(), 1);
    }
    Var loss = tape.add(tape.matmul(tape.matmul(tape.constant(a), out), tape.constant(b)),
                        tape.scale(tape.squared_norm(out), 0.1));
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (const auto& l : leaves) grads->push_back(tape.grad(l));
    }
    return loss.value()(0, 0);
  };

  std::vector<MatrixXd> grads;
  evaluate(inputs, &grads);
  GradCheck out{name, 0, 0.0};
  for (int p = 0; p < probes; ++p) {
    const auto which = static_cast<std::size_t>(rng.below(inputs.size()));
    const auto idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(inputs[which].size())));
    auto plus = inputs, minus = inputs;
    plus[which].data()[idx] += kFdStep;
    minus[which].data()[idx] -= kFdStep;
    const double fd = (evaluate(plus, nullptr) - evaluate(minus, nullptr)) / (2.0 * kFdStep);
    out.max_rel_error = std::max(out.max_rel_error, relative_error(grads[which].data()[idx], fd));
    ++out.probes;
  }
  return out;
}

/// Every tape primitive, probed `per_op` times each.
inline std::vector<GradCheck> primitive_suite(int per_op, std::uint64_t seed) {
  using namespace dldmd::ad;
  using Leaves = const std::vector<Var>&;
  dldmd::Rng rng(seed);
  std::vector<GradCheck> out;
  auto run = [&](const std::string& name, std::vector<MatrixXd> in,
                 std::function<Var(Tape&, Leaves)> f) {
    out.push_back(check_primitive(name, std::move(in), f, per_op, rng));
  };
  run("matmul", {random_matrix(rng, 3, 4), random_matrix(rng, 4, 5)},
      [](Tape& t, Leaves v) { return t.matmul(v[0], v[1]); });
  run("add", {random_matrix(rng, 3, 4), random_matrix(rng, 3, 4)},
      [](Tape& t, Leaves v) { return t.add(v[0], v[1]); });
  run("sub", {random_matrix(rng, 3, 4), random_matrix(rng, 3, 4)},
      [](Tape& t, Leaves v) { return t.sub(v[0], v[1]); });
  run("add_bias", {random_matrix(rng, 3, 6), random_matrix(rng, 3, 1)},
      [](Tape& t, Leaves v) { return t.add_bias(v[0], v[1]); });
  run("add_diagonal", {random_matrix(rng, 4, 4)},
      [](Tape& t, Leaves v) { return t.add_diagonal(v[0], 0.3); });
  run("scale", {random_matrix(rng, 3, 4)}, [](Tape& t, Leaves v) { return t.scale(v[0], -1.7); });
  run("relu", {off_kink_matrix(rng, 5, 4)}, [](Tape& t, Leaves v) { return t.relu(v[0]); });
  run("transpose", {random_matrix(rng, 3, 5)}, [](Tape& t, Leaves v) { return t.transpose(v[0]); });
  run("inverse", {random_matrix(rng, 4, 4) + 3.0 * MatrixXd::Identity(4, 4)},
      [](Tape& t, Leaves v) { return t.inverse(v[0]); });
  run("pow", {random_matrix(rng, 3, 3, 0.5, 2.0)}, [](Tape& t, Leaves v) { return t.pow(v[0], 2.5); });
  run("mse", {random_matrix(rng, 3, 4), random_matrix(rng, 3, 4)},
      [](Tape& t, Leaves v) { return t.mse(v[0], v[1]); });
  run("frobenius", {random_matrix(rng, 3, 4)}, [](Tape& t, Leaves v) { return t.frobenius(v[0]); });
  run("squared_norm", {random_matrix(rng, 3, 4)},
      [](Tape& t, Leaves v) { return t.squared_norm(v[0]); });
  run("sum", {random_matrix(rng, 3, 4)}, [](Tape& t, Leaves v) { return t.sum(v[0]); });
  run("slice_cols", {random_matrix(rng, 3, 7)},
      [](Tape& t, Leaves v) { return t.slice_cols(v[0], 2, 3); });
  run("hcat", {random_matrix(rng, 3, 2), random_matrix(rng, 3, 4)},
      [](Tape& t, Leaves v) { return t.hcat({v[0], v[1], v[0]}); });
  run("rollout", {0.4 * random_matrix(rng, 3, 3), random_matrix(rng, 3, 1)},
      [](Tape& t, Leaves v) { return t.rollout(v[0], v[1], 6); });
  run("diff_koopman", {random_matrix(rng, 3, 9), random_matrix(rng, 3, 9)},
      [](Tape&, Leaves v) { return diff_koopman(v[0], v[1], 1e-3); });
  return out;
}

/// Small pendulum batch and a narrow network for loss-level checks.
struct ToyProblem {
  dldmd::ad::NetworkParams params;
  std::vector<dldmd::dynamics::Trajectory> trajs;
  dldmd::training::HyperParams hyper;
};

inline ToyProblem toy_problem(std::uint64_t seed) {
  using namespace dldmd;
  ToyProblem p;
  auto spec = dynamics::SystemSpec::defaults(dynamics::System::pendulum);
  spec.t_final = 0.6;
  spec.t_predict = 1.2;
  p.trajs = dynamics::sample_dataset(spec, {3, 1, 1}, seed).train;
  p.hyper.latent_dim = 2;
  p.hyper.hidden_width = 6;
  p.hyper.hidden_layers = 2;
  p.hyper.alpha4 = 1e-3;
  p.hyper.ridge_eps = 1e-4;
  p.params = ad::NetworkParams::glorot(2, 2, 6, 2, seed);
  // Zero biases put whole columns exactly on a ReLU kink once a layer is dead.
  Rng rng(seed + 1);
  for (auto* net : {&p.params.encoder, &p.params.decoder})
    for (auto& l : *net) l.b = random_matrix(rng, l.b.size(), 1, 0.05, 0.2);
  return p;
}

/// Probes the full batch-loss gradient against central differences of the
/// forward loss.
inline GradCheck loss_gradient_check(int probes, std::uint64_t seed) {
  using namespace dldmd;
  ToyProblem p = toy_problem(seed);
  const auto batch = training::as_batch(p.trajs);
  const auto lg = training::dldmd_loss_and_gradient(p.params, batch, p.hyper);
  VectorXd flat = p.params.flatten();
  Rng rng(seed ^ 0x5eed);
  GradCheck out{"dldmd_loss", 0, 0.0};
  for (int k = 0; k < probes; ++k) {
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(flat.size())));
    auto at = [&](double delta) {
      VectorXd f = flat;
      f(i) += delta;
      ad::NetworkParams q = p.params;
      q.assign(f);
      return training::dldmd_loss(q, batch, p.hyper).total;
    };
    const double fd = (at(kFdStep) - at(-kFdStep)) / (2.0 * kFdStep);
    out.max_rel_error = std::max(out.max_rel_error, relative_error(lg.gradient(i), fd));
    ++out.probes;
  }
  return out;
}

}  // namespace testsupport
