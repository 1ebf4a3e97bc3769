#include "dldmd/edmd.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dldmd/errors.hpp"

namespace dldmd::edmd {

SnapshotPair build_snapshots(const Matrix& observables) {
  const Eigen::Index n = observables.cols();
  if (n < 2)
    throw std::invalid_argument("build_snapshots: need at least two snapshots, got " +
                                std::to_string(n));
  return {observables.leftCols(n - 1), observables.rightCols(n - 1)};
}

KoopmanFit fit_koopman(const SnapshotPair& s, double rel_threshold) {
  if (s.minus.rows() != s.plus.rows() || s.minus.cols() != s.plus.cols())
    throw std::invalid_argument("fit_koopman: snapshot matrices differ in shape");
  const linalg::Svd dec = linalg::svd(s.minus);
  const Eigen::Index r = dec.rank(rel_threshold);
  if (r == 0) throw NumericError("fit_koopman: Psi_- has rank zero");

  const Matrix W = dec.W.leftCols(r);
  const Matrix plus_W = s.plus * W;
  KoopmanFit fit;
  fit.rank = r;
  fit.K = plus_W * dec.sigma.head(r).cwiseInverse().asDiagonal() *
          dec.U.leftCols(r).transpose();
  // Psi_+ (I - W W^T) without forming the N_T x N_T projector.
  fit.residual = (s.plus - plus_W * W.transpose()).norm();
  return fit;
}

EdmdResult decompose(const Matrix& K, double dt, const Vector& psi1) {
  if (K.rows() != K.cols()) throw std::invalid_argument("decompose: K is not square");
  if (!(dt > 0.0)) throw std::invalid_argument("decompose: dt must be positive");
  if (psi1.size() != K.rows())
    throw std::invalid_argument("decompose: psi1 length does not match K");

  const linalg::Eig e = linalg::eig(K);
  if (!(e.cond_V <= kMaxEigenbasisCondition))
    throw NumericError("decompose: ill-conditioned eigenbasis, cond(V) = " +
                       std::to_string(e.cond_V));
  EdmdResult r;
  r.K = K;
  r.V = e.V;
  r.t = e.values;
  r.dt = dt;
  r.cond_V = e.cond_V;
  r.lambda = r.t.unaryExpr([dt](linalg::Complex z) { return std::log(z) / dt; });
  r.k = linalg::lstsq(r.V, psi1.cast<linalg::Complex>());
  return r;
}

EdmdResult run(const Matrix& observables, double dt, double rel_threshold) {
  const KoopmanFit fit = fit_koopman(build_snapshots(observables), rel_threshold);
  EdmdResult r = decompose(fit.K, dt, observables.col(0));
  r.residual = fit.residual;
  return r;
}

LatentPrediction predict_latent(const EdmdResult& r, Eigen::Index steps) {
  if (steps < 0) throw std::invalid_argument("predict_latent: negative step count");
  const Eigen::Index n = r.V.rows();
  CVector coeff = r.k;
  LatentPrediction out;
  out.values.resize(n, steps + 1);
  double imag_sq = 0.0;
  for (Eigen::Index j = 0; j <= steps; ++j) {
    const CVector col = r.V * coeff;
    out.values.col(j) = col.real();
    imag_sq += col.imag().squaredNorm();
    coeff = coeff.cwiseProduct(r.t);
  }
  const double real_norm = out.values.norm();
  out.imag_ratio = real_norm > 0.0 ? std::sqrt(imag_sq) / real_norm
                                   : (imag_sq > 0.0 ? INFINITY : 0.0);
  out.imag_warning = !(out.imag_ratio < kImagResidueTolerance);
  return out;
}

ModeFit fit_modes(const dynamics::Trajectory& traj, const EdmdResult& r,
                  const Matrix& observables) {
  if (observables.cols() != traj.size())
    throw std::invalid_argument("fit_modes: observables not aligned with trajectory");
  if (observables.rows() != r.V.rows())
    throw std::invalid_argument("fit_modes: observable count does not match V");
  // Eigenfunction values Phi = V^-1 Psi, then H = Y Phi^+.
  Eigen::FullPivLU<CMatrix> lu(r.V);
  if (!lu.isInvertible()) throw NumericError("fit_modes: V is singular");
  const CMatrix phi = lu.solve(observables.cast<linalg::Complex>());

  Eigen::JacobiSVD<CMatrix> sv(phi);
  const double smax = sv.singularValues().size() ? sv.singularValues()(0) : 0.0;
  const Eigen::Index rank =
      (sv.singularValues().array() > linalg::kDefaultRelThreshold * smax).count();

  ModeFit fit;
  fit.rank_deficient = rank < phi.rows();
  fit.modes = traj.states.cast<linalg::Complex>() * linalg::pinv_truncated(phi);
  return fit;
}

dynamics::Trajectory standard_dmd(const dynamics::Trajectory& traj, Eigen::Index steps) {
  const EdmdResult r = run(traj.states, traj.dt);
  dynamics::Trajectory out;
  out.dt = traj.dt;
  out.system = traj.system;
  out.states = predict_latent(r, steps).values;
  return out;
}

}  // namespace dldmd::edmd
