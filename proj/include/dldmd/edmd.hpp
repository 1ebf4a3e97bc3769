#pragma once

#include <Eigen/Dense>

#include "dldmd/dynamics.hpp"
#include "dldmd/linalg.hpp"

namespace dldmd::edmd {

using linalg::CMatrix;
using linalg::CVector;
using linalg::Matrix;
using linalg::Vector;

/// Time-shifted observable snapshots. Column j of `plus` is column j+1 of the
/// source sequence, column j of `minus` is column j.
struct SnapshotPair {
  Matrix minus;
  Matrix plus;
};

/// Splits an N_o x (N_T+1) observable sequence into (Psi_-, Psi_+).
/// Throws std::invalid_argument for fewer than two columns.
SnapshotPair build_snapshots(const Matrix& observables);

struct KoopmanFit {
  Matrix K;               // N_o x N_o
  double residual = 0.0;  // ||Psi_+ (I - W W^T)||_F
  Eigen::Index rank = 0;  // retained singular values of Psi_-
};

/// Least-squares Koopman matrix K = Psi_+ W Sigma^+ U^T from the thin SVD of
/// Psi_-. Throws NumericError when Psi_- has rank zero.
KoopmanFit fit_koopman(const SnapshotPair& s,
                       double rel_threshold = linalg::kDefaultRelThreshold);

/// Condition bound on the eigenvector matrix accepted by decompose().
inline constexpr double kMaxEigenbasisCondition = 1e12;

struct EdmdResult {
  Matrix K;
  CMatrix V;
  CVector t;       // discrete-time eigenvalues
  CVector lambda;  // ln(t) / dt, principal branch
  CVector k;       // least-squares coordinates of psi_1 in the eigenbasis
  double residual = 0.0;
  double dt = 0.0;
  double cond_V = 1.0;
};

/// Eigen-decomposes K and projects psi1 onto the eigenbasis.
/// Throws NumericError when cond(V) exceeds kMaxEigenbasisCondition.
EdmdResult decompose(const Matrix& K, double dt, const Vector& psi1);

/// build_snapshots -> fit_koopman -> decompose, psi_1 = first column.
EdmdResult run(const Matrix& observables, double dt,
               double rel_threshold = linalg::kDefaultRelThreshold);

struct LatentPrediction {
  Matrix values;            // N_o x (steps+1), real part
  double imag_ratio = 0.0;  // ||imag||_F / ||real||_F
  bool imag_warning = false;
};

inline constexpr double kImagResidueTolerance = 1e-6;

/// Column j is Re(V diag(t)^j k), j = 0..steps.
LatentPrediction predict_latent(const EdmdResult& r, Eigen::Index steps);

struct ModeFit {
  CMatrix modes;  // N_s x N_o
  bool rank_deficient = false;
};

/// Koopman modes: least-squares H minimizing sum_j ||y_j - H V^-1 Psi(y_j)||.
/// `observables` holds Psi(y_j) column-wise, aligned with traj.states.
ModeFit fit_modes(const dynamics::Trajectory& traj, const EdmdResult& r,
                  const Matrix& observables);

/// Standard DMD on the raw state: identity observables, prediction returned
/// in state space with steps+1 samples.
dynamics::Trajectory standard_dmd(const dynamics::Trajectory& traj, Eigen::Index steps);

}  // namespace dldmd::edmd
