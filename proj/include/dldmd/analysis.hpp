#pragma once

#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dldmd/edmd.hpp"
#include "dldmd/training.hpp"

namespace dldmd::analysis {

using dynamics::Trajectory;

/// One-sided magnitude spectrum of a single mean-removed series.
struct Spectrum {
  Eigen::VectorXd frequencies;  // bin k at k / (n dt)
  Eigen::VectorXd magnitude;    // |X_k|, un-normalized
  Eigen::VectorXd amplitude;    // magnitude / max(magnitude); zero when degenerate
  double concentration = 1.0;   // energy in dominant bin +-1 over total, in [0, 1]
  Eigen::Index peak_bin = 0;
  bool degenerate = false;      // constant input
};

/// Throws std::invalid_argument for fewer than 8 samples or dt <= 0.
Spectrum fft_spectrum(const Eigen::VectorXd& series, double dt);

/// Energy of the mean-removed series, and the same energy recomputed from the
/// one-sided spectrum (Parseval with doubled interior bins).
struct ParsevalCheck {
  double time_energy = 0.0;
  double spectral_energy = 0.0;
};
ParsevalCheck parseval(const Eigen::VectorXd& series, double dt);

struct SpectrumReport {
  Eigen::VectorXd frequencies;
  std::vector<Eigen::VectorXd> amplitudes;  // one per coordinate
  std::vector<double> concentration;
  std::vector<bool> degenerate;

  std::size_t coordinates() const { return amplitudes.size(); }
  double min_concentration() const;
};

/// Spectra of every row of `series` (coordinates x samples).
SpectrumReport spectrum_report(const Eigen::MatrixXd& series, double dt);

struct SpectralComparison {
  SpectrumReport phase;
  SpectrumReport latent;
};

/// Phase-space spectra of the observed states and latent spectra of their
/// encoder image.
SpectralComparison spectral_comparison(const training::Checkpoint& c, const Trajectory& traj);

enum class CircleClass { inside, on, outside };
std::string to_string(CircleClass c);

struct EigEntry {
  std::size_t trajectory = 0;
  std::complex<double> t;
  double modulus = 0.0;
  double distance = 0.0;  // |t| - 1
  CircleClass cls = CircleClass::on;
};

struct EigReport {
  std::vector<EigEntry> entries;
  std::size_t inside = 0;
  std::size_t on = 0;
  std::size_t outside = 0;
  double band = 0.01;
};

/// Classifies each discrete-time eigenvalue by ||t| - 1| against `band`.
/// Throws std::invalid_argument unless band > 0.
EigReport eig_report(const std::vector<edmd::EdmdResult>& results, double band = 0.01);

struct BeyondPrediction {
  training::ModelPrediction model;
  Trajectory truth;
  double mse = 0.0;
};

/// Prediction out to t_pred from the observed window, scored against `truth`.
/// Throws std::invalid_argument when t_pred is shorter than the window.
BeyondPrediction predict_beyond(const training::Checkpoint& c, const Trajectory& traj,
                                double t_pred, const training::TruthProvider& truth);

/// Axis-aligned box of a set of trajectories.
struct BoundingBox {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  /// Box grown by `factor` about its centre.
  BoundingBox scaled(double factor) const;
  bool contains(const Eigen::MatrixXd& states) const;
};
BoundingBox bounding_box(const std::vector<Trajectory>& trajs);

/// Number of sign changes of row `coord`.
int sign_changes(const Eigen::MatrixXd& states, Eigen::Index coord = 0);

// CSV emitters. Column layouts are listed in docs/FORMATS.md.
void write_spectra_csv(const std::filesystem::path& file, const SpectralComparison& s);
void write_eigenvalues_csv(const std::filesystem::path& file, const EigReport& r);
void write_trajectory_csv(const std::filesystem::path& file, const Trajectory& truth,
                          const Trajectory& predicted);

}  // namespace dldmd::analysis
