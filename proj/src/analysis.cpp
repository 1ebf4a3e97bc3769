#include "dldmd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

#include "dldmd/errors.hpp"

namespace dldmd::analysis {

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

/// Complex one-sided DFT (n/2 + 1 bins) of a real sequence.
std::vector<std::complex<double>> rfft(const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  std::vector<double> in(x.data(), x.data() + n);
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n / 2 + 1));
  fftw_plan plan;
  {
    std::lock_guard lock(plan_mutex());
    plan = fftw_plan_dft_r2c_1d(n, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  if (!plan) throw NumericError("fft: planning failed");
  fftw_execute(plan);
  {
    std::lock_guard lock(plan_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

void check_series(const Eigen::VectorXd& series, double dt) {
  if (series.size() < 8) throw std::invalid_argument("fft_spectrum: need at least 8 samples");
  if (!(dt > 0.0)) throw std::invalid_argument("fft_spectrum: dt must be positive");
  if (!series.allFinite()) throw NumericError("fft_spectrum: non-finite sample");
}

Eigen::VectorXd centred(const Eigen::VectorXd& s) {
  return (s.array() - s.mean()).matrix();
}

}  // namespace

Spectrum fft_spectrum(const Eigen::VectorXd& series, double dt) {
  check_series(series, dt);
  const Eigen::Index n = series.size();
  const auto X = rfft(centred(series));
  const auto bins = static_cast<Eigen::Index>(X.size());

  Spectrum s;
  s.frequencies.resize(bins);
  s.magnitude.resize(bins);
  for (Eigen::Index k = 0; k < bins; ++k) {
    s.frequencies(k) = static_cast<double>(k) / (static_cast<double>(n) * dt);
    s.magnitude(k) = std::abs(X[static_cast<std::size_t>(k)]);
  }

  const double peak = s.magnitude.maxCoeff(&s.peak_bin);
  const double scale = std::max(1.0, series.cwiseAbs().maxCoeff());
  if (peak <= 1e-12 * scale * static_cast<double>(n)) {
    s.degenerate = true;
    s.concentration = 1.0;
    s.amplitude = Eigen::VectorXd::Zero(bins);
    return s;
  }
  s.amplitude = s.magnitude / peak;
  const Eigen::VectorXd energy = s.magnitude.array().square();
  const Eigen::Index lo = std::max<Eigen::Index>(0, s.peak_bin - 1);
  const Eigen::Index hi = std::min<Eigen::Index>(bins - 1, s.peak_bin + 1);
  s.concentration = std::clamp(energy.segment(lo, hi - lo + 1).sum() / energy.sum(), 0.0, 1.0);
  return s;
}

ParsevalCheck parseval(const Eigen::VectorXd& series, double dt) {
  check_series(series, dt);
  const Eigen::VectorXd x = centred(series);
  const auto X = rfft(x);
  const std::size_t n = static_cast<std::size_t>(x.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < X.size(); ++k) {
    const bool paired = k != 0 && !(n % 2 == 0 && k == n / 2);
    sum += (paired ? 2.0 : 1.0) * std::norm(X[k]);
  }
  return {x.squaredNorm(), sum / static_cast<double>(n)};
}

double SpectrumReport::min_concentration() const {
  if (concentration.empty()) return 1.0;
  return *std::min_element(concentration.begin(), concentration.end());
}

SpectrumReport spectrum_report(const Eigen::MatrixXd& series, double dt) {
  SpectrumReport r;
  for (Eigen::Index i = 0; i < series.rows(); ++i) {
    Spectrum s = fft_spectrum(series.row(i).transpose(), dt);
    if (i == 0) r.frequencies = s.frequencies;
    r.amplitudes.push_back(std::move(s.amplitude));
    r.concentration.push_back(s.concentration);
    r.degenerate.push_back(s.degenerate);
  }
  return r;
}

SpectralComparison spectral_comparison(const training::Checkpoint& c, const Trajectory& traj) {
  return {spectrum_report(traj.states, traj.dt),
          spectrum_report(ad::encode(c.params, traj.states), traj.dt)};
}

std::string to_string(CircleClass c) {
  switch (c) {
    case CircleClass::inside: return "inside";
    case CircleClass::on: return "on";
    case CircleClass::outside: return "outside";
  }
  return "on";
}

EigReport eig_report(const std::vector<edmd::EdmdResult>& results, double band) {
  if (!(band > 0.0)) throw std::invalid_argument("eig_report: band must be positive");
  EigReport r;
  r.band = band;
  for (std::size_t i = 0; i < results.size(); ++i) {
    for (Eigen::Index j = 0; j < results[i].t.size(); ++j) {
      EigEntry e;
      e.trajectory = i;
      e.t = results[i].t(j);
      e.modulus = std::abs(e.t);
      e.distance = e.modulus - 1.0;
      if (std::abs(e.distance) <= band) {
        e.cls = CircleClass::on;
        ++r.on;
      } else if (e.distance < 0) {
        e.cls = CircleClass::inside;
        ++r.inside;
      } else {
        e.cls = CircleClass::outside;
        ++r.outside;
      }
      r.entries.push_back(e);
    }
  }
  return r;
}

BeyondPrediction predict_beyond(const training::Checkpoint& c, const Trajectory& traj,
                                double t_pred, const training::TruthProvider& truth) {
  const auto steps = static_cast<Eigen::Index>(std::llround(t_pred / traj.dt));
  if (steps < traj.size() - 1)
    throw std::invalid_argument("predict_beyond: t_pred is shorter than the observed window");
  BeyondPrediction out;
  out.model = training::predict(c, traj, steps);
  out.truth = steps == traj.size() - 1 ? traj : truth(traj, t_pred);
  out.mse = training::mse(out.model.predicted.states, out.truth.states);
  return out;
}

BoundingBox BoundingBox::scaled(double factor) const {
  const Eigen::VectorXd mid = 0.5 * (lo + hi);
  const Eigen::VectorXd half = 0.5 * factor * (hi - lo);
  return {mid - half, mid + half};
}

bool BoundingBox::contains(const Eigen::MatrixXd& states) const {
  for (Eigen::Index j = 0; j < states.cols(); ++j)
    if ((states.col(j).array() < lo.array()).any() || (states.col(j).array() > hi.array()).any())
      return false;
  return true;
}

BoundingBox bounding_box(const std::vector<Trajectory>& trajs) {
  if (trajs.empty()) throw std::invalid_argument("bounding_box: no trajectories");
  BoundingBox b{trajs.front().states.rowwise().minCoeff(),
                trajs.front().states.rowwise().maxCoeff()};
  for (const auto& t : trajs) {
    b.lo = b.lo.cwiseMin(t.states.rowwise().minCoeff());
    b.hi = b.hi.cwiseMax(t.states.rowwise().maxCoeff());
  }
  return b;
}

int sign_changes(const Eigen::MatrixXd& states, Eigen::Index coord) {
  int changes = 0;
  double last = 0.0;
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    const double v = states(coord, j);
    if (v == 0.0) continue;
    if (last != 0.0 && (v > 0) != (last > 0)) ++changes;
    last = v;
  }
  return changes;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_spectra_csv(const std::filesystem::path& file, const SpectralComparison& s) {
  auto out = open_csv(file);
  out << "frequency";
  for (std::size_t i = 0; i < s.phase.coordinates(); ++i) out << ",phase_" << i;
  for (std::size_t i = 0; i < s.latent.coordinates(); ++i) out << ",latent_" << i;
  out << '\n';
  for (Eigen::Index k = 0; k < s.phase.frequencies.size(); ++k) {
    out << s.phase.frequencies(k);
    for (const auto& a : s.phase.amplitudes) out << ',' << a(k);
    for (const auto& a : s.latent.amplitudes) out << ',' << a(k);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + file.string());
}

void write_eigenvalues_csv(const std::filesystem::path& file, const EigReport& r) {
  auto out = open_csv(file);
  out << "traj_id,re,im,modulus,class\n";
  for (const auto& e : r.entries)
    out << e.trajectory << ',' << e.t.real() << ',' << e.t.imag() << ',' << e.modulus << ','
        << to_string(e.cls) << '\n';
  if (!out) throw IoError("write failed: " + file.string());
}

void write_trajectory_csv(const std::filesystem::path& file, const Trajectory& truth,
                          const Trajectory& predicted) {
  if (truth.states.cols() != predicted.states.cols() ||
      truth.states.rows() != predicted.states.rows())
    throw std::invalid_argument("write_trajectory_csv: truth and prediction differ in shape");
  auto out = open_csv(file);
  out << "t";
  for (Eigen::Index i = 0; i < truth.state_dim(); ++i) out << ",truth_" << i;
  for (Eigen::Index i = 0; i < truth.state_dim(); ++i) out << ",pred_" << i;
  out << '\n';
  for (Eigen::Index j = 0; j < truth.size(); ++j) {
    out << truth.dt * static_cast<double>(j);
    for (Eigen::Index i = 0; i < truth.state_dim(); ++i) out << ',' << truth.states(i, j);
    for (Eigen::Index i = 0; i < truth.state_dim(); ++i) out << ',' << predicted.states(i, j);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + file.string());
}

}  // namespace dldmd::analysis
