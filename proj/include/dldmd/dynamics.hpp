#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace dldmd::dynamics {

using State = Eigen::VectorXd;
using VectorField = std::function<State(const State&)>;

enum class System { pendulum, duffing, vanderpol, lorenz63 };

std::string to_string(System s);
/// Throws std::invalid_argument for unknown names.
System system_from_string(std::string_view name);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// One benchmark vector field together with its sampling protocol.
struct SystemSpec {
  System system = System::pendulum;
  int state_dim = 2;
  double mu = 1.5;
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
  std::vector<Interval> box;  // per-coordinate sampling interval (closed)
  double dt = 0.05;
  double t_final = 20.0;
  double t_predict = 40.0;
  bool separatrix_filter = false;  // pendulum: 0.5*x2^2 - cos(x1) < 0.99
  bool std_scaling = false;        // Van der Pol: divide by training std

  /// Step sizes, horizons, parameters and boxes used for the benchmarks.
  static SystemSpec defaults(System s);

  /// Number of steps N_T = round(t_final / dt).
  std::size_t steps() const;
  std::size_t prediction_steps() const;
  bool admissible(const State& x) const;
  /// Throws std::invalid_argument if the invariants on dt/t_final/t_predict fail.
  void validate() const;
};

inline constexpr double kSeparatrixLevel = 0.99;
inline constexpr double kBlowUpThreshold = 1e6;

double pendulum_energy(const State& x);

/// f(x) for the named system.
State eval_rhs(const SystemSpec& spec, const State& x);
VectorField vector_field(const SystemSpec& spec);

/// Classical fourth-order Runge-Kutta step, weights (1, 2, 2, 1) / 6.
/// Throws NumericError naming the stage that first produced a non-finite value.
State rk4_step(const VectorField& f, const State& x, double dt);
State rk4_step(const SystemSpec& spec, const State& x, double dt);

/// A uniformly sampled state sequence; column j is the state at t = j*dt.
struct Trajectory {
  Eigen::MatrixXd states;
  double dt = 0.0;
  std::string system;

  Eigen::Index size() const { return states.cols(); }
  Eigen::Index state_dim() const { return states.rows(); }
  double horizon() const { return dt * static_cast<double>(size() - 1); }
};

/// Integrates from x0 for round(horizon/dt) steps. horizon must be a multiple
/// of dt (to 1e-9 relative). Throws DivergenceError when any coordinate
/// exceeds kBlowUpThreshold in magnitude.
Trajectory simulate(const VectorField& f, const State& x0, double dt,
                    double horizon, std::string tag = "custom");
Trajectory simulate(const SystemSpec& spec, const State& x0, double horizon);

/// Per-coordinate scale factors; stored data are raw / scale.
struct Normalization {
  Eigen::VectorXd scale;

  static Normalization identity(int dim) {
    return {Eigen::VectorXd::Ones(dim)};
  }
  bool is_identity() const { return (scale.array() == 1.0).all(); }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& scaled) const;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  std::size_t total() const { return train + val + test; }
};

struct Dataset {
  std::string system;
  double dt = 0.0;
  std::uint64_t seed = 0;
  Normalization normalization;
  std::vector<Trajectory> train;
  std::vector<Trajectory> val;
  std::vector<Trajectory> test;
};

/// Uniform initial conditions in the spec's box; the stream of trajectory i
/// (numbered train, then val, then test) is seeded from (seed, i). Pendulum
/// samples outside the separatrix level are rejected and redrawn, at most
/// 10,000 draws per trajectory.
Dataset sample_dataset(const SystemSpec& spec, SplitCounts counts,
                       std::uint64_t seed, int threads = 1);

/// Re-simulates `traj` (stored in normalized coordinates) from its first state
/// out to t_end and returns the result in the same normalized coordinates.
Trajectory extend_trajectory(const SystemSpec& spec, const Normalization& norm,
                             const Trajectory& traj, double t_end);

// ---------------------------------------------------------------------------
// Dataset files. See docs/FORMATS.md for the byte layout.

struct SplitHeader {
  std::string system;
  std::string split;
  std::uint32_t state_dim = 0;
  std::uint64_t count = 0;
  std::uint64_t samples = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  Eigen::VectorXd scale;
};

void write_split(const std::filesystem::path& file, const Dataset& data,
                 std::string_view split);
std::vector<Trajectory> read_split(const std::filesystem::path& file,
                                   SplitHeader* header = nullptr);

/// Writes train.bin, val.bin, test.bin and their .meta.json sidecars.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace dldmd::dynamics
