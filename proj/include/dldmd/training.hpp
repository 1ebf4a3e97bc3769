#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dldmd/dynamics.hpp"
#include "dldmd/edmd.hpp"
#include "dldmd/network.hpp"

namespace dldmd::training {

using dynamics::Trajectory;

enum class Preset { paper_scale, desk_scale };

std::string to_string(Preset p);
Preset preset_from_string(std::string_view name);

struct HyperParams {
  double alpha1 = 1.0;  // reconstruction
  double alpha2 = 1.0;  // one-step latent residual
  double alpha3 = 1.0;  // multi-step prediction
  double alpha4 = 1e-9; // weight decay
  double lr = 1e-3;
  int batch_size = 512;
  int max_epochs = 1000;
  int latent_dim = 2;
  int hidden_width = 128;
  int hidden_layers = 3;
  double ridge_eps = 1e-10;
  double svd_threshold = linalg::kDefaultRelThreshold;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument.
  void validate() const;
  static HyperParams preset(Preset p, dynamics::System s);
};

dynamics::SplitCounts preset_counts(Preset p);

struct LossComponents {
  double recon = 0.0;
  double dmd = 0.0;
  double pred = 0.0;
  double reg = 0.0;  // already multiplied by alpha4
  double total = 0.0;
  double residual = 0.0;  // mean SVD-route E_r, reported only
};

using Batch = std::span<const Trajectory* const>;

/// Forward-only batch loss. Every trajectory must have the same length.
/// Throws NumericError naming the component when a term is non-finite.
LossComponents dldmd_loss(const ad::NetworkParams& params, Batch batch,
                          const HyperParams& h, int threads = 1);

struct LossAndGradient {
  LossComponents loss;
  Eigen::VectorXd gradient;  // NetworkParams::flatten() order
};

/// Batch loss and its gradient. Trajectories are differentiated on separate
/// tapes (optionally in parallel) and reduced in batch order.
LossAndGradient dldmd_loss_and_gradient(const ad::NetworkParams& params, Batch batch,
                                        const HyperParams& h, int threads = 1);

std::vector<const Trajectory*> as_batch(const std::vector<Trajectory>& trajs);

struct EpochRecord {
  int epoch = 0;
  LossComponents train;
  LossComponents val;
};

struct Checkpoint {
  ad::NetworkParams params;
  HyperParams hyper;
  int epoch = 0;
  std::vector<EpochRecord> history;
  std::string system;
  double dt = 0.0;
  dynamics::Normalization normalization;
  bool failed = false;
  std::string failure;
};

struct TrainOptions {
  int threads = 1;
  /// Called after every completed epoch with the record and elapsed seconds.
  std::function<void(const EpochRecord&, double wall_seconds)> on_epoch;
};

struct TrainResult {
  Checkpoint final;
  Checkpoint best;  // lowest validation total
};

/// Adam over shuffled full mini-batches of the training split. Aborts with
/// failed = true (last good parameters kept) when a batch loss or gradient is
/// non-finite, or when an epoch's median batch loss exceeds kDivergenceLoss.
TrainResult train(const dynamics::Dataset& data, const HyperParams& h,
                  const TrainOptions& opts = {});

inline constexpr double kDivergenceLoss = 1e8;

void write_checkpoint(const std::filesystem::path& file, const Checkpoint& c);
Checkpoint read_checkpoint(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Applying a trained model

/// Encode, fit SVD-route EDMD on the whole observed window, propagate the
/// latent state for `steps` steps from psi_1 and decode.
struct ModelPrediction {
  edmd::EdmdResult edmd;
  Eigen::MatrixXd latent;     // N_o x (steps+1)
  Trajectory predicted;       // N_s x (steps+1)
  bool imag_warning = false;
};

ModelPrediction predict(const Checkpoint& c, const Trajectory& observed, Eigen::Index steps);

/// Ground-truth continuation of a trajectory to time t_end.
using TruthProvider = std::function<Trajectory(const Trajectory&, double t_end)>;

/// Truth provider that re-simulates the named benchmark system.
TruthProvider simulated_truth(const std::string& system,
                              const dynamics::Normalization& norm);

struct TrajectoryReport {
  std::size_t traj_id = 0;
  double mse = 0.0;           // over the observed window
  double mse_extended = 0.0;  // over [0, t_pred]
  int n_eigs = 0;
  double max_modulus_minus_one = 0.0;  // max |t| - 1
  double residual = 0.0;
  double cond_V = 1.0;
  bool imag_warning = false;
  linalg::CVector eigenvalues;
};

struct EvaluationReport {
  std::vector<TrajectoryReport> rows;
  double mean_mse = 0.0;
  double log10_mse = 0.0;
  double mean_mse_extended = 0.0;
  double mean_residual = 0.0;
  double max_residual = 0.0;
  int latent_dim = 0;
  std::size_t param_count = 0;
};

double mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Scores every trajectory: window reconstruction MSE and extended-horizon
/// MSE against `truth`. Throws std::invalid_argument when a trajectory's
/// system tag differs from the checkpoint's.
EvaluationReport evaluate(const Checkpoint& c, const std::vector<Trajectory>& test,
                          double t_pred, const TruthProvider& truth, int threads = 1);

/// Same report for standard DMD on the raw states.
EvaluationReport evaluate_dmd(const std::vector<Trajectory>& test, double t_pred,
                              const TruthProvider& truth, int threads = 1);

}  // namespace dldmd::training
