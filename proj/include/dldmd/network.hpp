#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dldmd/autodiff.hpp"

namespace dldmd::ad {

/// Dense layer y = W x + b.
struct Layer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

/// Encoder and decoder MLPs. Every layer but the last of each network is
/// followed by ReLU; the heads are linear.
///
/// Flat order (used by gradients, Adam and the checkpoint payload): encoder
/// layers first, then decoder layers; within a layer W in column-major order,
/// then b.
struct NetworkParams {
  std::vector<Layer> encoder;
  std::vector<Layer> decoder;

  /// Glorot-uniform weights (limit sqrt(6 / (fan_in + fan_out))), zero biases.
  /// Widths: N_s -> width x hidden -> N_o for the encoder, mirrored for the decoder.
  static NetworkParams glorot(int state_dim, int latent_dim, int width,
                              int hidden_layers, std::uint64_t seed);
  static NetworkParams zeros(int state_dim, int latent_dim, int width, int hidden_layers);

  int state_dim() const;
  int latent_dim() const;
  std::size_t size() const;
  Eigen::VectorXd flatten() const;
  /// Inverse of flatten(); throws std::invalid_argument on size mismatch.
  void assign(const Eigen::VectorXd& flat);
  /// Sum of squared weight entries (biases excluded).
  double weight_squared_norm() const;
  /// Flat vector holding 2 W at weight positions and 0 at bias positions.
  Eigen::VectorXd weight_squared_norm_gradient() const;
  /// Throws std::invalid_argument unless consecutive layer widths chain up and
  /// the decoder mirrors the encoder's outer widths.
  void validate() const;
  bool all_finite() const;
};

/// Plain forward passes, column-wise over a batch.
Eigen::MatrixXd encode(const NetworkParams& p, const Eigen::MatrixXd& states);
Eigen::MatrixXd decode(const NetworkParams& p, const Eigen::MatrixXd& latent);

/// Parameters registered on a tape.
struct TapeParams {
  std::vector<Var> encoder_W, encoder_b, decoder_W, decoder_b;
};

/// With differentiable = false the parameters are tape constants (forward only).
TapeParams bind(Tape& tape, const NetworkParams& p, bool differentiable = true);
Var encode(const TapeParams& p, Var states);
Var decode(const TapeParams& p, Var latent);
/// Gradients after tape.backward(), in flatten() order.
Eigen::VectorXd gradient(const Tape& tape, const TapeParams& p);

}  // namespace dldmd::ad
