#include "dldmd/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dldmd/adam.hpp"
#include "dldmd/errors.hpp"
#include "dldmd/parallel.hpp"
#include "dldmd/random.hpp"

namespace dldmd::training {

using ad::Tape;
using ad::Var;
using nlohmann::ordered_json;

std::string to_string(Preset p) {
  return p == Preset::paper_scale ? "paper-scale" : "desk-scale";
}

Preset preset_from_string(std::string_view name) {
  if (name == "paper-scale") return Preset::paper_scale;
  if (name == "desk-scale") return Preset::desk_scale;
  throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

void HyperParams::validate() const {
  if (alpha1 < 0 || alpha2 < 0 || alpha3 < 0 || alpha4 < 0)
    throw std::invalid_argument("loss weights must be non-negative");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_epochs < 0) throw std::invalid_argument("max_epochs must be >= 0");
  if (latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
  if (hidden_width < 1) throw std::invalid_argument("hidden_width must be >= 1");
  if (hidden_layers < 0) throw std::invalid_argument("hidden_layers must be >= 0");
  if (!(ridge_eps > 0.0)) throw std::invalid_argument("ridge_eps must be positive");
  if (!(svd_threshold >= 0.0 && svd_threshold < 1.0))
    throw std::invalid_argument("svd_threshold must lie in [0, 1)");
}

HyperParams HyperParams::preset(Preset p, dynamics::System s) {
  using dynamics::System;
  HyperParams h;
  switch (s) {
    case System::pendulum: h.latent_dim = 2; break;
    case System::duffing: h.latent_dim = 3; break;
    case System::vanderpol: h.latent_dim = 8; break;
    case System::lorenz63: h.latent_dim = 4; break;
  }
  if (p == Preset::paper_scale) {
    h.lr = s == System::pendulum ? 1e-3 : 1e-4;
    h.batch_size = s == System::pendulum ? 512 : 256;
    h.max_epochs = 1000;
  } else {
    h.lr = 1e-3;
    h.batch_size = 16;
    h.max_epochs = s == System::pendulum || s == System::lorenz63 ? 200 : 100;
  }
  return h;
}

dynamics::SplitCounts preset_counts(Preset p) {
  if (p == Preset::paper_scale) return {10000, 3000, 2000};
  return {500, 150, 100};
}

std::vector<const Trajectory*> as_batch(const std::vector<Trajectory>& trajs) {
  std::vector<const Trajectory*> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) out.push_back(&t);
  return out;
}

// ---------------------------------------------------------------------------
// Loss

namespace {

struct TrajectoryTerms {
  double recon = 0.0;
  double dmd = 0.0;
  double pred = 0.0;
  double residual = 0.0;
  Eigen::VectorXd gradient;
};

void check_finite(double v, const char* component) {
  if (!std::isfinite(v))
    throw NumericError(std::string("non-finite ") + component + " loss");
}

/// Loss terms of one trajectory on a fresh tape; gradient of
/// alpha1*recon + alpha2*dmd + alpha3*pred when `differentiate`.
TrajectoryTerms trajectory_terms(const ad::NetworkParams& params, const Trajectory& traj,
                                 const HyperParams& h, bool differentiate) {
  const Eigen::Index n = traj.size();
  if (n < 2) throw std::invalid_argument("dldmd_loss: trajectory needs >= 2 samples");

  Tape tape;
  const ad::TapeParams p = ad::bind(tape, params, differentiate);
  const Var y = tape.constant(traj.states);
  const Var z = ad::encode(p, y);
  const Var minus = tape.slice_cols(z, 0, n - 1);
  const Var plus = tape.slice_cols(z, 1, n - 1);
  const Var K = ad::diff_koopman(minus, plus, h.ridge_eps);
  const Var dmd = tape.frobenius(plus - K * minus);

  Var rolled;
  try {
    rolled = tape.rollout(K, tape.slice_cols(z, 0, 1), n - 1);
  } catch (const NumericError&) {
    throw NumericError("non-finite pred loss (latent rollout overflowed)");
  }
  const Var decoded = ad::decode(p, tape.hcat({z, rolled}));
  const Var recon = tape.mse(tape.slice_cols(decoded, 0, n), y);
  const Var pred = tape.mse(tape.slice_cols(decoded, n, n - 1), tape.slice_cols(y, 1, n - 1));

  TrajectoryTerms out;
  out.recon = recon.value()(0, 0);
  out.dmd = dmd.value()(0, 0);
  out.pred = pred.value()(0, 0);
  check_finite(out.recon, "recon");
  check_finite(out.dmd, "dmd");
  check_finite(out.pred, "pred");

  // SVD-route residual on the same latent snapshots, for reporting only.
  try {
    out.residual =
        edmd::fit_koopman({minus.value(), plus.value()}, h.svd_threshold).residual;
  } catch (const NumericError&) {
    out.residual = std::numeric_limits<double>::quiet_NaN();
  }

  if (differentiate) {
    const Var weighted = tape.add(
        tape.add(tape.scale(recon, h.alpha1), tape.scale(dmd, h.alpha2)),
        tape.scale(pred, h.alpha3));
    tape.backward(weighted);
    out.gradient = ad::gradient(tape, p);
  }
  return out;
}

LossAndGradient batch_loss(const ad::NetworkParams& params, Batch batch,
                           const HyperParams& h, int threads, bool differentiate) {
  if (batch.empty()) throw std::invalid_argument("dldmd_loss: empty batch");
  const Eigen::Index len = batch.front()->size();
  for (const auto* t : batch)
    if (t->size() != len)
      throw std::invalid_argument("dldmd_loss: trajectories in a batch differ in length");

  std::vector<TrajectoryTerms> terms(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    terms[i] = trajectory_terms(params, *batch[i], h, differentiate);
  });

  // Fixed-order reduction.
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossAndGradient out;
  auto& l = out.loss;
  for (const auto& t : terms) {
    l.recon += t.recon;
    l.dmd += t.dmd;
    l.pred += t.pred;
    l.residual += t.residual;
  }
  l.recon *= inv_b;
  l.dmd *= inv_b;
  l.pred *= inv_b;
  l.residual *= inv_b;
  l.reg = h.alpha4 * params.weight_squared_norm();
  l.total = h.alpha1 * l.recon + h.alpha2 * l.dmd + h.alpha3 * l.pred + l.reg;
  check_finite(l.reg, "reg");
  check_finite(l.total, "total");

  if (differentiate) {
    out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.size()));
    for (const auto& t : terms) out.gradient += t.gradient;
    out.gradient *= inv_b;
    if (h.alpha4 != 0.0) out.gradient += h.alpha4 * params.weight_squared_norm_gradient();
  }
  return out;
}

}  // namespace

LossComponents dldmd_loss(const ad::NetworkParams& params, Batch batch,
                          const HyperParams& h, int threads) {
  return batch_loss(params, batch, h, threads, false).loss;
}

LossAndGradient dldmd_loss_and_gradient(const ad::NetworkParams& params, Batch batch,
                                        const HyperParams& h, int threads) {
  return batch_loss(params, batch, h, threads, true);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

LossComponents mean_of(const std::vector<LossComponents>& xs) {
  LossComponents m;
  if (xs.empty()) return m;
  for (const auto& x : xs) {
    m.recon += x.recon;
    m.dmd += x.dmd;
    m.pred += x.pred;
    m.reg += x.reg;
    m.total += x.total;
    m.residual += x.residual;
  }
  const double n = static_cast<double>(xs.size());
  m.recon /= n;
  m.dmd /= n;
  m.pred /= n;
  m.reg /= n;
  m.total /= n;
  m.residual /= n;
  return m;
}

}  // namespace

TrainResult train(const dynamics::Dataset& data, const HyperParams& h,
                  const TrainOptions& opts) {
  h.validate();
  if (data.train.empty()) throw std::invalid_argument("train: empty training split");
  const int state_dim = static_cast<int>(data.train.front().state_dim());

  Checkpoint ckpt;
  ckpt.hyper = h;
  ckpt.system = data.system;
  ckpt.dt = data.dt;
  ckpt.normalization = data.normalization;
  ckpt.params = ad::NetworkParams::glorot(state_dim, h.latent_dim, h.hidden_width,
                                          h.hidden_layers, derive_seed(h.seed, 0));

  TrainResult result{ckpt, ckpt};
  double best_val = std::numeric_limits<double>::infinity();

  Rng shuffler(derive_seed(h.seed, 1));
  Eigen::VectorXd flat = ckpt.params.flatten();
  ad::AdamState adam = ad::AdamState::zeros(flat.size());
  const auto train_batch = as_batch(data.train);
  const auto val_batch = as_batch(data.val);
  const std::size_t per_batch =
      std::min<std::size_t>(static_cast<std::size_t>(h.batch_size), data.train.size());
  const std::size_t n_batches = data.train.size() / per_batch;

  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= h.max_epochs; ++epoch) {
    const auto order = shuffler.permutation(data.train.size());
    std::vector<LossComponents> batch_losses;
    std::vector<const Trajectory*> batch(per_batch);
    try {
      for (std::size_t b = 0; b < n_batches; ++b) {
        for (std::size_t i = 0; i < per_batch; ++i)
          batch[i] = train_batch[order[b * per_batch + i]];
        LossAndGradient lg = dldmd_loss_and_gradient(ckpt.params, batch, h, opts.threads);
        if (!std::isfinite(lg.loss.total))
          throw NumericError("training diverged: batch loss " + std::to_string(lg.loss.total));
        if (!lg.gradient.allFinite()) throw NumericError("non-finite gradient");
        ad::adam_step(flat, lg.gradient, adam, h.lr);
        ckpt.params.assign(flat);
        batch_losses.push_back(lg.loss);
      }
      // Single trajectories with a slightly expanding K spike the rollout
      // loss for a batch or two, so the threshold applies to the median.
      std::vector<double> totals;
      for (const auto& l : batch_losses) totals.push_back(l.total);
      if (!totals.empty()) {
        auto mid = totals.begin() + static_cast<std::ptrdiff_t>(totals.size() / 2);
        std::nth_element(totals.begin(), mid, totals.end());
        if (*mid > kDivergenceLoss)
          throw NumericError("training diverged: median batch loss " + std::to_string(*mid));
      }
    } catch (const NumericError& e) {
      // Roll back to the parameters at the end of the last completed epoch.
      result.final.failed = true;
      result.final.failure = "epoch " + std::to_string(epoch) + ": " + e.what();
      return result;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = mean_of(batch_losses);
    if (!val_batch.empty()) {
      try {
        rec.val = dldmd_loss(ckpt.params, val_batch, h, opts.threads);
      } catch (const NumericError& e) {
        result.final.failed = true;
        result.final.failure = "epoch " + std::to_string(epoch) + " validation: " + e.what();
        return result;
      }
    }
    ckpt.epoch = epoch;
    ckpt.history.push_back(rec);
    result.final = ckpt;
    if (rec.val.total < best_val) {
      best_val = rec.val.total;
      result.best = ckpt;
    }
    if (opts.on_epoch) {
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      opts.on_epoch(rec, wall);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint files

namespace {

constexpr const char* kCheckpointMagic = "DLDMD-CHECKPOINT 1";

ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double number_from(const ordered_json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

ordered_json components_json(const LossComponents& c) {
  return {{"recon", number(c.recon)}, {"dmd", number(c.dmd)},   {"pred", number(c.pred)},
          {"reg", number(c.reg)},     {"total", number(c.total)}, {"residual", number(c.residual)}};
}

LossComponents components_from(const ordered_json& j) {
  LossComponents c;
  c.recon = number_from(j.at("recon"));
  c.dmd = number_from(j.at("dmd"));
  c.pred = number_from(j.at("pred"));
  c.reg = number_from(j.at("reg"));
  c.total = number_from(j.at("total"));
  c.residual = number_from(j.at("residual"));
  return c;
}

ordered_json hyper_json(const HyperParams& h) {
  return {{"alpha1", h.alpha1},         {"alpha2", h.alpha2},
          {"alpha3", h.alpha3},         {"alpha4", h.alpha4},
          {"lr", h.lr},                 {"batch_size", h.batch_size},
          {"max_epochs", h.max_epochs}, {"latent_dim", h.latent_dim},
          {"hidden_width", h.hidden_width}, {"hidden_layers", h.hidden_layers},
          {"ridge_eps", h.ridge_eps},   {"svd_threshold", h.svd_threshold},
          {"seed", h.seed}};
}

HyperParams hyper_from(const ordered_json& j) {
  HyperParams h;
  h.alpha1 = j.at("alpha1").get<double>();
  h.alpha2 = j.at("alpha2").get<double>();
  h.alpha3 = j.at("alpha3").get<double>();
  h.alpha4 = j.at("alpha4").get<double>();
  h.lr = j.at("lr").get<double>();
  h.batch_size = j.at("batch_size").get<int>();
  h.max_epochs = j.at("max_epochs").get<int>();
  h.latent_dim = j.at("latent_dim").get<int>();
  h.hidden_width = j.at("hidden_width").get<int>();
  h.hidden_layers = j.at("hidden_layers").get<int>();
  h.ridge_eps = j.at("ridge_eps").get<double>();
  h.svd_threshold = j.at("svd_threshold").get<double>();
  h.seed = j.at("seed").get<std::uint64_t>();
  return h;
}

ordered_json shapes_json(const std::vector<ad::Layer>& layers) {
  ordered_json a = ordered_json::array();
  for (const auto& l : layers) a.push_back({l.W.rows(), l.W.cols()});
  return a;
}

std::vector<ad::Layer> layers_from(const ordered_json& shapes) {
  std::vector<ad::Layer> layers;
  for (const auto& s : shapes) {
    const auto rows = s.at(0).get<Eigen::Index>();
    const auto cols = s.at(1).get<Eigen::Index>();
    if (rows <= 0 || cols <= 0 || rows > 1 << 16 || cols > 1 << 16)
      throw IoError("checkpoint: implausible layer shape");
    layers.push_back({Eigen::MatrixXd::Zero(rows, cols), Eigen::VectorXd::Zero(rows)});
  }
  return layers;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& file, const Checkpoint& c) {
  ordered_json header;
  header["system"] = c.system;
  header["dt"] = c.dt;
  header["epoch"] = c.epoch;
  header["seed"] = c.hyper.seed;
  header["failed"] = c.failed;
  header["failure"] = c.failure;
  header["hyperparameters"] = hyper_json(c.hyper);
  header["normalization_scale"] = std::vector<double>(
      c.normalization.scale.data(), c.normalization.scale.data() + c.normalization.scale.size());
  header["encoder_shapes"] = shapes_json(c.params.encoder);
  header["decoder_shapes"] = shapes_json(c.params.decoder);
  header["param_count"] = c.params.size();
  ordered_json hist = ordered_json::array();
  for (const auto& r : c.history)
    hist.push_back({{"epoch", r.epoch},
                    {"train", components_json(r.train)},
                    {"val", components_json(r.val)}});
  header["history"] = std::move(hist);

  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  const Eigen::VectorXd flat = c.params.flatten();
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(sizeof(double) * flat.size()));
  if (!out) throw IoError("write failed: " + file.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + file.string());
  std::string magic, line;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw IoError(file.string() + " is not a checkpoint file");
  std::getline(in, line);
  ordered_json header;
  try {
    header = ordered_json::parse(line);
  } catch (const std::exception& e) {
    throw IoError(file.string() + ": corrupt header: " + e.what());
  }

  Checkpoint c;
  try {
    c.system = header.at("system").get<std::string>();
    c.dt = header.at("dt").get<double>();
    c.epoch = header.at("epoch").get<int>();
    c.failed = header.at("failed").get<bool>();
    c.failure = header.at("failure").get<std::string>();
    c.hyper = hyper_from(header.at("hyperparameters"));
    const auto scale = header.at("normalization_scale").get<std::vector<double>>();
    c.normalization.scale = Eigen::Map<const Eigen::VectorXd>(
        scale.data(), static_cast<Eigen::Index>(scale.size()));
    c.params.encoder = layers_from(header.at("encoder_shapes"));
    c.params.decoder = layers_from(header.at("decoder_shapes"));
    for (const auto& r : header.at("history"))
      c.history.push_back({r.at("epoch").get<int>(), components_from(r.at("train")),
                           components_from(r.at("val"))});
  } catch (const nlohmann::json::exception& e) {
    throw IoError(file.string() + ": malformed header: " + e.what());
  }
  c.params.validate();

  Eigen::VectorXd flat(static_cast<Eigen::Index>(c.params.size()));
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(sizeof(double) * flat.size()));
  if (!in) throw IoError(file.string() + ": truncated parameter payload");
  c.params.assign(flat);
  return c;
}

// ---------------------------------------------------------------------------
// Evaluation

double mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("mse: shapes differ");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

ModelPrediction predict(const Checkpoint& c, const Trajectory& observed, Eigen::Index steps) {
  ModelPrediction out;
  const Eigen::MatrixXd latent = ad::encode(c.params, observed.states);
  out.edmd = edmd::run(latent, observed.dt, c.hyper.svd_threshold);
  const edmd::LatentPrediction lp = edmd::predict_latent(out.edmd, steps);
  out.latent = lp.values;
  out.imag_warning = lp.imag_warning;
  out.predicted.dt = observed.dt;
  out.predicted.system = observed.system;
  out.predicted.states = ad::decode(c.params, lp.values);
  return out;
}

TruthProvider simulated_truth(const std::string& system, const dynamics::Normalization& norm) {
  const auto spec = dynamics::SystemSpec::defaults(dynamics::system_from_string(system));
  return [spec, norm](const Trajectory& t, double t_end) {
    return dynamics::extend_trajectory(spec, norm, t, t_end);
  };
}

namespace {

Eigen::Index extended_steps(const Trajectory& t, double t_pred) {
  const double ratio = t_pred / t.dt;
  const auto steps = static_cast<Eigen::Index>(std::llround(ratio));
  if (steps < t.size() - 1)
    throw std::invalid_argument("evaluate: t_pred is shorter than the observed window");
  return steps;
}

template <typename Predictor>
EvaluationReport score(const std::vector<Trajectory>& test, double t_pred,
                       const TruthProvider& truth, int threads, Predictor&& predictor) {
  EvaluationReport rep;
  rep.rows.resize(test.size());
  parallel_for(test.size(), threads, [&](std::size_t i) {
    const Trajectory& obs = test[i];
    const Eigen::Index steps = extended_steps(obs, t_pred);
    auto [states, r, imag] = predictor(obs, steps);
    const Trajectory ext = steps == obs.size() - 1 ? obs : truth(obs, t_pred);
    TrajectoryReport row;
    row.traj_id = i;
    row.mse = mse(states.leftCols(obs.size()), obs.states);
    row.mse_extended = mse(states, ext.states);
    row.n_eigs = static_cast<int>(r.t.size());
    row.max_modulus_minus_one = r.t.cwiseAbs().maxCoeff() - 1.0;
    row.residual = r.residual;
    row.cond_V = r.cond_V;
    row.imag_warning = imag;
    row.eigenvalues = r.t;
    rep.rows[i] = std::move(row);
  });
  for (const auto& row : rep.rows) {
    rep.mean_mse += row.mse;
    rep.mean_mse_extended += row.mse_extended;
    rep.mean_residual += row.residual;
    rep.max_residual = std::max(rep.max_residual, row.residual);
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, rep.rows.size()));
  rep.mean_mse /= n;
  rep.mean_mse_extended /= n;
  rep.mean_residual /= n;
  rep.log10_mse = std::log10(rep.mean_mse);
  return rep;
}

struct Scored {
  Eigen::MatrixXd states;
  edmd::EdmdResult r;
  bool imag;
};

}  // namespace

EvaluationReport evaluate(const Checkpoint& c, const std::vector<Trajectory>& test,
                          double t_pred, const TruthProvider& truth, int threads) {
  for (const auto& t : test)
    if (!t.system.empty() && t.system != c.system)
      throw std::invalid_argument("evaluate: trajectory system '" + t.system +
                                  "' does not match checkpoint system '" + c.system + "'");
  EvaluationReport rep =
      score(test, t_pred, truth, threads, [&](const Trajectory& obs, Eigen::Index steps) {
        ModelPrediction p = predict(c, obs, steps);
        return Scored{std::move(p.predicted.states), std::move(p.edmd), p.imag_warning};
      });
  rep.latent_dim = c.params.latent_dim();
  rep.param_count = c.params.size();
  return rep;
}

EvaluationReport evaluate_dmd(const std::vector<Trajectory>& test, double t_pred,
                              const TruthProvider& truth, int threads) {
  EvaluationReport rep =
      score(test, t_pred, truth, threads, [&](const Trajectory& obs, Eigen::Index steps) {
        edmd::EdmdResult r = edmd::run(obs.states, obs.dt);
        edmd::LatentPrediction lp = edmd::predict_latent(r, steps);
        return Scored{std::move(lp.values), std::move(r), lp.imag_warning};
      });
  rep.latent_dim = test.empty() ? 0 : static_cast<int>(test.front().state_dim());
  rep.param_count = 0;
  return rep;
}

}  // namespace dldmd::training
