#include "dldmd/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dldmd/random.hpp"

namespace dldmd::ad {

namespace {

std::vector<int> widths(int in, int out, int width, int hidden) {
  std::vector<int> w{in};
  for (int i = 0; i < hidden; ++i) w.push_back(width);
  w.push_back(out);
  return w;
}

std::vector<Layer> make_layers(const std::vector<int>& w, Rng* rng) {
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    Layer l;
    l.W = Eigen::MatrixXd::Zero(w[i + 1], w[i]);
    l.b = Eigen::VectorXd::Zero(w[i + 1]);
    if (rng) {
      const double limit = std::sqrt(6.0 / static_cast<double>(w[i] + w[i + 1]));
      for (Eigen::Index c = 0; c < l.W.cols(); ++c)
        for (Eigen::Index r = 0; r < l.W.rows(); ++r) l.W(r, c) = rng->uniform(-limit, limit);
    }
    layers.push_back(std::move(l));
  }
  return layers;
}

Eigen::MatrixXd forward(const std::vector<Layer>& layers, const Eigen::MatrixXd& x) {
  if (layers.empty()) return x;
  if (x.rows() != layers.front().W.cols())
    throw std::invalid_argument("forward: input has " + std::to_string(x.rows()) +
                                " rows, network expects " +
                                std::to_string(layers.front().W.cols()));
  Eigen::MatrixXd h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Eigen::MatrixXd z = layers[i].W * h;
    z.colwise() += layers[i].b;
    if (i + 1 < layers.size()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

Var forward(const std::vector<Var>& W, const std::vector<Var>& b, Var x) {
  if (W.empty()) return x;
  if (x.rows() != W.front().cols())
    throw std::invalid_argument("forward: input width mismatch on tape");
  Tape& t = *x.tape;
  Var h = x;
  for (std::size_t i = 0; i < W.size(); ++i) {
    h = t.add_bias(t.matmul(W[i], h), b[i]);
    if (i + 1 < W.size()) h = t.relu(h);
  }
  return h;
}

template <typename Fn>
void for_each_layer(const NetworkParams& p, Fn&& fn) {
  for (const auto& l : p.encoder) fn(l);
  for (const auto& l : p.decoder) fn(l);
}

}  // namespace

NetworkParams NetworkParams::glorot(int state_dim, int latent_dim, int width,
                                    int hidden_layers, std::uint64_t seed) {
  Rng rng(seed);
  NetworkParams p;
  p.encoder = make_layers(widths(state_dim, latent_dim, width, hidden_layers), &rng);
  p.decoder = make_layers(widths(latent_dim, state_dim, width, hidden_layers), &rng);
  return p;
}

NetworkParams NetworkParams::zeros(int state_dim, int latent_dim, int width,
                                   int hidden_layers) {
  NetworkParams p;
  p.encoder = make_layers(widths(state_dim, latent_dim, width, hidden_layers), nullptr);
  p.decoder = make_layers(widths(latent_dim, state_dim, width, hidden_layers), nullptr);
  return p;
}

int NetworkParams::state_dim() const {
  return encoder.empty() ? 0 : static_cast<int>(encoder.front().W.cols());
}

int NetworkParams::latent_dim() const {
  return encoder.empty() ? 0 : static_cast<int>(encoder.back().W.rows());
}

std::size_t NetworkParams::size() const {
  std::size_t n = 0;
  for_each_layer(*this, [&](const Layer& l) {
    n += static_cast<std::size_t>(l.W.size() + l.b.size());
  });
  return n;
}

Eigen::VectorXd NetworkParams::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(size()));
  Eigen::Index off = 0;
  for_each_layer(*this, [&](const Layer& l) {
    flat.segment(off, l.W.size()) = l.W.reshaped();
    off += l.W.size();
    flat.segment(off, l.b.size()) = l.b;
    off += l.b.size();
  });
  return flat;
}

void NetworkParams::assign(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != size())
    throw std::invalid_argument("NetworkParams::assign: expected " + std::to_string(size()) +
                                " values, got " + std::to_string(flat.size()));
  Eigen::Index off = 0;
  auto fill = [&](std::vector<Layer>& layers) {
    for (auto& l : layers) {
      l.W.reshaped() = flat.segment(off, l.W.size());
      off += l.W.size();
      l.b = flat.segment(off, l.b.size());
      off += l.b.size();
    }
  };
  fill(encoder);
  fill(decoder);
}

double NetworkParams::weight_squared_norm() const {
  double s = 0.0;
  for_each_layer(*this, [&](const Layer& l) { s += l.W.squaredNorm(); });
  return s;
}

Eigen::VectorXd NetworkParams::weight_squared_norm_gradient() const {
  Eigen::VectorXd g(static_cast<Eigen::Index>(size()));
  Eigen::Index off = 0;
  for_each_layer(*this, [&](const Layer& l) {
    g.segment(off, l.W.size()) = 2.0 * l.W.reshaped();
    off += l.W.size();
    g.segment(off, l.b.size()).setZero();
    off += l.b.size();
  });
  return g;
}

void NetworkParams::validate() const {
  auto check = [](const std::vector<Layer>& layers, const char* name) {
    if (layers.empty()) throw std::invalid_argument(std::string(name) + " has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].b.size() != layers[i].W.rows())
        throw std::invalid_argument(std::string(name) + ": bias width mismatch");
      if (i > 0 && layers[i].W.cols() != layers[i - 1].W.rows())
        throw std::invalid_argument(std::string(name) + ": layer widths do not chain");
    }
  };
  check(encoder, "encoder");
  check(decoder, "decoder");
  if (decoder.front().W.cols() != encoder.back().W.rows() ||
      decoder.back().W.rows() != encoder.front().W.cols())
    throw std::invalid_argument("decoder does not mirror encoder widths");
}

bool NetworkParams::all_finite() const {
  bool ok = true;
  for_each_layer(*this, [&](const Layer& l) { ok = ok && l.W.allFinite() && l.b.allFinite(); });
  return ok;
}

Eigen::MatrixXd encode(const NetworkParams& p, const Eigen::MatrixXd& states) {
  return forward(p.encoder, states);
}

Eigen::MatrixXd decode(const NetworkParams& p, const Eigen::MatrixXd& latent) {
  return forward(p.decoder, latent);
}

TapeParams bind(Tape& tape, const NetworkParams& p, bool differentiable) {
  auto leaf = [&](const Eigen::MatrixXd& m) {
    return differentiable ? tape.variable(m) : tape.constant(m);
  };
  TapeParams t;
  for (const auto& l : p.encoder) {
    t.encoder_W.push_back(leaf(l.W));
    t.encoder_b.push_back(leaf(l.b));
  }
  for (const auto& l : p.decoder) {
    t.decoder_W.push_back(leaf(l.W));
    t.decoder_b.push_back(leaf(l.b));
  }
  return t;
}

Var encode(const TapeParams& p, Var states) { return forward(p.encoder_W, p.encoder_b, states); }

Var decode(const TapeParams& p, Var latent) { return forward(p.decoder_W, p.decoder_b, latent); }

Eigen::VectorXd gradient(const Tape& tape, const TapeParams& p) {
  Eigen::Index n = 0;
  auto count = [&](const std::vector<Var>& vs) {
    for (const auto& v : vs) n += tape.value(v).size();
  };
  count(p.encoder_W);
  count(p.encoder_b);
  count(p.decoder_W);
  count(p.decoder_b);
  Eigen::VectorXd g(n);
  Eigen::Index off = 0;
  auto put = [&](const std::vector<Var>& W, const std::vector<Var>& b) {
    for (std::size_t i = 0; i < W.size(); ++i) {
      const Eigen::MatrixXd gw = tape.grad(W[i]);
      g.segment(off, gw.size()) = gw.reshaped();
      off += gw.size();
      const Eigen::MatrixXd gb = tape.grad(b[i]);
      g.segment(off, gb.size()) = gb.reshaped();
      off += gb.size();
    }
  };
  put(p.encoder_W, p.encoder_b);
  put(p.decoder_W, p.decoder_b);
  return g;
}

}  // namespace dldmd::ad
