#include "dldmd/dynamics.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dldmd/errors.hpp"
#include "dldmd/parallel.hpp"
#include "dldmd/random.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset and checkpoint files assume a little-endian host");

namespace dldmd::dynamics {

namespace {

void require_dim(const State& x, int n) {
  if (x.size() != n)
    throw std::invalid_argument("state has dimension " + std::to_string(x.size()) +
                                ", expected " + std::to_string(n));
}

bool all_finite(const State& x) { return x.allFinite(); }

}  // namespace

std::string to_string(System s) {
  switch (s) {
    case System::pendulum: return "pendulum";
    case System::duffing: return "duffing";
    case System::vanderpol: return "vanderpol";
    case System::lorenz63: return "lorenz63";
  }
  return "unknown";
}

System system_from_string(std::string_view name) {
  if (name == "pendulum") return System::pendulum;
  if (name == "duffing") return System::duffing;
  if (name == "vanderpol") return System::vanderpol;
  if (name == "lorenz63") return System::lorenz63;
  throw std::invalid_argument("unknown system '" + std::string(name) + "'");
}

SystemSpec SystemSpec::defaults(System s) {
  SystemSpec spec;
  spec.system = s;
  switch (s) {
    case System::pendulum:
      spec.state_dim = 2;
      spec.box = {{-3.1, 3.1}, {-2.0, 2.0}};
      spec.dt = 0.05;
      spec.t_final = 20.0;
      spec.t_predict = 40.0;
      spec.separatrix_filter = true;
      break;
    case System::duffing:
      spec.state_dim = 2;
      spec.box = {{-1.0, 1.0}, {-1.0, 1.0}};
      spec.dt = 0.05;
      spec.t_final = 20.0;
      spec.t_predict = 40.0;
      break;
    case System::vanderpol:
      spec.state_dim = 2;
      spec.mu = 1.5;
      spec.box = {{-2.0, 2.0}, {-2.0, 2.0}};
      spec.dt = 0.02;
      spec.t_final = 15.0;
      spec.t_predict = 30.0;
      spec.std_scaling = true;
      break;
    case System::lorenz63:
      spec.state_dim = 3;
      spec.sigma = 10.0;
      spec.rho = 28.0;
      spec.beta = 8.0 / 3.0;
      spec.box = {{-15.0, 15.0}, {-20.0, 20.0}, {0.0, 40.0}};
      spec.dt = 0.01;
      spec.t_final = 3.0;
      spec.t_predict = 6.0;
      break;
  }
  return spec;
}

std::size_t SystemSpec::steps() const {
  return static_cast<std::size_t>(std::llround(t_final / dt));
}

std::size_t SystemSpec::prediction_steps() const {
  return static_cast<std::size_t>(std::llround(t_predict / dt));
}

bool SystemSpec::admissible(const State& x) const {
  if (!separatrix_filter) return true;
  return pendulum_energy(x) < kSeparatrixLevel;
}

void SystemSpec::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(t_final > 0.0)) throw std::invalid_argument("t_final must be positive");
  if (!(t_predict >= t_final))
    throw std::invalid_argument("t_predict must be >= t_final");
  if (static_cast<int>(box.size()) != state_dim)
    throw std::invalid_argument("sampling box does not match state dimension");
}

double pendulum_energy(const State& x) {
  return 0.5 * x(1) * x(1) - std::cos(x(0));
}

State eval_rhs(const SystemSpec& spec, const State& x) {
  require_dim(x, spec.state_dim);
  State dx(spec.state_dim);
  switch (spec.system) {
    case System::pendulum:
      dx << x(1), -std::sin(x(0));
      break;
    case System::duffing:
      dx << x(1), x(0) - x(0) * x(0) * x(0);
      break;
    case System::vanderpol:
      dx << x(1), spec.mu * (1.0 - x(0) * x(0)) * x(1) - x(0);
      break;
    case System::lorenz63:
      dx << spec.sigma * (x(1) - x(0)), x(0) * (spec.rho - x(2)) - x(1),
          x(0) * x(1) - spec.beta * x(2);
      break;
  }
  return dx;
}

VectorField vector_field(const SystemSpec& spec) {
  return [spec](const State& x) { return eval_rhs(spec, x); };
}

State rk4_step(const VectorField& f, const State& x, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be positive");
  if (!all_finite(x)) throw std::invalid_argument("rk4_step: state is not finite");

  auto check = [](const State& k, const char* stage) {
    if (!all_finite(k))
      throw NumericError(std::string("rk4_step: non-finite value in stage ") + stage);
  };
  const State k1 = f(x);
  check(k1, "k1");
  const State k2 = f(x + 0.5 * dt * k1);
  check(k2, "k2");
  const State k3 = f(x + 0.5 * dt * k2);
  check(k3, "k3");
  const State k4 = f(x + dt * k3);
  check(k4, "k4");
  State next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  check(next, "update");
  return next;
}

State rk4_step(const SystemSpec& spec, const State& x, double dt) {
  require_dim(x, spec.state_dim);
  return rk4_step(vector_field(spec), x, dt);
}

Trajectory simulate(const VectorField& f, const State& x0, double dt,
                    double horizon, std::string tag) {
  if (!(dt > 0.0)) throw std::invalid_argument("simulate: dt must be positive");
  if (horizon < 0.0) throw std::invalid_argument("simulate: negative horizon");
  const double ratio = horizon / dt;
  const auto steps = static_cast<Eigen::Index>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(steps)) > 1e-9 * std::max(1.0, ratio))
    throw std::invalid_argument("simulate: horizon is not a multiple of dt");

  Trajectory traj;
  traj.dt = dt;
  traj.system = std::move(tag);
  traj.states.resize(x0.size(), steps + 1);
  traj.states.col(0) = x0;
  State x = x0;
  for (Eigen::Index j = 1; j <= steps; ++j) {
    x = rk4_step(f, x, dt);
    if (x.cwiseAbs().maxCoeff() > kBlowUpThreshold)
      throw DivergenceError("simulate: trajectory left the blow-up box at step " +
                                std::to_string(j),
                            static_cast<std::size_t>(j));
    traj.states.col(j) = x;
  }
  return traj;
}

Trajectory simulate(const SystemSpec& spec, const State& x0, double horizon) {
  require_dim(x0, spec.state_dim);
  return simulate(vector_field(spec), x0, spec.dt, horizon, to_string(spec.system));
}

Eigen::MatrixXd Normalization::apply(const Eigen::MatrixXd& raw) const {
  return scale.asDiagonal().inverse() * raw;
}

Eigen::MatrixXd Normalization::invert(const Eigen::MatrixXd& scaled) const {
  return scale.asDiagonal() * scaled;
}

Dataset sample_dataset(const SystemSpec& spec, SplitCounts counts,
                       std::uint64_t seed, int threads) {
  spec.validate();
  if (counts.train == 0 || counts.val == 0 || counts.test == 0)
    throw std::invalid_argument("sample_dataset: split counts must be positive");

  constexpr std::size_t kMaxDraws = 10000;
  const std::size_t total = counts.total();
  std::vector<Trajectory> all(total);

  parallel_for(total, threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    State x0(spec.state_dim);
    bool accepted = false;
    for (std::size_t draw = 0; draw < kMaxDraws && !accepted; ++draw) {
      for (int d = 0; d < spec.state_dim; ++d)
        x0(d) = rng.uniform(spec.box[d].lo, spec.box[d].hi);
      accepted = spec.admissible(x0);
    }
    if (!accepted)
      throw SamplingError("sample_dataset: no admissible initial condition for trajectory " +
                          std::to_string(i) + " after " + std::to_string(kMaxDraws) +
                          " draws");
    all[i] = simulate(spec, x0, spec.t_final);
  });

  Dataset data;
  data.system = to_string(spec.system);
  data.dt = spec.dt;
  data.seed = seed;
  data.normalization = Normalization::identity(spec.state_dim);

  if (spec.std_scaling) {
    // Population std over every sample of the training split only.
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(spec.state_dim);
    Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(spec.state_dim);
    double n = 0.0;
    for (std::size_t i = 0; i < counts.train; ++i) {
      sum += all[i].states.rowwise().sum();
      sumsq += all[i].states.array().square().matrix().rowwise().sum();
      n += static_cast<double>(all[i].size());
    }
    const Eigen::VectorXd mean = sum / n;
    Eigen::VectorXd var = sumsq / n - mean.cwiseProduct(mean);
    data.normalization.scale = var.cwiseMax(0.0).cwiseSqrt();
    if ((data.normalization.scale.array() <= 0.0).any())
      throw NumericError("sample_dataset: zero standard deviation in training split");
    for (auto& t : all) t.states = data.normalization.apply(t.states);
  }

  auto take = [&](std::size_t begin, std::size_t n) {
    return std::vector<Trajectory>(std::make_move_iterator(all.begin() + begin),
                                   std::make_move_iterator(all.begin() + begin + n));
  };
  data.train = take(0, counts.train);
  data.val = take(counts.train, counts.val);
  data.test = take(counts.train + counts.val, counts.test);
  return data;
}

Trajectory extend_trajectory(const SystemSpec& spec, const Normalization& norm,
                             const Trajectory& traj, double t_end) {
  const State x0 = norm.invert(traj.states.col(0));
  Trajectory raw = simulate(spec, x0, t_end);
  raw.states = norm.apply(raw.states);
  return raw;
}

// ---------------------------------------------------------------------------
// Dataset files

namespace {

constexpr char kMagic[8] = {'D', 'L', 'D', 'M', 'D', 'S', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void put_string(std::ostream& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  if (n > (1u << 20)) throw IoError("dataset file: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

const std::vector<Trajectory>& split_of(const Dataset& d, std::string_view split) {
  if (split == "train") return d.train;
  if (split == "val") return d.val;
  if (split == "test") return d.test;
  throw std::invalid_argument("unknown split '" + std::string(split) + "'");
}

}  // namespace

void write_split(const std::filesystem::path& file, const Dataset& data,
                 std::string_view split) {
  const auto& trajs = split_of(data, split);
  const std::uint32_t dim =
      static_cast<std::uint32_t>(data.normalization.scale.size());
  const std::uint64_t samples = trajs.empty() ? 0 : trajs.front().size();
  for (const auto& t : trajs)
    if (t.state_dim() != dim || static_cast<std::uint64_t>(t.size()) != samples)
      throw std::invalid_argument("write_split: ragged trajectories");

  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put_string(out, data.system);
  put_string(out, split);
  put<std::uint32_t>(out, dim);
  put<std::uint64_t>(out, trajs.size());
  put<std::uint64_t>(out, samples);
  put<double>(out, data.dt);
  put<std::uint64_t>(out, data.seed);
  for (std::uint32_t d = 0; d < dim; ++d) put<double>(out, data.normalization.scale(d));
  // Row-major per trajectory: sample 0 coords, sample 1 coords, ...
  // Eigen stores the state matrix column-major, i.e. exactly this order.
  for (const auto& t : trajs)
    out.write(reinterpret_cast<const char*>(t.states.data()),
              static_cast<std::streamsize>(sizeof(double) * t.states.size()));
  if (!out) throw IoError("write failed: " + file.string());

  nlohmann::ordered_json meta;
  meta["format"] = "DLDMDSET";
  meta["version"] = kVersion;
  meta["system"] = data.system;
  meta["split"] = split;
  meta["state_dim"] = dim;
  meta["count"] = trajs.size();
  meta["samples_per_trajectory"] = samples;
  meta["dt"] = data.dt;
  meta["seed"] = data.seed;
  meta["normalization_scale"] =
      std::vector<double>(data.normalization.scale.data(),
                          data.normalization.scale.data() + dim);
  auto meta_path = file;
  meta_path += ".meta.json";
  std::ofstream m(meta_path, std::ios::trunc);
  if (!m) throw IoError("cannot open " + meta_path.string() + " for writing");
  m << meta.dump(2) << '\n';
}

std::vector<Trajectory> read_split(const std::filesystem::path& file,
                                   SplitHeader* header) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file " + file.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw IoError(file.string() + " is not a dataset file");
  if (get<std::uint32_t>(in) != kVersion)
    throw IoError(file.string() + ": unsupported dataset version");

  SplitHeader h;
  h.system = get_string(in);
  h.split = get_string(in);
  h.state_dim = get<std::uint32_t>(in);
  h.count = get<std::uint64_t>(in);
  h.samples = get<std::uint64_t>(in);
  h.dt = get<double>(in);
  h.seed = get<std::uint64_t>(in);
  if (!in || h.state_dim == 0 || h.state_dim > 64)
    throw IoError(file.string() + ": corrupt header");
  h.scale.resize(h.state_dim);
  for (std::uint32_t d = 0; d < h.state_dim; ++d) h.scale(d) = get<double>(in);

  std::vector<Trajectory> trajs(h.count);
  for (auto& t : trajs) {
    t.dt = h.dt;
    t.system = h.system;
    t.states.resize(h.state_dim, static_cast<Eigen::Index>(h.samples));
    in.read(reinterpret_cast<char*>(t.states.data()),
            static_cast<std::streamsize>(sizeof(double) * t.states.size()));
    if (!in) throw IoError(file.string() + ": truncated payload");
  }
  if (header) *header = std::move(h);
  return trajs;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (const char* split : {"train", "val", "test"})
    write_split(dir / (std::string(split) + ".bin"), data, split);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset d;
  SplitHeader h;
  d.train = read_split(dir / "train.bin", &h);
  d.system = h.system;
  d.dt = h.dt;
  d.seed = h.seed;
  d.normalization.scale = h.scale;
  d.val = read_split(dir / "val.bin");
  d.test = read_split(dir / "test.bin");
  return d;
}

}  // namespace dldmd::dynamics
