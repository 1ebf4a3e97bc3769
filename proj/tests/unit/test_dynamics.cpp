#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dldmd/dynamics.hpp"
#include "dldmd/errors.hpp"
#include "dldmd/random.hpp"

using namespace dldmd;
using namespace dldmd::dynamics;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dldmd_test_dynamics_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("rk4 on exponential decay matches closed form") {
  const VectorField f = [](const State& x) -> State { return -x; };
  const auto traj = simulate(f, State::Ones(1), 0.1, 1.0);
  REQUIRE(traj.size() == 11);
  for (Eigen::Index j = 0; j < traj.size(); ++j)
    CHECK(std::abs(traj.states(0, j) - std::exp(-0.1 * static_cast<double>(j))) < 1e-6);
}

TEST_CASE("rk4 global error is fourth order") {
  const VectorField f = [](const State& x) -> State { return -x; };
  const double e1 = std::abs(simulate(f, State::Ones(1), 0.2, 2.0).states(0, 10) - std::exp(-2.0));
  const double e2 = std::abs(simulate(f, State::Ones(1), 0.1, 2.0).states(0, 20) - std::exp(-2.0));
  CHECK(e1 / e2 == doctest::Approx(16.0).epsilon(0.1));
}

TEST_CASE("rk4 step uses the classical weights") {
  // x' = x^2, stages expanded by hand.
  const VectorField f = [](const State& x) -> State { return x.array().square().matrix(); };
  const double h = 0.1, x = 1.0;
  const double k1 = x * x, k2 = std::pow(x + 0.5 * h * k1, 2), k3 = std::pow(x + 0.5 * h * k2, 2),
               k4 = std::pow(x + h * k3, 2);
  const double expect = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  CHECK(rk4_step(f, State::Constant(1, x), h)(0) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("pendulum energy is conserved") {
  auto spec = SystemSpec::defaults(System::pendulum);
  State x0(2);
  x0 << 1.2, 0.3;
  const auto traj = simulate(spec, x0, 20.0);
  const double e0 = pendulum_energy(x0);
  double drift = 0.0;
  for (Eigen::Index j = 0; j < traj.size(); ++j)
    drift = std::max(drift, std::abs(pendulum_energy(traj.states.col(j)) - e0));
  CHECK(drift / std::abs(e0) < 1e-5);
}

TEST_CASE("vector fields") {
  State x(2);
  x << 0.5, -0.25;
  CHECK(eval_rhs(SystemSpec::defaults(System::pendulum), x)(1) == doctest::Approx(-std::sin(0.5)));
  CHECK(eval_rhs(SystemSpec::defaults(System::duffing), x)(1) == doctest::Approx(0.5 - 0.125));
  CHECK(eval_rhs(SystemSpec::defaults(System::vanderpol), x)(1) ==
        doctest::Approx(1.5 * 0.75 * -0.25 - 0.5));
  State y(3);
  y << 1.0, 2.0, 3.0;
  const State d = eval_rhs(SystemSpec::defaults(System::lorenz63), y);
  CHECK(d(0) == doctest::Approx(10.0));
  CHECK(d(1) == doctest::Approx(1.0 * 25.0 - 2.0));
  CHECK(d(2) == doctest::Approx(2.0 - 8.0));
  CHECK_THROWS_AS(eval_rhs(SystemSpec::defaults(System::lorenz63), x), std::invalid_argument);
}

TEST_CASE("duffing fixed point stays put") {
  const auto traj = simulate(SystemSpec::defaults(System::duffing), State::Unit(2, 0), 20.0);
  CHECK((traj.states.colwise() - State::Unit(2, 0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("simulate rejects bad horizons and reports blow-up step") {
  const VectorField f = [](const State& x) -> State { return -x; };
  CHECK_THROWS_AS(simulate(f, State::Ones(1), 0.1, 0.25), std::invalid_argument);
  CHECK_THROWS_AS(simulate(f, State::Ones(1), -0.1, 1.0), std::invalid_argument);
  CHECK(simulate(f, State::Ones(1), 0.1, 0.0).size() == 1);

  const VectorField blow = [](const State& x) -> State { return x.array().square().matrix(); };
  try {
    simulate(blow, State::Ones(1), 0.01, 5.0);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.step() > 90);
    CHECK(e.step() < 110);
  }
}

TEST_CASE("non-finite stage is named") {
  const VectorField f = [](const State& x) -> State {
    State d = x;
    d(0) = x(0) > 1.0 ? std::nan("") : 100.0;
    return d;
  };
  try {
    rk4_step(f, State::Constant(1, 0.99), 0.1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("k2") != std::string::npos);
  }
}

TEST_CASE("system names round-trip") {
  for (auto s : {System::pendulum, System::duffing, System::vanderpol, System::lorenz63})
    CHECK(system_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(system_from_string("rossler"), std::invalid_argument);
}

TEST_CASE("default protocols") {
  const auto p = SystemSpec::defaults(System::pendulum);
  CHECK(p.steps() == 400);
  CHECK(p.prediction_steps() == 800);
  const auto v = SystemSpec::defaults(System::vanderpol);
  CHECK(v.steps() == 750);
  const auto l = SystemSpec::defaults(System::lorenz63);
  CHECK(l.steps() == 300);
  CHECK(l.box[2].lo == 0.0);
  CHECK(l.box[2].hi == 40.0);
  auto bad = p;
  bad.t_predict = 10.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("sampled pendulum initial conditions respect the box and separatrix") {
  const auto spec = SystemSpec::defaults(System::pendulum);
  const auto data = sample_dataset(spec, {40, 5, 5}, 3);
  CHECK(data.train.size() == 40);
  CHECK(data.val.size() == 5);
  CHECK(data.test.size() == 5);
  for (const auto* split : {&data.train, &data.val, &data.test})
    for (const auto& t : *split) {
      CHECK(t.size() == 401);
      CHECK(std::abs(t.states(0, 0)) <= 3.1);
      CHECK(std::abs(t.states(1, 0)) <= 2.0);
      CHECK(pendulum_energy(t.states.col(0)) < kSeparatrixLevel);
    }
}

TEST_CASE("sampling is deterministic and independent of thread count") {
  auto spec = SystemSpec::defaults(System::duffing);
  spec.t_final = 2.0;
  const auto a = sample_dataset(spec, {10, 3, 3}, 42, 1);
  const auto b = sample_dataset(spec, {10, 3, 3}, 42, 3);
  const auto c = sample_dataset(spec, {10, 3, 3}, 43, 1);
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].states == b.train[i].states);
  CHECK(a.test[2].states == b.test[2].states);
  CHECK(a.train[0].states != c.train[0].states);
}

TEST_CASE("sampling rejects empty splits") {
  CHECK_THROWS_AS(sample_dataset(SystemSpec::defaults(System::duffing), {10, 0, 1}, 1),
                  std::invalid_argument);
}

TEST_CASE("impossible rejection filter raises SamplingError") {
  auto spec = SystemSpec::defaults(System::pendulum);
  spec.box = {{3.0, 3.1}, {1.9, 2.0}};  // all above the separatrix level
  spec.t_final = 0.1;
  spec.t_predict = 0.2;
  CHECK_THROWS_AS(sample_dataset(spec, {1, 1, 1}, 1), SamplingError);
}

TEST_CASE("van der pol data are scaled by the training standard deviation") {
  auto spec = SystemSpec::defaults(System::vanderpol);
  spec.t_final = 4.0;
  spec.t_predict = 8.0;
  const auto data = sample_dataset(spec, {12, 4, 4}, 9);
  REQUIRE(!data.normalization.is_identity());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(2), sq = Eigen::VectorXd::Zero(2);
  double n = 0;
  for (const auto& t : data.train) {
    sum += t.states.rowwise().sum();
    sq += t.states.array().square().matrix().rowwise().sum();
    n += static_cast<double>(t.size());
  }
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd var = sq / n - mean.cwiseProduct(mean);
  CHECK(var(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(var(1) == doctest::Approx(1.0).epsilon(1e-10));

  // Extension re-simulates in raw coordinates and maps back.
  const auto ext = extend_trajectory(spec, data.normalization, data.test[0], 8.0);
  CHECK(ext.size() == 401);
  CHECK((ext.states.leftCols(data.test[0].size()) - data.test[0].states).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("normalization apply and invert") {
  Normalization n{Eigen::Vector2d(2.0, 0.5)};
  Eigen::MatrixXd raw(2, 2);
  raw << 1, 2, 3, 4;
  CHECK(n.invert(n.apply(raw)).isApprox(raw));
  CHECK(n.apply(raw)(1, 0) == doctest::Approx(6.0));
  CHECK(Normalization::identity(3).is_identity());
}

TEST_CASE("dataset files round-trip bit for bit") {
  auto spec = SystemSpec::defaults(System::lorenz63);
  spec.t_final = 0.5;
  spec.t_predict = 1.0;
  const auto data = sample_dataset(spec, {4, 2, 3}, 11);
  const auto dir = scratch("roundtrip");
  write_dataset(dir, data);
  const auto back = read_dataset(dir);
  CHECK(back.system == "lorenz63");
  CHECK(back.dt == data.dt);
  CHECK(back.seed == 11);
  REQUIRE(back.test.size() == 3);
  for (std::size_t i = 0; i < data.train.size(); ++i) CHECK(back.train[i].states == data.train[i].states);
  CHECK(back.test[2].states == data.test[2].states);
  CHECK(std::filesystem::exists(dir / "train.bin.meta.json"));

  SplitHeader h;
  read_split(dir / "val.bin", &h);
  CHECK(h.split == "val");
  CHECK(h.state_dim == 3);
  CHECK(h.samples == 51);

  // Header is 8 magic + 4 version + strings + fixed fields + scale; payload follows.
  const auto size = std::filesystem::file_size(dir / "val.bin");
  const std::size_t header = 8 + 4 + (4 + 8) + (4 + 3) + 4 + 8 + 8 + 8 + 8 + 3 * 8;
  CHECK(size == header + 2 * 51 * 3 * 8);
}

TEST_CASE("corrupt dataset files raise IoError") {
  const auto dir = scratch("corrupt");
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "junk.bin") << "not a dataset";
  }
  CHECK_THROWS_AS(read_split(dir / "junk.bin"), IoError);
  CHECK_THROWS_AS(read_split(dir / "missing.bin"), IoError);

  auto spec = SystemSpec::defaults(System::duffing);
  spec.t_final = 1.0;
  spec.t_predict = 2.0;
  write_dataset(dir, sample_dataset(spec, {2, 1, 1}, 1));
  std::filesystem::resize_file(dir / "train.bin", std::filesystem::file_size(dir / "train.bin") - 8);
  CHECK_THROWS_AS(read_split(dir / "train.bin"), IoError);
}
