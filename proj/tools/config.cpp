#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dldmd/errors.hpp"

namespace dldmd::cli {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("invalid value '" + v + "' for key '" + key + "'");
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "system", "preset", "seed", "threads", "out", "data", "checkpoint",
      "n_train", "n_val", "n_test", "dt", "t_final", "t_predict",
      "alpha1", "alpha2", "alpha3", "alpha4", "lr", "batch_size", "epochs",
      "latent_dim", "hidden_width", "hidden_layers", "ridge_eps", "svd_threshold",
      "traj", "band", "baseline"};
  return keys;
}

std::pair<std::string, std::string> parse_assignment(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
  std::string key = trim(kv.substr(0, eq));
  std::string value = trim(kv.substr(eq + 1));
  if (key.empty()) throw ConfigError("empty key in '" + kv + "'");
  return {key, value};
}

Assignments parse_config_text(const std::string& text, const std::string& origin) {
  Assignments out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      out.push_back(parse_assignment(line));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Assignments read_config_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), file.string());
}

RunConfig resolve(const std::string& command, const Assignments& assignments) {
  const auto& keys = known_keys();
  std::string system = "pendulum";
  std::string preset = "desk-scale";
  for (const auto& [k, v] : assignments) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw ConfigError("unknown config key '" + k + "'");
    if (k == "system") system = v;
    if (k == "preset") preset = v;
  }

  RunConfig c;
  c.command = command;
  try {
    c.system = dynamics::system_from_string(system);
    c.preset = training::preset_from_string(preset);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.spec = dynamics::SystemSpec::defaults(c.system);
  c.hyper = training::HyperParams::preset(c.preset, c.system);
  c.counts = training::preset_counts(c.preset);

  auto& h = c.hyper;
  for (const auto& [k, v] : assignments) {
    if (k == "system" || k == "preset") continue;
    if (k == "seed") c.seed = parse_number<std::uint64_t>(k, v);
    else if (k == "threads") c.threads = parse_number<int>(k, v);
    else if (k == "out") c.out = v;
    else if (k == "data") c.data = v;
    else if (k == "checkpoint") c.checkpoint = v;
    else if (k == "n_train") c.counts.train = parse_number<std::size_t>(k, v);
    else if (k == "n_val") c.counts.val = parse_number<std::size_t>(k, v);
    else if (k == "n_test") c.counts.test = parse_number<std::size_t>(k, v);
    else if (k == "dt") c.spec.dt = parse_number<double>(k, v);
    else if (k == "t_final") c.spec.t_final = parse_number<double>(k, v);
    else if (k == "t_predict") c.spec.t_predict = parse_number<double>(k, v);
    else if (k == "alpha1") h.alpha1 = parse_number<double>(k, v);
    else if (k == "alpha2") h.alpha2 = parse_number<double>(k, v);
    else if (k == "alpha3") h.alpha3 = parse_number<double>(k, v);
    else if (k == "alpha4") h.alpha4 = parse_number<double>(k, v);
    else if (k == "lr") h.lr = parse_number<double>(k, v);
    else if (k == "batch_size") h.batch_size = parse_number<int>(k, v);
    else if (k == "epochs") h.max_epochs = parse_number<int>(k, v);
    else if (k == "latent_dim") h.latent_dim = parse_number<int>(k, v);
    else if (k == "hidden_width") h.hidden_width = parse_number<int>(k, v);
    else if (k == "hidden_layers") h.hidden_layers = parse_number<int>(k, v);
    else if (k == "ridge_eps") h.ridge_eps = parse_number<double>(k, v);
    else if (k == "svd_threshold") h.svd_threshold = parse_number<double>(k, v);
    else if (k == "traj") c.traj = parse_number<std::size_t>(k, v);
    else if (k == "band") c.band = parse_number<double>(k, v);
    else if (k == "baseline") {
      if (!v.empty() && v != "dmd") throw ConfigError("baseline must be 'dmd' or empty");
      c.baseline = v;
    }
  }
  h.seed = c.seed;
  if (c.data.empty()) c.data = c.out / "data";
  if (c.checkpoint.empty()) c.checkpoint = c.out / "checkpoint.bin";
  if (c.threads < 1) throw ConfigError("threads must be >= 1");
  if (!(c.band > 0.0)) throw ConfigError("band must be positive");
  try {
    h.validate();
    c.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

std::string RunConfig::echo() const {
  std::ostringstream o;
  o << "# effective configuration for '" << command << "'\n";
  o << "system = " << dynamics::to_string(system) << '\n';
  o << "preset = " << training::to_string(preset) << '\n';
  o << "seed = " << seed << '\n';
  o << "threads = " << threads << '\n';
  o << "out = " << out.string() << '\n';
  o << "data = " << data.string() << '\n';
  o << "checkpoint = " << checkpoint.string() << '\n';
  o << "n_train = " << counts.train << '\n';
  o << "n_val = " << counts.val << '\n';
  o << "n_test = " << counts.test << '\n';
  o << "dt = " << fmt(spec.dt) << '\n';
  o << "t_final = " << fmt(spec.t_final) << '\n';
  o << "t_predict = " << fmt(spec.t_predict) << '\n';
  o << "alpha1 = " << fmt(hyper.alpha1) << '\n';
  o << "alpha2 = " << fmt(hyper.alpha2) << '\n';
  o << "alpha3 = " << fmt(hyper.alpha3) << '\n';
  o << "alpha4 = " << fmt(hyper.alpha4) << '\n';
  o << "lr = " << fmt(hyper.lr) << '\n';
  o << "batch_size = " << hyper.batch_size << '\n';
  o << "epochs = " << hyper.max_epochs << '\n';
  o << "latent_dim = " << hyper.latent_dim << '\n';
  o << "hidden_width = " << hyper.hidden_width << '\n';
  o << "hidden_layers = " << hyper.hidden_layers << '\n';
  o << "ridge_eps = " << fmt(hyper.ridge_eps) << '\n';
  o << "svd_threshold = " << fmt(hyper.svd_threshold) << '\n';
  o << "traj = " << traj << '\n';
  o << "band = " << fmt(band) << '\n';
  o << "baseline = " << baseline << '\n';
  return o.str();
}

}  // namespace dldmd::cli
