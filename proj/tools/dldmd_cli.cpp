// dldmd: generate datasets, train, evaluate and inspect DLDMD models.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "dldmd/analysis.hpp"
#include "dldmd/errors.hpp"

namespace fs = std::filesystem;
using namespace dldmd;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumeric = 3, kIo = 4 };

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::string system, preset, out, baseline;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads, epochs;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "key = value config file");
  cmd->add_option("--set", f.sets, "override one key (key=value), repeatable");
  cmd->add_option("--system", f.system, "pendulum | duffing | vanderpol | lorenz63");
  cmd->add_option("--preset", f.preset, "paper-scale | desk-scale");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--threads", f.threads, "worker threads");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--baseline", f.baseline, "also score a baseline (dmd)");
}

cli::RunConfig build_config(const std::string& command, const Flags& f) {
  cli::Assignments a;
  if (!f.config.empty()) a = cli::read_config_file(f.config);
  for (const auto& s : f.sets) a.push_back(cli::parse_assignment(s));
  if (!f.system.empty()) a.emplace_back("system", f.system);
  if (!f.preset.empty()) a.emplace_back("preset", f.preset);
  if (f.seed) a.emplace_back("seed", std::to_string(*f.seed));
  if (!f.out.empty()) a.emplace_back("out", f.out);
  if (f.threads) a.emplace_back("threads", std::to_string(*f.threads));
  if (f.epochs) a.emplace_back("epochs", std::to_string(*f.epochs));
  if (!f.baseline.empty()) a.emplace_back("baseline", f.baseline);
  return cli::resolve(command, a);
}

void prepare_out(const cli::RunConfig& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw IoError("cannot create output directory " + c.out.string() + ": " + ec.message());
  std::ofstream echo(c.out / ("config_" + c.command + ".txt"), std::ios::trunc);
  if (!echo) throw IoError("cannot write config echo to " + c.out.string());
  echo << c.echo();
}

std::ofstream open_out(const fs::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << std::setprecision(17);
  return out;
}

const dynamics::Trajectory& pick(const std::vector<dynamics::Trajectory>& test, std::size_t i) {
  if (i >= test.size())
    throw ConfigError("traj = " + std::to_string(i) + " but the test split has " +
                      std::to_string(test.size()) + " trajectories");
  return test[i];
}

std::vector<dynamics::Trajectory> load_test(const cli::RunConfig& c) {
  const fs::path file = c.data / "test.bin";
  if (!fs::exists(file)) throw IoError("test split not found: " + file.string());
  return dynamics::read_split(file);
}

training::Checkpoint load_checkpoint(const cli::RunConfig& c) {
  if (!fs::exists(c.checkpoint)) throw IoError("checkpoint not found: " + c.checkpoint.string());
  return training::read_checkpoint(c.checkpoint);
}

int cmd_generate(const cli::RunConfig& c) {
  prepare_out(c);
  const auto data = dynamics::sample_dataset(c.spec, c.counts, c.seed, c.threads);
  dynamics::write_dataset(c.data, data);
  nlohmann::ordered_json m;
  m["system"] = data.system;
  m["preset"] = training::to_string(c.preset);
  m["seed"] = c.seed;
  m["counts"] = {{"train", c.counts.train}, {"val", c.counts.val}, {"test", c.counts.test}};
  m["dt"] = c.spec.dt;
  m["t_final"] = c.spec.t_final;
  m["files"] = {"train.bin", "val.bin", "test.bin"};
  m["data"] = c.data.string();
  open_out(c.out / "manifest.json") << m.dump(2) << '\n';
  std::cout << "wrote " << c.counts.total() << " " << data.system << " trajectories to "
            << c.data.string() << '\n';
  return kOk;
}

int cmd_train(const cli::RunConfig& c) {
  if (!fs::exists(c.data / "train.bin")) throw IoError("dataset not found: " + c.data.string());
  const auto data = dynamics::read_dataset(c.data);
  if (data.system != dynamics::to_string(c.system))
    throw ConfigError("dataset " + c.data.string() + " holds '" + data.system +
                      "' trajectories but system = " + dynamics::to_string(c.system));
  prepare_out(c);

  auto metrics = open_out(c.out / "metrics.csv");
  metrics << "epoch,train_total,train_recon,train_dmd,train_pred,reg,val_total,wall_seconds\n";
  training::TrainOptions opts;
  opts.threads = c.threads;
  opts.on_epoch = [&](const training::EpochRecord& r, double wall) {
    metrics << r.epoch << ',' << r.train.total << ',' << r.train.recon << ',' << r.train.dmd
            << ',' << r.train.pred << ',' << r.train.reg << ',' << r.val.total << ','
            << std::setprecision(4) << wall << std::setprecision(17) << '\n';
    metrics.flush();
    std::fprintf(stderr, "epoch %4d  train %.4e  val %.4e  (%.1fs)\n", r.epoch, r.train.total,
                 r.val.total, wall);
  };
  const auto result = training::train(data, c.hyper, opts);
  training::write_checkpoint(c.checkpoint, result.final);
  training::write_checkpoint(c.out / "checkpoint_best.bin", result.best);
  if (result.final.failed) {
    std::cerr << "training failed: " << result.final.failure << '\n'
              << "last good parameters saved to " << c.checkpoint.string() << '\n';
    return kNumeric;
  }
  std::cout << "trained " << result.final.epoch << " epochs; checkpoint "
            << c.checkpoint.string() << '\n';
  return kOk;
}

void write_rows(std::ofstream& out, const std::string& model, const training::EvaluationReport& r) {
  for (const auto& row : r.rows)
    out << model << ',' << row.traj_id << ',' << row.mse << ',' << row.mse_extended << ','
        << row.n_eigs << ',' << row.max_modulus_minus_one << ',' << row.residual << ','
        << row.cond_V << ',' << (row.imag_warning ? 1 : 0) << '\n';
}

void write_summary(std::ofstream& out, const std::string& model,
                   const training::EvaluationReport& r) {
  out << model << ',' << r.mean_mse << ',' << r.log10_mse << ',' << r.mean_mse_extended << ','
      << r.mean_residual << ',' << r.latent_dim << ',' << r.param_count << '\n';
}

int cmd_evaluate(const cli::RunConfig& c) {
  const auto ckpt = load_checkpoint(c);
  const auto test = load_test(c);
  prepare_out(c);
  const auto truth = training::simulated_truth(ckpt.system, ckpt.normalization);
  const double t_pred = c.spec.t_predict;

  const auto rep = training::evaluate(ckpt, test, t_pred, truth, c.threads);
  auto summary = open_out(c.out / "summary.csv");
  summary << "model,mean_mse,log10_mse,mean_mse_extended,mean_residual,N_o,param_count\n";
  write_summary(summary, "dldmd", rep);
  auto rows = open_out(c.out / "evaluation.csv");
  rows << "model,traj_id,mse,mse_extended,n_eigs,max_modulus_minus_one,residual,cond_V,"
          "imag_warning\n";
  write_rows(rows, "dldmd", rep);
  if (c.baseline == "dmd") {
    const auto base = training::evaluate_dmd(test, t_pred, truth, c.threads);
    write_summary(summary, "dmd", base);
    write_rows(rows, "dmd", base);
  }

  std::vector<edmd::EdmdResult> eig;
  for (const auto& row : rep.rows) {
    edmd::EdmdResult r;
    r.t = row.eigenvalues;
    eig.push_back(std::move(r));
  }
  analysis::write_eigenvalues_csv(c.out / "eigenvalues.csv", analysis::eig_report(eig, c.band));

  const auto& traj = pick(test, c.traj);
  analysis::write_spectra_csv(c.out / "spectra.csv", analysis::spectral_comparison(ckpt, traj));
  const auto beyond = analysis::predict_beyond(ckpt, traj, t_pred, truth);
  analysis::write_trajectory_csv(c.out / "prediction.csv", beyond.truth, beyond.model.predicted);

  std::cout << "mean MSE " << rep.mean_mse << " (log10 " << rep.log10_mse << "), extended "
            << rep.mean_mse_extended << ", N_o " << rep.latent_dim << ", params "
            << rep.param_count << '\n';
  return kOk;
}

int cmd_predict(const cli::RunConfig& c) {
  const auto ckpt = load_checkpoint(c);
  const auto test = load_test(c);
  prepare_out(c);
  const auto& traj = pick(test, c.traj);
  const auto beyond = analysis::predict_beyond(
      ckpt, traj, c.spec.t_predict, training::simulated_truth(ckpt.system, ckpt.normalization));
  analysis::write_trajectory_csv(c.out / "prediction.csv", beyond.truth, beyond.model.predicted);
  std::cout << "trajectory " << c.traj << ": MSE to t = " << c.spec.t_predict << " is "
            << beyond.mse << (beyond.model.imag_warning ? " (imaginary residue)" : "") << '\n';
  return kOk;
}

int cmd_spectra(const cli::RunConfig& c) {
  const auto ckpt = load_checkpoint(c);
  const auto test = load_test(c);
  prepare_out(c);
  const auto s = analysis::spectral_comparison(ckpt, pick(test, c.traj));
  analysis::write_spectra_csv(c.out / "spectra.csv", s);
  std::cout << "concentration phase";
  for (double v : s.phase.concentration) std::cout << ' ' << v;
  std::cout << "  latent";
  for (double v : s.latent.concentration) std::cout << ' ' << v;
  std::cout << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep-learning enhanced dynamic mode decomposition"};
  app.require_subcommand(1);
  Flags flags;
  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const cli::RunConfig&);
  };
  const Sub subs[] = {
      {"generate", "sample and integrate a trajectory dataset", cmd_generate},
      {"train", "train encoder/decoder on a dataset", cmd_train},
      {"evaluate", "score a checkpoint on the test split", cmd_evaluate},
      {"predict", "extend one test trajectory past the observed window", cmd_predict},
      {"spectra", "phase vs latent FFT spectra of one test trajectory", cmd_spectra},
  };
  std::vector<std::pair<CLI::App*, const Sub*>> cmds;
  for (const auto& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_flags(cmd, flags);
    cmds.emplace_back(cmd, &s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    for (const auto& [cmd, sub] : cmds)
      if (cmd->parsed()) return sub->run(build_config(sub->name, flags));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const SamplingError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kOk;
}
