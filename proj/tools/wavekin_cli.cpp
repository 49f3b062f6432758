// Command-line front end: one subcommand per experiment, configured by a
// flat key-value file plus a few common flags.
#include <CLI11.hpp>
#include <cstdio>
#include <string>

#include "wavekin/experiments.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int threads = 1;
  bool print_config = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Configuration file path");
  cmd->add_option("--out", flags.out_dir, "Output directory for artifacts");
  cmd->add_option("--seed", flags.seed, "Parameter initialization seed");
  cmd->add_option("--threads", flags.threads, "Worker thread count")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--print-config", flags.print_config,
                "Print the effective configuration and exit");
}

int dispatch(const std::string& experiment, const CommonFlags& flags) {
  namespace ex = wavekin::experiments;
  wavekin::io::Config config;
  try {
    if (!flags.config_path.empty())
      config = wavekin::io::Config::load(flags.config_path);
  } catch (const wavekin::io::ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return ex::kExitConfig;
  }
  ex::Options opt;
  opt.seed = flags.seed;
  opt.threads = flags.threads;
  opt.out_dir = flags.out_dir;
  try {
    if (flags.print_config) {
      ex::print_config(experiment, config);
      return ex::kExitOk;
    }
    if (experiment == "sce_train") return ex::run_sce_train(config, opt);
    if (experiment == "wke_train") return ex::run_wke_train(config, opt);
    if (experiment == "fvs_run") return ex::run_fvs(config, opt);
    if (experiment == "analyze") return ex::analyze(config, opt);
    if (experiment == "compare") return ex::compare(config, opt);
  } catch (const wavekin::io::ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return ex::kExitConfig;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "numeric abort: %s\n", err.what());
    return ex::kExitNumeric;
  }
  std::fprintf(stderr, "unknown experiment: %s\n", experiment.c_str());
  return ex::kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual-minimization solvers for coagulation and 3-wave "
               "kinetic equations with a finite-volume reference scheme"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    const char* experiment;
  };
  const Sub subs[] = {
      {"train-sce", "Train the coagulation-equation field (Test 1)", "sce_train"},
      {"train-wke", "Train the 3-wave kinetic field (Test 2)", "wke_train"},
      {"run-fvs", "Run the finite-volume reference scheme", "fvs_run"},
      {"analyze", "Fit the energy decay slope of an energy CSV", "analyze"},
      {"compare", "Compare two snapshot CSV files", "compare"},
  };

  CommonFlags flags[5];
  for (int i = 0; i < 5; ++i) {
    CLI::App* cmd = app.add_subcommand(subs[i].name, subs[i].help);
    add_common(cmd, flags[i]);
  }

  CLI11_PARSE(app, argc, argv);

  for (int i = 0; i < 5; ++i)
    if (app.got_subcommand(subs[i].name))
      return dispatch(subs[i].experiment, flags[i]);
  return wavekin::experiments::kExitConfig;
}
