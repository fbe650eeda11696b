#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "twistpf/twistpf.hpp"

namespace {

twistpf::RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw twistpf::ConfigError("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return twistpf::parse_config(buf.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Twisted and standard particle filter experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 1;
  std::string out_dir = ".";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration file")->required();
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--out", out_dir, "output directory");
  };

  CLI::App* sim = app.add_subcommand("simulate", "simulate a dataset from the configured model");
  CLI::App* varz = app.add_subcommand("varz", "variance of log-likelihood estimates over a grid");
  CLI::App* mh = app.add_subcommand("pmmh", "particle marginal Metropolis-Hastings");
  CLI::App* track = app.add_subcommand("track", "EKF tracking metrics with fixed parameters");
  for (CLI::App* cmd : {sim, varz, mh, track}) add_common(cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    const twistpf::RunConfig cfg = load_config(config_path);
    if (sim->parsed()) twistpf::cmd_simulate(cfg, seed, out_dir);
    if (varz->parsed()) twistpf::cmd_varz(cfg, seed, out_dir);
    if (mh->parsed()) twistpf::cmd_pmmh(cfg, seed, out_dir);
    if (track->parsed()) twistpf::cmd_track(cfg, seed, out_dir);
  } catch (const twistpf::ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 3;
  }
  return 0;
}
