#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>

#include "app.hpp"

using namespace hsmix::app;

int main(int argc, char** argv) {
  CLI::App cli{"Two-species hard-sphere mixtures: dynamics, hierarchies and chaos experiments"};
  cli.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
  std::optional<std::uint64_t> events_max;
  std::optional<double> contact_tol;
  std::optional<int> k;
  std::optional<std::size_t> trials;
  std::optional<std::size_t> ensemble;
  RunFlags flags;

  auto common = [&](CLI::App* sub) {
    sub->add_option("config,--config", config_path, "JSON config file")->required();
    sub->add_option("--seed", seed, "64-bit seed (overrides config)");
    sub->add_option("--threads", threads, "worker threads, 0 = all cores (overrides config)");
    sub->add_option("--out", out, "output directory (overrides config and HSMIX_OUT)");
  };

  const std::map<std::string, std::string> about = {
      {"simulate", "event-driven run of one sampled configuration"},
      {"scaling", "realize the Boltzmann-Grad scaling for N2"},
      {"pde-solve", "Picard solve of the mixture Boltzmann system on a grid"},
      {"pseudo-compare", "Boltzmann vs BBGKY pseudo-trajectories on random histories"},
      {"duhamel", "Monte Carlo estimate of one Duhamel term"},
      {"chaos-test", "ensemble marginals against the tensorized PDE solution"},
      {"pathology-scan", "grazing/overflow statistics over many seeds"},
  };
  std::vector<CLI::App*> runs;
  for (const auto& name : subcommands()) {
    CLI::App* sub = cli.add_subcommand(name, about.count(name) ? about.at(name) : "");
    common(sub);
    runs.push_back(sub);
    if (name == "simulate") {
      sub->add_option("--events-max", events_max, "abort after this many collisions");
      sub->add_option("--contact-tol", contact_tol, "relative contact tolerance");
    } else if (name == "pde-solve") {
      sub->add_flag("--homogeneous", flags.homogeneous, "drop the transport term");
    } else if (name == "pseudo-compare") {
      sub->add_option("--k", k, "collisions per history");
      sub->add_option("--trials", trials, "number of random histories");
    } else if (name == "chaos-test") {
      sub->add_option("--n-points", flags.n_points, "number of N2 values (doubling)")->check(CLI::PositiveNumber);
      sub->add_option("--ensemble", ensemble, "ensemble size M");
    }
  }
  CLI::App* val = cli.add_subcommand("validate", "check a config and print derived quantities");
  val->add_option("config,--config", config_path, "JSON config file")->required();

  CLI11_PARSE(cli, argc, argv);

  RunConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kConfigError;
  }
  if (val->parsed()) return validate(cfg, std::cout, std::cerr);

  if (const char* env = std::getenv("HSMIX_OUT"); env && *env) cfg.out = env;
  if (out) cfg.out = *out;
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;
  if (events_max) cfg.simulate.events_max = *events_max;
  if (contact_tol) cfg.simulate.contact_tol = *contact_tol;
  if (k) cfg.pseudo.k = *k;
  if (trials) cfg.pseudo.trials = *trials;
  if (ensemble) cfg.chaos.members = *ensemble;

  for (CLI::App* sub : runs)
    if (sub->parsed()) return run_with(sub->get_name(), cfg, flags, std::cout, std::cerr);
  return kConfigError;
}
