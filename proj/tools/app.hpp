#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hsmix/chaos.hpp"
#include "hsmix/io.hpp"

namespace hsmix::app {

// Bad config file; the message names the field path.
class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

enum ExitCode : int { kOk = 0, kConfigError = 2, kPathology = 3, kNumericalFailure = 4 };

struct BlobConfig {
  double spatial_std = 1.0;
  std::vector<double> center;  // empty = origin
  std::vector<double> drift;   // empty = zero
  double gamma = 0.5;          // velocity profile exp(-gamma M |v|^2)
  double thermal_std = 0.0;    // > 0 overrides gamma
  GaussianBlob blob(int d, double mass) const;
  bool operator==(const BlobConfig&) const = default;
};

struct ScalingConfig {
  int dim = 2;
  double c1 = 1.0, c2 = 1.0, b = 1.0;
  std::int64_t n2 = 64;
  GradScaling scaling() const { return GradScaling{dim, c1, c2, b}; }
  bool operator==(const ScalingConfig&) const = default;
};

struct MixtureConfig {
  std::array<double, 2> masses{1.0, 2.0};
  BlobConfig a, b;
  bool operator==(const MixtureConfig&) const = default;
};

struct SimulateConfig {
  std::vector<std::int64_t> counts;  // empty = realized scaling
  std::vector<double> diameters;     // empty = realized scaling
  double t = 1.0;
  double t_mft = 0.0;  // > 0: time in mean free times, overrides t
  double contact_tol = kDefaultContactTol;
  std::uint64_t events_max = 1000000;
  std::string initial;  // configuration CSV; empty = sample from the blobs
  bool operator==(const SimulateConfig&) const = default;
};

struct PdeConfig {
  double L = 4.5;
  int nx = 12;
  double R = 4.5;
  int nv = 12;
  int sphere_resolution = 0;  // 0 = reference rule
  double t_end = 0.5;
  int steps = 2;
  double gamma0 = 0.4, mu0 = 0.0, lambda = 0.1, horizon = 1.0;
  double tolerance = 1e-8;
  int max_iterations = 20;
  int growth_limit = 3;
  bool homogeneous = false;
  bool exact_free = true;
  bool operator==(const PdeConfig&) const = default;
};

struct PseudoConfig {
  std::array<std::int64_t, 2> s{1, 1};
  int k = 4;
  std::size_t trials = 1000;
  double t = 1.0;
  double delta = 0.0;
  double R = 3.0;         // new velocities in B_R
  double x_radius = 3.0;  // observation positions in the ball of this radius
  bool operator==(const PseudoConfig&) const = default;
};

struct DuhamelConfig {
  std::array<std::int64_t, 2> s{1, 1};
  int k = 1;
  std::string flavor = "boltzmann";
  std::vector<std::string> alphas, betas;  // empty = all classes
  double R = 4.0;
  double delta = 0.0;
  double t = 0.5;
  std::size_t samples = 100000;
  std::vector<std::vector<double>> x_s;  // empty = all at the origin
  std::vector<json> phi;                 // one velocity test per particle; empty = constants
  bool operator==(const DuhamelConfig&) const = default;
};

struct ChaosConfig {
  std::vector<std::int64_t> n2{64, 128, 256};
  std::size_t members = 2000;
  double t_mft = 0.3;
  std::size_t probes = 64;
  double probe_extent = 1.5;
  double sigma = 0.75;
  double cell_half_width = 0.25;
  std::uint64_t probe_seed = 3;
  std::vector<std::vector<json>> specs;  // pairs of velocity tests (A factor, B factor)
  std::vector<json> covariance;          // (A test, B test)
  bool pde_reference = true;             // add the PDE collision part to the free flow
  double reference_R = 6.0;
  int reference_n = 64;
  bool operator==(const ChaosConfig&) const = default;
};

struct PathologyConfig {
  std::array<std::int64_t, 2> counts{10, 10};
  std::vector<double> diameters;  // empty = realized scaling at N2 = counts[1]
  double t_mft = 1.0;
  std::size_t seeds = 1000;
  std::vector<double> contact_tols{1e-9};
  std::uint64_t events_max = 1000000;
  bool operator==(const PathologyConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = available parallelism
  std::string out = "out";
  std::string format = "csv";  // csv | jsonl | binary
  ScalingConfig scaling;
  MixtureConfig mixture;
  SimulateConfig simulate;
  PdeConfig pde;
  PseudoConfig pseudo;
  DuhamelConfig duhamel;
  ChaosConfig chaos;
  PathologyConfig pathology;

  // Physical invariants; throws ConfigError naming the field.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

json to_json(const RunConfig& c);
// Missing fields take defaults; unknown fields are errors.
RunConfig config_from_json(const json& j);
// Parse errors carry line and column.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);

std::vector<std::string> subcommands();

// Subcommand flags that are not config fields.
struct RunFlags {
  bool homogeneous = false;  // pde-solve: drop transport
  int n_points = 0;          // chaos-test: number of N2 values, 0 = as configured
};

// Runs one subcommand, writing data files and manifest.json into cfg.out.
// Returns an ExitCode; diagnostics go to err.
int run(const std::string& subcommand, const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_with(const std::string& subcommand, const RunConfig& cfg, const RunFlags& flags, std::ostream& out,
             std::ostream& err);

// Checks the config and prints derived quantities; warnings do not fail.
int validate(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace hsmix::app
