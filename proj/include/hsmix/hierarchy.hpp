#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "hsmix/core.hpp"
#include "hsmix/io.hpp"
#include "hsmix/rng.hpp"
#include "hsmix/scaling.hpp"

namespace hsmix {

// One adjunction: at time t a beta particle joins target number m (1-based,
// within the live alpha block); j = +1 collides, j = -1 keeps velocities.
struct CollisionRecord {
  Species alpha = Species::A;
  Species beta = Species::A;
  Index m = 1;
  int j = -1;
  Eigen::VectorXd omega;
  Eigen::VectorXd v_new;
  double t = 0.0;
};

struct CollisionHistory {
  double t0 = 0.0;  // observation time
  std::vector<CollisionRecord> records;

  int k() const { return static_cast<int>(records.size()); }
  // beta-tilde after the first i records.
  std::array<Index, 2> added(int i) const;
  // Throws ValidationError on decreasing-time, target-range, unit-normal or sign violations.
  void validate(std::array<Index, 2> s, int d, double delta = 0.0) const;
};

json history_to_json(const CollisionHistory& h);
CollisionHistory history_from_json(const json& j);

struct TimeSample {
  std::vector<double> times;  // t_1 > ... > t_k
  double volume = 1.0;
};

// Uniform on {t >= t_1 >= ... >= t_k >= 0} with every gap t_i - t_{i+1} >= delta,
// counting t_0 = t and t_{k+1} = 0. Volume (t - (k+1) delta)^k / k!.
TimeSample sample_time_simplex(int k, double t, double delta, Rng& rng);
double time_simplex_volume(int k, double t, double delta);

enum class PseudoFlavor { Boltzmann, Bbgky };

struct Adjunction {
  ParticleRef target;
  ParticleRef added;
  double rate = 0.0;  // <omega, v_new - v_target(t_i^+)>
};

// stages[i] is the configuration at t_i^+ for i = 0..k+1 (t_0 = t0, t_{k+1} = 0);
// after[i - 1] is the configuration right after adjunction i, at t_i^-.
struct PseudoTrajectory {
  PseudoFlavor flavor = PseudoFlavor::Boltzmann;
  std::vector<double> times;
  std::vector<Configuration> stages;
  std::vector<Configuration> after;
  std::vector<Adjunction> adjunctions;
};

PseudoTrajectory build_boltzmann_pseudo(const Configuration& z_s, const CollisionHistory& history,
                                        const std::array<double, 2>& masses);
PseudoTrajectory build_bbgky_pseudo(const Configuration& z_s, const CollisionHistory& history,
                                    const MixtureParams& params);

struct StageDeviation {
  int stage = 0;
  Index particles = 0;
  double max_position = 0.0;  // max over particles of |x^N - x^inf|
  double total_position = 0.0;
  double max_velocity = 0.0;
  double particle_bound = 0.0;  // sqrt(2) (i - 1) max eps
  double total_bound = 0.0;     // sqrt(8) n^2 max eps
};

struct PseudoComparison {
  std::vector<StageDeviation> stages;
  bool ok = true;
};

PseudoComparison compare_pseudo(const PseudoTrajectory& boltz, const PseudoTrajectory& bbgky, double max_eps);

struct RecollisionResult {
  bool clean = true;
  int stage = -1;  // segment index that failed
};

// Replays each backward free-flight segment under the eps exclusion.
RecollisionResult recollision_filter(const PseudoTrajectory& pseudo, const MixtureParams& params);

// Random history for s with k records: uniform species, targets, signs,
// normals on the sphere and new velocities in B_R.
CollisionHistory random_history(std::array<Index, 2> s, int k, double t, double delta, double R, int d, Rng& rng);

using ObservableFunction = std::function<double(const Configuration&)>;

struct DuhamelSpec {
  std::array<Index, 2> s{1, 0};
  int k = 0;
  // Fixed class; empty means every class, sampled uniformly.
  std::vector<Species> alphas, betas;
  PseudoFlavor flavor = PseudoFlavor::Boltzmann;
  GradScaling scaling;
  std::optional<RealizedScaling> realized;  // required for the BBGKY flavor
  std::array<double, 2> masses{1.0, 1.0};
  double R = 5.0;
  double delta = 0.0;
  double t = 0.0;
  Configuration x_s;  // observation positions; velocities are integrated
  ObservableFunction phi;  // test function of the stage-0 velocities
  std::size_t samples = 10000;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct DuhamelEstimate {
  double mean = 0.0;
  double stderr_mean = 0.0;
  std::size_t samples = 0;
  std::size_t rejected = 0;
  double rejected_fraction = 0.0;
};

// Monte Carlo estimate of int phi(V_s) f_k(X_s, V_s) dV_s, summing the sign
// patterns J exhaustively for every sampled (times, targets, omega, v).
DuhamelEstimate duhamel_iterate(const ObservableFunction& initial_data, const DuhamelSpec& spec);

}  // namespace hsmix
