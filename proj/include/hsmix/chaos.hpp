#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hsmix/core.hpp"
#include "hsmix/data.hpp"
#include "hsmix/dynamics.hpp"
#include "hsmix/io.hpp"
#include "hsmix/pde.hpp"
#include "hsmix/rng.hpp"
#include "hsmix/scaling.hpp"

namespace hsmix {

// Uniform cells on [-L, L]^d in x and [-R, R]^d in v.
struct HistogramSpec {
  double L = 4.0;
  int nx = 8;
  double R = 4.0;
  int nv = 8;
  int permutations = 8;  // random same-species relabelings per sample
  void validate() const;
};

// Sparse histogram of the (s1, s2) marginal. Cell keys encode, per particle
// (A block first), d x-bins then d v-bins in mixed radix.
struct MarginalEstimate {
  std::array<Index, 2> s{1, 0};
  int dim = 2;
  HistogramSpec spec;
  std::map<std::uint64_t, double> weight;  // summed sample weight per cell
  std::size_t samples = 0;

  // Fraction of sample weight that landed on the grid (<= 1).
  double mass() const;
  double cell_volume() const;
  std::vector<int> decode(std::uint64_t key) const;
};

// Throws ValidationError when a configuration has fewer than s particles.
MarginalEstimate estimate_marginal(const std::vector<Configuration>& ensemble, std::array<Index, 2> s,
                                   const HistogramSpec& spec, std::uint64_t seed = 1);

// One velocity factor of a product test function.
struct VelocityTest {
  enum class Kind { Constant, Polynomial, Gaussian, Box };
  struct Term {
    double coefficient = 1.0;
    std::vector<int> exponents;
    bool operator==(const Term&) const = default;
  };
  Kind kind = Kind::Constant;
  double scale = 1.0;
  std::vector<Term> terms;     // Polynomial, each of total degree <= 4
  Eigen::VectorXd center;      // Gaussian
  double width = 1.0;          // Gaussian
  Eigen::VectorXd lo, hi;      // Box

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  void validate(int d) const;
  std::string label() const;
};

VelocityTest constant_test(double c = 1.0);
VelocityTest monomial_test(std::vector<int> exponents, double scale = 1.0);
VelocityTest polynomial_test(std::vector<VelocityTest::Term> terms);
// |v|^2
VelocityTest energy_test(int d);
VelocityTest gaussian_test(Eigen::VectorXd center, double width);
VelocityTest box_test(Eigen::VectorXd lo, Eigen::VectorXd hi);
json velocity_test_to_json(const VelocityTest& t);
VelocityTest velocity_test_from_json(const json& j, int d);

// phi(V_s) = prod_k factors[k](v_k); separation sigma for admissible X_s.
struct ObservableSpec {
  std::array<Index, 2> s{1, 1};
  std::vector<VelocityTest> factors;
  double sigma = 0.5;

  double phi(const Configuration& z) const;
  void validate(int d) const;
  std::string label() const;
};

// Throws DomainError when two points of X_s are closer than sigma.
void check_separated(const Configuration& x_s, double sigma);

// Histogram summation at X_s (positions of x_s).
double observable(const MarginalEstimate& est, const ObservableSpec& spec, const Configuration& x_s);

// int phi_k(v) f_species(x, v) dv for one particle.
using OneParticleMoment = std::function<double(Species, const Eigen::Ref<const Eigen::VectorXd>&, const VelocityTest&)>;

// Tensor reference prod_k <phi_k, f_k(x_k)>.
double observable(const OneParticleMoment& moment, const ObservableSpec& spec, const Configuration& x_s);
// Same, averaged over the axis-aligned cubes of half-width h around each x_k.
double cell_observable(const OneParticleMoment& moment, const ObservableSpec& spec, const Configuration& x_s,
                       double h);

struct ObservableSample {
  double mean = 0.0;
  double stderr_mean = 0.0;
};

// Cell-localized ensemble estimate of the cube average of I_phi around X_s,
// averaging over every ordered tuple of distinct particles.
ObservableSample ensemble_observable(const std::vector<Configuration>& ensemble, const ObservableSpec& spec,
                                     const Configuration& x_s, double h);

// cov(phi1(v^A_1), phi2(v^B_1)) from all A-B pairs, centred per sample.
ObservableSample pair_covariance(const std::vector<Configuration>& ensemble, const VelocityTest& phi1,
                                 const VelocityTest& phi2);

enum class GoodStatus { Good, Bad, Indeterminate };
std::string_view good_status_name(GoodStatus s);

// Backward flow sampled on [t0, horizon] with step theta / (4 max speed)
// unless step > 0 is given; pairwise separations must stay above theta.
GoodStatus good_config_check(const Configuration& z, double theta, double t0, double horizon,
                             const MixtureParams& params, double step = 0.0);

// Rejection sampling onto the phase space from the tensor product of blobs.
SampledConfiguration conditioned_initial_sampler(const GaussianBlob& g0, const GaussianBlob& h0,
                                                 const RealizedScaling& realized, const std::array<double, 2>& masses,
                                                 Rng& rng, double acceptance_floor = 1e-4);

// Inverse of the mean per-particle collision rate of the limiting equation
// for spatially Gaussian blob data, weighted by species fractions.
double mean_free_time(const GradScaling& scaling, const GaussianBlob& g0, const GaussianBlob& h0);

struct Ensemble {
  RealizedScaling realized;
  double t = 0.0;
  std::vector<Configuration> members;  // non-pathological runs only
  std::size_t pathological = 0;
  double mean_acceptance = 0.0;
  std::uint64_t collisions = 0;
};

// M conditioned samples flowed to time t; member m uses stream m of the seed.
Ensemble run_ensemble(const GaussianBlob& g0, const GaussianBlob& h0, const RealizedScaling& realized,
                      const std::array<double, 2>& masses, double t, std::size_t members, std::uint64_t seed,
                      int threads = 1);

// Limit-equation one-particle moments: exact free flow of the blobs plus,
// when given, the interpolated collision part of a PDE solution.
class TensorReference {
 public:
  TensorReference(GaussianBlob g0, GaussianBlob h0, double t, VelocityGrid quadrature,
                  std::optional<GridDensityPair> collision_part = std::nullopt);
  double moment(Species s, const Eigen::Ref<const Eigen::VectorXd>& x, const VelocityTest& phi) const;
  OneParticleMoment as_function() const;

 private:
  std::array<GaussianBlob, 2> blobs_;
  double t_;
  VelocityGrid quad_;
  std::optional<GridDensityPair> collision_;
};

// Fixed Latin-hypercube probes in [-a, a]^{d |s|}, resampled until separated.
std::vector<Configuration> latin_hypercube_probes(std::array<Index, 2> s, int d, std::size_t count, double a,
                                                  double sigma, std::uint64_t seed);

struct ChaosRow {
  Index N1 = 0, N2 = 0;
  double eps1 = 0.0, eps2 = 0.0;
  int spec_id = 0;
  double t = 0.0;
  double gap = 0.0;
  double stderr_gap = 0.0;  // estimator error at the maximizing probe
};

struct CovarianceRow {
  Index N1 = 0, N2 = 0;
  double cov = 0.0;
  double stderr_cov = 0.0;
};

struct ChaosTable {
  std::vector<ChaosRow> rows;
  std::vector<CovarianceRow> covariance;
  std::vector<double> fitted_slopes;  // log gap against log max eps, per observable
  // Spec i counts when its gap falls strictly along the N points.
  std::vector<bool> monotone;
  bool covariance_monotone = false;
};

// Sup over probes of |ensemble estimate - reference|, per observable and ensemble.
// Throws ValidationError when ensembles disagree on scaling or time.
ChaosTable chaos_metric(const std::vector<Ensemble>& ensembles, const OneParticleMoment& reference,
                        const std::vector<ObservableSpec>& specs, const std::vector<Configuration>& probes, double h,
                        const VelocityTest& cov_a, const VelocityTest& cov_b);

void write_chaos_csv(std::ostream& os, const ChaosTable& table);

}  // namespace hsmix
