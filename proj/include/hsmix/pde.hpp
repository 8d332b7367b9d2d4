#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <iosfwd>
#include <limits>
#include <vector>

#include "hsmix/core.hpp"
#include "hsmix/quadrature.hpp"
#include "hsmix/scaling.hpp"

namespace hsmix {

// Cell-centred grid on [-L, L]^d with n cells per axis. n == 0 means a
// single point at the origin (space-homogeneous data).
struct SpaceGrid {
  int dim = 2;
  double L = 0.0;
  int n = 0;

  static SpaceGrid homogeneous(int d) { return SpaceGrid{d, 0.0, 0}; }
  static SpaceGrid make(int d, double L, int n);
  bool is_homogeneous() const { return n == 0; }
  Index size() const;
  double h() const { return n ? 2.0 * L / n : 0.0; }
  double axis(int k) const { return -L + (k + 0.5) * h(); }
  Eigen::VectorXd point(Index flat) const;
};

struct PhaseGrid {
  SpaceGrid space;
  VelocityGrid velocity;
  int dim() const { return velocity.dim; }
};

using PhaseFunction =
    std::function<double(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& v)>;

// One (space cells x velocity nodes) matrix per species.
struct GridDensityPair {
  PhaseGrid grid;
  std::array<Eigen::MatrixXd, 2> f;
  double t = 0.0;

  static GridDensityPair zeros(const PhaseGrid& grid, double t = 0.0);
  static GridDensityPair sample(const PhaseGrid& grid, const PhaseFunction& g, const PhaseFunction& h, double t = 0.0);

  Eigen::MatrixXd& operator[](Species s) { return f[idx(s)]; }
  const Eigen::MatrixXd& operator[](Species s) const { return f[idx(s)]; }

  bool finite() const;
  bool nonnegative() const;
  // Tensor cubic Lagrange in x and in v, zero off the grid.
  double evaluate(Species s, const Eigen::Ref<const Eigen::VectorXd>& x,
                  const Eigen::Ref<const Eigen::VectorXd>& v) const;
  // int phi(v) f_s(x, v) dv over the velocity grid, at a space node.
  double velocity_moment(Species s, Index cell, const Eigen::Ref<const Eigen::VectorXd>& phi) const;
};

struct SolverWeights {
  double gamma0 = 0.5;
  double mu0 = 0.0;
  double lambda = 0.1;
  double horizon = 1.0;

  double gamma(double t) const { return gamma0 - lambda * t; }
  double mu(double t) const { return mu0 - lambda * t; }
  void validate() const;
};

// constant[a][b] = A^a_b multiplying Q^a_b(f_a, f_b).
struct KernelConstants {
  std::array<std::array<double, 2>, 2> constant{{{0.0, 0.0}, {0.0, 0.0}}};

  static KernelConstants from_scaling(const GradScaling& g);
  double operator()(Species a, Species b) const { return constant[idx(a)][idx(b)]; }
};

// sum_a sup_{x,v} e^{mu + gamma M_a |v|^2} |f_a(x, v)|
double mixture_norm(const GridDensityPair& G, double gamma, double mu, const std::array<double, 2>& masses);

// The nonlinearity N_a = sum_b A^a_b Q^a_b(f_a, f_b) on the phase grid. Only
// nodes inside the velocity ball receive collisions. Post-collisional values
// interpolate f e^{g M |v|^2} with tensor cubics and remove the weight again,
// with g = interp_gamma; g = 0 interpolates f itself.
class CollisionOperator {
 public:
  CollisionOperator(const VelocityGrid& vgrid, const SphereQuadrature& sphere, const std::array<double, 2>& masses,
                    const KernelConstants& constants, int threads = 1, double interp_gamma = 0.0);

  std::array<Eigen::MatrixXd, 2> apply(const std::array<Eigen::MatrixXd, 2>& f) const;
  // N_a = gain_a - freq_a * f_a, with freq_a = sum_b A^a_b int kappa |v - w| f_b(w) dw.
  void split(const std::array<Eigen::MatrixXd, 2>& f, std::array<Eigen::MatrixXd, 2>& gain,
             std::array<Eigen::MatrixXd, 2>& freq) const;
  // Q^a_b(G, H) column-wise for every space cell; gain and loss separately.
  void q_terms(Species a, Species b, const Eigen::MatrixXd& G, const Eigen::MatrixXd& H, Eigen::MatrixXd& gain,
               Eigen::MatrixXd& loss) const;

  // Drop gain contributions whose post-collisional pair leaves the ball B_R
  // (default keeps everything that lands on the box grid).
  void truncate_to_ball(bool on) {
    gain_cut2_ = on ? vgrid_.R * vgrid_.R : std::numeric_limits<double>::infinity();
  }

 private:
  VelocityGrid vgrid_;
  SphereQuadrature sphere_;
  std::array<double, 2> masses_;
  KernelConstants constants_;
  int threads_;
  double interp_gamma_;
  double gain_cut2_ = std::numeric_limits<double>::infinity();
  Eigen::VectorXd node_e2_;
  Eigen::MatrixXd loss_kernel_;  // K(v, w) = kappa |v - w| weight(w), active v rows
};

// (S^tau f)(x, v) = f(x - v tau, v) by cubic Lagrange interpolation in x.
Eigen::MatrixXd transport(const PhaseGrid& grid, const Eigen::MatrixXd& f, double tau);

struct PdeOptions {
  bool homogeneous = false;  // drop transport
  double tolerance = 1e-8;
  int max_iterations = 20;
  int growth_limit = 3;
  SphereQuadrature sphere = SphereQuadrature::reference(2);
  int threads = 1;
  // Interpolation weight for the gain term; negative selects weights.gamma0.
  double interp_gamma = -1.0;
  // Exact free part S^t G0, sampled in place of interpolated transport when set.
  std::function<double(Species, const Eigen::Ref<const Eigen::VectorXd>&, const Eigen::Ref<const Eigen::VectorXd>&,
                       double)>
      exact_free;
};

struct PdeSolution {
  std::vector<double> times;
  std::vector<GridDensityPair> trajectory;
  std::vector<GridDensityPair> collision_part;  // G(t) - S^t G0
  std::vector<double> increments;               // per Picard update
  int iterations = 0;
  bool converged = false;
  bool negative_values = false;
  double initial_norm = 0.0;   // |G0| at (gamma0, mu0)
  double solution_norm = 0.0;  // sup_t |G(t)| at (gamma(t), mu(t))
};

// Fixed-point iteration of G(t) = S^t G0 + int_0^t S^{t - tau} N(G(tau)) dtau
// on `steps` equal intervals with the trapezoid rule in tau. Each sweep runs
// forward in time; the tau = t loss term uses the freshly swept value, which
// keeps the iteration contractive when freq * dt is not small. The fixed point
// is that of the plain trapezoid Picard map.
PdeSolution solve_mixture_pde(const GridDensityPair& G0, const KernelConstants& constants,
                              const std::array<double, 2>& masses, const SolverWeights& weights, double t_end,
                              int steps, const PdeOptions& options = {});

// Heuristic local-existence time: keeps the estimated Lipschitz constant of
// the mild map below 1/8 for data of the given norm.
double horizon_heuristic(const KernelConstants& constants, const std::array<double, 2>& masses,
                         const SolverWeights& weights, double data_norm, int d);

// Binary snapshot: magic "HSMXDEN1", uint32 d, int32 space n, double L,
// int32 velocity n, double R, double t, then both species column-major.
void write_density_binary(std::ostream& os, const GridDensityPair& G);
GridDensityPair read_density_binary(std::istream& is);
// Rows: species,x1..xd,v1..vd,value.
void write_density_csv(std::ostream& os, const GridDensityPair& G);

}  // namespace hsmix
