#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "acceptance.hpp"
#include "hsmix/collision.hpp"
#include "hsmix/hierarchy.hpp"
#include "hsmix/pde.hpp"

namespace hsmix::acceptance {

using Eigen::VectorXd;
using CRef = const Eigen::Ref<const VectorXd>&;

namespace {

// Normalized Maxwellian with profile exp(-gamma M |v|^2).
VelocityFunction maxwellian(int d, double gamma, double mass, double mass_scale = 1.0) {
  const double c = mass_scale * std::pow(gamma * mass / std::numbers::pi, 0.5 * d);
  return [=](CRef v) { return c * std::exp(-gamma * mass * v.squaredNorm()); };
}

}  // namespace

Result criterion_equilibrium() {
  const std::array<double, 2> m{1.0, 3.0};
  const double gamma = 0.5, R = 6.1;
  std::string detail;
  bool pass = true;
  for (int d : {2, 3}) {
    // Velocity grid for the w integral; the sphere rule is the reference one.
    const VelocityGrid grid = VelocityGrid::make(d, R, d == 2 ? 24 : 8);
    const SphereQuadrature ref = SphereQuadrature::reference(d), fine = ref.refined();
    for (Species a : kSpecies)
      for (Species b : kSpecies) {
        const VelocityFunction G = maxwellian(d, gamma, m[idx(a)]), H = maxwellian(d, gamma, m[idx(b)]);
        double res = 0.0, res_fine = 0.0;
        for (Index k : grid.active) {
          res = std::max(res, std::abs(q_kernel(G, H, a, b, grid.nodes.col(k), m, ref, grid)));
          res_fine = std::max(res_fine, std::abs(q_kernel(G, H, a, b, grid.nodes.col(k), m, fine, grid)));
        }
        const bool ok = res <= 1e-3 && res >= 2.0 * res_fine;
        pass = pass && ok;
        detail += "d" + std::to_string(d) + " " + std::string(species_name(a)) + std::string(species_name(b)) + " " +
                  fmt(res) + "->" + fmt(res_fine) + (ok ? "" : " (!)") + "; ";
      }
  }
  return {pass, "max |Q| at reference -> halved angular spacing: " + detail};
}

Result criterion_picard() {
  const std::array<double, 2> m{1.0, 2.0};
  const GradScaling gs{2, 1.0, 1.0, 1.0};
  const KernelConstants K = KernelConstants::from_scaling(gs);
  // Two temperatures so the collision term does not vanish.
  const VelocityFunction fa = maxwellian(2, 0.8, m[0]), fb = maxwellian(2, 0.3, m[1]);
  SolverWeights w;
  w.gamma0 = 0.25;
  w.lambda = 0.1;
  w.horizon = 1.0;

  const PhaseGrid grid{SpaceGrid::make(2, 4.0, 8), VelocityGrid::make(2, 4.5, 12)};
  auto spatial = [](CRef x) { return std::exp(-0.5 * x.squaredNorm()); };
  GridDensityPair G0 = GridDensityPair::sample(
      grid, [&](CRef x, CRef v) { return spatial(x) * fa(v); }, [&](CRef x, CRef v) { return spatial(x) * fb(v); });
  const double scale = 0.5 / mixture_norm(G0, w.gamma0, w.mu0, m);
  for (auto& f : G0.f) f *= scale;
  const double n0 = mixture_norm(G0, w.gamma0, w.mu0, m);
  const double T = horizon_heuristic(K, m, w, n0, 2);
  PdeOptions opt;
  opt.sphere = SphereQuadrature::reference(2);
  opt.threads = opts.threads;
  const PdeSolution sol = solve_mixture_pde(G0, K, m, w, T, 4, opt);
  const double bound = 2.0 * n0 * 1.1;
  const bool picard_ok = sol.converged && sol.iterations <= 20 && sol.solution_norm <= bound;

  // First iterate of the homogeneous hierarchy on tensor data against t <|v|^2, N_A(g, h)>.
  const double t = 0.5;
  const VelocityFunction ga = [&](CRef v) { return scale * fa(v); }, hb = [&](CRef v) { return scale * fb(v); };
  std::vector<double> grid_values;
  for (int n : {32, 48}) {
    const PhaseGrid hg{SpaceGrid::homogeneous(2), VelocityGrid::make(2, 6.0, n)};
    const GridDensityPair H0 =
        GridDensityPair::sample(hg, [&](CRef, CRef v) { return ga(v); }, [&](CRef, CRef v) { return hb(v); });
    const CollisionOperator op(hg.velocity, SphereQuadrature::reference(2), m, K, opts.threads, 0.0);
    const auto N = op.apply(H0.f);
    double val = 0.0;
    for (Index j = 0; j < hg.velocity.size(); ++j)
      val += hg.velocity.weights[j] * hg.velocity.nodes.col(j).squaredNorm() * N[0](0, j);
    grid_values.push_back(t * val);
  }
  DuhamelSpec spec;
  spec.s = {1, 0};
  spec.k = 1;
  spec.scaling = gs;
  spec.masses = m;
  spec.R = 5.0;
  spec.t = t;
  spec.samples = 1000000;
  spec.seed = 31;
  spec.threads = opts.threads;
  spec.x_s = Configuration(2, 1, 0);
  spec.phi = [](const Configuration& z) { return z.v(Species::A, 0).squaredNorm(); };
  const DuhamelEstimate e = duhamel_iterate(
      [&](const Configuration& z) {
        double p = 1.0;
        for (Index i = 0; i < z.count(Species::A); ++i) p *= ga(z.v(Species::A, i));
        for (Index i = 0; i < z.count(Species::B); ++i) p *= hb(z.v(Species::B, i));
        return p;
      },
      spec);
  const double quad_err = std::abs(grid_values[1] - grid_values[0]);
  const double tol = 3.0 * e.stderr_mean + quad_err;
  const bool tensor_ok = std::abs(e.mean - grid_values[1]) <= tol;

  return {picard_ok && tensor_ok,
          "|G0| = " + fmt(n0) + ", horizon " + fmt(T) + ": " + std::to_string(sol.iterations) + " iterations, " +
              (sol.converged ? "converged" : "NOT converged") + ", sup|G| = " + fmt(sol.solution_norm) + " (bound " +
              fmt(bound) + "); first iterate MC " + fmt(e.mean, 5) + " +- " + fmt(e.stderr_mean, 2) + " vs grid " +
              fmt(grid_values[1], 5) + " (quadrature spread " + fmt(quad_err, 2) + ", tol " + fmt(tol, 2) + ")"};
}

namespace {

// Homogeneous tensor data (g, h) on a ball-truncated grid of spacing 0.5.
// Taylor coefficients c_k of t -> <|v|^2, g_t> <|v|^2, h_t>, so that the
// k-th Duhamel term of the s = (1,1) energy observable is c_k t^k.
std::vector<double> energy_series(double R, int order, const std::array<double, 2>& m, const KernelConstants& K,
                                  const VelocityFunction& fa, const VelocityFunction& fb) {
  const int n = static_cast<int>(std::lround(2.0 * R / 0.5));
  const PhaseGrid grid{SpaceGrid::homogeneous(2), VelocityGrid::make(2, R, n)};
  const GridDensityPair G0 =
      GridDensityPair::sample(grid, [&](CRef, CRef v) { return fa(v); }, [&](CRef, CRef v) { return fb(v); });
  CollisionOperator op(grid.velocity, SphereQuadrature::reference(2), m, K, opts.threads, 0.0);
  op.truncate_to_ball(true);
  // (k+1) f_{k+1}^a = sum_{i+j=k} sum_b A^a_b Q^a_b(f_i^a, f_j^b)
  std::vector<std::array<Eigen::MatrixXd, 2>> f{G0.f};
  for (int k = 0; k < order; ++k) {
    std::array<Eigen::MatrixXd, 2> next;
    for (auto& x : next) x = Eigen::MatrixXd::Zero(1, grid.velocity.size());
    for (int i = 0; i <= k; ++i)
      for (Species a : kSpecies)
        for (Species b : kSpecies) {
          Eigen::MatrixXd gain, loss;
          op.q_terms(a, b, f[i][idx(a)], f[k - i][idx(b)], gain, loss);
          next[idx(a)] += K(a, b) * (gain - loss);
        }
    for (auto& x : next) x /= k + 1;
    f.push_back(std::move(next));
  }
  const VectorXd e2 = (grid.velocity.nodes.colwise().squaredNorm().transpose().array() * grid.velocity.weights.array());
  std::vector<double> ea, eb, c;
  for (const auto& fk : f) {
    ea.push_back(fk[0].row(0).dot(e2));
    eb.push_back(fk[1].row(0).dot(e2));
  }
  for (int k = 0; k <= order; ++k) {
    double ck = 0.0;
    for (int i = 0; i <= k; ++i) ck += ea[i] * eb[k - i];
    c.push_back(ck);
  }
  return c;
}

double partial_sum(const std::vector<double>& c, int n, double t) {
  double s = 0.0, tk = 1.0;
  for (int k = 0; k <= n; ++k, tk *= t) s += c[k] * tk;
  return s;
}

}  // namespace

Result criterion_truncation() {
  const std::array<double, 2> m{1.0, 2.0};
  const KernelConstants K = KernelConstants::from_scaling(GradScaling{2, 1.0, 1.0, 1.0});
  const VelocityFunction fa = maxwellian(2, 0.8, m[0]), fb = maxwellian(2, 0.6, m[1]);
  const double t = 0.2, R_ref = 6.0;
  const std::array<double, 2> Rs{3.0, 4.5};
  // Nested grids share the lattice, so they differ only by the ball cut.
  const std::vector<double> ref = energy_series(R_ref, 9, m, K, fa, fb);
  const double I = partial_sum(ref, 9, t);
  std::array<std::vector<double>, 2> err;
  for (int r = 0; r < 2; ++r) {
    const std::vector<double> c = energy_series(Rs[r], 5, m, K, fa, fb);
    for (int n = 1; n <= 5; ++n) err[r].push_back(std::abs(I - partial_sum(c, n, t)));
  }
  bool in_n = true;
  for (int n = 1; n < 5; ++n) in_n = in_n && err[1][n] < err[1][n - 1];
  const bool in_R = err[1][4] < err[0][4];
  std::string detail = "t = " + fmt(t) + ", I_s = " + fmt(I, 8) + " (R = " + fmt(R_ref) +
                       ", 9 terms, last " + fmt(std::abs(ref[9] * std::pow(t, 9)), 2) + ")";
  for (int r = 0; r < 2; ++r) {
    detail += "; R = " + fmt(Rs[r]) + ":";
    for (double e : err[r]) detail += " " + fmt(e, 3);
  }
  detail += in_n ? "; decreasing in n at R = 4.5" : "; NOT decreasing in n";
  detail += in_R ? ", decreasing in R at n = 5" : ", NOT decreasing in R";
  return {in_n && in_R, detail};
}

}  // namespace hsmix::acceptance
