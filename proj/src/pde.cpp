#include "hsmix/pde.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>

#include "hsmix/io.hpp"
#include "hsmix/parallel.hpp"

namespace hsmix {

SpaceGrid SpaceGrid::make(int d, double L, int n) {
  if (d != 2 && d != 3) throw InvalidInput("space grid: d must be 2 or 3");
  if (n < 1 || !(L > 0)) throw InvalidInput("space grid: need n >= 1 and L > 0");
  return SpaceGrid{d, L, n};
}

Index SpaceGrid::size() const {
  if (n == 0) return 1;
  Index s = 1;
  for (int k = 0; k < dim; ++k) s *= n;
  return s;
}

Eigen::VectorXd SpaceGrid::point(Index flat) const {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(dim);
  if (n == 0) return p;
  for (int k = 0; k < dim; ++k) {
    p[k] = axis(static_cast<int>(flat % n));
    flat /= n;
  }
  return p;
}

GridDensityPair GridDensityPair::zeros(const PhaseGrid& grid, double t) {
  if (grid.space.dim != grid.velocity.dim) throw InvalidInput("phase grid: dimension mismatch");
  GridDensityPair G;
  G.grid = grid;
  G.t = t;
  for (auto& m : G.f) m = Eigen::MatrixXd::Zero(grid.space.size(), grid.velocity.size());
  return G;
}

GridDensityPair GridDensityPair::sample(const PhaseGrid& grid, const PhaseFunction& g, const PhaseFunction& h,
                                        double t) {
  GridDensityPair G = zeros(grid, t);
  for (Index i = 0; i < grid.space.size(); ++i) {
    const Eigen::VectorXd x = grid.space.point(i);
    for (Index j = 0; j < grid.velocity.size(); ++j) {
      const auto v = grid.velocity.nodes.col(j);
      G.f[0](i, j) = g(x, v);
      G.f[1](i, j) = h(x, v);
    }
  }
  return G;
}

bool GridDensityPair::finite() const { return f[0].allFinite() && f[1].allFinite(); }

bool GridDensityPair::nonnegative() const { return f[0].minCoeff() >= 0.0 && f[1].minCoeff() >= 0.0; }

namespace {

// Lagrange weights for nodes -1, 0, 1, 2 at fractional offset t in [0, 1).
std::array<double, 4> cubic_weights(double t) {
  return {-t * (t - 1) * (t - 2) / 6.0, (t + 1) * (t - 1) * (t - 2) / 2.0, -(t + 1) * t * (t - 2) / 2.0,
          (t + 1) * t * (t - 1) / 6.0};
}

struct CubicStencil {
  std::vector<Index> offset;  // flat index offsets relative to the target cell
  std::vector<std::array<int, 3>> shift;
  std::vector<double> weight;
};

// Stencil for sampling at (cell index) - s per axis.
CubicStencil cubic_stencil(int d, int n, const std::array<double, 3>& s) {
  std::array<int, 3> m{};
  std::array<std::array<double, 4>, 3> w{};
  for (int k = 0; k < d; ++k) {
    const double u = -s[k];
    const double f = std::floor(u);
    m[k] = static_cast<int>(f);
    w[k] = cubic_weights(u - f);
  }
  CubicStencil st;
  const int total = d == 2 ? 16 : 64;
  for (int c = 0; c < total; ++c) {
    int rem = c;
    double wt = 1.0;
    std::array<int, 3> sh{};
    Index off = 0, stride = 1;
    for (int k = 0; k < d; ++k) {
      const int a = rem % 4;
      rem /= 4;
      wt *= w[k][a];
      sh[k] = m[k] + a - 1;
      off += sh[k] * stride;
      stride *= n;
    }
    if (wt == 0.0) continue;
    st.offset.push_back(off);
    st.shift.push_back(sh);
    st.weight.push_back(wt);
  }
  return st;
}

}  // namespace

double GridDensityPair::velocity_moment(Species s, Index cell, const Eigen::Ref<const Eigen::VectorXd>& phi) const {
  return (f[idx(s)].row(cell).transpose().array() * phi.array() * grid.velocity.weights.array()).sum();
}

void SolverWeights::validate() const {
  if (!(gamma0 > 0)) throw InvalidInput("solver weights: gamma0 must be positive");
  if (!(lambda > 0)) throw InvalidInput("solver weights: lambda must be positive");
  if (!(horizon > 0)) throw InvalidInput("solver weights: horizon must be positive");
  if (!(gamma(horizon) > 0)) throw InvalidInput("solver weights: gamma0 - lambda T must stay positive");
}

KernelConstants KernelConstants::from_scaling(const GradScaling& g) {
  KernelConstants k;
  for (Species a : kSpecies)
    for (Species b : kSpecies) k.constant[idx(a)][idx(b)] = kernel_constant(g, a, b);
  return k;
}

double mixture_norm(const GridDensityPair& G, double gamma, double mu, const std::array<double, 2>& masses) {
  const Eigen::ArrayXd e2 = G.grid.velocity.nodes.colwise().squaredNorm().transpose().array();
  double total = 0.0;
  for (Species s : kSpecies) {
    const Eigen::ArrayXd w = (mu + gamma * masses[idx(s)] * e2).exp();
    const Eigen::MatrixXd& F = G[s];
    double m = 0.0;
    for (Index j = 0; j < F.cols(); ++j) {
      const double c = F.col(j).cwiseAbs().maxCoeff();
      if (c > 0) m = std::max(m, c * w[j]);
    }
    total += m;
  }
  return total;
}

CollisionOperator::CollisionOperator(const VelocityGrid& vgrid, const SphereQuadrature& sphere,
                                     const std::array<double, 2>& masses, const KernelConstants& constants,
                                     int threads, double interp_gamma)
    : vgrid_(vgrid),
      sphere_(sphere),
      masses_(masses),
      constants_(constants),
      threads_(threads),
      interp_gamma_(interp_gamma),
      node_e2_(vgrid.nodes.colwise().squaredNorm().transpose()) {
  if (sphere.dim != vgrid.dim) throw InvalidInput("collision operator: quadrature dimension mismatch");
  const double kappa = half_sphere_moment(vgrid.dim);
  const Index na = static_cast<Index>(vgrid.active.size());
  loss_kernel_ = Eigen::MatrixXd::Zero(na, vgrid.size());
  for (Index i = 0; i < na; ++i) {
    const auto v = vgrid.nodes.col(vgrid.active[static_cast<std::size_t>(i)]);
    for (Index w : vgrid.active) loss_kernel_(i, w) = kappa * (vgrid.nodes.col(w) - v).norm() * vgrid.weights[w];
  }
}

namespace {

// Tensor cubic Lagrange stencil on the velocity nodes; off-grid nodes drop out.
struct VStencil {
  int count = 0;
  std::array<Index, 64> index{};
  std::array<double, 64> weight{};
};

template <typename Vec>
VStencil velocity_stencil(const Vec& p, const VelocityGrid& vg) {
  VStencil s;
  const int d = static_cast<int>(p.size());
  std::array<int, 3> base{};
  std::array<std::array<double, 4>, 3> w{};
  for (int k = 0; k < d; ++k) {
    const double u = (p[k] + vg.R) / vg.h - 0.5;
    const double f = std::floor(u);
    base[k] = static_cast<int>(f);
    if (base[k] < -2 || base[k] > vg.n) return s;
    w[k] = cubic_weights(u - f);
  }
  const int total = d == 2 ? 16 : 64;
  for (int c = 0; c < total; ++c) {
    int rem = c;
    double wt = 1.0;
    Index flat = 0, stride = 1;
    bool inside = true;
    for (int k = 0; k < d; ++k) {
      const int a = rem % 4;
      rem /= 4;
      const int i = base[k] + a - 1;
      if (i < 0 || i >= vg.n) {
        inside = false;
        break;
      }
      wt *= w[k][a];
      flat += i * stride;
      stride *= vg.n;
    }
    if (!inside || wt == 0.0) continue;
    s.index[s.count] = flat;
    s.weight[s.count] = wt;
    ++s.count;
  }
  return s;
}

// Visit the in-grid nodes of the tensor cubic stencil at p as f(flat, weight).
template <int D, typename Vec, typename F>
bool for_cubic_nodes(const Vec& p, const VelocityGrid& vg, F&& f) {
  std::array<int, D> lo{}, hi{}, base{};
  std::array<std::array<double, 4>, D> w{};
  for (int k = 0; k < D; ++k) {
    const double u = (p[k] + vg.R) / vg.h - 0.5;
    const double fl = std::floor(u);
    base[k] = static_cast<int>(fl) - 1;
    if (base[k] < -3 || base[k] > vg.n - 1) return false;
    w[k] = cubic_weights(u - fl);
    lo[k] = std::max(0, -base[k]);
    hi[k] = std::min(4, vg.n - base[k]);
  }
  const Index n = vg.n;
  if constexpr (D == 2) {
    for (int b = lo[1]; b < hi[1]; ++b) {
      const Index row = (base[1] + b) * n;
      for (int a = lo[0]; a < hi[0]; ++a) f(row + base[0] + a, w[0][a] * w[1][b]);
    }
  } else {
    for (int c = lo[2]; c < hi[2]; ++c)
      for (int b = lo[1]; b < hi[1]; ++b) {
        const Index row = ((base[2] + c) * n + base[1] + b) * n;
        const double wbc = w[1][b] * w[2][c];
        for (int a = lo[0]; a < hi[0]; ++a) f(row + base[0] + a, w[0][a] * wbc);
      }
  }
  return true;
}

// G and H arrive multiplied by e^{gamma M |v|^2}; collisions conserve
// M_a |v|^2 + M_b |w|^2, so the weight comes back out once per (v, w).
template <int D>
void gain_column(const VelocityGrid& vg, const SphereQuadrature& sphere, double ma, double mb, Index vi,
                 const Eigen::MatrixXd& G, const Eigen::MatrixXd& H, double gamma, double cut2, double* out) {
  using Vec = Eigen::Matrix<double, D, 1>;
  const Index nx = G.rows();
  const Vec v = vg.nodes.col(vi);
  std::vector<double> gs(static_cast<std::size_t>(nx)), hs(static_cast<std::size_t>(nx)),
      acc(static_cast<std::size_t>(nx));
  Vec vs, ws;
  for (Index k : vg.active) {
    const Vec w = vg.nodes.col(k);
    const Vec u = w - v;
    const double unweight = gamma == 0.0 ? 1.0 : std::exp(-gamma * (ma * v.squaredNorm() + mb * w.squaredNorm()));
    std::fill(acc.begin(), acc.end(), 0.0);
    bool any = false;
    for (Index q = 0; q < sphere.size(); ++q) {
      const Vec th = sphere.nodes.col(q);
      const double c = u.dot(th);
      if (c <= 0) continue;
      const double wk = sphere.weights[q] * c;
      vs = v;
      ws = w;
      detail::collide_in_place(vs, ws, th, ma, mb);
      if (vs.squaredNorm() > cut2 || ws.squaredNorm() > cut2) continue;
      if (nx == 1) {
        double a = 0, b = 0;
        const double* g0 = G.data();
        const double* h0 = H.data();
        if (!for_cubic_nodes<D>(vs, vg, [&](Index j, double cw) { a += cw * g0[j]; })) continue;
        if (a == 0.0) continue;
        if (!for_cubic_nodes<D>(ws, vg, [&](Index j, double cw) { b += cw * h0[j]; })) continue;
        acc[0] += wk * a * b;
        any = true;
        continue;
      }
      std::fill(gs.begin(), gs.end(), 0.0);
      std::fill(hs.begin(), hs.end(), 0.0);
      const bool in_a = for_cubic_nodes<D>(vs, vg, [&](Index j, double cw) {
        const double* col = G.col(j).data();
        for (Index x = 0; x < nx; ++x) gs[x] += cw * col[x];
      });
      if (!in_a) continue;
      const bool in_b = for_cubic_nodes<D>(ws, vg, [&](Index j, double cw) {
        const double* col = H.col(j).data();
        for (Index x = 0; x < nx; ++x) hs[x] += cw * col[x];
      });
      if (!in_b) continue;
      any = true;
      for (Index x = 0; x < nx; ++x) acc[x] += wk * gs[x] * hs[x];
    }
    if (!any) continue;
    const double scale = vg.weights[k] * unweight;
    for (Index x = 0; x < nx; ++x) out[x] += scale * acc[x];
  }
}

Eigen::MatrixXd weighted_columns(const Eigen::MatrixXd& F, const Eigen::VectorXd& e2, double gm) {
  if (gm == 0.0) return F;
  if (gm * e2.maxCoeff() > 600.0) throw InvalidInput("collision operator: interpolation weight overflows; lower it");
  return F * (gm * e2.array()).exp().matrix().asDiagonal();
}

}  // namespace

double GridDensityPair::evaluate(Species s, const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const Eigen::Ref<const Eigen::VectorXd>& v) const {
  const auto& vg = grid.velocity;
  const int d = vg.dim;
  const VStencil vs = velocity_stencil(v, vg);
  if (vs.count == 0) return 0.0;
  const auto& F = f[idx(s)];
  const auto& sg = grid.space;
  if (sg.is_homogeneous()) {
    double out = 0.0;
    for (int c = 0; c < vs.count; ++c) out += vs.weight[c] * F(0, vs.index[c]);
    return out;
  }
  // Cubic in x around the cell containing x.
  std::array<int, 3> base{};
  std::array<std::array<double, 4>, 3> w{};
  for (int k = 0; k < d; ++k) {
    const double u = (x[k] + sg.L) / sg.h() - 0.5;
    const double fl = std::floor(u);
    base[k] = static_cast<int>(fl);
    w[k] = cubic_weights(u - fl);
  }
  const int total = d == 2 ? 16 : 64;
  double out = 0.0;
  for (int c = 0; c < total; ++c) {
    int rem = c;
    double wt = 1.0;
    Index flat = 0, stride = 1;
    bool inside = true;
    for (int k = 0; k < d; ++k) {
      const int a = rem % 4;
      rem /= 4;
      const int i = base[k] + a - 1;
      if (i < 0 || i >= sg.n) {
        inside = false;
        break;
      }
      wt *= w[k][a];
      flat += i * stride;
      stride *= sg.n;
    }
    if (!inside || wt == 0.0) continue;
    double fv = 0.0;
    for (int q = 0; q < vs.count; ++q) fv += vs.weight[q] * F(flat, vs.index[q]);
    out += wt * fv;
  }
  return out;
}

void CollisionOperator::q_terms(Species a, Species b, const Eigen::MatrixXd& G, const Eigen::MatrixXd& H,
                                Eigen::MatrixXd& gain, Eigen::MatrixXd& loss) const {
  const Index nx = G.rows();
  gain = Eigen::MatrixXd::Zero(nx, vgrid_.size());
  loss = Eigen::MatrixXd::Zero(nx, vgrid_.size());
  const Eigen::MatrixXd HK = H * loss_kernel_.transpose();
  const double ma = masses_[idx(a)], mb = masses_[idx(b)];
  const Eigen::MatrixXd Gw = weighted_columns(G, node_e2_, interp_gamma_ * ma);
  const Eigen::MatrixXd Hw = weighted_columns(H, node_e2_, interp_gamma_ * mb);
  const auto& act = vgrid_.active;
  for (std::size_t i = 0; i < act.size(); ++i)
    loss.col(act[i]) = G.col(act[i]).cwiseProduct(HK.col(static_cast<Index>(i)));
  parallel_for(act.size(), threads_, [&](std::size_t i) {
    double* out = gain.col(act[i]).data();
    if (vgrid_.dim == 2)
      gain_column<2>(vgrid_, sphere_, ma, mb, act[i], Gw, Hw, interp_gamma_, gain_cut2_, out);
    else
      gain_column<3>(vgrid_, sphere_, ma, mb, act[i], Gw, Hw, interp_gamma_, gain_cut2_, out);
  });
}

void CollisionOperator::split(const std::array<Eigen::MatrixXd, 2>& f, std::array<Eigen::MatrixXd, 2>& gain,
                              std::array<Eigen::MatrixXd, 2>& freq) const {
  const auto& act = vgrid_.active;
  std::array<Eigen::MatrixXd, 2> HK;
  std::array<Eigen::MatrixXd, 2> fw;
  for (Species b : kSpecies) {
    HK[idx(b)] = f[idx(b)] * loss_kernel_.transpose();
    fw[idx(b)] = weighted_columns(f[idx(b)], node_e2_, interp_gamma_ * masses_[idx(b)]);
  }
  for (Species a : kSpecies) {
    const Index nx = f[idx(a)].rows();
    gain[idx(a)] = Eigen::MatrixXd::Zero(nx, vgrid_.size());
    freq[idx(a)] = Eigen::MatrixXd::Zero(nx, vgrid_.size());
    for (Species b : kSpecies) {
      const double c = constants_(a, b);
      if (c == 0.0) continue;
      for (std::size_t i = 0; i < act.size(); ++i) freq[idx(a)].col(act[i]) += c * HK[idx(b)].col(static_cast<Index>(i));
      const double ma = masses_[idx(a)], mb = masses_[idx(b)];
      Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nx, vgrid_.size());
      parallel_for(act.size(), threads_, [&](std::size_t i) {
        double* out = g.col(act[i]).data();
        if (vgrid_.dim == 2)
          gain_column<2>(vgrid_, sphere_, ma, mb, act[i], fw[idx(a)], fw[idx(b)], interp_gamma_, gain_cut2_, out);
        else
          gain_column<3>(vgrid_, sphere_, ma, mb, act[i], fw[idx(a)], fw[idx(b)], interp_gamma_, gain_cut2_, out);
      });
      gain[idx(a)] += c * g;
    }
  }
}

std::array<Eigen::MatrixXd, 2> CollisionOperator::apply(const std::array<Eigen::MatrixXd, 2>& f) const {
  std::array<Eigen::MatrixXd, 2> gain, freq;
  split(f, gain, freq);
  return {gain[0] - freq[0].cwiseProduct(f[0]), gain[1] - freq[1].cwiseProduct(f[1])};
}

Eigen::MatrixXd transport(const PhaseGrid& grid, const Eigen::MatrixXd& f, double tau) {
  const auto& sg = grid.space;
  if (sg.is_homogeneous() || tau == 0.0) return f;
  const int d = sg.dim, n = sg.n;
  const double h = sg.h();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(f.rows(), f.cols());
  for (Index j = 0; j < f.cols(); ++j) {
    std::array<double, 3> s{};
    for (int k = 0; k < d; ++k) s[k] = grid.velocity.nodes(k, j) * tau / h;
    const CubicStencil st = cubic_stencil(d, n, s);
    const double* src = f.col(j).data();
    double* dst = out.col(j).data();
    for (Index cell = 0; cell < f.rows(); ++cell) {
      std::array<int, 3> ix{};
      Index rem = cell;
      for (int k = 0; k < d; ++k) {
        ix[k] = static_cast<int>(rem % n);
        rem /= n;
      }
      double acc = 0.0;
      for (std::size_t c = 0; c < st.weight.size(); ++c) {
        bool inside = true;
        for (int k = 0; k < d; ++k) {
          const int i = ix[k] + st.shift[c][k];
          if (i < 0 || i >= n) {
            inside = false;
            break;
          }
        }
        if (inside) acc += st.weight[c] * src[cell + st.offset[c]];
      }
      dst[cell] = acc;
    }
  }
  return out;
}

namespace {

std::array<Eigen::MatrixXd, 2> shifted(const PhaseGrid& grid, const std::array<Eigen::MatrixXd, 2>& f, double tau,
                                       bool homogeneous) {
  if (homogeneous) return f;
  return {transport(grid, f[0], tau), transport(grid, f[1], tau)};
}

}  // namespace

PdeSolution solve_mixture_pde(const GridDensityPair& G0, const KernelConstants& constants,
                              const std::array<double, 2>& masses, const SolverWeights& weights, double t_end,
                              int steps, const PdeOptions& options) {
  weights.validate();
  if (!(t_end >= 0) || t_end > weights.horizon * (1 + 1e-12))
    throw InvalidInput("pde: t_end must lie in [0, horizon]");
  if (steps < 1) throw InvalidInput("pde: steps must be >= 1");
  if (!G0.finite()) throw InvalidInput("pde: initial data not finite");
  const PhaseGrid& grid = G0.grid;
  const int K = steps;
  const double dt = t_end / K;
  const bool homog = options.homogeneous || grid.space.is_homogeneous();

  PdeSolution sol;
  for (int k = 0; k <= K; ++k) sol.times.push_back(k * dt);

  std::vector<std::array<Eigen::MatrixXd, 2>> free(static_cast<std::size_t>(K + 1));
  for (int k = 0; k <= K; ++k) {
    const double t = sol.times[static_cast<std::size_t>(k)];
    if (options.exact_free && !homog) {
      for (Species s : kSpecies) {
        Eigen::MatrixXd m(G0[s].rows(), G0[s].cols());
        for (Index i = 0; i < m.rows(); ++i) {
          const Eigen::VectorXd x = grid.space.point(i);
          for (Index j = 0; j < m.cols(); ++j) m(i, j) = options.exact_free(s, x, grid.velocity.nodes.col(j), t);
        }
        free[static_cast<std::size_t>(k)][idx(s)] = std::move(m);
      }
    } else {
      free[static_cast<std::size_t>(k)] = shifted(grid, G0.f, t, homog);
    }
  }

  const SphereQuadrature sphere =
      options.sphere.dim == grid.dim() ? options.sphere : SphereQuadrature::reference(grid.dim());
  const double gi = options.interp_gamma < 0 ? weights.gamma0 : options.interp_gamma;
  const CollisionOperator op(grid.velocity, sphere, masses, constants, options.threads, gi);
  std::vector<std::array<Eigen::MatrixXd, 2>> G = free, D(static_cast<std::size_t>(K + 1));
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(G0.f[0].rows(), G0.f[0].cols());
  for (auto& d : D) d = {zero, zero};

  auto as_pair = [&](const std::array<Eigen::MatrixXd, 2>& f, double t) {
    GridDensityPair p;
    p.grid = grid;
    p.f = f;
    p.t = t;
    return p;
  };

  // Gain and frequency of the current iterate at every node.
  std::vector<std::array<Eigen::MatrixXd, 2>> gain(static_cast<std::size_t>(K + 1)), freq(gain.size()),
      N(gain.size());
  for (std::size_t j = 0; j < G.size(); ++j) {
    op.split(G[j], gain[j], freq[j]);
    for (int s = 0; s < 2; ++s) N[j][s] = gain[j][s] - freq[j][s].cwiseProduct(G[j][s]);
  }
  for (int it = 0; it < options.max_iterations; ++it) {
    double inc = 0.0;
    for (int k = 1; k <= K; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const double t = sol.times[ku];
      std::array<Eigen::MatrixXd, 2> corr{zero, zero};
      for (int j = 0; j < k; ++j) {
        const double w = j == 0 ? 0.5 * dt : dt;
        const auto sN = shifted(grid, N[static_cast<std::size_t>(j)], (k - j) * dt, homog);
        for (int s = 0; s < 2; ++s) corr[s] += w * sN[s];
      }
      std::array<Eigen::MatrixXd, 2> next;
      for (int s = 0; s < 2; ++s) {
        next[s] = ((free[ku][s] + corr[s] + 0.5 * dt * gain[ku][s]).array() / (1.0 + 0.5 * dt * freq[ku][s].array()))
                      .matrix();
      }
      const auto diff = as_pair({next[0] - G[ku][0], next[1] - G[ku][1]}, t);
      inc = std::max(inc, mixture_norm(diff, weights.gamma(t), weights.mu(t), masses));
      G[ku] = std::move(next);
      op.split(G[ku], gain[ku], freq[ku]);
      for (int s = 0; s < 2; ++s) {
        N[ku][s] = gain[ku][s] - freq[ku][s].cwiseProduct(G[ku][s]);
        D[ku][s] = G[ku][s] - free[ku][s];
      }
    }
    sol.increments.push_back(inc);
    sol.iterations = it + 1;
    if (!std::isfinite(inc)) throw NonContraction("pde: iterate is not finite; reduce t_end");
    if (inc < options.tolerance) {
      sol.converged = true;
      break;
    }
    const std::size_t n = sol.increments.size();
    if (n > static_cast<std::size_t>(options.growth_limit)) {
      bool growing = true;
      for (int g = 0; g < options.growth_limit; ++g)
        growing = growing && sol.increments[n - 1 - g] > sol.increments[n - 2 - g];
      if (growing) throw NonContraction("pde: increments grew on successive iterations; reduce t_end");
    }
  }

  sol.initial_norm = mixture_norm(G0, weights.gamma0, weights.mu0, masses);
  for (int k = 0; k <= K; ++k) {
    const double t = sol.times[static_cast<std::size_t>(k)];
    sol.trajectory.push_back(as_pair(G[static_cast<std::size_t>(k)], t));
    sol.collision_part.push_back(as_pair(D[static_cast<std::size_t>(k)], t));
    sol.solution_norm = std::max(sol.solution_norm, mixture_norm(sol.trajectory.back(), weights.gamma(t), weights.mu(t), masses));
    if (!sol.trajectory.back().nonnegative()) sol.negative_values = true;
  }
  return sol;
}

double horizon_heuristic(const KernelConstants& constants, const std::array<double, 2>& masses,
                         const SolverWeights& weights, double data_norm, int d) {
  weights.validate();
  const double kappa = half_sphere_moment(d);
  const double gsurf = sphere_surface(d);
  auto lip = [&](double T) {
    const double g = weights.gamma(T);
    double worst = 0.0;
    for (Species a : kSpecies) {
      double sum = 0.0;
      for (Species b : kSpecies) {
        const double gb = g * masses[idx(b)];
        const double i0 = std::pow(std::numbers::pi / gb, 0.5 * d);
        const double i1 = gsurf * std::tgamma(0.5 * (d + 1)) / (2.0 * std::pow(gb, 0.5 * (d + 1)));
        const double vtyp = 1.0 / std::sqrt(g * masses[idx(a)]);
        sum += constants(a, b) * (i1 + vtyp * i0);
      }
      worst = std::max(worst, sum);
    }
    return 4.0 * kappa * 2.0 * data_norm * std::exp(-weights.mu(T)) * worst * T;
  };
  const double cap = std::min(weights.horizon, 0.5 * weights.gamma0 / weights.lambda);
  if (lip(cap) <= 0.125) return cap;
  double lo = 0.0, hi = cap;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (lip(mid) <= 0.125 ? lo : hi) = mid;
  }
  return lo;
}

namespace {
constexpr char kMagic[8] = {'H', 'S', 'M', 'X', 'D', 'E', 'N', '1'};
}

void write_density_binary(std::ostream& os, const GridDensityPair& G) {
  os.write(kMagic, 8);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(G.grid.dim()));
  write_le<std::int32_t>(os, G.grid.space.n);
  write_le<double>(os, G.grid.space.L);
  write_le<std::int32_t>(os, G.grid.velocity.n);
  write_le<double>(os, G.grid.velocity.R);
  write_le<double>(os, G.t);
  for (const auto& m : G.f)
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) write_le<double>(os, m(i, j));
  if (!os) throw InvalidInput("density snapshot: write failed");
}

GridDensityPair read_density_binary(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw InvalidInput("density snapshot: bad magic");
  const int d = static_cast<int>(read_le<std::uint32_t>(is));
  const int sn = read_le<std::int32_t>(is);
  const double L = read_le<double>(is);
  const int vn = read_le<std::int32_t>(is);
  const double R = read_le<double>(is);
  const double t = read_le<double>(is);
  if ((d != 2 && d != 3) || sn < 0 || vn < 1 || !(R > 0)) throw InvalidInput("density snapshot: bad header");
  PhaseGrid grid{sn == 0 ? SpaceGrid::homogeneous(d) : SpaceGrid::make(d, L, sn), VelocityGrid::make(d, R, vn)};
  GridDensityPair G = GridDensityPair::zeros(grid, t);
  for (auto& m : G.f)
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = read_le<double>(is);
  return G;
}

void write_density_csv(std::ostream& os, const GridDensityPair& G) {
  const int d = G.grid.dim();
  os << "species";
  for (int k = 0; k < d; ++k) os << ",x" << k + 1;
  for (int k = 0; k < d; ++k) os << ",v" << k + 1;
  os << ",value\n";
  for (Species s : kSpecies) {
    const auto& m = G[s];
    for (Index i = 0; i < m.rows(); ++i) {
      const Eigen::VectorXd x = G.grid.space.point(i);
      for (Index j = 0; j < m.cols(); ++j) {
        os << species_name(s);
        for (int k = 0; k < d; ++k) os << ',' << fmt_double(x[k]);
        for (int k = 0; k < d; ++k) os << ',' << fmt_double(G.grid.velocity.nodes(k, j));
        os << ',' << fmt_double(m(i, j)) << '\n';
      }
    }
  }
}

}  // namespace hsmix
