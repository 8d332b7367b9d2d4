#include "hsmix/collision.hpp"

#include <cmath>

namespace hsmix {

namespace {

void check_grid(const SphereQuadrature& sphere, const VelocityGrid& vgrid, Index d) {
  if (sphere.dim != d || vgrid.dim != d) throw InvalidInput("collision operator: quadrature dimension mismatch");
}

template <int D>
QTerms q_kernel_fixed(const VelocityFunction& G, const VelocityFunction& H, double ma, double mb,
                      const Eigen::Ref<const Eigen::VectorXd>& v_in, const SphereQuadrature& sphere,
                      const VelocityGrid& vgrid, LossRule rule) {
  using Vec = Eigen::Matrix<double, D, 1>;
  const Vec v = v_in;
  const double kappa = half_sphere_moment(D);
  QTerms out;
  double loss_w = 0.0;
  Vec vs, ws;
  for (Index k : vgrid.active) {
    const Vec w = vgrid.nodes.col(k);
    const Vec u = w - v;
    double gain = 0.0, kern = 0.0;
    for (Index q = 0; q < sphere.size(); ++q) {
      const Vec th = sphere.nodes.col(q);
      const double c = u.dot(th);
      if (c <= 0) continue;
      const double wk = sphere.weights[q] * c;
      kern += wk;
      vs = v;
      ws = w;
      detail::collide_in_place(vs, ws, th, ma, mb);
      gain += wk * G(vs) * H(ws);
    }
    out.gain += vgrid.weights[k] * gain;
    loss_w += vgrid.weights[k] * H(w) * (rule == LossRule::Exact ? kappa * u.norm() : kern);
  }
  out.loss = G(v) * loss_w;
  return out;
}

}  // namespace

QTerms q_kernel_terms(const VelocityFunction& G, const VelocityFunction& H, Species a, Species b,
                      const Eigen::Ref<const Eigen::VectorXd>& v, const std::array<double, 2>& masses,
                      const SphereQuadrature& sphere, const VelocityGrid& vgrid, LossRule rule) {
  const Index d = v.size();
  check_grid(sphere, vgrid, d);
  const double ma = masses[idx(a)], mb = masses[idx(b)];
  if (d == 2) return q_kernel_fixed<2>(G, H, ma, mb, v, sphere, vgrid, rule);
  if (d == 3) return q_kernel_fixed<3>(G, H, ma, mb, v, sphere, vgrid, rule);
  throw InvalidInput("q_kernel: only d = 2 or 3 supported");
}

double q_kernel(const VelocityFunction& G, const VelocityFunction& H, Species a, Species b,
                const Eigen::Ref<const Eigen::VectorXd>& v, const std::array<double, 2>& masses,
                const SphereQuadrature& sphere, const VelocityGrid& vgrid, LossRule rule) {
  return q_kernel_terms(G, H, a, b, v, masses, sphere, vgrid, rule).value();
}

double HierarchyTerms::value() const {
  double s = 0.0;
  for (std::size_t i = 0; i < gain.size(); ++i) s += gain[i] - loss[i];
  return s;
}

HierarchyTerms hierarchy_op_terms(const MarginalFunction& f_next, const Configuration& z, const HierarchyOpSpec& spec,
                                  const SphereQuadrature& sphere, const VelocityGrid& vgrid) {
  if (z.counts() != spec.s) throw InvalidInput("hierarchy operator: configuration does not match s");
  const Index d = z.dim();
  check_grid(sphere, vgrid, d);
  if (spec.offset != 0.0 && spec.loss_rule == LossRule::Exact)
    throw InvalidInput("hierarchy operator: offset adjunction needs quadrature loss");
  const Species a = spec.alpha, b = spec.beta;
  const double ma = spec.masses[idx(a)], mb = spec.masses[idx(b)];
  const double kappa = half_sphere_moment(static_cast<int>(d));
  const Index na = z.count(a);
  HierarchyTerms out;
  out.gain.assign(static_cast<std::size_t>(na), 0.0);
  out.loss.assign(static_cast<std::size_t>(na), 0.0);

  // Scratch configuration with the adjoined particle at the end of block b.
  Configuration zz = z;
  zz.append(b, Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d));
  const Index nb = zz.count(b) - 1;
  for (Index i = 0; i < na; ++i) {
    const Eigen::VectorXd xi = z.x(a, i), vi = z.v(a, i);
    double gain = 0.0, loss = 0.0;
    for (Index k : vgrid.active) {
      const auto w = vgrid.nodes.col(k);
      const Eigen::VectorXd u = w - vi;
      const double ww = vgrid.weights[k];
      if (spec.loss_rule == LossRule::Exact) {
        zz.x(b, nb) = xi;
        zz.v(b, nb) = w;
        loss += ww * kappa * u.norm() * f_next(zz);
      }
      for (Index q = 0; q < sphere.size(); ++q) {
        const auto th = sphere.nodes.col(q);
        const double c = u.dot(th);
        if (c <= 0) continue;
        const double wk = ww * sphere.weights[q] * c;
        if (spec.loss_rule == LossRule::Quadrature) {
          zz.x(b, nb) = xi - spec.offset * th;
          zz.v(b, nb) = w;
          loss += wk * f_next(zz);
        }
        zz.x(b, nb) = xi + spec.offset * th;
        zz.v(b, nb) = w;
        detail::collide_in_place(zz.v(a, i), zz.v(b, nb), th, ma, mb);
        gain += wk * f_next(zz);
        zz.v(a, i) = vi;
      }
    }
    out.gain[static_cast<std::size_t>(i)] = spec.constant * gain;
    out.loss[static_cast<std::size_t>(i)] = spec.constant * loss;
  }
  return out;
}

MarginalFunction apply_hierarchy_op(MarginalFunction f_next, const HierarchyOpSpec& spec, SphereQuadrature sphere,
                                    VelocityGrid vgrid) {
  return [f = std::move(f_next), spec, sphere = std::move(sphere), vgrid = std::move(vgrid)](const Configuration& z) {
    return hierarchy_op_terms(f, z, spec, sphere, vgrid).value();
  };
}

MarginalFunction apply_boltzmann_hierarchy_op(MarginalFunction f_next, std::array<Index, 2> s, Species a, Species b,
                                              double R, const GradScaling& scaling,
                                              const std::array<double, 2>& masses, const SphereQuadrature& sphere,
                                              const VelocityGrid& vgrid, LossRule rule) {
  if (std::abs(R - vgrid.R) > 1e-12 * R) throw InvalidInput("hierarchy operator: R differs from the velocity grid");
  HierarchyOpSpec spec;
  spec.s = s;
  spec.alpha = a;
  spec.beta = b;
  spec.constant = kernel_constant(scaling, a, b);
  spec.masses = masses;
  spec.loss_rule = rule;
  return apply_hierarchy_op(std::move(f_next), spec, sphere, vgrid);
}

MarginalFunction apply_bbgky_hierarchy_op(MarginalFunction f_next, std::array<Index, 2> s,
                                          std::array<Index, 2> added, Species a, Species b,
                                          const RealizedScaling& realized, const std::array<double, 2>& masses,
                                          const SphereQuadrature& sphere, const VelocityGrid& vgrid) {
  HierarchyOpSpec spec;
  spec.s = s;
  spec.alpha = a;
  spec.beta = b;
  spec.constant = bbgky_prefactor(realized, s, added, a, b);
  spec.offset = realized.params(masses).interaction_distance(a, b);
  spec.masses = masses;
  spec.loss_rule = LossRule::Quadrature;
  return apply_hierarchy_op(std::move(f_next), spec, sphere, vgrid);
}

double weighted_sup_norm(const std::vector<Configuration>& points, const Eigen::Ref<const Eigen::VectorXd>& values,
                         double gamma, const MixtureParams& params) {
  if (static_cast<Index>(points.size()) != values.size())
    throw InvalidInput("weighted_sup_norm: points and values differ in length");
  double m = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const double v = values[static_cast<Index>(k)];
    if (v == 0.0) continue;
    m = std::max(m, std::exp(gamma * energy(points[k], params)) * std::abs(v));
  }
  return m;
}

double weighted_sup_norm(const MarginalFunction& f, const std::vector<Configuration>& points, double gamma,
                         const MixtureParams& params) {
  Eigen::VectorXd values(static_cast<Index>(points.size()));
  for (std::size_t k = 0; k < points.size(); ++k) values[static_cast<Index>(k)] = f(points[k]);
  return weighted_sup_norm(points, values, gamma, params);
}

}  // namespace hsmix
