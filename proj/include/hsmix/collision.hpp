#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <vector>

#include "hsmix/core.hpp"
#include "hsmix/quadrature.hpp"
#include "hsmix/scaling.hpp"

namespace hsmix {

using VelocityFunction = std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)>;
using MarginalFunction = std::function<double(const Configuration&)>;

// Exact: the theta integral of the loss term uses int (u.theta)_+ = kappa_d |u|.
// Quadrature: loss goes through the same sphere nodes as the gain.
enum class LossRule { Exact, Quadrature };

struct QTerms {
  double gain = 0.0;
  double loss = 0.0;
  double value() const { return gain - loss; }
};

// Q^a_b(G, H)(v): G is the a-density, H the b-density, w integrated over the grid ball.
QTerms q_kernel_terms(const VelocityFunction& G, const VelocityFunction& H, Species a, Species b,
                      const Eigen::Ref<const Eigen::VectorXd>& v, const std::array<double, 2>& masses,
                      const SphereQuadrature& sphere, const VelocityGrid& vgrid, LossRule rule = LossRule::Exact);

double q_kernel(const VelocityFunction& G, const VelocityFunction& H, Species a, Species b,
                const Eigen::Ref<const Eigen::VectorXd>& v, const std::array<double, 2>& masses,
                const SphereQuadrature& sphere, const VelocityGrid& vgrid, LossRule rule = LossRule::Exact);

struct HierarchyOpSpec {
  std::array<Index, 2> s{0, 0};
  Species alpha = Species::A;  // target species
  Species beta = Species::A;   // adjoined species
  double constant = 1.0;       // A^a_b, or the finite-N prefactor
  double offset = 0.0;         // eps_(a,b); zero for the Boltzmann flavor
  std::array<double, 2> masses{1.0, 1.0};
  LossRule loss_rule = LossRule::Exact;
};

// Per-target gain and loss parts, already multiplied by the constant.
struct HierarchyTerms {
  std::vector<double> gain;
  std::vector<double> loss;
  double value() const;
};

HierarchyTerms hierarchy_op_terms(const MarginalFunction& f_next, const Configuration& z, const HierarchyOpSpec& spec,
                                  const SphereQuadrature& sphere, const VelocityGrid& vgrid);

MarginalFunction apply_hierarchy_op(MarginalFunction f_next, const HierarchyOpSpec& spec, SphereQuadrature sphere,
                                    VelocityGrid vgrid);

// Zero-offset adjunction with constant A^a_b. R must equal the grid extent.
MarginalFunction apply_boltzmann_hierarchy_op(MarginalFunction f_next, std::array<Index, 2> s, Species a, Species b,
                                              double R, const GradScaling& scaling,
                                              const std::array<double, 2>& masses, const SphereQuadrature& sphere,
                                              const VelocityGrid& vgrid, LossRule rule = LossRule::Exact);

// eps-offset adjunction with the finite-N prefactor; the loss always uses the sphere nodes.
MarginalFunction apply_bbgky_hierarchy_op(MarginalFunction f_next, std::array<Index, 2> s,
                                          std::array<Index, 2> added, Species a, Species b,
                                          const RealizedScaling& realized, const std::array<double, 2>& masses,
                                          const SphereQuadrature& sphere, const VelocityGrid& vgrid);

// max_k e^{gamma E(Z_k)} |f_k|.
double weighted_sup_norm(const std::vector<Configuration>& points, const Eigen::Ref<const Eigen::VectorXd>& values,
                         double gamma, const MixtureParams& params);
double weighted_sup_norm(const MarginalFunction& f, const std::vector<Configuration>& points, double gamma,
                         const MixtureParams& params);

}  // namespace hsmix
