#include "hsmix/scaling.hpp"

#include <cmath>
#include <string>

namespace hsmix {

void GradScaling::validate() const {
  if (dim < 2) throw InvalidInput("scaling.dim: must be >= 2");
  if (!(c1 > 0) || !std::isfinite(c1)) throw InvalidInput("scaling.c1: must be positive");
  if (!(c2 > 0) || !std::isfinite(c2)) throw InvalidInput("scaling.c2: must be positive");
  if (!(b > 0) || !std::isfinite(b)) throw InvalidInput("scaling.b: must be positive");
}

LimitConstants limit_constants(const GradScaling& g) {
  g.validate();
  const double p = g.dim - 1;
  return {g.c1, g.c2, g.c2 * std::pow((1.0 + g.b) / 2.0, p), g.c1 * std::pow((1.0 + 1.0 / g.b) / 2.0, p)};
}

double kernel_constant(const GradScaling& g, Species a, Species b) {
  const LimitConstants c = limit_constants(g);
  if (a == b) return a == Species::A ? c.c1 : c.c2;
  return a == Species::A ? c.c12 : c.c21;
}

MixtureParams RealizedScaling::params(std::array<double, 2> mass) const {
  MixtureParams p;
  p.dim = scaling.dim;
  p.mass = mass;
  p.diameter = eps;
  return p;
}

RealizedScaling realize(const GradScaling& g, Index n2) {
  g.validate();
  if (n2 < 1) throw InvalidInput("scaling.n2: must be a positive integer");
  const double p = g.dim - 1;
  const double n1_real = (g.c1 / g.c2) * std::pow(g.b, -p) * static_cast<double>(n2);
  const double n1_round = std::round(n1_real);
  if (std::abs(n1_real - n1_round) > 1e-9 + 1e-12 * n1_real || n1_round < 1)
    throw ScalingInfeasible("scaling: N1 = (c1/c2) b^(1-d) N2 = " + std::to_string(n1_real) + " is not an integer");
  RealizedScaling r;
  r.scaling = g;
  r.n = {static_cast<Index>(n1_round), n2};
  r.eps[1] = std::pow(g.c2 / static_cast<double>(n2), 1.0 / p);
  r.eps[0] = g.b * r.eps[1];
  return r;
}

double bbgky_prefactor(const RealizedScaling& r, std::array<Index, 2> s, std::array<Index, 2> added, Species a,
                       Species b) {
  const Index remaining = r.N(b) - s[idx(b)] - added[idx(b)];
  if (remaining <= 0)
    throw ExhaustedReservoir("bbgky_prefactor: no species " + std::string(species_name(b)) + " particles left");
  const double e = 0.5 * (r.eps[idx(a)] + r.eps[idx(b)]);
  return static_cast<double>(remaining) * std::pow(e, r.scaling.dim - 1);
}

double prefactor_product(const GradScaling& g, const RealizedScaling* r, std::array<Index, 2> s,
                         const std::vector<Species>& alphas, const std::vector<Species>& betas) {
  if (alphas.size() != betas.size()) throw InvalidInput("prefactor_product: length mismatch");
  double prod = 1.0;
  std::array<Index, 2> added{0, 0};
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    prod *= r ? bbgky_prefactor(*r, s, added, alphas[i], betas[i]) : kernel_constant(g, alphas[i], betas[i]);
    ++added[idx(betas[i])];
  }
  return prod;
}

double prefactor_defect_constant(const GradScaling& g, std::array<Index, 2> s, const std::vector<Species>& betas) {
  double sum = 0.0;
  std::array<Index, 2> added{0, 0};
  for (Species b : betas) {
    sum += static_cast<double>(s[idx(b)] + added[idx(b)]) / g.c(b);
    ++added[idx(b)];
  }
  return sum;
}

}  // namespace hsmix
