#pragma once

#include <array>
#include <vector>

#include "hsmix/core.hpp"

namespace hsmix {

// N1 eps1^{d-1} = c1, N2 eps2^{d-1} = c2, eps1 = b eps2.
struct GradScaling {
  int dim = 2;
  double c1 = 1.0;
  double c2 = 1.0;
  double b = 1.0;

  double c(Species s) const { return s == Species::A ? c1 : c2; }
  void validate() const;
};

struct LimitConstants {
  double c1 = 0, c2 = 0, c12 = 0, c21 = 0;
};

LimitConstants limit_constants(const GradScaling& g);

// A^a_b: target species a, adjoined species b.
double kernel_constant(const GradScaling& g, Species a, Species b);

struct RealizedScaling {
  GradScaling scaling;
  std::array<Index, 2> n{0, 0};
  std::array<double, 2> eps{0.0, 0.0};

  Index N(Species s) const { return n[idx(s)]; }
  double max_eps() const { return std::max(eps[0], eps[1]); }
  MixtureParams params(std::array<double, 2> mass) const;
};

// Throws ScalingInfeasible when (c1/c2) b^{1-d} n2 is not an integer.
RealizedScaling realize(const GradScaling& g, Index n2);

// (N_b - s_b - added_b) eps_(a,b)^{d-1}.
double bbgky_prefactor(const RealizedScaling& r, std::array<Index, 2> s, std::array<Index, 2> added, Species a,
                       Species b);

// Product of per-record prefactors along a history class; A^infinity when r is null.
double prefactor_product(const GradScaling& g, const RealizedScaling* r, std::array<Index, 2> s,
                         const std::vector<Species>& alphas, const std::vector<Species>& betas);

// C_s with 1 - A^N/A^inf <= C_s max(eps)^{d-1}.
double prefactor_defect_constant(const GradScaling& g, std::array<Index, 2> s, const std::vector<Species>& betas);

}  // namespace hsmix
