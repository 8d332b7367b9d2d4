#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <vector>

#include "hsmix/core.hpp"

namespace hsmix {

// |S^{d-1}|
double sphere_surface(int d);
// int_{S^{d-1}} (u.theta)_+ dtheta / |u|
double half_sphere_moment(int d);
double ball_volume(int d, double R);

// Golub-Welsch nodes/weights on [-1, 1].
void gauss_legendre(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

struct SphereQuadrature {
  int dim = 2;
  Eigen::MatrixXd nodes;  // d x n unit vectors
  Eigen::VectorXd weights;
  int exact_degree = 0;

  Index size() const { return nodes.cols(); }

  // d=2: `resolution` equispaced angles. d=3: Gauss-Legendre in cos(polar)
  // with `resolution` points times 2*resolution azimuths.
  static SphereQuadrature make(int d, int resolution);
  static SphereQuadrature reference(int d);
  // Same family with half the angular spacing.
  SphereQuadrature refined() const;
  int resolution = 0;
};

// Cell-centred tensor grid on [-R, R]^d. Weights are the exact volumes of
// cell intersected with the ball B_R, so nodes outside the ball carry zero.
struct VelocityGrid {
  int dim = 2;
  double R = 1.0;
  int n = 8;
  double h = 0.25;
  Eigen::MatrixXd nodes;  // d x n^d, first axis fastest
  Eigen::VectorXd weights;
  std::vector<Index> active;  // nodes with positive weight

  static VelocityGrid make(int d, double R, int n);
  VelocityGrid refined() const { return make(dim, R, 2 * n); }
  Index size() const { return nodes.cols(); }
  double axis(int k) const { return -R + (k + 0.5) * h; }
  double total_weight() const { return weights.sum(); }
};

// Exact area of [x0,x1]x[y0,y1] intersected with the disc of radius r.
double rect_disc_area(double x0, double x1, double y0, double y1, double r);
// Volume of a box intersected with the ball of radius r (d = 2 or 3).
double box_ball_volume(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, double r);

// Multilinear interpolation stencil on a cell-centred axis set; nodes
// beyond the grid are treated as zero and dropped.
struct Stencil {
  int count = 0;
  std::array<Index, 8> index{};
  std::array<double, 8> weight{};
};

template <typename Vec>
Stencil multilinear_stencil(const Vec& p, int d, int n, double lo, double h) {
  Stencil s;
  std::array<int, 3> base{};
  std::array<double, 3> frac{};
  for (int k = 0; k < d; ++k) {
    const double u = (p[k] - lo) / h - 0.5;
    const double f = std::floor(u);
    base[k] = static_cast<int>(f);
    frac[k] = u - f;
    if (base[k] < -1 || base[k] > n - 1) return s;
  }
  const int corners = 1 << d;
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    Index flat = 0, stride = 1;
    bool inside = true;
    for (int k = 0; k < d; ++k) {
      const int bit = (c >> k) & 1;
      const int i = base[k] + bit;
      if (i < 0 || i >= n) {
        inside = false;
        break;
      }
      w *= bit ? frac[k] : 1.0 - frac[k];
      flat += i * stride;
      stride *= n;
    }
    if (!inside || w == 0.0) continue;
    s.index[s.count] = flat;
    s.weight[s.count] = w;
    ++s.count;
  }
  return s;
}

}  // namespace hsmix
