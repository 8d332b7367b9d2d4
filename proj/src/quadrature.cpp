#include "hsmix/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hsmix {

double sphere_surface(int d) { return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d); }

double half_sphere_moment(int d) {
  return std::pow(std::numbers::pi, 0.5 * (d - 1)) / std::tgamma(0.5 * (d + 1));
}

double ball_volume(int d, double R) {
  return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0) * std::pow(R, d);
}

void gauss_legendre(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  if (n < 1) throw InvalidInput("gauss_legendre: n must be positive");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes = es.eigenvalues();
  weights = 2.0 * es.eigenvectors().row(0).transpose().array().square();
}

SphereQuadrature SphereQuadrature::make(int d, int resolution) {
  if (resolution < 1) throw InvalidInput("sphere quadrature: resolution must be positive");
  SphereQuadrature q;
  q.dim = d;
  q.resolution = resolution;
  if (d == 2) {
    const int n = resolution;
    q.nodes.resize(2, n);
    q.weights = Eigen::VectorXd::Constant(n, 2.0 * std::numbers::pi / n);
    for (int k = 0; k < n; ++k) {
      const double phi = 2.0 * std::numbers::pi * (k + 0.5) / n;
      q.nodes.col(k) << std::cos(phi), std::sin(phi);
    }
    q.exact_degree = n - 1;
  } else if (d == 3) {
    Eigen::VectorXd x, w;
    gauss_legendre(resolution, x, w);
    const int nphi = 2 * resolution;
    q.nodes.resize(3, resolution * nphi);
    q.weights.resize(resolution * nphi);
    int c = 0;
    for (int i = 0; i < resolution; ++i) {
      const double st = std::sqrt(std::max(0.0, 1.0 - x[i] * x[i]));
      for (int k = 0; k < nphi; ++k, ++c) {
        const double phi = 2.0 * std::numbers::pi * (k + 0.5) / nphi;
        q.nodes.col(c) << st * std::cos(phi), st * std::sin(phi), x[i];
        q.weights[c] = w[i] * 2.0 * std::numbers::pi / nphi;
      }
    }
    q.exact_degree = 2 * resolution - 1;
  } else {
    throw InvalidInput("sphere quadrature: only d = 2 or 3 supported");
  }
  return q;
}

SphereQuadrature SphereQuadrature::reference(int d) { return make(d, d == 2 ? 32 : 12); }

SphereQuadrature SphereQuadrature::refined() const { return make(dim, 2 * resolution); }

namespace {

double disc_primitive(double x, double r) {
  const double xc = std::clamp(x, -r, r);
  return 0.5 * (xc * std::sqrt(std::max(0.0, r * r - xc * xc)) + r * r * std::asin(xc / r));
}

}  // namespace

double rect_disc_area(double x0, double x1, double y0, double y1, double r) {
  if (r <= 0 || x1 <= -r || x0 >= r || y1 <= -r || y0 >= r) return 0.0;
  const double a = std::max(x0, -r), b = std::min(x1, r);
  std::vector<double> cuts{a, b};
  for (double y : {y0, y1}) {
    if (std::abs(y) >= r) continue;
    const double s = std::sqrt(r * r - y * y);
    for (double c : {-s, s})
      if (c > a && c < b) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double p = cuts[k], q = cuts[k + 1];
    if (q <= p) continue;
    const double m = 0.5 * (p + q);
    const double sm = std::sqrt(std::max(0.0, r * r - m * m));
    const bool top_const = y1 < sm;
    const bool bot_const = y0 > -sm;
    const double top_m = top_const ? y1 : sm, bot_m = bot_const ? y0 : -sm;
    if (top_m <= bot_m) continue;
    const double S = disc_primitive(q, r) - disc_primitive(p, r);
    const double top = top_const ? y1 * (q - p) : S;
    const double bot = bot_const ? y0 * (q - p) : -S;
    area += top - bot;
  }
  return area;
}

double box_ball_volume(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, double r) {
  if (lo.size() == 2) return rect_disc_area(lo[0], hi[0], lo[1], hi[1], r);
  if (lo.size() != 3) throw InvalidInput("box_ball_volume: only d = 2 or 3 supported");
  const double a = std::max(lo[2], -r), b = std::min(hi[2], r);
  if (b <= a) return 0.0;
  std::vector<double> cuts{a, b};
  std::vector<double> radii{std::abs(lo[0]), std::abs(hi[0]), std::abs(lo[1]), std::abs(hi[1])};
  for (double x : {lo[0], hi[0]})
    for (double y : {lo[1], hi[1]}) radii.push_back(std::hypot(x, y));
  for (double c : radii) {
    if (c >= r) continue;
    const double z = std::sqrt(r * r - c * c);
    for (double zz : {-z, z})
      if (zz > a && zz < b) cuts.push_back(zz);
  }
  std::sort(cuts.begin(), cuts.end());
  static const auto rule = [] {
    std::pair<Eigen::VectorXd, Eigen::VectorXd> g;
    gauss_legendre(24, g.first, g.second);
    return g;
  }();
  double vol = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double p = cuts[k], q = cuts[k + 1];
    if (q <= p) continue;
    // z = p + (q-p)(1-cos(pi u))/2 flattens square-root endpoint behaviour.
    for (Index i = 0; i < rule.first.size(); ++i) {
      const double u = 0.5 * (rule.first[i] + 1.0);
      const double z = p + (q - p) * 0.5 * (1.0 - std::cos(std::numbers::pi * u));
      const double dz = (q - p) * 0.5 * std::numbers::pi * std::sin(std::numbers::pi * u);
      const double rz = std::sqrt(std::max(0.0, r * r - z * z));
      vol += 0.5 * rule.second[i] * dz * rect_disc_area(lo[0], hi[0], lo[1], hi[1], rz);
    }
  }
  return vol;
}

VelocityGrid VelocityGrid::make(int d, double R, int n) {
  if (d != 2 && d != 3) throw InvalidInput("velocity grid: only d = 2 or 3 supported");
  if (!(R > 0)) throw InvalidInput("velocity grid: R must be positive");
  if (n < 1) throw InvalidInput("velocity grid: resolution must be positive");
  VelocityGrid g;
  g.dim = d;
  g.R = R;
  g.n = n;
  g.h = 2.0 * R / n;
  Index total = 1;
  for (int k = 0; k < d; ++k) total *= n;
  g.nodes.resize(d, total);
  g.weights.resize(total);
  Eigen::VectorXd lo(d), hi(d);
  for (Index flat = 0; flat < total; ++flat) {
    Index rem = flat;
    bool inside = true, outside = false;
    double near2 = 0.0, far2 = 0.0;
    for (int k = 0; k < d; ++k) {
      const int i = static_cast<int>(rem % n);
      rem /= n;
      g.nodes(k, flat) = g.axis(i);
      lo[k] = -R + i * g.h;
      hi[k] = lo[k] + g.h;
      const double nearest = std::clamp(0.0, lo[k], hi[k]);
      near2 += nearest * nearest;
      far2 += std::max(lo[k] * lo[k], hi[k] * hi[k]);
    }
    inside = far2 <= R * R;
    outside = near2 >= R * R;
    const double cell = std::pow(g.h, d);
    g.weights[flat] = inside ? cell : outside ? 0.0 : box_ball_volume(lo, hi, R);
    if (g.weights[flat] > 0) g.active.push_back(flat);
  }
  return g;
}

}  // namespace hsmix
