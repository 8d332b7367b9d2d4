#include "hsmix/rng.hpp"

#include <cmath>

namespace hsmix {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t state = seed ^ (0xD1B54A32D192ED03ull * (stream + 1));
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(state)), static_cast<std::uint32_t>(splitmix64(state)),
                    static_cast<std::uint32_t>(splitmix64(state)), static_cast<std::uint32_t>(splitmix64(state))};
  return Rng(seq);
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

Eigen::VectorXd gaussian_vector(Rng& rng, int d) {
  Eigen::VectorXd g(d);
  for (int k = 0; k < d; ++k) g[k] = standard_normal(rng);
  return g;
}

Eigen::VectorXd uniform_sphere(Rng& rng, int d) {
  for (;;) {
    Eigen::VectorXd g = gaussian_vector(rng, d);
    const double n = g.norm();
    if (n > 1e-12) return g / n;
  }
}

Eigen::VectorXd uniform_ball(Rng& rng, int d, double radius) {
  const double r = radius * std::pow(uniform01(rng), 1.0 / d);
  return r * uniform_sphere(rng, d);
}

}  // namespace hsmix
