#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace hsmix {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t& state);

// Independent stream per (seed, stream) so parallel work is order-free.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

double uniform01(Rng& rng);
double standard_normal(Rng& rng);
Eigen::VectorXd gaussian_vector(Rng& rng, int d);
Eigen::VectorXd uniform_sphere(Rng& rng, int d);
Eigen::VectorXd uniform_ball(Rng& rng, int d, double radius);

}  // namespace hsmix
