#pragma once

#include <Eigen/Dense>

#include "hsmix/dynamics.hpp"
#include "hsmix/io.hpp"
#include "hsmix/rng.hpp"

namespace hsmix {

// Gaussian in x times Gaussian in v: a normalized one-particle density.
struct GaussianBlob {
  Eigen::VectorXd center;
  double spatial_std = 1.0;
  Eigen::VectorXd drift;
  double thermal_std = 1.0;

  int dim() const { return static_cast<int>(center.size()); }
  void validate() const;

  double spatial_density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double velocity_density(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  double density(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& v) const {
    return spatial_density(x) * velocity_density(v);
  }
  void sample(Rng& rng, Eigen::Ref<Eigen::VectorXd> x, Eigen::Ref<Eigen::VectorXd> v) const;
  ParticleSampler sampler() const;
};

// Velocity profile proportional to exp(-gamma M |v|^2).
GaussianBlob maxwellian_blob(int d, double spatial_std, double gamma, double mass);

double gaussian_pdf(const Eigen::Ref<const Eigen::VectorXd>& y, double std);

json blob_to_json(const GaussianBlob& b);
GaussianBlob blob_from_json(const json& j, int dim);

}  // namespace hsmix
