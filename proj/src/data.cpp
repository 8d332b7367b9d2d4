#include "hsmix/data.hpp"

#include <cmath>
#include <numbers>

namespace hsmix {

double gaussian_pdf(const Eigen::Ref<const Eigen::VectorXd>& y, double std) {
  const double d = static_cast<double>(y.size());
  return std::exp(-0.5 * y.squaredNorm() / (std * std)) / std::pow(2.0 * std::numbers::pi * std * std, 0.5 * d);
}

void GaussianBlob::validate() const {
  if (center.size() < 1 || drift.size() != center.size()) throw InvalidInput("blob: center/drift dimension mismatch");
  if (!(spatial_std > 0)) throw InvalidInput("blob.spatial_std: must be positive");
  if (!(thermal_std > 0)) throw InvalidInput("blob.thermal_std: must be positive");
}

double GaussianBlob::spatial_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return gaussian_pdf(x - center, spatial_std);
}

double GaussianBlob::velocity_density(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  return gaussian_pdf(v - drift, thermal_std);
}

void GaussianBlob::sample(Rng& rng, Eigen::Ref<Eigen::VectorXd> x, Eigen::Ref<Eigen::VectorXd> v) const {
  for (int k = 0; k < dim(); ++k) x[k] = center[k] + spatial_std * standard_normal(rng);
  for (int k = 0; k < dim(); ++k) v[k] = drift[k] + thermal_std * standard_normal(rng);
}

ParticleSampler GaussianBlob::sampler() const {
  GaussianBlob copy = *this;
  return [copy](Rng& rng, Eigen::Ref<Eigen::VectorXd> x, Eigen::Ref<Eigen::VectorXd> v) { copy.sample(rng, x, v); };
}

GaussianBlob maxwellian_blob(int d, double spatial_std, double gamma, double mass) {
  GaussianBlob b;
  b.center = Eigen::VectorXd::Zero(d);
  b.drift = Eigen::VectorXd::Zero(d);
  b.spatial_std = spatial_std;
  b.thermal_std = 1.0 / std::sqrt(2.0 * gamma * mass);
  return b;
}

json blob_to_json(const GaussianBlob& b) {
  return {{"center", to_json_vector(b.center)},
          {"spatial_std", b.spatial_std},
          {"drift", to_json_vector(b.drift)},
          {"thermal_std", b.thermal_std}};
}

GaussianBlob blob_from_json(const json& j, int dim) {
  GaussianBlob b;
  b.center = j.contains("center") ? vector_from_json(j.at("center"), dim) : Eigen::VectorXd::Zero(dim);
  b.drift = j.contains("drift") ? vector_from_json(j.at("drift"), dim) : Eigen::VectorXd::Zero(dim);
  b.spatial_std = j.value("spatial_std", 1.0);
  b.thermal_std = j.value("thermal_std", 1.0);
  b.validate();
  return b;
}

}  // namespace hsmix
