#include "hsmix/core.hpp"

#include <string>

namespace hsmix {

std::string_view species_name(Species s) { return s == Species::A ? "A" : "B"; }

Species parse_species(std::string_view name) {
  if (name == "A" || name == "a" || name == "0") return Species::A;
  if (name == "B" || name == "b" || name == "1") return Species::B;
  throw InvalidInput("unknown species tag '" + std::string(name) + "'");
}

void MixtureParams::validate() const {
  if (dim < 2) throw InvalidInput("mixture.dim: must be >= 2");
  for (Species s : kSpecies) {
    const std::string tag(species_name(s));
    if (!(mass[idx(s)] > 0) || !std::isfinite(mass[idx(s)]))
      throw InvalidInput("mixture.mass[" + tag + "]: must be positive");
    if (!(diameter[idx(s)] > 0) || !std::isfinite(diameter[idx(s)]))
      throw InvalidInput("mixture.diameter[" + tag + "]: must be positive");
  }
}

std::string_view kind_name(BoundaryClass::Kind k) {
  switch (k) {
    case BoundaryClass::Kind::Interior: return "Interior";
    case BoundaryClass::Kind::SimplePreCollisional: return "SimplePreCollisional";
    case BoundaryClass::Kind::SimplePostCollisional: return "SimplePostCollisional";
    case BoundaryClass::Kind::SimpleGrazing: return "SimpleGrazing";
    case BoundaryClass::Kind::MultipleCollision: return "MultipleCollision";
  }
  return "?";
}

BoundaryClass classify_boundary(const Configuration& z, const MixtureParams& params, double contact_tol) {
  BoundaryClass out;
  for_each_pair(z, [&](ParticleRef p, ParticleRef q) {
    const double sigma = params.interaction_distance(p.species, q.species);
    const Eigen::VectorXd dx = z.x(p) - z.x(q);
    const double dist = dx.norm();
    if (dist < sigma * (1.0 - contact_tol))
      throw InvalidState("classify_boundary: overlapping pair (" + std::string(species_name(p.species)) +
                         std::to_string(p.index) + ", " + std::string(species_name(q.species)) +
                         std::to_string(q.index) + ")");
    if (std::abs(dist - sigma) > contact_tol * sigma) return;
    ++out.contacts;
    if (out.contacts > 1) return;
    out.pair = ParticlePair{p, q};
    const Eigen::VectorXd dv = z.v(p) - z.v(q);
    const double normal = dx.dot(dv) / dist;
    if (std::abs(normal) <= contact_tol * dv.norm())
      out.kind = BoundaryClass::Kind::SimpleGrazing;
    else
      out.kind = normal < 0 ? BoundaryClass::Kind::SimplePreCollisional : BoundaryClass::Kind::SimplePostCollisional;
  });
  if (out.contacts > 1) out.kind = BoundaryClass::Kind::MultipleCollision;
  return out;
}

void apply_collision(Configuration& z, const ParticlePair& pair, const MixtureParams& params) {
  const auto [p, q] = pair;
  Eigen::VectorXd n = z.x(p) - z.x(q);
  n /= n.norm();
  detail::collide_in_place(z.v(p), z.v(q), n, params.m(p.species), params.m(q.species));
}

Configuration impact_operator(const Configuration& z, const MixtureParams& params, double contact_tol) {
  const BoundaryClass cls = classify_boundary(z, params, contact_tol);
  if (cls.kind != BoundaryClass::Kind::SimplePreCollisional &&
      cls.kind != BoundaryClass::Kind::SimplePostCollisional)
    throw PreconditionError("impact_operator: boundary class " + std::string(kind_name(cls.kind)), cls);
  Configuration out = z;
  apply_collision(out, *cls.pair, params);
  return out;
}

}  // namespace hsmix
