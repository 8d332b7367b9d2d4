#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hsmix/core.hpp"
#include "hsmix/io.hpp"
#include "hsmix/rng.hpp"

namespace hsmix {

struct ContactPrediction {
  double time = 0.0;
  bool grazing = false;
};

// Smallest t >= 0 with |x_rel + t v_rel| = sigma (citardauq root).
// Grazing when the normal relative speed at contact is <= tol*|v_rel|.
std::optional<ContactPrediction> time_to_contact(const Eigen::Ref<const Eigen::VectorXd>& x_rel,
                                                 const Eigen::Ref<const Eigen::VectorXd>& v_rel, double sigma,
                                                 double tol = kDefaultContactTol);

struct EventPrediction {
  enum class Kind { Contact, GrazingContact };
  double time = 0.0;
  ParticlePair pair;
  Kind kind = Kind::Contact;
};

enum class PathologyKind { MultipleCollision, Grazing, EventOverflow };
std::string_view pathology_name(PathologyKind k);

struct PathologyRecord {
  PathologyKind kind = PathologyKind::MultipleCollision;
  double time = 0.0;
};

class PathologyError : public Error {
 public:
  explicit PathologyError(PathologyRecord rec);
  PathologyRecord record;
};

// Earliest contact over all interacting pairs. A pre-collisional boundary
// state is pushed through the impact operator first.
std::optional<EventPrediction> next_event(const Configuration& z, const MixtureParams& params,
                                          double contact_tol = kDefaultContactTol);

struct CollisionEvent {
  double time = 0.0;
  ParticlePair pair;
  Eigen::VectorXd pre_first, pre_second, post_first, post_second;
};

struct AdvanceOptions {
  std::uint64_t events_max = 1000000;
  double contact_tol = kDefaultContactTol;
  bool record_events = true;
};

struct FlowResult {
  Configuration final;
  std::vector<CollisionEvent> events;
  std::uint64_t event_count = 0;
  std::optional<PathologyRecord> pathology;
  bool ok() const { return !pathology.has_value(); }
};

// Psi^t. Negative t runs the reversed-velocity system forward. On a
// pathology the run stops and `final` holds the state at that moment.
FlowResult advance(const Configuration& z, double t, const MixtureParams& params, const AdvanceOptions& opt = {});

// One JSON object per line: {t, pair, pre, post}.
void write_event_log(std::ostream& os, const std::vector<CollisionEvent>& events);
std::vector<CollisionEvent> read_event_log(std::istream& is);

struct SimBox {
  double half_width = std::numeric_limits<double>::infinity();
  double velocity_bound = std::numeric_limits<double>::infinity();
  void validate() const;
};

// Draws (x, v) for one particle.
using ParticleSampler = std::function<void(Rng&, Eigen::Ref<Eigen::VectorXd>, Eigen::Ref<Eigen::VectorXd>)>;

struct ProductSampler {
  ParticleSampler a;
  ParticleSampler b;
  const ParticleSampler& operator[](Species s) const { return s == Species::A ? a : b; }
};

struct SampledConfiguration {
  Configuration z;
  std::uint64_t attempts = 0;
  double acceptance() const { return attempts ? 1.0 / static_cast<double>(attempts) : 0.0; }
};

// i.i.d. particles (each redrawn until inside the box), whole configuration
// rejected until it lies in the phase space.
SampledConfiguration sample_configuration(const ProductSampler& density, const MixtureParams& params,
                                          std::array<Index, 2> counts, const SimBox& box, Rng& rng,
                                          double acceptance_floor = 1e-4);
SampledConfiguration sample_configuration(const ProductSampler& density, const MixtureParams& params,
                                          std::array<Index, 2> counts, const SimBox& box, std::uint64_t seed,
                                          double acceptance_floor = 1e-4);

struct PathologyStats {
  std::size_t trials = 0;
  std::size_t pathological = 0;
  std::array<std::size_t, 3> by_kind{};
  double rate() const { return trials ? static_cast<double>(pathological) / static_cast<double>(trials) : 0.0; }
  double stderr_rate() const;
};

struct EnsembleSpec {
  ProductSampler density;
  MixtureParams params;
  std::array<Index, 2> counts{0, 0};
  SimBox box;
};

PathologyStats pathology_rate(const EnsembleSpec& ensemble, const std::vector<std::uint64_t>& seeds, double horizon,
                              double contact_tol, std::uint64_t events_max = 1000000, int threads = 1);

}  // namespace hsmix
