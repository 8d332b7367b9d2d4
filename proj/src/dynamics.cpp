#include "hsmix/dynamics.hpp"

#include <cmath>
#include <queue>
#include <sstream>

#include "hsmix/parallel.hpp"

namespace hsmix {

namespace {

template <typename DX, typename DV>
std::optional<ContactPrediction> contact_time(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DV>& v,
                                              double sigma, double tol) {
  const double a = v.squaredNorm();
  const double b = x.dot(v);
  const double xx = x.squaredNorm();
  const double lim = sigma * (1.0 - tol);
  if (xx < lim * lim) throw InvalidState("time_to_contact: overlapping pair");
  if (a == 0.0 || b >= 0.0) return std::nullopt;
  const double c = xx - sigma * sigma;
  const double disc = b * b - a * c;
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  // Normal relative speed at contact is root/sigma.
  const bool grazing = root <= tol * sigma * std::sqrt(a);
  const double t = c <= 0.0 ? 0.0 : c / (-b + root);
  return ContactPrediction{t, grazing};
}

struct Event {
  double t;
  int i, j;
  std::uint64_t ci, cj;
  bool grazing;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    if (a.t != b.t) return a.t > b.t;
    if (a.i != b.i) return a.i > b.i;
    return a.j > b.j;
  }
};

template <int D>
class Engine {
 public:
  using Vec = Eigen::Matrix<double, D, 1>;

  Engine(const Configuration& z, const MixtureParams& p, double t_end, const AdvanceOptions& opt)
      : d_(z.dim()), na_(static_cast<int>(z.count(Species::A))), n_(static_cast<int>(z.total())), t_end_(t_end),
        opt_(opt), X_(d_, n_), V_(d_, n_), tref_(n_, 0.0), counter_(n_, 0), mass_(n_) {
    X_ << z.positions(Species::A), z.positions(Species::B);
    V_ << z.velocities(Species::A), z.velocities(Species::B);
    for (int g = 0; g < n_; ++g) mass_[g] = p.m(species(g));
    for (Species a : kSpecies)
      for (Species b : kSpecies) sigma_[idx(a)][idx(b)] = p.interaction_distance(a, b);
  }

  FlowResult run(double sign) {
    sign_ = sign;
    FlowResult out;
    if (auto bad = check_start()) {
      out.pathology = bad;
      out.final = snapshot(0.0);
      return out;
    }
    for (int i = 0; i < n_; ++i)
      for (int j = i + 1; j < n_; ++j) predict(i, j, 0.0);
    while (!heap_.empty()) {
      const Event ev = heap_.top();
      heap_.pop();
      if (ev.ci != counter_[ev.i] || ev.cj != counter_[ev.j]) continue;
      if (++out.event_count > opt_.events_max) {
        out.pathology = PathologyRecord{PathologyKind::EventOverflow, sign_ * ev.t};
        out.final = snapshot(ev.t);
        return out;
      }
      if (auto bad = process(ev, out)) {
        out.pathology = bad;
        out.final = snapshot(ev.t);
        return out;
      }
    }
    out.final = snapshot(t_end_);
    return out;
  }

 private:
  Species species(int g) const { return g < na_ ? Species::A : Species::B; }
  ParticleRef ref(int g) const { return g < na_ ? ParticleRef{Species::A, g} : ParticleRef{Species::B, g - na_}; }
  double sigma(int i, int j) const { return sigma_[idx(species(i))][idx(species(j))]; }

  Vec pos(int g, double t) const { return X_.col(g) + (t - tref_[g]) * V_.col(g); }

  void predict(int i, int j, double now) {
    const Vec x = pos(i, now) - pos(j, now);
    const Vec v = V_.col(i) - V_.col(j);
    const auto c = contact_time(x, v, sigma(i, j), opt_.contact_tol);
    if (!c || now + c->time > t_end_) return;
    heap_.push(Event{now + c->time, i, j, counter_[i], counter_[j], c->grazing});
  }

  bool touching(int i, int j, double t) const {
    const double s = sigma(i, j);
    return std::abs((pos(i, t) - pos(j, t)).norm() - s) <= opt_.contact_tol * s;
  }

  std::optional<PathologyRecord> check_start() const {
    int contacts = 0;
    for (int i = 0; i < n_; ++i)
      for (int j = i + 1; j < n_; ++j) {
        const double s = sigma(i, j);
        const Vec x = X_.col(i) - X_.col(j);
        const double dist = x.norm();
        if (dist < s * (1.0 - opt_.contact_tol)) throw InvalidState("advance: initial configuration overlaps");
        if (std::abs(dist - s) > opt_.contact_tol * s) continue;
        if (++contacts > 1) return PathologyRecord{PathologyKind::MultipleCollision, 0.0};
        const Vec dv = V_.col(i) - V_.col(j);
        if (std::abs(x.dot(dv)) / dist <= opt_.contact_tol * dv.norm())
          return PathologyRecord{PathologyKind::Grazing, 0.0};
      }
    return std::nullopt;
  }

  std::optional<PathologyRecord> process(const Event& ev, FlowResult& out) {
    const int i = ev.i, j = ev.j;
    const double t = ev.t;
    if (ev.grazing) return PathologyRecord{PathologyKind::Grazing, sign_ * t};
    X_.col(i) = pos(i, t);
    X_.col(j) = pos(j, t);
    tref_[i] = tref_[j] = t;
    const Vec n = (X_.col(i) - X_.col(j)).normalized();
    const Vec dv = V_.col(i) - V_.col(j);
    if (std::abs(n.dot(dv)) <= opt_.contact_tol * dv.norm()) return PathologyRecord{PathologyKind::Grazing, sign_ * t};
    for (int k = 0; k < n_; ++k) {
      if (k == i || k == j) continue;
      if (touching(i, k, t) || touching(j, k, t)) return PathologyRecord{PathologyKind::MultipleCollision, sign_ * t};
    }
    while (!heap_.empty()) {
      const Event& top = heap_.top();
      if (top.ci != counter_[top.i] || top.cj != counter_[top.j]) {
        heap_.pop();
        continue;
      }
      if (touching(top.i, top.j, t)) return PathologyRecord{PathologyKind::MultipleCollision, sign_ * t};
      break;
    }
    CollisionEvent rec;
    if (opt_.record_events) {
      rec.time = sign_ * t;
      rec.pair = ParticlePair{ref(i), ref(j)};
      rec.pre_first = sign_ * V_.col(i);
      rec.pre_second = sign_ * V_.col(j);
    }
    detail::collide_in_place(V_.col(i), V_.col(j), n, mass_[i], mass_[j]);
    ++counter_[i];
    ++counter_[j];
    if (opt_.record_events) {
      rec.post_first = sign_ * V_.col(i);
      rec.post_second = sign_ * V_.col(j);
      out.events.push_back(std::move(rec));
    }
    for (int k = 0; k < n_; ++k) {
      if (k == i || k == j) continue;
      predict(std::min(i, k), std::max(i, k), t);
      predict(std::min(j, k), std::max(j, k), t);
    }
    return std::nullopt;
  }

  Configuration snapshot(double t) const {
    Configuration z(d_, na_, n_ - na_);
    for (int g = 0; g < n_; ++g) {
      const ParticleRef r = ref(g);
      z.x(r) = pos(g, t);
      z.v(r) = V_.col(g);
    }
    return z;
  }

  int d_, na_, n_;
  double t_end_;
  double sign_ = 1.0;
  AdvanceOptions opt_;
  Eigen::Matrix<double, D, Eigen::Dynamic> X_, V_;
  std::vector<double> tref_;
  std::vector<std::uint64_t> counter_;
  std::vector<double> mass_;
  double sigma_[2][2];
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
};

template <int D>
FlowResult run_engine(const Configuration& z, double t_abs, double sign, const MixtureParams& params,
                      const AdvanceOptions& opt) {
  Engine<D> engine(z, params, t_abs, opt);
  return engine.run(sign);
}

}  // namespace

std::optional<ContactPrediction> time_to_contact(const Eigen::Ref<const Eigen::VectorXd>& x_rel,
                                                 const Eigen::Ref<const Eigen::VectorXd>& v_rel, double sigma,
                                                 double tol) {
  if (x_rel.size() != v_rel.size()) throw InvalidInput("time_to_contact: dimension mismatch");
  if (!(sigma > 0)) throw InvalidInput("time_to_contact: sigma must be positive");
  return contact_time(x_rel, v_rel, sigma, tol);
}

std::string_view pathology_name(PathologyKind k) {
  switch (k) {
    case PathologyKind::MultipleCollision: return "MultipleCollision";
    case PathologyKind::Grazing: return "Grazing";
    case PathologyKind::EventOverflow: return "EventOverflow";
  }
  return "?";
}

PathologyError::PathologyError(PathologyRecord rec)
    : Error("pathology: " + std::string(pathology_name(rec.kind)) + " at t=" + fmt_double(rec.time)), record(rec) {}

std::optional<EventPrediction> next_event(const Configuration& z, const MixtureParams& params, double contact_tol) {
  const BoundaryClass cls = classify_boundary(z, params, contact_tol);
  if (cls.kind == BoundaryClass::Kind::MultipleCollision)
    throw PathologyError(PathologyRecord{PathologyKind::MultipleCollision, 0.0});
  if (cls.kind == BoundaryClass::Kind::SimpleGrazing) throw PathologyError(PathologyRecord{PathologyKind::Grazing, 0.0});
  const Configuration w =
      cls.kind == BoundaryClass::Kind::SimplePreCollisional ? impact_operator(z, params, contact_tol) : z;
  std::optional<EventPrediction> best;
  for_each_pair(w, [&](ParticleRef p, ParticleRef q) {
    const auto c = contact_time(w.x(p) - w.x(q), w.v(p) - w.v(q), params.interaction_distance(p.species, q.species),
                                contact_tol);
    if (!c) return;
    if (!best || c->time < best->time)
      best = EventPrediction{c->time, ParticlePair{p, q},
                             c->grazing ? EventPrediction::Kind::GrazingContact : EventPrediction::Kind::Contact};
  });
  return best;
}

FlowResult advance(const Configuration& z, double t, const MixtureParams& params, const AdvanceOptions& opt) {
  if (!std::isfinite(t)) throw InvalidInput("advance: time must be finite");
  if (z.dim() != params.dim) throw InvalidInput("advance: configuration dimension differs from params");
  const double sign = t < 0 ? -1.0 : 1.0;
  Configuration start = z;
  if (sign < 0) start.reverse_velocities();
  FlowResult r;
  switch (z.dim()) {
    case 2: r = run_engine<2>(start, std::abs(t), sign, params, opt); break;
    case 3: r = run_engine<3>(start, std::abs(t), sign, params, opt); break;
    default: r = run_engine<Eigen::Dynamic>(start, std::abs(t), sign, params, opt); break;
  }
  if (sign < 0) r.final.reverse_velocities();
  return r;
}

namespace {

json ref_json(const ParticleRef& p) { return json::array({std::string(species_name(p.species)), p.index}); }

ParticleRef ref_from_json(const json& j) {
  return ParticleRef{parse_species(j.at(0).get<std::string>()), j.at(1).get<Index>()};
}

}  // namespace

void write_event_log(std::ostream& os, const std::vector<CollisionEvent>& events) {
  for (const auto& e : events) {
    json j;
    j["t"] = e.time;
    j["pair"] = json::array({ref_json(e.pair.first), ref_json(e.pair.second)});
    j["pre"] = json::array({to_json_vector(e.pre_first), to_json_vector(e.pre_second)});
    j["post"] = json::array({to_json_vector(e.post_first), to_json_vector(e.post_second)});
    os << j.dump() << '\n';
  }
}

std::vector<CollisionEvent> read_event_log(std::istream& is) {
  std::vector<CollisionEvent> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    CollisionEvent e;
    e.time = j.at("t").get<double>();
    e.pair = ParticlePair{ref_from_json(j.at("pair").at(0)), ref_from_json(j.at("pair").at(1))};
    e.pre_first = vector_from_json(j.at("pre").at(0));
    e.pre_second = vector_from_json(j.at("pre").at(1));
    e.post_first = vector_from_json(j.at("post").at(0));
    e.post_second = vector_from_json(j.at("post").at(1));
    out.push_back(std::move(e));
  }
  return out;
}

void SimBox::validate() const {
  if (!(half_width > 0)) throw InvalidInput("box.half_width: must be positive");
  if (!(velocity_bound > 0)) throw InvalidInput("box.velocity_bound: must be positive");
}

SampledConfiguration sample_configuration(const ProductSampler& density, const MixtureParams& params,
                                          std::array<Index, 2> counts, const SimBox& box, Rng& rng,
                                          double acceptance_floor) {
  box.validate();
  if (!(acceptance_floor > 0 && acceptance_floor <= 1)) throw InvalidInput("acceptance floor must be in (0,1]");
  const std::uint64_t limit = static_cast<std::uint64_t>(std::ceil(3.0 / acceptance_floor));
  const int d = params.dim;
  Configuration z(d, counts[0], counts[1]);
  Eigen::VectorXd x(d), v(d);
  for (std::uint64_t attempt = 1; attempt <= limit; ++attempt) {
    for (Species s : kSpecies) {
      for (Index i = 0; i < counts[idx(s)]; ++i) {
        for (std::uint64_t tries = 0;; ++tries) {
          if (tries >= limit) throw InfeasibleDensity("sample_configuration: box rejects nearly every draw");
          density[s](rng, x, v);
          if (x.norm() <= box.half_width && v.norm() <= box.velocity_bound) break;
        }
        z.x(s, i) = x;
        z.v(s, i) = v;
      }
    }
    if (z.in_phase_space(params, 0.0)) return SampledConfiguration{std::move(z), attempt};
  }
  throw InfeasibleDensity("sample_configuration: acceptance rate below floor " + fmt_double(acceptance_floor));
}

SampledConfiguration sample_configuration(const ProductSampler& density, const MixtureParams& params,
                                          std::array<Index, 2> counts, const SimBox& box, std::uint64_t seed,
                                          double acceptance_floor) {
  Rng rng = make_rng(seed);
  return sample_configuration(density, params, counts, box, rng, acceptance_floor);
}

double PathologyStats::stderr_rate() const {
  if (!trials) return 0.0;
  const double p = rate();
  return std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

PathologyStats pathology_rate(const EnsembleSpec& ensemble, const std::vector<std::uint64_t>& seeds, double horizon,
                              double contact_tol, std::uint64_t events_max, int threads) {
  std::vector<std::optional<PathologyRecord>> result(seeds.size());
  AdvanceOptions opt;
  opt.contact_tol = contact_tol;
  opt.events_max = events_max;
  opt.record_events = false;
  parallel_for(seeds.size(), threads, [&](std::size_t k) {
    const auto sample = sample_configuration(ensemble.density, ensemble.params, ensemble.counts, ensemble.box, seeds[k]);
    result[k] = advance(sample.z, horizon, ensemble.params, opt).pathology;
  });
  PathologyStats stats;
  stats.trials = seeds.size();
  for (const auto& r : result) {
    if (!r) continue;
    ++stats.pathological;
    ++stats.by_kind[static_cast<std::size_t>(r->kind)];
  }
  return stats;
}

}  // namespace hsmix
