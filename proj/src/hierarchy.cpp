#include "hsmix/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hsmix/parallel.hpp"
#include "hsmix/quadrature.hpp"

namespace hsmix {

std::array<Index, 2> CollisionHistory::added(int i) const {
  std::array<Index, 2> a{0, 0};
  for (int r = 0; r < i; ++r) ++a[idx(records[static_cast<std::size_t>(r)].beta)];
  return a;
}

void CollisionHistory::validate(std::array<Index, 2> s, int d, double delta) const {
  double prev = t0;
  std::array<Index, 2> live = s;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string at = "history record " + std::to_string(i + 1) + ": ";
    if (!(r.t >= 0.0)) throw ValidationError(at + "negative time");
    if (i == 0 ? !(r.t <= prev) : !(r.t < prev)) throw ValidationError(at + "times must decrease");
    if (delta > 0 && prev - r.t < delta * (1 - 1e-12)) throw ValidationError(at + "gap below delta");
    if (r.m < 1 || r.m > live[idx(r.alpha)]) throw ValidationError(at + "target index out of range");
    if (r.j != 1 && r.j != -1) throw ValidationError(at + "j must be +1 or -1");
    if (r.omega.size() != d || r.v_new.size() != d) throw ValidationError(at + "dimension mismatch");
    if (std::abs(r.omega.norm() - 1.0) > 1e-10) throw ValidationError(at + "omega is not a unit vector");
    ++live[idx(r.beta)];
    prev = r.t;
  }
  if (delta > 0 && !records.empty() && prev < delta * (1 - 1e-12))
    throw ValidationError("history: last time closer than delta to 0");
}

json history_to_json(const CollisionHistory& h) {
  json recs = json::array();
  for (const auto& r : h.records) {
    recs.push_back({{"alpha", std::string(species_name(r.alpha))},
                    {"beta", std::string(species_name(r.beta))},
                    {"m", r.m},
                    {"j", r.j},
                    {"omega", to_json_vector(r.omega)},
                    {"v_new", to_json_vector(r.v_new)},
                    {"t", r.t}});
  }
  return {{"t0", h.t0}, {"k", h.k()}, {"records", recs}};
}

CollisionHistory history_from_json(const json& j) {
  try {
    CollisionHistory h;
    h.t0 = j.at("t0").get<double>();
    for (const auto& r : j.at("records")) {
      CollisionRecord c;
      c.alpha = parse_species(r.at("alpha").get<std::string>());
      c.beta = parse_species(r.at("beta").get<std::string>());
      c.m = r.at("m").get<Index>();
      c.j = r.at("j").get<int>();
      c.omega = vector_from_json(r.at("omega"));
      c.v_new = vector_from_json(r.at("v_new"), static_cast<int>(c.omega.size()));
      c.t = r.at("t").get<double>();
      h.records.push_back(std::move(c));
    }
    return h;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("history json: ") + e.what());
  }
}

double time_simplex_volume(int k, double t, double delta) {
  if (k == 0) return 1.0;
  const double span = t - (k + 1) * delta;
  if (!(span > 0)) return 0.0;
  return std::pow(span, k) / std::tgamma(k + 1.0);
}

TimeSample sample_time_simplex(int k, double t, double delta, Rng& rng) {
  if (k < 0 || !(t >= 0) || !(delta >= 0)) throw InvalidInput("time simplex: bad arguments");
  TimeSample out;
  if (k == 0) return out;
  const double span = t - (k + 1) * delta;
  if (!(span > 0)) throw EmptyDomain("time simplex: t <= (k + 1) delta");
  std::vector<double> u(static_cast<std::size_t>(k));
  for (auto& x : u) x = span * uniform01(rng);
  std::sort(u.begin(), u.end(), std::greater<>());
  for (int i = 0; i < k; ++i) out.times.push_back(u[static_cast<std::size_t>(i)] + (k - i) * delta);
  out.volume = time_simplex_volume(k, t, delta);
  return out;
}

namespace {

// Shared backward construction; offset[a][b] is the adjunction distance.
class PseudoBuilder {
 public:
  PseudoBuilder(const Configuration& z_s, double t0, PseudoFlavor flavor, const std::array<double, 2>& masses,
                const std::array<std::array<double, 2>, 2>& offset)
      : z_(z_s), masses_(masses), offset_(offset) {
    p_.flavor = flavor;
    p_.times.push_back(t0);
    p_.stages.push_back(z_);
    now_ = t0;
  }

  const Configuration& current() const { return z_; }

  void flow_to(double t) {
    z_.free_flight(-(now_ - t));
    now_ = t;
    p_.times.push_back(t);
    p_.stages.push_back(z_);
  }

  // Record applied at the current time; returns the adjunction.
  const Adjunction& adjoin(const CollisionRecord& r) {
    const ParticleRef target{r.alpha, r.m - 1};
    const double off = offset_[idx(r.alpha)][idx(r.beta)];
    const Eigen::VectorXd pos = z_.x(target) + (r.j == 1 ? off : -off) * r.omega;
    Adjunction a;
    a.target = target;
    a.rate = r.omega.dot(r.v_new - z_.v(target));
    z_.append(r.beta, pos, r.v_new);
    a.added = ParticleRef{r.beta, z_.count(r.beta) - 1};
    if (r.j == 1) detail::collide_in_place(z_.v(target), z_.v(a.added), r.omega, masses_[idx(r.alpha)], masses_[idx(r.beta)]);
    p_.after.push_back(z_);
    p_.adjunctions.push_back(a);
    return p_.adjunctions.back();
  }

  PseudoTrajectory finish() {
    flow_to(0.0);
    return std::move(p_);
  }

 private:
  Configuration z_;
  std::array<double, 2> masses_;
  std::array<std::array<double, 2>, 2> offset_;
  PseudoTrajectory p_;
  double now_ = 0.0;
};

std::array<std::array<double, 2>, 2> offsets(const MixtureParams& p) {
  std::array<std::array<double, 2>, 2> o{};
  for (Species a : kSpecies)
    for (Species b : kSpecies) o[idx(a)][idx(b)] = p.interaction_distance(a, b);
  return o;
}

PseudoTrajectory build(const Configuration& z_s, const CollisionHistory& h, PseudoFlavor flavor,
                       const std::array<double, 2>& masses, const std::array<std::array<double, 2>, 2>& off) {
  h.validate(z_s.counts(), z_s.dim());
  PseudoBuilder b(z_s, h.t0, flavor, masses, off);
  for (const auto& r : h.records) {
    b.flow_to(r.t);
    b.adjoin(r);
  }
  return b.finish();
}

}  // namespace

PseudoTrajectory build_boltzmann_pseudo(const Configuration& z_s, const CollisionHistory& history,
                                        const std::array<double, 2>& masses) {
  return build(z_s, history, PseudoFlavor::Boltzmann, masses, {});
}

PseudoTrajectory build_bbgky_pseudo(const Configuration& z_s, const CollisionHistory& history,
                                    const MixtureParams& params) {
  return build(z_s, history, PseudoFlavor::Bbgky, params.mass, offsets(params));
}

PseudoComparison compare_pseudo(const PseudoTrajectory& boltz, const PseudoTrajectory& bbgky, double max_eps) {
  if (boltz.flavor != PseudoFlavor::Boltzmann || bbgky.flavor != PseudoFlavor::Bbgky)
    throw ValidationError("compare_pseudo: flavors do not match");
  if (boltz.stages.size() != bbgky.stages.size() || boltz.times != bbgky.times)
    throw ValidationError("compare_pseudo: histories differ");
  const int k = static_cast<int>(boltz.stages.size()) - 2;
  const auto& s0 = boltz.stages.front().counts();
  const Index n = std::max<Index>({static_cast<Index>(k), s0[0] + 1, s0[1] + 1, 1});
  PseudoComparison out;
  for (std::size_t i = 0; i < boltz.stages.size(); ++i) {
    const auto& a = boltz.stages[i];
    const auto& b = bbgky.stages[i];
    if (a.counts() != b.counts()) throw ValidationError("compare_pseudo: stage particle counts differ");
    StageDeviation d;
    d.stage = static_cast<int>(i);
    d.particles = a.total();
    double total2 = 0.0;
    for (Species s : kSpecies) {
      for (Index p = 0; p < a.count(s); ++p) {
        const double dx = (a.x(s, p) - b.x(s, p)).norm();
        d.max_position = std::max(d.max_position, dx);
        total2 += dx * dx;
        d.max_velocity = std::max(d.max_velocity, (a.v(s, p) - b.v(s, p)).cwiseAbs().maxCoeff());
      }
    }
    d.total_position = std::sqrt(total2);
    d.particle_bound = std::sqrt(2.0) * std::max<int>(static_cast<int>(i) - 1, 0) * max_eps;
    d.total_bound = std::sqrt(8.0) * static_cast<double>(n * n) * max_eps;
    if (d.max_velocity > 1e-12 || d.max_position > d.particle_bound + 1e-10 || d.total_position > d.total_bound)
      out.ok = false;
    out.stages.push_back(d);
  }
  return out;
}

namespace {

// Earliest overlap of any pair while flowing z backward for tau.
bool segment_overlaps(const Configuration& z, double tau, const MixtureParams& params) {
  bool hit = false;
  for_each_pair(z, [&](ParticleRef p, ParticleRef q) {
    if (hit) return;
    const double eps = params.interaction_distance(p.species, q.species);
    const double lim2 = eps * eps * (1 - 1e-9) * (1 - 1e-9);
    const Eigen::VectorXd r = z.x(p) - z.x(q);
    const Eigen::VectorXd u = z.v(p) - z.v(q);
    // backward: r(s) = r - s u
    const double uu = u.squaredNorm();
    double s = uu > 0 ? r.dot(u) / uu : 0.0;
    s = std::clamp(s, 0.0, tau);
    if ((r - s * u).squaredNorm() < lim2) hit = true;
  });
  return hit;
}

}  // namespace

RecollisionResult recollision_filter(const PseudoTrajectory& pseudo, const MixtureParams& params) {
  RecollisionResult res;
  const std::size_t k = pseudo.after.size();
  for (std::size_t i = 0; i <= k; ++i) {
    const Configuration& start = i == 0 ? pseudo.stages[0] : pseudo.after[i - 1];
    const double tau = pseudo.times[i] - pseudo.times[i + 1];
    if (segment_overlaps(start, tau, params)) {
      res.clean = false;
      res.stage = static_cast<int>(i);
      return res;
    }
  }
  return res;
}

CollisionHistory random_history(std::array<Index, 2> s, int k, double t, double delta, double R, int d, Rng& rng) {
  if (s[0] + s[1] < 1) throw InvalidInput("random_history: need at least one particle");
  CollisionHistory h;
  h.t0 = t;
  const TimeSample ts = sample_time_simplex(k, t, delta, rng);
  std::array<Index, 2> live = s;
  for (int i = 0; i < k; ++i) {
    CollisionRecord r;
    do {
      r.alpha = uniform01(rng) < 0.5 ? Species::A : Species::B;
    } while (live[idx(r.alpha)] == 0);
    r.beta = uniform01(rng) < 0.5 ? Species::A : Species::B;
    r.m = 1 + std::min<Index>(static_cast<Index>(uniform01(rng) * static_cast<double>(live[idx(r.alpha)])),
                              live[idx(r.alpha)] - 1);
    r.j = uniform01(rng) < 0.5 ? -1 : 1;
    r.omega = uniform_sphere(rng, d);
    r.v_new = uniform_ball(rng, d, R);
    r.t = ts.times[static_cast<std::size_t>(i)];
    ++live[idx(r.beta)];
    h.records.push_back(std::move(r));
  }
  return h;
}

namespace {

bool velocities_within(const Configuration& z, double R) {
  const double r2 = R * R;
  for (Species s : kSpecies)
    if (z.count(s) && z.velocities(s).colwise().squaredNorm().maxCoeff() > r2) return false;
  return true;
}

struct SampleOutcome {
  double value = 0.0;
  bool rejected = false;
};

}  // namespace

DuhamelEstimate duhamel_iterate(const ObservableFunction& initial_data, const DuhamelSpec& spec) {
  const int d = spec.scaling.dim;
  const int k = spec.k;
  if (k < 0) throw InvalidInput("duhamel: k must be nonnegative");
  if (spec.x_s.dim() != d || spec.x_s.counts() != spec.s) throw InvalidInput("duhamel: x_s does not match s and d");
  if (!spec.alphas.empty() && (static_cast<int>(spec.alphas.size()) != k || spec.betas.size() != spec.alphas.size()))
    throw InvalidInput("duhamel: class length differs from k");
  if (!(spec.R > 0) || !(spec.t >= 0)) throw InvalidInput("duhamel: need R > 0 and t >= 0");
  if (!spec.phi) throw InvalidInput("duhamel: missing test function");
  const bool bbgky = spec.flavor == PseudoFlavor::Bbgky;
  if (bbgky && !spec.realized) throw InvalidInput("duhamel: BBGKY flavor needs a realized scaling");
  if (k > 0 && time_simplex_volume(k, spec.t, spec.delta) == 0.0) throw EmptyDomain("duhamel: empty time simplex");
  const bool all_classes = spec.alphas.empty();

  MixtureParams params;
  params.dim = d;
  params.mass = spec.masses;
  if (bbgky) params = spec.realized->params(spec.masses);
  const auto off = bbgky ? offsets(params) : std::array<std::array<double, 2>, 2>{};

  const double ball = ball_volume(d, spec.R);
  const double half_sphere = 0.5 * sphere_surface(d);
  const Index ns = spec.s[0] + spec.s[1];

  auto one_sample = [&](Rng& rng) {
    SampleOutcome out;
    Configuration z = spec.x_s;
    for (Species s : kSpecies)
      for (Index i = 0; i < z.count(s); ++i) z.v(s, i) = uniform_ball(rng, d, spec.R);
    double weight = std::pow(ball, static_cast<double>(ns)) * spec.phi(z);
    const TimeSample ts = sample_time_simplex(k, spec.t, spec.delta, rng);
    weight *= ts.volume;
    std::vector<Species> al = spec.alphas, be = spec.betas;
    if (all_classes) {
      al.resize(static_cast<std::size_t>(k));
      be.resize(static_cast<std::size_t>(k));
      for (int i = 0; i < k; ++i) {
        al[static_cast<std::size_t>(i)] = uniform01(rng) < 0.5 ? Species::A : Species::B;
        be[static_cast<std::size_t>(i)] = uniform01(rng) < 0.5 ? Species::A : Species::B;
      }
      weight *= std::pow(4.0, k);
    }
    std::array<Index, 2> live = spec.s;
    std::vector<Index> targets(static_cast<std::size_t>(k));
    std::vector<Eigen::VectorXd> omegas(static_cast<std::size_t>(k)), vnew(static_cast<std::size_t>(k));
    bool empty = false;
    for (int i = 0; i < k; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      const Index n = live[idx(al[iu])];
      if (n == 0) {
        empty = true;
        break;
      }
      targets[iu] = 1 + std::min<Index>(static_cast<Index>(uniform01(rng) * static_cast<double>(n)), n - 1);
      weight *= static_cast<double>(n);
      omegas[iu] = uniform_sphere(rng, d);
      vnew[iu] = uniform_ball(rng, d, spec.R);
      weight *= half_sphere * ball;
      ++live[idx(be[iu])];
    }
    if (empty || weight == 0.0) return out;
    weight *= prefactor_product(spec.scaling, bbgky ? &*spec.realized : nullptr, spec.s, al, be);
    if (k == 0) {
      // Free flight only.
      Configuration z0 = z;
      z0.free_flight(-spec.t);
      if (bbgky) {
        PseudoTrajectory p;
        p.times = {spec.t, 0.0};
        p.stages = {z, z0};
        if (!recollision_filter(p, params).clean) {
          out.rejected = true;
          return out;
        }
      }
      out.value = weight * initial_data(z0);
      return out;
    }
    double branch_sum = 0.0;
    for (int J = 0; J < (1 << k); ++J) {
      PseudoBuilder b(z, spec.t, spec.flavor, spec.masses, off);
      double w = 1.0;
      bool dead = false;
      for (int i = 0; i < k && !dead; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        b.flow_to(ts.times[iu]);
        CollisionRecord r;
        r.alpha = al[iu];
        r.beta = be[iu];
        r.m = targets[iu];
        r.j = (J >> i) & 1 ? 1 : -1;
        r.v_new = vnew[iu];
        // Flip omega into the post-collisional half for this branch.
        const double c = omegas[iu].dot(r.v_new - b.current().v(r.alpha, r.m - 1));
        r.omega = c < 0 ? Eigen::VectorXd(-omegas[iu]) : omegas[iu];
        r.t = ts.times[iu];
        const Adjunction& a = b.adjoin(r);
        w *= r.j * a.rate;
        if (!velocities_within(b.current(), spec.R)) dead = true;
      }
      if (dead || w == 0.0) continue;
      PseudoTrajectory p = b.finish();
      if (bbgky && !recollision_filter(p, params).clean) {
        out.rejected = true;
        continue;
      }
      branch_sum += w * initial_data(p.stages.back());
    }
    out.value = weight * branch_sum;
    return out;
  };

  // Fixed blocks with their own streams: thread count does not change results.
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (spec.samples + kBlock - 1) / kBlock;
  std::vector<double> sum(blocks, 0.0), sum2(blocks, 0.0);
  std::vector<std::size_t> rej(blocks, 0);
  parallel_for(blocks, spec.threads, [&](std::size_t blk) {
    Rng rng = make_rng(spec.seed, blk);
    const std::size_t lo = blk * kBlock, hi = std::min(spec.samples, lo + kBlock);
    for (std::size_t i = lo; i < hi; ++i) {
      const SampleOutcome o = one_sample(rng);
      sum[blk] += o.value;
      sum2[blk] += o.value * o.value;
      if (o.rejected) ++rej[blk];
    }
  });
  DuhamelEstimate est;
  est.samples = spec.samples;
  if (spec.samples == 0) return est;
  double s = 0.0, s2 = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    s += sum[b];
    s2 += sum2[b];
    est.rejected += rej[b];
  }
  const double n = static_cast<double>(spec.samples);
  est.mean = s / n;
  const double var = n > 1 ? std::max(0.0, (s2 - n * est.mean * est.mean) / (n - 1)) : 0.0;
  est.stderr_mean = std::sqrt(var / n);
  est.rejected_fraction = static_cast<double>(est.rejected) / n;
  return est;
}

}  // namespace hsmix
