#include <algorithm>
#include <cmath>
#include <vector>

#include "acceptance.hpp"
#include "hsmix/chaos.hpp"
#include "hsmix/dynamics.hpp"
#include "hsmix/parallel.hpp"

namespace hsmix::acceptance {

using Eigen::VectorXd;

Result criterion_conservation() {
  Stopwatch clock;
  const double ratios[] = {1.0, 3.0, 10.0};
  double worst_p = 0.0, worst_e = 0.0;
  long calls = 0;
  for (int d : {2, 3}) {
    Rng rng = make_rng(2024, static_cast<std::uint64_t>(d));
    for (long i = 0; i < 1000000; ++i) {
      const double r = ratios[i % 3];
      const double ma = (i / 3) % 2 ? r : 1.0, mb = (i / 3) % 2 ? 1.0 : r;
      const VectorXd va = 2.0 * gaussian_vector(rng, d), vb = 2.0 * gaussian_vector(rng, d);
      const VectorXd n = uniform_sphere(rng, d);
      const auto [pa, pb] = collide(va, vb, n, ma, mb);
      const double pscale = ma * va.norm() + mb * vb.norm();
      const double e0 = ma * va.squaredNorm() + mb * vb.squaredNorm();
      worst_p = std::max(worst_p, (ma * (pa - va) + mb * (pb - vb)).norm() / pscale);
      worst_e = std::max(worst_e, std::abs(ma * pa.squaredNorm() + mb * pb.squaredNorm() - e0) / e0);
      ++calls;
    }
  }
  const double secs = clock.seconds();
  const bool pass = worst_p <= 1e-12 && worst_e <= 1e-12 && secs < 5.0;
  return {pass, std::to_string(calls) + " calls, max rel momentum " + fmt(worst_p) + ", max rel energy " +
                    fmt(worst_e) + ", " + fmt(secs) + " s (limit 5 s)"};
}

namespace {

struct FlowSetup {
  MixtureParams params;
  ProductSampler density;
  double horizon = 0.0;
};

// N1 = N2 = 10 in d = 2 at the scaled diameters, horizon one mean free time.
FlowSetup flow_setup() {
  const GradScaling g{2, 1.0, 1.0, 1.0};
  const RealizedScaling r = realize(g, 10);
  FlowSetup s;
  s.params = r.params({1.0, 2.0});
  const GaussianBlob ga = maxwellian_blob(2, 1.0, 0.5, 1.0), gb = maxwellian_blob(2, 1.0, 0.5, 2.0);
  s.density = ProductSampler{ga.sampler(), gb.sampler()};
  s.horizon = mean_free_time(g, ga, gb);
  return s;
}

constexpr std::size_t kSeeds = 1000;

Configuration seeded(const FlowSetup& s, std::uint64_t seed) {
  return sample_configuration(s.density, s.params, {10, 10}, SimBox{}, seed).z;
}

}  // namespace

Result criterion_reversal() {
  const FlowSetup s = flow_setup();
  // Involution on random contacts.
  Rng rng = make_rng(77);
  double worst_inv = 0.0;
  MixtureParams p2 = s.params;
  p2.diameter = {0.3, 0.1};
  for (int i = 0; i < 100000; ++i) {
    const Species a = i % 2 ? Species::B : Species::A, b = (i / 2) % 2 ? Species::B : Species::A;
    Configuration z(2, a == b ? (a == Species::A ? 2 : 0) : 1, a == b ? (a == Species::B ? 2 : 0) : 1);
    const ParticleRef pa{a, 0}, pb{b, a == b ? 1 : 0};
    const VectorXd n = uniform_sphere(rng, 2);
    z.x(pa) = uniform_ball(rng, 2, 2.0);
    z.x(pb) = z.x(pa) - p2.interaction_distance(a, b) * n;
    z.v(pa) = gaussian_vector(rng, 2);
    z.v(pb) = gaussian_vector(rng, 2);
    const Configuration once = impact_operator(z, p2);
    const Configuration twice = impact_operator(once, p2);
    const Deviation dv = max_deviation(twice, z);
    worst_inv = std::max({worst_inv, dv.position, dv.velocity});
  }

  struct Run {
    bool pathological = false;
    double deviation = 0.0;
    std::uint64_t events = 0;
  };
  std::vector<Run> runs(kSeeds);
  parallel_for(kSeeds, opts.threads, [&](std::size_t i) {
    const Configuration z = seeded(s, i);
    const FlowResult fwd = advance(z, s.horizon, s.params);
    runs[i].events = fwd.event_count;
    if (!fwd.ok()) {
      runs[i].pathological = true;
      return;
    }
    Configuration back = fwd.final;
    back.reverse_velocities();
    FlowResult bwd = advance(back, s.horizon, s.params);
    if (!bwd.ok()) {
      runs[i].pathological = true;
      return;
    }
    bwd.final.reverse_velocities();
    const Deviation dv = max_deviation(bwd.final, z);
    runs[i].deviation = std::max(dv.position, dv.velocity);
  });
  std::size_t good = 0, flagged = 0, silent = 0;
  std::uint64_t events = 0;
  double worst = 0.0;
  for (const Run& r : runs) {
    events += r.events;
    if (r.pathological) {
      ++flagged;
    } else if (r.deviation <= 1e-6) {
      ++good;
      worst = std::max(worst, r.deviation);
    } else {
      ++silent;
    }
  }
  const bool pass = worst_inv <= 1e-12 && good >= 990 && silent == 0;
  return {pass, "involution max dev " + fmt(worst_inv) + " on 1e5 contacts; reversal " + std::to_string(good) + "/" +
                    std::to_string(kSeeds) + " within 1e-6 (max " + fmt(worst) + "), " + std::to_string(flagged) +
                    " flagged pathological, " + std::to_string(silent) + " unflagged failures; mean collisions " +
                    fmt(static_cast<double>(events) / kSeeds)};
}

Result criterion_group_law() {
  const FlowSetup s = flow_setup();
  const double t1 = 0.37 * s.horizon, t2 = s.horizon - t1;
  std::vector<double> dev(kSeeds, -1.0);
  parallel_for(kSeeds, opts.threads, [&](std::size_t i) {
    const Configuration z = seeded(s, i);
    const FlowResult whole = advance(z, s.horizon, s.params);
    if (!whole.ok()) return;
    const FlowResult first = advance(z, t1, s.params);
    if (!first.ok()) return;
    const FlowResult second = advance(first.final, t2, s.params);
    if (!second.ok()) return;
    const Deviation d = max_deviation(whole.final, second.final);
    dev[i] = std::max(d.position, d.velocity);
  });
  std::size_t checked = 0, bad = 0;
  double worst = 0.0;
  for (double d : dev) {
    if (d < 0) continue;
    ++checked;
    worst = std::max(worst, d);
    if (d > 1e-8) ++bad;
  }
  const bool pass = bad == 0 && checked >= 990;
  return {pass, std::to_string(checked) + "/" + std::to_string(kSeeds) + " non-pathological seeds, max |Psi^{t+s} - Psi^s Psi^t| " +
                    fmt(worst) + " (limit 1e-8), " + std::to_string(bad) + " over"};
}

}  // namespace hsmix::acceptance
