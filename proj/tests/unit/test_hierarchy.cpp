#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hsmix/collision.hpp"
#include "hsmix/hierarchy.hpp"
#include "hsmix/pde.hpp"
#include "hsmix/quadrature.hpp"

using namespace hsmix;
using Eigen::VectorXd;

namespace {

VectorXd vec(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

Configuration one_of_each() {
  Configuration z(2, 1, 1);
  z.x(Species::A, 0) = vec(0.3, -0.2);
  z.v(Species::A, 0) = vec(0.5, 0.1);
  z.x(Species::B, 0) = vec(-1.0, 0.7);
  z.v(Species::B, 0) = vec(-0.2, 0.4);
  return z;
}

CollisionRecord record(Species a, Species b, Index m, int j, VectorXd omega, VectorXd v, double t) {
  CollisionRecord r;
  r.alpha = a;
  r.beta = b;
  r.m = m;
  r.j = j;
  r.omega = omega.normalized();
  r.v_new = std::move(v);
  r.t = t;
  return r;
}

double maxwell(double gamma, double mass, const Eigen::Ref<const VectorXd>& v) {
  return gamma * mass / std::numbers::pi * std::exp(-gamma * mass * v.squaredNorm());
}

// Homogeneous tensor data: product of g over A and h over B.
ObservableFunction tensor_data(std::function<double(const Eigen::Ref<const VectorXd>&)> g,
                               std::function<double(const Eigen::Ref<const VectorXd>&)> h) {
  return [=](const Configuration& z) {
    double p = 1.0;
    for (Index i = 0; i < z.count(Species::A); ++i) p *= g(z.v(Species::A, i));
    for (Index i = 0; i < z.count(Species::B); ++i) p *= h(z.v(Species::B, i));
    return p;
  };
}

}  // namespace

TEST_CASE("time simplex sampling") {
  Rng rng = make_rng(3);
  const auto t0 = sample_time_simplex(0, 1.0, 0.0, rng);
  CHECK(t0.times.empty());
  CHECK(t0.volume == 1.0);
  const auto t1 = sample_time_simplex(1, 2.5, 0.0, rng);
  CHECK(t1.volume == doctest::Approx(2.5));
  CHECK(t1.times[0] >= 0.0);
  CHECK(t1.times[0] <= 2.5);
  CHECK_THROWS_AS(sample_time_simplex(3, 1.0, 0.25, rng), EmptyDomain);

  SUBCASE("hit-or-miss volume") {
    for (double delta : {0.0, 0.1}) {
      const double t = 1.2;
      const int n = 200000;
      int hits = 0;
      for (int i = 0; i < n; ++i) {
        const double a = t * uniform01(rng), b = t * uniform01(rng);
        if (t - a >= delta && a - b >= delta && b >= delta) ++hits;
      }
      const double p = static_cast<double>(hits) / n;
      const double est = p * t * t, se = t * t * std::sqrt(p * (1 - p) / n);
      CHECK(std::abs(est - time_simplex_volume(2, t, delta)) < 3 * se);
    }
  }
  SUBCASE("separated samples respect the gaps") {
    for (int i = 0; i < 1000; ++i) {
      const auto s = sample_time_simplex(4, 2.0, 0.2, rng);
      double prev = 2.0;
      for (double x : s.times) {
        CHECK(prev - x >= 0.2 - 1e-12);
        prev = x;
      }
      CHECK(prev >= 0.2 - 1e-12);
    }
  }
}

TEST_CASE("history validation and json") {
  CollisionHistory h;
  h.t0 = 1.0;
  h.records.push_back(record(Species::A, Species::B, 1, 1, vec(1, 1), vec(0.1, 0.2), 0.6));
  h.records.push_back(record(Species::B, Species::B, 2, -1, vec(0, 1), vec(-0.3, 0.0), 0.2));
  CHECK_NOTHROW(h.validate({1, 1}, 2));
  CHECK(h.added(2) == std::array<Index, 2>{0, 2});
  CHECK_THROWS_AS(h.validate({1, 0}, 2), ValidationError);  // no B target yet at record 2
  CHECK_THROWS_AS(h.validate({1, 1}, 2, 0.5), ValidationError);
  const auto back = history_from_json(history_to_json(h));
  REQUIRE(back.k() == 2);
  CHECK(back.records[1].beta == Species::B);
  CHECK(back.records[0].omega == h.records[0].omega);
  CHECK(back.records[1].t == 0.2);
  auto bad = h;
  bad.records[1].t = 0.7;
  CHECK_THROWS_AS(bad.validate({1, 1}, 2), ValidationError);
  bad = h;
  bad.records[0].j = 0;
  CHECK_THROWS_AS(bad.validate({1, 1}, 2), ValidationError);
}

TEST_CASE("Boltzmann pseudo-trajectory single adjunction") {
  const Configuration z = one_of_each();
  const std::array<double, 2> m{1.0, 3.0};
  CollisionHistory h;
  h.t0 = 1.0;
  const VectorXd vn = vec(-0.6, 0.3);
  h.records.push_back(record(Species::A, Species::B, 1, -1, vec(1, 0.5), vn, 0.4));

  SUBCASE("k = 0 is free flight") {
    CollisionHistory e;
    e.t0 = 1.0;
    const auto p = build_boltzmann_pseudo(z, e, m);
    REQUIRE(p.stages.size() == 2);
    CHECK(p.stages[0] == z);
    Configuration f = z;
    f.free_flight(-1.0);
    CHECK(p.stages[1] == f);
  }
  SUBCASE("j = -1 keeps velocities, shares position") {
    const auto p = build_boltzmann_pseudo(z, h, m);
    REQUIRE(p.stages.size() == 3);
    const auto& a = p.after[0];
    CHECK(a.x(Species::B, 1) == a.x(Species::A, 0));
    CHECK(a.v(Species::B, 1) == vn);
    CHECK(a.v(Species::A, 0) == z.v(Species::A, 0));
    CHECK(p.stages[2].count(Species::B) == 2);
    CHECK(p.adjunctions[0].rate == doctest::Approx(h.records[0].omega.dot(vn - z.v(Species::A, 0))));
  }
  SUBCASE("j = +1 applies the collision law") {
    h.records[0].j = 1;
    const auto p = build_boltzmann_pseudo(z, h, m);
    const auto expect = collide(VectorXd(z.v(Species::A, 0)), vn, h.records[0].omega, m[0], m[1]);
    CHECK((p.after[0].v(Species::A, 0) - expect.first).norm() < 1e-15);
    CHECK((p.after[0].v(Species::B, 1) - expect.second).norm() < 1e-15);
  }
}

TEST_CASE("BBGKY pseudo-trajectory against the Boltzmann flavor") {
  const Configuration z = one_of_each();
  MixtureParams params;
  params.mass = {1.0, 2.0};
  CollisionHistory h;
  h.t0 = 1.0;
  h.records.push_back(record(Species::B, Species::A, 1, -1, vec(0.3, -1), vec(0.2, 0.9), 0.5));

  SUBCASE("zero diameters reproduce the Boltzmann flavor") {
    params.diameter = {0.0, 0.0};
    h.records.push_back(record(Species::A, Species::A, 2, 1, vec(-1, 0.2), vec(0.7, 0.0), 0.3));
    const auto b = build_boltzmann_pseudo(z, h, params.mass);
    const auto n = build_bbgky_pseudo(z, h, params);
    REQUIRE(b.stages.size() == n.stages.size());
    for (std::size_t i = 0; i < b.stages.size(); ++i) CHECK(b.stages[i] == n.stages[i]);
  }
  SUBCASE("offset has length eps and velocities match bitwise") {
    params.diameter = {0.02, 0.04};
    const auto b = build_boltzmann_pseudo(z, h, params.mass);
    const auto n = build_bbgky_pseudo(z, h, params);
    const double off = (n.after[0].x(Species::A, 1) - b.after[0].x(Species::A, 1)).norm();
    CHECK(off == doctest::Approx(0.03).epsilon(1e-12));
    for (std::size_t i = 0; i < b.stages.size(); ++i)
      for (Species s : kSpecies) CHECK(b.stages[i].velocities(s) == n.stages[i].velocities(s));
  }
}

TEST_CASE("pseudo-trajectory proximity bounds on random histories") {
  Rng rng = make_rng(11);
  MixtureParams params;
  params.mass = {1.0, 4.0};
  params.diameter = {0.01, 0.005};
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int k = trial % 7;
    std::array<Index, 2> s{1 + trial % 2, trial % 3};
    Configuration z(2, s);
    for (Species sp : kSpecies)
      for (Index i = 0; i < z.count(sp); ++i) {
        z.x(sp, i) = uniform_ball(rng, 2, 3.0);
        z.v(sp, i) = uniform_ball(rng, 2, 2.0);
      }
    const auto h = random_history(s, k, 1.5, 0.0, 2.0, 2, rng);
    const auto b = build_boltzmann_pseudo(z, h, params.mass);
    const auto n = build_bbgky_pseudo(z, h, params);
    const auto cmp = compare_pseudo(b, n, params.max_diameter());
    CHECK(cmp.ok);
    CHECK(cmp.stages.size() == static_cast<std::size_t>(k + 2));
    CHECK(cmp.stages.back().particles == s[0] + s[1] + k);
    ++checked;
  }
  CHECK(checked == 300);
  CHECK_THROWS_AS(compare_pseudo(build_boltzmann_pseudo(one_of_each(), {}, params.mass),
                                 build_boltzmann_pseudo(one_of_each(), {}, params.mass), 0.1),
                  ValidationError);
}

TEST_CASE("recollision filter") {
  MixtureParams params;
  params.diameter = {0.1, 0.1};
  SUBCASE("single particle is clean") {
    Rng rng = make_rng(5);
    Configuration z(2, 1, 0);
    z.v(Species::A, 0) = vec(1.0, 0.0);
    const auto h = random_history({1, 0}, 0, 1.0, 0.0, 2.0, 2, rng);
    CHECK(recollision_filter(build_bbgky_pseudo(z, h, params), params).clean);
  }
  SUBCASE("constructed counterexample") {
    // B sits in A's backward path.
    Configuration z(2, 1, 1);
    z.x(Species::A, 0) = vec(0.0, 0.0);
    z.v(Species::A, 0) = vec(1.0, 0.0);
    z.x(Species::B, 0) = vec(-1.0, 0.0);
    z.v(Species::B, 0) = vec(0.0, 0.0);
    CollisionHistory h;
    h.t0 = 2.0;
    const auto p = build_bbgky_pseudo(z, h, params);
    const auto r = recollision_filter(p, params);
    CHECK_FALSE(r.clean);
    CHECK(r.stage == 0);
    // Head-on adjunction, then a third particle in the way.
    Configuration w(2, 1, 1);
    w.x(Species::A, 0) = vec(0.0, 0.0);
    w.v(Species::A, 0) = vec(0.0, 0.0);
    w.x(Species::B, 0) = vec(5.0, 5.0);
    h.t0 = 1.0;
    // Post-collisional: the new particle moves away from its target backward in time.
    h.records = {record(Species::A, Species::A, 1, -1, vec(-1.0, 0.0), vec(-1.0, 0.0), 1.0)};
    const auto q = build_bbgky_pseudo(w, h, params);
    CHECK(recollision_filter(q, params).clean);
    w.x(Species::B, 0) = vec(0.6, 0.0);
    const auto q2 = build_bbgky_pseudo(w, h, params);
    const auto r2 = recollision_filter(q2, params);
    CHECK_FALSE(r2.clean);
    CHECK(r2.stage == 1);
  }
  SUBCASE("recollisions become rarer with eps") {
    std::vector<double> frac;
    for (double eps : {0.2, 0.1, 0.05}) {
      params.diameter = {eps, eps};
      Rng rng = make_rng(21);
      int bad = 0;
      const int n = 2000;
      for (int i = 0; i < n; ++i) {
        Configuration z(2, 1, 1);
        z.x(Species::B, 0) = uniform_ball(rng, 2, 1.0);
        z.v(Species::A, 0) = uniform_ball(rng, 2, 1.0);
        z.v(Species::B, 0) = uniform_ball(rng, 2, 1.0);
        const auto h = random_history({1, 1}, 3, 1.0, 0.0, 1.0, 2, rng);
        if (!recollision_filter(build_bbgky_pseudo(z, h, params), params).clean) ++bad;
      }
      frac.push_back(static_cast<double>(bad) / n);
    }
    MESSAGE("rejection " << frac[0] << " " << frac[1] << " " << frac[2]);
    CHECK(frac[0] > frac[1]);
    CHECK(frac[1] > frac[2]);
  }
}

TEST_CASE("Duhamel iterate basic properties") {
  DuhamelSpec spec;
  spec.s = {1, 1};
  spec.x_s = Configuration(2, 1, 1);
  spec.R = 3.0;
  spec.t = 0.4;
  spec.masses = {1.0, 2.0};
  spec.phi = [](const Configuration& z) { return 1.0 + 0.3 * z.v(Species::A, 0)[0]; };
  spec.samples = 3000;
  auto g = [](const Eigen::Ref<const VectorXd>& v) { return maxwell(0.6, 1.0, v); };
  auto h = [](const Eigen::Ref<const VectorXd>& v) { return maxwell(0.4, 2.0, v); };

  SUBCASE("zero data") {
    spec.k = 2;
    const auto e = duhamel_iterate([](const Configuration&) { return 0.0; }, spec);
    CHECK(e.mean == 0.0);
    CHECK(e.stderr_mean == 0.0);
  }
  SUBCASE("linear in the data") {
    spec.k = 2;
    spec.samples = 500;
    const auto f1 = tensor_data(g, h);
    const auto f2 = tensor_data(h, g);
    const auto a = duhamel_iterate(f1, spec), b = duhamel_iterate(f2, spec);
    const auto c = duhamel_iterate([&](const Configuration& z) { return 2.0 * f1(z) - 0.5 * f2(z); }, spec);
    CHECK(std::abs(c.mean - (2.0 * a.mean - 0.5 * b.mean)) <= 1e-12 * (std::abs(a.mean) + std::abs(b.mean)));
  }
  SUBCASE("thread count does not change the estimate") {
    spec.k = 1;
    spec.samples = 1000;
    const auto a = duhamel_iterate(tensor_data(g, h), spec);
    spec.threads = 3;
    const auto b = duhamel_iterate(tensor_data(g, h), spec);
    CHECK(a.mean == b.mean);
  }
  SUBCASE("k = 0 against quadrature") {
    // x-dependent data under free flight.
    spec.k = 0;
    spec.samples = 40000;
    spec.x_s.x(Species::A, 0) = vec(0.5, 0.0);
    const ObservableFunction f0 = [&](const Configuration& z) {
      return std::exp(-z.x(Species::A, 0).squaredNorm()) * g(z.v(Species::A, 0)) * h(z.v(Species::B, 0));
    };
    const auto e = duhamel_iterate(f0, spec);
    const auto vg = VelocityGrid::make(2, spec.R, 60);
    double qa = 0, qb = 0;
    for (Index j : vg.active) {
      const VectorXd v = vg.nodes.col(j);
      const VectorXd x = spec.x_s.x(Species::A, 0) - spec.t * v;
      qa += vg.weights[j] * (1.0 + 0.3 * v[0]) * std::exp(-x.squaredNorm()) * g(v);
      qb += vg.weights[j] * h(v);
    }
    MESSAGE("k=0 estimate " << e.mean << " +- " << e.stderr_mean << " quadrature " << qa * qb);
    CHECK(std::abs(e.mean - qa * qb) < 3 * e.stderr_mean + 1e-4 * qa * qb);
  }
  SUBCASE("k = 1 against direct collision quadrature") {
    // Homogeneous tensor data: the first iterate is t <phi, C(g x h)> with
    // every velocity kept inside B_R.
    spec.k = 1;
    spec.samples = 1000000;
    const GradScaling gs;
    const double R2 = spec.R * spec.R;
    VelocityFunction gt = [&](const Eigen::Ref<const VectorXd>& v) { return v.squaredNorm() > R2 ? 0.0 : g(v); };
    VelocityFunction ht = [&](const Eigen::Ref<const VectorXd>& v) { return v.squaredNorm() > R2 ? 0.0 : h(v); };
    const auto vg = VelocityGrid::make(2, spec.R, 32);
    const auto sq = SphereQuadrature::make(2, 48);
    double na_phi = 0, nb = 0, g_phi = 0, h1 = 0;
    for (Index j : vg.active) {
      const VectorXd v = vg.nodes.col(j);
      const double w = vg.weights[j], phi = 1.0 + 0.3 * v[0];
      for (Species b : kSpecies) {
        const auto& other = b == Species::A ? gt : ht;
        na_phi += w * phi * kernel_constant(gs, Species::A, b) * q_kernel(gt, other, Species::A, b, v, spec.masses, sq, vg);
        nb += w * kernel_constant(gs, Species::B, b) * q_kernel(ht, other, Species::B, b, v, spec.masses, sq, vg);
      }
      g_phi += w * phi * g(v);
      h1 += w * h(v);
    }
    const double ref = spec.t * (na_phi * h1 + g_phi * nb);
    const auto e = duhamel_iterate(tensor_data(g, h), spec);
    MESSAGE("k=1 estimate " << e.mean << " +- " << e.stderr_mean << " quadrature " << ref);
    CHECK(std::abs(e.mean - ref) < 3 * e.stderr_mean + 2e-3);
  }
}

TEST_CASE("BBGKY and Boltzmann iterates approach each other") {
  DuhamelSpec spec;
  spec.s = {1, 1};
  spec.x_s = Configuration(2, 1, 1);
  spec.x_s.x(Species::B, 0) = vec(1.0, 0.0);
  spec.k = 1;
  spec.R = 3.0;
  spec.t = 0.5;
  spec.masses = {1.0, 2.0};
  spec.samples = 4000;
  spec.seed = 9;
  spec.phi = [](const Configuration&) { return 1.0; };
  // Lipschitz in space.
  const ObservableFunction f0 = [](const Configuration& z) {
    double p = 1.0;
    for (Species s : kSpecies)
      for (Index i = 0; i < z.count(s); ++i)
        p *= std::exp(-0.5 * z.x(s, i).squaredNorm() - 0.5 * z.v(s, i).squaredNorm()) / (2 * std::numbers::pi);
    return p;
  };
  spec.flavor = PseudoFlavor::Boltzmann;
  const auto ref = duhamel_iterate(f0, spec);
  std::vector<double> gap, rej;
  for (Index n2 : {100, 400, 1600}) {
    DuhamelSpec b = spec;
    b.flavor = PseudoFlavor::Bbgky;
    b.realized = realize(b.scaling, n2);
    const auto e = duhamel_iterate(f0, b);
    gap.push_back(std::abs(e.mean - ref.mean));
    rej.push_back(e.rejected_fraction);
  }
  MESSAGE("rejected " << rej[0] << " " << rej[1] << " " << rej[2]);
  CHECK(rej[0] > rej[1]);
  CHECK(rej[1] > rej[2]);
  MESSAGE("flavor gaps " << gap[0] << " " << gap[1] << " " << gap[2]);
  CHECK(gap[0] > gap[1]);
  CHECK(gap[1] > gap[2]);
}
