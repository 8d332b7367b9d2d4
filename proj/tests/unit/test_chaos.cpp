#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "hsmix/chaos.hpp"

using namespace hsmix;
using Eigen::VectorXd;

namespace {

VectorXd vec(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

std::vector<Configuration> iid_ensemble(const GaussianBlob& g, const GaussianBlob& h, std::array<Index, 2> n,
                                        std::size_t M, std::uint64_t seed) {
  std::vector<Configuration> out;
  for (std::size_t m = 0; m < M; ++m) {
    Rng rng = make_rng(seed, m);
    Configuration z(2, n);
    for (Index i = 0; i < n[0]; ++i) g.sample(rng, z.x(Species::A, i), z.v(Species::A, i));
    for (Index i = 0; i < n[1]; ++i) h.sample(rng, z.x(Species::B, i), z.v(Species::B, i));
    out.push_back(std::move(z));
  }
  return out;
}

ObservableSpec pair_spec(VelocityTest a, VelocityTest b, double sigma = 0.5) {
  ObservableSpec s;
  s.s = {1, 1};
  s.factors = {std::move(a), std::move(b)};
  s.sigma = sigma;
  return s;
}

}  // namespace

TEST_CASE("velocity test functions") {
  const VectorXd v = vec(0.5, -2.0);
  CHECK(constant_test(3.0)(v) == 3.0);
  CHECK(monomial_test({1, 2})(v) == doctest::Approx(2.0));
  CHECK(gaussian_test(vec(0.5, -2.0), 0.7)(v) == 1.0);
  CHECK(box_test(vec(0, -3), vec(1, 0))(v) == 1.0);
  CHECK(box_test(vec(0, -1), vec(1, 0))(v) == 0.0);
  CHECK_THROWS_AS(monomial_test({3, 2}).validate(2), InvalidInput);
  const auto back = velocity_test_from_json(velocity_test_to_json(monomial_test({1, 2}, 0.5)), 2);
  CHECK(back(v) == doctest::Approx(1.0));
  CHECK_THROWS_AS(velocity_test_from_json(json{{"kind", "spline"}}, 2), InvalidInput);
}

TEST_CASE("marginal histogram") {
  HistogramSpec spec;
  spec.L = 2.0;
  spec.nx = 4;
  spec.R = 2.0;
  spec.nv = 4;
  SUBCASE("identical configurations fill one cell") {
    Configuration z(2, 1, 0);
    z.x(Species::A, 0) = vec(0.3, -0.4);
    z.v(Species::A, 0) = vec(1.1, 0.2);
    const auto est = estimate_marginal(std::vector<Configuration>(10, z), {1, 0}, spec);
    CHECK(est.weight.size() == 1);
    CHECK(est.mass() == doctest::Approx(1.0));
    CHECK_THROWS_AS(estimate_marginal({z}, {2, 0}, spec), ValidationError);
  }
  SUBCASE("out-of-range mass is reported") {
    Configuration z(2, 1, 0);
    z.x(Species::A, 0) = vec(3.0, 0.0);
    CHECK(estimate_marginal({z, z}, {1, 0}, spec).mass() == 0.0);
  }
  SUBCASE("relabeling invariance") {
    // Same ensemble with A labels reversed: chi-square of the two histograms.
    const auto g = maxwellian_blob(2, 0.7, 0.5, 1.0);
    auto ens = iid_ensemble(g, g, {3, 1}, 2000, 4);
    auto flipped = ens;
    for (auto& z : flipped) {
      z.positions(Species::A) = z.positions(Species::A).rowwise().reverse().eval();
      z.velocities(Species::A) = z.velocities(Species::A).rowwise().reverse().eval();
    }
    spec.nv = 2;
    spec.nx = 2;
    const auto a = estimate_marginal(ens, {1, 0}, spec, 1);
    const auto b = estimate_marginal(flipped, {1, 0}, spec, 2);
    double chi2 = 0;
    int dof = 0;
    for (const auto& [k, wa] : a.weight) {
      const double wb = b.weight.count(k) ? b.weight.at(k) : 0.0;
      if (wa + wb < 20) continue;
      chi2 += (wa - wb) * (wa - wb) / (wa + wb);
      ++dof;
    }
    MESSAGE("chi2 " << chi2 << " dof " << dof);
    // Each sample contributes averaged draws, so this is conservative.
    CHECK(chi2 < dof + 4 * std::sqrt(2.0 * dof));
  }
  SUBCASE("s = (1, 0) marginal converges to the sampler") {
    const auto g = maxwellian_blob(2, 0.8, 0.5, 1.0);
    spec.nx = 6;
    spec.nv = 6;
    std::vector<double> err;
    for (std::size_t M : {200, 2000, 20000}) {
      const auto est = estimate_marginal(iid_ensemble(g, g, {1, 0}, M, 8), {1, 0}, spec);
      // L1 distance of cell masses to the exact cell masses.
      double l1 = 0;
      const double hx = 2 * spec.L / spec.nx, hv = 2 * spec.R / spec.nv;
      auto cell_mass = [](double lo, double hi, double sd) {
        return 0.5 * (std::erf(hi / (sd * std::sqrt(2.0))) - std::erf(lo / (sd * std::sqrt(2.0))));
      };
      for (int a = 0; a < spec.nx; ++a)
        for (int b = 0; b < spec.nx; ++b)
          for (int c = 0; c < spec.nv; ++c)
            for (int e = 0; e < spec.nv; ++e) {
              const std::uint64_t key = a + spec.nx * (b + spec.nx * (c + spec.nv * static_cast<std::uint64_t>(e)));
              const double emp = est.weight.count(key) ? est.weight.at(key) / static_cast<double>(M) : 0.0;
              const double exact = cell_mass(-spec.L + a * hx, -spec.L + (a + 1) * hx, g.spatial_std) *
                                   cell_mass(-spec.L + b * hx, -spec.L + (b + 1) * hx, g.spatial_std) *
                                   cell_mass(-spec.R + c * hv, -spec.R + (c + 1) * hv, g.thermal_std) *
                                   cell_mass(-spec.R + e * hv, -spec.R + (e + 1) * hv, g.thermal_std);
              l1 += std::abs(emp - exact);
            }
      err.push_back(l1);
    }
    MESSAGE("L1 " << err[0] << " " << err[1] << " " << err[2]);
    CHECK(err[0] > err[1]);
    CHECK(err[1] > err[2]);
  }
  SUBCASE("consistency between s = (2, 0) and s = (1, 0)") {
    const auto g = maxwellian_blob(2, 0.8, 0.5, 1.0);
    const auto ens = iid_ensemble(g, g, {4, 0}, 3000, 6);
    spec.nx = 2;
    spec.nv = 2;
    spec.L = 3.0;
    spec.R = 3.0;
    const auto one = estimate_marginal(ens, {1, 0}, spec, 1);
    const auto two = estimate_marginal(ens, {2, 0}, spec, 2);
    // Sum the pair histogram over the second particle's cells.
    std::map<std::uint64_t, double> reduced;
    for (const auto& [k, w] : two.weight) reduced[k % 16] += w;
    for (const auto& [k, w] : one.weight) {
      const double r = reduced[k];
      const double se = std::sqrt(w * (1 - w / 3000.0));
      CHECK(std::abs(r - w) < 3 * std::sqrt(2.0) * se + 1e-9);
    }
  }
}

TEST_CASE("observables") {
  const auto g = maxwellian_blob(2, 1.0, 0.5, 1.0);
  const auto h = maxwellian_blob(2, 1.0, 0.5, 2.0);
  const auto ens = iid_ensemble(g, h, {20, 20}, 1500, 12);
  Configuration X(2, 1, 1);
  X.x(Species::A, 0) = vec(0.2, 0.0);
  X.x(Species::B, 0) = vec(-0.5, 0.6);
  SUBCASE("phi = 1 gives the local density") {
    const TensorReference ref(g, h, 0.0, VelocityGrid::make(2, 6.0, 48));
    const auto spec = pair_spec(constant_test(), constant_test());
    const double exact = g.spatial_density(X.x(Species::A, 0)) * h.spatial_density(X.x(Species::B, 0));
    CHECK(observable(ref.as_function(), spec, X) == doctest::Approx(exact).epsilon(1e-6));
    const auto est = ensemble_observable(ens, spec, X, 0.3);
    const double cell = cell_observable(ref.as_function(), spec, X, 0.3);
    MESSAGE("density " << est.mean << " +- " << est.stderr_mean << " cell ref " << cell);
    CHECK(std::abs(est.mean - cell) < 3 * est.stderr_mean);
  }
  SUBCASE("odd moment vanishes on symmetric data") {
    const auto est = ensemble_observable(ens, pair_spec(monomial_test({1, 0}), constant_test()), X, 0.3);
    CHECK(std::abs(est.mean) < 3 * est.stderr_mean);
  }
  SUBCASE("linear in phi") {
    HistogramSpec hs;
    hs.nx = 4;
    hs.nv = 4;
    const auto est = estimate_marginal(ens, {1, 1}, hs);
    auto a = pair_spec(monomial_test({2, 0}), constant_test());
    auto b = pair_spec(gaussian_test(vec(0, 0), 1.0), constant_test());
    auto c = pair_spec(monomial_test({2, 0}, 2.0), constant_test());
    const double ya = observable(est, a, X), yb = observable(est, b, X), yc = observable(est, c, X);
    CHECK(std::abs(yc - 2 * ya) <= 1e-12 * std::abs(ya));
    CHECK(yb > 0);
  }
  SUBCASE("separation is enforced") {
    Configuration close(2, 1, 1);
    close.x(Species::B, 0) = vec(0.1, 0.0);
    CHECK_THROWS_AS(ensemble_observable(ens, pair_spec(constant_test(), constant_test()), close, 0.2), DomainError);
  }
  SUBCASE("covariance of independent data is noise") {
    const auto c = pair_covariance(ens, monomial_test({2, 0}), monomial_test({2, 0}));
    CHECK(std::abs(c.mean) < 3 * c.stderr_mean);
  }
}

TEST_CASE("good configurations") {
  MixtureParams params;
  params.diameter = {0.1, 0.1};
  Configuration z(2, 2, 0);
  z.x(Species::A, 0) = vec(0, 0);
  z.x(Species::A, 1) = vec(1, 0);
  CHECK(good_config_check(z, 0.5, 0.0, 2.0, params) == GoodStatus::Good);
  CHECK(good_config_check(z, 0.0, 0.0, 2.0, params) == GoodStatus::Good);
  // Backward in time they approach head-on.
  z.v(Species::A, 0) = vec(-1, 0);
  z.v(Species::A, 1) = vec(1, 0);
  CHECK(good_config_check(z, 0.5, 0.0, 2.0, params) == GoodStatus::Bad);
  CHECK(good_config_check(z, 0.0, 0.0, 2.0, params) == GoodStatus::Good);
  CHECK(good_config_check(z, 0.5, 0.0, 0.1, params) == GoodStatus::Good);
}

TEST_CASE("conditioned sampler and ensembles") {
  GradScaling gs;
  const std::array<double, 2> m{1.0, 2.0};
  const auto g = maxwellian_blob(2, 1.0, 0.5, m[0]);
  const auto h = maxwellian_blob(2, 1.0, 0.5, m[1]);
  SUBCASE("tiny eps accepts everything") {
    RealizedScaling r = realize(gs, 1);
    r.eps = {1e-9, 1e-9};
    for (int k = 0; k < 50; ++k) {
      Rng rng = make_rng(1, static_cast<std::uint64_t>(k));
      CHECK(conditioned_initial_sampler(g, h, r, m, rng).attempts == 1);
    }
  }
  SUBCASE("partition estimate is nonincreasing in eps") {
    // Fixed N = (8, 8) with growing diameters.
    std::vector<double> acc;
    for (double eps : {0.05, 0.1, 0.2}) {
      RealizedScaling r = realize(gs, 8);
      r.eps = {eps, eps};
      double a = 0;
      for (int k = 0; k < 300; ++k) {
        Rng rng = make_rng(40, static_cast<std::uint64_t>(k));
        a += conditioned_initial_sampler(g, h, r, m, rng).acceptance();
      }
      acc.push_back(a / 300);
    }
    MESSAGE("acceptance " << acc[0] << " " << acc[1] << " " << acc[2]);
    CHECK(acc[0] >= acc[1]);
    CHECK(acc[1] >= acc[2]);
  }
  SUBCASE("mean free time matches the symmetric closed form") {
    // Equal blobs, b = 1: rate = 2 c kappa E|u| / (4 pi), E|u| = sqrt(pi) sd for u ~ N(0, sd^2 I_2).
    const auto e = maxwellian_blob(2, 1.0, 0.5, 1.0);
    const double sd = std::sqrt(2.0) * e.thermal_std;
    const double rate = 2.0 * 2.0 * std::sqrt(std::numbers::pi) / std::sqrt(2.0) * sd / (4 * std::numbers::pi);
    CHECK(mean_free_time(gs, e, e) == doctest::Approx(1.0 / rate).epsilon(1e-5));
  }
  SUBCASE("ensembles are deterministic and thread independent") {
    const auto r = realize(gs, 16);
    const auto a = run_ensemble(g, h, r, m, 0.5, 20, 3, 1);
    const auto b = run_ensemble(g, h, r, m, 0.5, 20, 3, 2);
    REQUIRE(a.members.size() == b.members.size());
    for (std::size_t i = 0; i < a.members.size(); ++i) CHECK(a.members[i] == b.members[i]);
    CHECK(a.collisions > 0);
  }
}

TEST_CASE("chaos metric at t = 0 is estimation noise") {
  GradScaling gs;
  const std::array<double, 2> m{1.0, 2.0};
  const auto g = maxwellian_blob(2, 1.0, 0.5, m[0]);
  const auto h = maxwellian_blob(2, 1.0, 0.5, m[1]);
  const TensorReference ref(g, h, 0.0, VelocityGrid::make(2, 6.0, 40));
  const auto probes = latin_hypercube_probes({1, 1}, 2, 16, 1.2, 0.6, 2);
  for (const auto& p : probes) CHECK_NOTHROW(check_separated(p, 0.6));
  std::vector<Ensemble> ens;
  for (std::size_t M : {250, 1000, 4000}) {
    Ensemble e;
    e.realized = realize(gs, 10);
    e.realized.n = {10, static_cast<Index>(M)};  // ordering key only
    e.members = iid_ensemble(g, h, {10, 10}, M, 30);
    ens.push_back(std::move(e));
  }
  const auto table = chaos_metric(ens, ref.as_function(), {pair_spec(constant_test(), monomial_test({2, 0}), 0.6)},
                                  probes, 0.3, constant_test(), constant_test());
  REQUIRE(table.rows.size() == 3);
  MESSAGE("gaps " << table.rows[0].gap << " " << table.rows[1].gap << " " << table.rows[2].gap);
  CHECK(table.monotone[0]);
  for (const auto& r : table.rows) CHECK(r.gap < 4 * r.stderr_gap + 1e-3);
  std::ostringstream os;
  write_chaos_csv(os, table);
  CHECK(os.str().rfind("N1,N2,eps1,eps2,spec_id,t,gap,stderr\n", 0) == 0);
  ens[1].t = 1.0;
  CHECK_THROWS_AS(chaos_metric(ens, ref.as_function(), {}, probes, 0.3, constant_test(), constant_test()),
                  ValidationError);
}
