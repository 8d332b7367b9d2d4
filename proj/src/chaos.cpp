#include "hsmix/chaos.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "hsmix/parallel.hpp"
#include "hsmix/quadrature.hpp"

namespace hsmix {

void HistogramSpec::validate() const {
  if (!(L > 0) || !(R > 0)) throw InvalidInput("histogram: L and R must be positive");
  if (nx < 1 || nv < 1) throw InvalidInput("histogram: bin counts must be positive");
  if (permutations < 1) throw InvalidInput("histogram: permutations must be positive");
}

double MarginalEstimate::mass() const {
  if (samples == 0) return 0.0;
  double m = 0.0;
  for (const auto& [k, w] : weight) m += w;
  return m / static_cast<double>(samples);
}

double MarginalEstimate::cell_volume() const {
  const double hx = 2 * spec.L / spec.nx, hv = 2 * spec.R / spec.nv;
  return std::pow(hx * hv, dim * static_cast<double>(s[0] + s[1]));
}

std::vector<int> MarginalEstimate::decode(std::uint64_t key) const {
  const int per = 2 * dim;
  const int n = per * static_cast<int>(s[0] + s[1]);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    const int radix = (c % per) < dim ? spec.nx : spec.nv;
    out[static_cast<std::size_t>(c)] = static_cast<int>(key % static_cast<std::uint64_t>(radix));
    key /= static_cast<std::uint64_t>(radix);
  }
  return out;
}

namespace {

int bin_of(double y, double half, int n) {
  const double u = (y + half) / (2 * half);
  if (!(u >= 0.0) || u >= 1.0) return -1;
  return std::min(static_cast<int>(u * n), n - 1);
}

double bin_centre(int k, double half, int n) { return -half + (k + 0.5) * 2 * half / n; }

// Draws `count` distinct indices out of n, in random order.
std::vector<Index> pick_distinct(Index n, Index count, Rng& rng) {
  std::vector<Index> idxs(static_cast<std::size_t>(n));
  std::iota(idxs.begin(), idxs.end(), Index{0});
  for (Index i = 0; i < count; ++i) {
    const Index j = i + std::min<Index>(static_cast<Index>(uniform01(rng) * static_cast<double>(n - i)), n - i - 1);
    std::swap(idxs[static_cast<std::size_t>(i)], idxs[static_cast<std::size_t>(j)]);
  }
  idxs.resize(static_cast<std::size_t>(count));
  return idxs;
}

}  // namespace

MarginalEstimate estimate_marginal(const std::vector<Configuration>& ensemble, std::array<Index, 2> s,
                                   const HistogramSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (s[0] < 0 || s[1] < 0 || s[0] + s[1] < 1) throw InvalidInput("estimate_marginal: s must be nonempty");
  MarginalEstimate est;
  est.s = s;
  est.spec = spec;
  est.samples = ensemble.size();
  if (ensemble.empty()) return est;
  const int d = ensemble.front().dim();
  est.dim = d;
  const double bits = 2.0 * d * static_cast<double>(s[0] + s[1]) * std::log2(std::max(spec.nx, spec.nv));
  if (bits > 63) throw InvalidInput("estimate_marginal: histogram too fine to index");
  const double w = 1.0 / spec.permutations;
  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    const Configuration& z = ensemble[m];
    if (z.dim() != d) throw ValidationError("estimate_marginal: mixed dimensions");
    for (Species sp : kSpecies)
      if (z.count(sp) < s[idx(sp)]) throw ValidationError("estimate_marginal: sample has too few particles");
    Rng rng = make_rng(seed, m);
    for (int p = 0; p < spec.permutations; ++p) {
      std::uint64_t key = 0, mult = 1;
      bool inside = true;
      for (Species sp : kSpecies) {
        for (Index i : pick_distinct(z.count(sp), s[idx(sp)], rng)) {
          for (int k = 0; k < d && inside; ++k) {
            const int b = bin_of(z.x(sp, i)[k], spec.L, spec.nx);
            inside = b >= 0;
            key += mult * static_cast<std::uint64_t>(std::max(b, 0));
            mult *= static_cast<std::uint64_t>(spec.nx);
          }
          for (int k = 0; k < d && inside; ++k) {
            const int b = bin_of(z.v(sp, i)[k], spec.R, spec.nv);
            inside = b >= 0;
            key += mult * static_cast<std::uint64_t>(std::max(b, 0));
            mult *= static_cast<std::uint64_t>(spec.nv);
          }
        }
      }
      if (inside) est.weight[key] += w;
    }
  }
  return est;
}

double VelocityTest::operator()(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  switch (kind) {
    case Kind::Constant: return scale;
    case Kind::Polynomial: {
      double sum = 0.0;
      for (const auto& t : terms) {
        double p = t.coefficient;
        for (std::size_t k = 0; k < t.exponents.size(); ++k) p *= std::pow(v[static_cast<Index>(k)], t.exponents[k]);
        sum += p;
      }
      return scale * sum;
    }
    case Kind::Gaussian: return scale * std::exp(-0.5 * (v - center).squaredNorm() / (width * width));
    case Kind::Box:
      return ((v.array() >= lo.array()).all() && (v.array() <= hi.array()).all()) ? scale : 0.0;
  }
  return 0.0;
}

void VelocityTest::validate(int d) const {
  switch (kind) {
    case Kind::Constant: break;
    case Kind::Polynomial:
      if (terms.empty()) throw InvalidInput("polynomial test: no terms");
      for (const auto& t : terms) {
        if (static_cast<int>(t.exponents.size()) != d) throw InvalidInput("polynomial test: one exponent per axis");
        if (std::any_of(t.exponents.begin(), t.exponents.end(), [](int e) { return e < 0; }) ||
            std::accumulate(t.exponents.begin(), t.exponents.end(), 0) > 4)
          throw InvalidInput("polynomial test: degree must be 0..4");
      }
      break;
    case Kind::Gaussian:
      if (center.size() != d || !(width > 0)) throw InvalidInput("gaussian test: bad center or width");
      break;
    case Kind::Box:
      if (lo.size() != d || hi.size() != d || !(lo.array() <= hi.array()).all())
        throw InvalidInput("box test: bad bounds");
      break;
  }
}

std::string VelocityTest::label() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::Constant: os << "const(" << fmt_double(scale) << ")"; break;
    case Kind::Polynomial:
      os << "poly(";
      for (std::size_t i = 0; i < terms.size(); ++i) {
        os << (i ? "+" : "") << fmt_double(terms[i].coefficient) << "v^";
        for (std::size_t k = 0; k < terms[i].exponents.size(); ++k) os << (k ? "," : "") << terms[i].exponents[k];
      }
      os << ")";
      break;
    case Kind::Gaussian: os << "gauss(" << fmt_double(width) << ")"; break;
    case Kind::Box: os << "box"; break;
  }
  return os.str();
}

VelocityTest constant_test(double c) {
  VelocityTest t;
  t.scale = c;
  return t;
}

VelocityTest monomial_test(std::vector<int> exponents, double scale) {
  VelocityTest t = polynomial_test({{1.0, std::move(exponents)}});
  t.scale = scale;
  return t;
}

VelocityTest polynomial_test(std::vector<VelocityTest::Term> terms) {
  VelocityTest t;
  t.kind = VelocityTest::Kind::Polynomial;
  t.terms = std::move(terms);
  return t;
}

VelocityTest energy_test(int d) {
  std::vector<VelocityTest::Term> terms;
  for (int k = 0; k < d; ++k) {
    std::vector<int> e(static_cast<std::size_t>(d), 0);
    e[static_cast<std::size_t>(k)] = 2;
    terms.push_back({1.0, e});
  }
  return polynomial_test(std::move(terms));
}

VelocityTest gaussian_test(Eigen::VectorXd center, double width) {
  VelocityTest t;
  t.kind = VelocityTest::Kind::Gaussian;
  t.center = std::move(center);
  t.width = width;
  return t;
}

VelocityTest box_test(Eigen::VectorXd lo, Eigen::VectorXd hi) {
  VelocityTest t;
  t.kind = VelocityTest::Kind::Box;
  t.lo = std::move(lo);
  t.hi = std::move(hi);
  return t;
}

json velocity_test_to_json(const VelocityTest& t) {
  json j{{"scale", t.scale}};
  switch (t.kind) {
    case VelocityTest::Kind::Constant: j["kind"] = "constant"; break;
    case VelocityTest::Kind::Polynomial: {
      j["kind"] = "polynomial";
      json terms = json::array();
      for (const auto& term : t.terms) terms.push_back({{"coefficient", term.coefficient}, {"exponents", term.exponents}});
      j["terms"] = terms;
      break;
    }
    case VelocityTest::Kind::Gaussian:
      j["kind"] = "gaussian";
      j["center"] = to_json_vector(t.center);
      j["width"] = t.width;
      break;
    case VelocityTest::Kind::Box:
      j["kind"] = "box";
      j["lo"] = to_json_vector(t.lo);
      j["hi"] = to_json_vector(t.hi);
      break;
  }
  return j;
}

VelocityTest velocity_test_from_json(const json& j, int d) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    VelocityTest t;
    if (kind == "constant") {
      t = constant_test();
    } else if (kind == "monomial") {
      t = monomial_test(j.at("exponents").get<std::vector<int>>());
    } else if (kind == "polynomial") {
      std::vector<VelocityTest::Term> terms;
      for (const auto& term : j.at("terms"))
        terms.push_back({term.value("coefficient", 1.0), term.at("exponents").get<std::vector<int>>()});
      t = polynomial_test(std::move(terms));
    } else if (kind == "energy") {
      t = energy_test(d);
    } else if (kind == "gaussian") {
      t = gaussian_test(j.contains("center") ? vector_from_json(j.at("center"), d) : Eigen::VectorXd::Zero(d),
                        j.value("width", 1.0));
    } else if (kind == "box") {
      t = box_test(vector_from_json(j.at("lo"), d), vector_from_json(j.at("hi"), d));
    } else {
      throw InvalidInput("test function kind: unknown '" + kind + "'");
    }
    t.scale = j.value("scale", 1.0);
    t.validate(d);
    return t;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("test function: ") + e.what());
  }
}

double ObservableSpec::phi(const Configuration& z) const {
  double p = 1.0;
  std::size_t k = 0;
  for (Species sp : kSpecies)
    for (Index i = 0; i < s[idx(sp)]; ++i) p *= factors[k++](z.v(sp, i));
  return p;
}

void ObservableSpec::validate(int d) const {
  if (s[0] < 0 || s[1] < 0 || s[0] + s[1] < 1) throw InvalidInput("observable: s must be nonempty");
  if (static_cast<Index>(factors.size()) != s[0] + s[1]) throw InvalidInput("observable: one factor per particle");
  if (!(sigma >= 0)) throw InvalidInput("observable: sigma must be nonnegative");
  for (const auto& f : factors) f.validate(d);
}

std::string ObservableSpec::label() const {
  std::string out;
  for (std::size_t k = 0; k < factors.size(); ++k) out += (k ? "*" : "") + factors[k].label();
  return out;
}

void check_separated(const Configuration& x_s, double sigma) {
  bool ok = true;
  for_each_pair(x_s, [&](ParticleRef p, ParticleRef q) {
    if ((x_s.x(p) - x_s.x(q)).norm() <= sigma) ok = false;
  });
  if (!ok) throw DomainError("observable: probe points are not sigma-separated");
}

double observable(const MarginalEstimate& est, const ObservableSpec& spec, const Configuration& x_s) {
  spec.validate(est.dim);
  if (x_s.counts() != est.s || spec.s != est.s) throw InvalidInput("observable: s mismatch");
  check_separated(x_s, spec.sigma);
  if (est.samples == 0) return 0.0;
  const int d = est.dim;
  const int per = 2 * d;
  std::vector<int> xbins;
  for (Species sp : kSpecies)
    for (Index i = 0; i < x_s.count(sp); ++i)
      for (int k = 0; k < d; ++k) {
        const int b = bin_of(x_s.x(sp, i)[k], est.spec.L, est.spec.nx);
        if (b < 0) return 0.0;
        xbins.push_back(b);
      }
  const Index n = est.s[0] + est.s[1];
  Configuration vz(d, est.s);
  double sum = 0.0;
  for (const auto& [key, w] : est.weight) {
    const auto c = est.decode(key);
    bool match = true;
    for (Index p = 0; p < n && match; ++p)
      for (int k = 0; k < d && match; ++k)
        match = c[static_cast<std::size_t>(p * per + k)] == xbins[static_cast<std::size_t>(p * d + k)];
    if (!match) continue;
    Index p = 0;
    for (Species sp : kSpecies)
      for (Index i = 0; i < est.s[idx(sp)]; ++i, ++p)
        for (int k = 0; k < d; ++k)
          vz.v(sp, i)[k] = bin_centre(c[static_cast<std::size_t>(p * per + d + k)], est.spec.R, est.spec.nv);
    sum += w * spec.phi(vz);
  }
  const double hx = 2 * est.spec.L / est.spec.nx;
  return sum / (static_cast<double>(est.samples) * std::pow(hx, d * static_cast<double>(n)));
}

double observable(const OneParticleMoment& moment, const ObservableSpec& spec, const Configuration& x_s) {
  spec.validate(x_s.dim());
  if (x_s.counts() != spec.s) throw InvalidInput("observable: s mismatch");
  check_separated(x_s, spec.sigma);
  double p = 1.0;
  std::size_t k = 0;
  for (Species sp : kSpecies)
    for (Index i = 0; i < spec.s[idx(sp)]; ++i) p *= moment(sp, x_s.x(sp, i), spec.factors[k++]);
  return p;
}

namespace {

// Three-point Gauss-Legendre average over the cube of half-width h.
double cube_average(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& c, double h) {
  static constexpr double node[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
  static constexpr double wt[3] = {5.0 / 18, 8.0 / 18, 5.0 / 18};
  const int d = static_cast<int>(c.size());
  int total = 1;
  for (int k = 0; k < d; ++k) total *= 3;
  double sum = 0.0;
  Eigen::VectorXd y(d);
  for (int flat = 0; flat < total; ++flat) {
    double w = 1.0;
    int r = flat;
    for (int k = 0; k < d; ++k, r /= 3) {
      y[k] = c[k] + h * node[r % 3];
      w *= wt[r % 3];
    }
    sum += w * f(y);
  }
  return sum;
}

}  // namespace

double cell_observable(const OneParticleMoment& moment, const ObservableSpec& spec, const Configuration& x_s,
                       double h) {
  spec.validate(x_s.dim());
  if (x_s.counts() != spec.s) throw InvalidInput("observable: s mismatch");
  check_separated(x_s, spec.sigma);
  if (!(h > 0)) return observable(moment, spec, x_s);
  double p = 1.0;
  std::size_t k = 0;
  for (Species sp : kSpecies)
    for (Index i = 0; i < spec.s[idx(sp)]; ++i) {
      const VelocityTest& phi = spec.factors[k++];
      p *= cube_average([&](const Eigen::VectorXd& y) { return moment(sp, y, phi); }, x_s.x(sp, i), h);
    }
  return p;
}

namespace {

struct Candidate {
  Index index;
  double value;
};

// Sum over ordered tuples of distinct particles, one per slot.
double tuple_sum(const std::vector<std::vector<Candidate>>& slots, const std::vector<Species>& species,
                 std::size_t k, std::vector<std::pair<Species, Index>>& used) {
  if (k == slots.size()) return 1.0;
  double sum = 0.0;
  for (const auto& c : slots[k]) {
    const bool taken = std::any_of(used.begin(), used.end(),
                                   [&](const auto& u) { return u.first == species[k] && u.second == c.index; });
    if (taken) continue;
    used.emplace_back(species[k], c.index);
    sum += c.value * tuple_sum(slots, species, k + 1, used);
    used.pop_back();
  }
  return sum;
}

ObservableSample mean_and_error(const std::vector<double>& x) {
  ObservableSample out;
  const double n = static_cast<double>(x.size());
  if (x.empty()) return out;
  out.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - out.mean) * (v - out.mean);
    out.stderr_mean = std::sqrt(ss / (n - 1) / n);
  }
  return out;
}

}  // namespace

ObservableSample ensemble_observable(const std::vector<Configuration>& ensemble, const ObservableSpec& spec,
                                     const Configuration& x_s, double h) {
  if (ensemble.empty()) return {};
  const int d = x_s.dim();
  spec.validate(d);
  if (x_s.counts() != spec.s) throw InvalidInput("ensemble_observable: s mismatch");
  if (!(h > 0)) throw InvalidInput("ensemble_observable: cell half-width must be positive");
  check_separated(x_s, spec.sigma);
  std::vector<Species> species;
  std::vector<Eigen::VectorXd> centres;
  for (Species sp : kSpecies)
    for (Index i = 0; i < spec.s[idx(sp)]; ++i) {
      species.push_back(sp);
      centres.emplace_back(x_s.x(sp, i));
    }
  const double vol = std::pow(2 * h, d * static_cast<double>(species.size()));
  std::vector<double> values;
  values.reserve(ensemble.size());
  for (const auto& z : ensemble) {
    double tuples = 1.0;
    for (Species sp : kSpecies) {
      if (z.count(sp) < spec.s[idx(sp)]) throw ValidationError("ensemble_observable: sample has too few particles");
      for (Index j = 0; j < spec.s[idx(sp)]; ++j) tuples *= static_cast<double>(z.count(sp) - j);
    }
    std::vector<std::vector<Candidate>> slots(species.size());
    for (std::size_t k = 0; k < species.size(); ++k) {
      const auto& X = z.positions(species[k]);
      for (Index i = 0; i < X.cols(); ++i)
        if (((X.col(i) - centres[k]).array().abs() <= h).all())
          slots[k].push_back({i, spec.factors[k](z.v(species[k], i))});
    }
    std::vector<std::pair<Species, Index>> used;
    values.push_back(tuple_sum(slots, species, 0, used) / (tuples * vol));
  }
  return mean_and_error(values);
}

ObservableSample pair_covariance(const std::vector<Configuration>& ensemble, const VelocityTest& phi1,
                                 const VelocityTest& phi2) {
  const std::size_t M = ensemble.size();
  if (M < 2) throw InvalidInput("pair_covariance: need at least two samples");
  std::vector<double> a(M), b(M);
  for (std::size_t m = 0; m < M; ++m) {
    const auto& z = ensemble[m];
    if (z.count(Species::A) < 1 || z.count(Species::B) < 1)
      throw ValidationError("pair_covariance: both species must be present");
    double sa = 0, sb = 0;
    for (Index i = 0; i < z.count(Species::A); ++i) sa += phi1(z.v(Species::A, i));
    for (Index j = 0; j < z.count(Species::B); ++j) sb += phi2(z.v(Species::B, j));
    a[m] = sa / static_cast<double>(z.count(Species::A));
    b[m] = sb / static_cast<double>(z.count(Species::B));
  }
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(M);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(M);
  std::vector<double> prod(M);
  for (std::size_t m = 0; m < M; ++m) prod[m] = (a[m] - ma) * (b[m] - mb);
  ObservableSample out = mean_and_error(prod);
  const double bessel = static_cast<double>(M) / static_cast<double>(M - 1);
  out.mean *= bessel;
  out.stderr_mean *= bessel;
  return out;
}

std::string_view good_status_name(GoodStatus s) {
  switch (s) {
    case GoodStatus::Good: return "good";
    case GoodStatus::Bad: return "bad";
    case GoodStatus::Indeterminate: return "indeterminate";
  }
  return "?";
}

namespace {

double min_separation(const Configuration& z) {
  double m = std::numeric_limits<double>::infinity();
  for_each_pair(z, [&](ParticleRef p, ParticleRef q) { m = std::min(m, (z.x(p) - z.x(q)).norm()); });
  return m;
}

double max_speed(const Configuration& z) {
  double m = 0.0;
  for (Species s : kSpecies)
    if (z.count(s)) m = std::max(m, z.velocities(s).colwise().norm().maxCoeff());
  return m;
}

}  // namespace

GoodStatus good_config_check(const Configuration& z, double theta, double t0, double horizon,
                             const MixtureParams& params, double step) {
  if (!(theta >= 0) || !(t0 >= 0) || !(horizon >= t0)) throw InvalidInput("good_config_check: need 0 <= t0 <= horizon");
  AdvanceOptions opt;
  opt.record_events = false;
  Configuration cur = z;
  if (t0 > 0) {
    auto r = advance(cur, -t0, params, opt);
    if (!r.ok()) return GoodStatus::Indeterminate;
    cur = std::move(r.final);
  }
  double t = t0;
  for (;;) {
    if (cur.total() > 1 && !(min_separation(cur) > theta)) return GoodStatus::Bad;
    if (t >= horizon) return GoodStatus::Good;
    const double vmax = max_speed(cur);
    double dt = step > 0 ? step : (theta > 0 && vmax > 0 ? theta / (4 * vmax) : horizon - t);
    dt = std::min(dt, horizon - t);
    auto r = advance(cur, -dt, params, opt);
    if (!r.ok()) return GoodStatus::Indeterminate;
    cur = std::move(r.final);
    t = horizon - t <= dt ? horizon : t + dt;
  }
}

SampledConfiguration conditioned_initial_sampler(const GaussianBlob& g0, const GaussianBlob& h0,
                                                 const RealizedScaling& realized, const std::array<double, 2>& masses,
                                                 Rng& rng, double acceptance_floor) {
  g0.validate();
  h0.validate();
  if (g0.dim() != realized.scaling.dim || h0.dim() != realized.scaling.dim)
    throw InvalidInput("conditioned sampler: blob dimension differs from the scaling");
  return sample_configuration(ProductSampler{g0.sampler(), h0.sampler()}, realized.params(masses), realized.n, SimBox{},
                              rng, acceptance_floor);
}

namespace {

// E|u| for u ~ N(mu, s^2 I) by midpoint quadrature.
double mean_abs_gaussian(const Eigen::VectorXd& mu, double s) {
  const int d = static_cast<int>(mu.size());
  const int n = d == 2 ? 160 : (d == 3 ? 64 : 24);
  const double half = 7.0 * s, h = 2 * half / n;
  Index total = 1;
  for (int k = 0; k < d; ++k) total *= n;
  double sum = 0.0, norm = 0.0;
  Eigen::VectorXd y(d);
  for (Index flat = 0; flat < total; ++flat) {
    Index r = flat;
    for (int k = 0; k < d; ++k, r /= n) y[k] = -half + (static_cast<double>(r % n) + 0.5) * h;
    const double w = std::exp(-0.5 * y.squaredNorm() / (s * s));
    sum += w * (y + mu).norm();
    norm += w;
  }
  return sum / norm;
}

}  // namespace

double mean_free_time(const GradScaling& scaling, const GaussianBlob& g0, const GaussianBlob& h0) {
  scaling.validate();
  g0.validate();
  h0.validate();
  const int d = scaling.dim;
  if (g0.dim() != d || h0.dim() != d) throw InvalidInput("mean_free_time: dimension mismatch");
  const std::array<const GaussianBlob*, 2> blob{&g0, &h0};
  const double kappa = half_sphere_moment(d);
  // N1 / N2 along the scaling.
  const double ratio = scaling.c1 / scaling.c2 * std::pow(scaling.b, 1 - d);
  const std::array<double, 2> frac{ratio / (1 + ratio), 1 / (1 + ratio)};
  double rate = 0.0;
  for (Species a : kSpecies) {
    double nu = 0.0;
    for (Species b : kSpecies) {
      const GaussianBlob& A = *blob[idx(a)];
      const GaussianBlob& B = *blob[idx(b)];
      const double overlap =
          gaussian_pdf(A.center - B.center, std::sqrt(A.spatial_std * A.spatial_std + B.spatial_std * B.spatial_std));
      const double rel = mean_abs_gaussian(
          A.drift - B.drift, std::sqrt(A.thermal_std * A.thermal_std + B.thermal_std * B.thermal_std));
      nu += kernel_constant(scaling, a, b) * kappa * rel * overlap;
    }
    rate += frac[idx(a)] * nu;
  }
  return 1.0 / rate;
}

Ensemble run_ensemble(const GaussianBlob& g0, const GaussianBlob& h0, const RealizedScaling& realized,
                      const std::array<double, 2>& masses, double t, std::size_t members, std::uint64_t seed,
                      int threads) {
  if (!(t >= 0)) throw InvalidInput("run_ensemble: t must be nonnegative");
  const MixtureParams params = realized.params(masses);
  std::vector<std::optional<Configuration>> slot(members);
  std::vector<double> acceptance(members, 0.0);
  std::vector<std::uint64_t> collisions(members, 0);
  AdvanceOptions opt;
  opt.record_events = false;
  parallel_for(members, threads, [&](std::size_t m) {
    Rng rng = make_rng(seed, m);
    const auto sampled = conditioned_initial_sampler(g0, h0, realized, masses, rng);
    acceptance[m] = sampled.acceptance();
    auto r = advance(sampled.z, t, params, opt);
    collisions[m] = r.event_count;
    if (r.ok()) slot[m] = std::move(r.final);
  });
  Ensemble e;
  e.realized = realized;
  e.t = t;
  for (std::size_t m = 0; m < members; ++m) {
    if (slot[m])
      e.members.push_back(std::move(*slot[m]));
    else
      ++e.pathological;
    e.mean_acceptance += acceptance[m];
    e.collisions += collisions[m];
  }
  if (members) e.mean_acceptance /= static_cast<double>(members);
  return e;
}

TensorReference::TensorReference(GaussianBlob g0, GaussianBlob h0, double t, VelocityGrid quadrature,
                                 std::optional<GridDensityPair> collision_part)
    : blobs_{std::move(g0), std::move(h0)}, t_(t), quad_(std::move(quadrature)), collision_(std::move(collision_part)) {
  for (const auto& b : blobs_) {
    b.validate();
    if (b.dim() != quad_.dim) throw InvalidInput("reference: blob and quadrature dimensions differ");
  }
  if (collision_ && collision_->grid.dim() != quad_.dim) throw InvalidInput("reference: PDE grid dimension differs");
}

double TensorReference::moment(Species s, const Eigen::Ref<const Eigen::VectorXd>& x, const VelocityTest& phi) const {
  const GaussianBlob& b = blobs_[idx(s)];
  double sum = 0.0;
  for (Index j : quad_.active) {
    const auto v = quad_.nodes.col(j);
    sum += quad_.weights[j] * phi(v) * b.spatial_density(x - t_ * v) * b.velocity_density(v);
  }
  if (collision_) {
    const VelocityGrid& vg = collision_->grid.velocity;
    for (Index j : vg.active) {
      const auto v = vg.nodes.col(j);
      sum += vg.weights[j] * phi(v) * collision_->evaluate(s, x, v);
    }
  }
  return sum;
}

OneParticleMoment TensorReference::as_function() const {
  return [self = *this](Species s, const Eigen::Ref<const Eigen::VectorXd>& x, const VelocityTest& phi) {
    return self.moment(s, x, phi);
  };
}

std::vector<Configuration> latin_hypercube_probes(std::array<Index, 2> s, int d, std::size_t count, double a,
                                                  double sigma, std::uint64_t seed) {
  if (!(a > 0) || count == 0) throw InvalidInput("probes: need a > 0 and count > 0");
  const Index n = s[0] + s[1];
  const int D = d * static_cast<int>(n);
  Rng rng = make_rng(seed, 0);
  std::vector<std::vector<std::size_t>> perm(static_cast<std::size_t>(D));
  for (auto& p : perm) {
    p.resize(count);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = count; i > 1; --i)
      std::swap(p[i - 1], p[std::min<std::size_t>(static_cast<std::size_t>(uniform01(rng) * i), i - 1)]);
  }
  std::vector<Configuration> out;
  for (std::size_t i = 0; i < count; ++i) {
    Configuration z(d, s);
    auto fill = [&](bool stratified) {
      int c = 0;
      for (Species sp : kSpecies)
        for (Index p = 0; p < s[idx(sp)]; ++p)
          for (int k = 0; k < d; ++k, ++c) {
            const double u = stratified ? (static_cast<double>(perm[static_cast<std::size_t>(c)][i]) + uniform01(rng)) /
                                              static_cast<double>(count)
                                        : uniform01(rng);
            z.x(sp, p)[k] = -a + 2 * a * u;
          }
    };
    auto separated = [&] {
      try {
        check_separated(z, sigma);
        return true;
      } catch (const DomainError&) {
        return false;
      }
    };
    fill(true);
    for (int tries = 0; !separated(); ++tries) {
      if (tries > 10000) throw EmptyDomain("probes: cannot place separated points");
      fill(false);
    }
    out.push_back(std::move(z));
  }
  return out;
}

ChaosTable chaos_metric(const std::vector<Ensemble>& ensembles, const OneParticleMoment& reference,
                        const std::vector<ObservableSpec>& specs, const std::vector<Configuration>& probes, double h,
                        const VelocityTest& cov_a, const VelocityTest& cov_b) {
  if (ensembles.empty()) throw InvalidInput("chaos_metric: no ensembles");
  const auto& g0 = ensembles.front().realized.scaling;
  for (const auto& e : ensembles) {
    const auto& g = e.realized.scaling;
    if (g.dim != g0.dim || g.c1 != g0.c1 || g.c2 != g0.c2 || g.b != g0.b)
      throw ValidationError("chaos_metric: ensembles do not share one scaling");
    if (e.t != ensembles.front().t) throw ValidationError("chaos_metric: ensembles at different times");
  }
  std::vector<std::size_t> order(ensembles.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return ensembles[i].realized.n[1] < ensembles[j].realized.n[1]; });

  ChaosTable table;
  std::vector<std::vector<double>> ref(specs.size(), std::vector<double>(probes.size()));
  for (std::size_t k = 0; k < specs.size(); ++k)
    for (std::size_t p = 0; p < probes.size(); ++p) ref[k][p] = cell_observable(reference, specs[k], probes[p], h);

  for (std::size_t k = 0; k < specs.size(); ++k) {
    std::vector<double> gaps;
    for (std::size_t oi : order) {
      const Ensemble& e = ensembles[oi];
      ChaosRow row;
      row.N1 = e.realized.n[0];
      row.N2 = e.realized.n[1];
      row.eps1 = e.realized.eps[0];
      row.eps2 = e.realized.eps[1];
      row.spec_id = static_cast<int>(k);
      row.t = e.t;
      for (std::size_t p = 0; p < probes.size(); ++p) {
        const auto est = ensemble_observable(e.members, specs[k], probes[p], h);
        const double gap = std::abs(est.mean - ref[k][p]);
        if (gap > row.gap || p == 0) {
          row.gap = gap;
          row.stderr_gap = est.stderr_mean;
        }
      }
      gaps.push_back(row.gap);
      table.rows.push_back(row);
    }
    bool mono = gaps.size() > 1;
    for (std::size_t i = 1; i < gaps.size(); ++i) mono = mono && gaps[i] < gaps[i - 1];
    table.monotone.push_back(mono);
    // Least-squares slope of log gap on log max eps.
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (!(gaps[i] > 0)) continue;
      const double x = std::log(ensembles[order[i]].realized.max_eps()), y = std::log(gaps[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      n += 1;
    }
    const double den = n * sxx - sx * sx;
    table.fitted_slopes.push_back(n > 1 && den != 0 ? (n * sxy - sx * sy) / den : 0.0);
  }
  std::vector<double> covs;
  for (std::size_t oi : order) {
    const Ensemble& e = ensembles[oi];
    const auto c = pair_covariance(e.members, cov_a, cov_b);
    table.covariance.push_back({e.realized.n[0], e.realized.n[1], c.mean, c.stderr_mean});
    covs.push_back(std::abs(c.mean));
  }
  table.covariance_monotone = covs.size() > 1;
  for (std::size_t i = 1; i < covs.size(); ++i) table.covariance_monotone = table.covariance_monotone && covs[i] < covs[i - 1];
  return table;
}

void write_chaos_csv(std::ostream& os, const ChaosTable& table) {
  os << "N1,N2,eps1,eps2,spec_id,t,gap,stderr\n";
  for (const auto& r : table.rows)
    os << r.N1 << ',' << r.N2 << ',' << fmt_double(r.eps1) << ',' << fmt_double(r.eps2) << ',' << r.spec_id << ','
       << fmt_double(r.t) << ',' << fmt_double(r.gap) << ',' << fmt_double(r.stderr_gap) << '\n';
}

}  // namespace hsmix
