#include "app.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <type_traits>

#include "hsmix/collision.hpp"
#include "hsmix/hierarchy.hpp"
#include "hsmix/parallel.hpp"

#ifndef HSMIX_GIT_DESCRIBE
#define HSMIX_GIT_DESCRIBE "unknown"
#endif

namespace hsmix::app {

namespace fs = std::filesystem;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Field lists shared by the reader and the writer.

template <typename V> void visit(V& v, BlobConfig& c) {
  v("spatial_std", c.spatial_std);
  v("center", c.center);
  v("drift", c.drift);
  v("gamma", c.gamma);
  v("thermal_std", c.thermal_std);
}
template <typename V> void visit(V& v, ScalingConfig& c) {
  v("dim", c.dim);
  v("c1", c.c1);
  v("c2", c.c2);
  v("b", c.b);
  v("n2", c.n2);
}
template <typename V> void visit(V& v, MixtureConfig& c) {
  v("masses", c.masses);
  v("a", c.a);
  v("b", c.b);
}
template <typename V> void visit(V& v, SimulateConfig& c) {
  v("counts", c.counts);
  v("diameters", c.diameters);
  v("t", c.t);
  v("t_mft", c.t_mft);
  v("contact_tol", c.contact_tol);
  v("events_max", c.events_max);
  v("initial", c.initial);
}
template <typename V> void visit(V& v, PdeConfig& c) {
  v("L", c.L);
  v("nx", c.nx);
  v("R", c.R);
  v("nv", c.nv);
  v("sphere_resolution", c.sphere_resolution);
  v("t_end", c.t_end);
  v("steps", c.steps);
  v("gamma0", c.gamma0);
  v("mu0", c.mu0);
  v("lambda", c.lambda);
  v("horizon", c.horizon);
  v("tolerance", c.tolerance);
  v("max_iterations", c.max_iterations);
  v("growth_limit", c.growth_limit);
  v("homogeneous", c.homogeneous);
  v("exact_free", c.exact_free);
}
template <typename V> void visit(V& v, PseudoConfig& c) {
  v("s", c.s);
  v("k", c.k);
  v("trials", c.trials);
  v("t", c.t);
  v("delta", c.delta);
  v("R", c.R);
  v("x_radius", c.x_radius);
}
template <typename V> void visit(V& v, DuhamelConfig& c) {
  v("s", c.s);
  v("k", c.k);
  v("flavor", c.flavor);
  v("alphas", c.alphas);
  v("betas", c.betas);
  v("R", c.R);
  v("delta", c.delta);
  v("t", c.t);
  v("samples", c.samples);
  v("x_s", c.x_s);
  v("phi", c.phi);
}
template <typename V> void visit(V& v, ChaosConfig& c) {
  v("n2", c.n2);
  v("members", c.members);
  v("t_mft", c.t_mft);
  v("probes", c.probes);
  v("probe_extent", c.probe_extent);
  v("sigma", c.sigma);
  v("cell_half_width", c.cell_half_width);
  v("probe_seed", c.probe_seed);
  v("specs", c.specs);
  v("covariance", c.covariance);
  v("pde_reference", c.pde_reference);
  v("reference_R", c.reference_R);
  v("reference_n", c.reference_n);
}
template <typename V> void visit(V& v, PathologyConfig& c) {
  v("counts", c.counts);
  v("diameters", c.diameters);
  v("t_mft", c.t_mft);
  v("seeds", c.seeds);
  v("contact_tols", c.contact_tols);
  v("events_max", c.events_max);
}
template <typename V> void visit(V& v, RunConfig& c) {
  v("seed", c.seed);
  v("threads", c.threads);
  v("out", c.out);
  v("format", c.format);
  v("scaling", c.scaling);
  v("mixture", c.mixture);
  v("simulate", c.simulate);
  v("pde", c.pde);
  v("pseudo", c.pseudo);
  v("duhamel", c.duhamel);
  v("chaos", c.chaos);
  v("pathology", c.pathology);
}

template <typename T>
concept Section = std::is_class_v<T> && requires(T& t) { t.operator==(t); } && !std::is_same_v<T, json> &&
                  !std::is_same_v<T, std::string>;

template <typename T> struct is_vector : std::false_type {};
template <typename T> struct is_vector<std::vector<T>> : std::true_type {};
template <typename T, std::size_t N> struct is_vector<std::array<T, N>> : std::true_type {};

struct Writer {
  json j = json::object();
  template <typename T> void operator()(const char* key, T& x) {
    if constexpr (Section<T> && !is_vector<T>::value) {
      Writer w;
      visit(w, x);
      j[key] = std::move(w.j);
    } else {
      j[key] = x;
    }
  }
};

template <typename T> void check_scalar(const json& v, const std::string& path) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(path + ": expected true or false");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
    if constexpr (std::is_unsigned_v<T>)
      if (!v.is_number_unsigned()) throw ConfigError(path + ": must be non-negative");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(path + ": expected a string");
  }
}

template <typename T> T read_value(const json& v, const std::string& path) {
  if constexpr (is_vector<T>::value) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array");
    T out{};
    if constexpr (!std::is_same_v<T, std::vector<typename T::value_type>>) {
      if (v.size() != out.size())
        throw ConfigError(path + ": expected " + std::to_string(out.size()) + " entries, got " +
                          std::to_string(v.size()));
      for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = read_value<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]");
    } else {
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(read_value<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
  } else if constexpr (std::is_same_v<T, json>) {
    return v;
  } else {
    check_scalar<T>(v, path);
    return v.get<T>();
  }
}

struct Reader {
  const json& j;
  std::string path;
  std::set<std::string> known;

  std::string at(const char* key) const { return path.empty() ? key : path + "." + key; }

  template <typename T> void operator()(const char* key, T& x) {
    known.insert(key);
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if constexpr (Section<T> && !is_vector<T>::value) {
      if (!v.is_object()) throw ConfigError(at(key) + ": expected an object");
      Reader r{v, at(key), {}};
      visit(r, x);
      r.finish();
    } else {
      x = read_value<T>(v, at(key));
    }
  }

  void finish() const {
    for (const auto& item : j.items())
      if (!known.count(item.key())) throw ConfigError(at(item.key().c_str()) + ": unknown field");
  }
};

json to_json(const RunConfig& c) {
  RunConfig copy = c;
  Writer w;
  visit(w, copy);
  return w.j;
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  RunConfig c;
  Reader r{j, "", {}};
  visit(r, c);
  r.finish();
  return c;
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Defaults that need more than an initializer.

namespace {

json mono(std::vector<int> e) { return {{"kind", "monomial"}, {"exponents", e}}; }

std::vector<std::vector<json>> default_specs() {
  const json c = {{"kind", "constant"}};
  return {{c, c},
          {mono({2, 0}), c},
          {mono({1, 0}), mono({1, 0})},
          {{{"kind", "gaussian"}, {"width", 1.0}}, {{"kind", "gaussian"}, {"width", 1.0}}},
          {{{"kind", "box"}, {"lo", {-1.0, -1.0}}, {"hi", {1.0, 1.0}}}, mono({0, 2})}};
}

std::vector<json> default_covariance() { return {{{"kind", "energy"}}, {{"kind", "energy"}}}; }

}  // namespace

// ---------------------------------------------------------------------------
// Validation.

namespace {

void need(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

void positive(double x, const std::string& field) { need(x > 0 && std::isfinite(x), field, "must be positive (got " + fmt_double(x) + ")"); }
void nonneg(double x, const std::string& field) { need(x >= 0 && std::isfinite(x), field, "must be non-negative (got " + fmt_double(x) + ")"); }

void check_blob(const BlobConfig& b, int d, const std::string& path) {
  positive(b.spatial_std, path + ".spatial_std");
  positive(b.gamma, path + ".gamma");
  nonneg(b.thermal_std, path + ".thermal_std");
  need(b.center.empty() || static_cast<int>(b.center.size()) == d, path + ".center", "needs " + std::to_string(d) + " entries");
  need(b.drift.empty() || static_cast<int>(b.drift.size()) == d, path + ".drift", "needs " + std::to_string(d) + " entries");
}

void check_s(const std::array<std::int64_t, 2>& s, const std::string& path) {
  need(s[0] >= 0 && s[1] >= 0 && s[0] + s[1] >= 1, path, "needs non-negative counts with at least one particle");
}

void check_test(const json& t, int d, const std::string& path) {
  try {
    velocity_test_from_json(t, d);
  } catch (const InvalidInput& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  need(threads >= 0, "threads", "must be >= 0");
  need(!out.empty(), "out", "must not be empty");
  need(format == "csv" || format == "jsonl" || format == "binary", "format", "must be csv, jsonl or binary");

  const int d = scaling.dim;
  need(d == 2 || d == 3, "scaling.dim", "must be 2 or 3");
  positive(scaling.c1, "scaling.c1");
  positive(scaling.c2, "scaling.c2");
  positive(scaling.b, "scaling.b");
  need(scaling.n2 >= 1, "scaling.n2", "must be >= 1");

  for (int i = 0; i < 2; ++i) positive(mixture.masses[i], "mixture.masses[" + std::to_string(i) + "]");
  check_blob(mixture.a, d, "mixture.a");
  check_blob(mixture.b, d, "mixture.b");

  need(simulate.counts.empty() || simulate.counts.size() == 2, "simulate.counts", "needs 2 entries or none");
  for (std::size_t i = 0; i < simulate.counts.size(); ++i)
    need(simulate.counts[i] >= 0, "simulate.counts[" + std::to_string(i) + "]", "must be non-negative");
  need(simulate.diameters.empty() || simulate.diameters.size() == 2, "simulate.diameters", "needs 2 entries or none");
  for (std::size_t i = 0; i < simulate.diameters.size(); ++i)
    positive(simulate.diameters[i], "simulate.diameters[" + std::to_string(i) + "]");
  need(std::isfinite(simulate.t), "simulate.t", "must be finite");
  nonneg(simulate.t_mft, "simulate.t_mft");
  positive(simulate.contact_tol, "simulate.contact_tol");
  need(simulate.events_max >= 1, "simulate.events_max", "must be >= 1");

  positive(pde.L, "pde.L");
  need(pde.nx >= 1, "pde.nx", "must be >= 1");
  positive(pde.R, "pde.R");
  need(pde.nv >= 2, "pde.nv", "must be >= 2");
  need(pde.sphere_resolution >= 0, "pde.sphere_resolution", "must be >= 0");
  nonneg(pde.t_end, "pde.t_end");
  need(pde.steps >= 1, "pde.steps", "must be >= 1");
  positive(pde.gamma0, "pde.gamma0");
  positive(pde.lambda, "pde.lambda");
  positive(pde.horizon, "pde.horizon");
  need(pde.gamma0 - pde.lambda * pde.horizon > 0, "pde.lambda", "gamma0 - lambda * horizon must stay positive");
  need(pde.t_end <= pde.horizon, "pde.t_end", "must not exceed pde.horizon");
  positive(pde.tolerance, "pde.tolerance");
  need(pde.max_iterations >= 1, "pde.max_iterations", "must be >= 1");
  need(pde.growth_limit >= 1, "pde.growth_limit", "must be >= 1");

  check_s(pseudo.s, "pseudo.s");
  need(pseudo.k >= 0 && pseudo.k <= 12, "pseudo.k", "must be in 0..12");
  need(pseudo.trials >= 1, "pseudo.trials", "must be >= 1");
  positive(pseudo.t, "pseudo.t");
  nonneg(pseudo.delta, "pseudo.delta");
  need((pseudo.k + 1) * pseudo.delta < pseudo.t, "pseudo.delta", "(k + 1) delta must be below t");
  positive(pseudo.R, "pseudo.R");
  positive(pseudo.x_radius, "pseudo.x_radius");

  check_s(duhamel.s, "duhamel.s");
  need(duhamel.k >= 0 && duhamel.k <= 8, "duhamel.k", "must be in 0..8");
  need(duhamel.flavor == "boltzmann" || duhamel.flavor == "bbgky", "duhamel.flavor", "must be boltzmann or bbgky");
  need(duhamel.alphas.size() == duhamel.betas.size(), "duhamel.betas", "must match duhamel.alphas in length");
  need(duhamel.alphas.empty() || static_cast<int>(duhamel.alphas.size()) == duhamel.k, "duhamel.alphas",
       "needs k entries or none");
  for (const auto* list : {&duhamel.alphas, &duhamel.betas})
    for (const auto& name : *list) need(name == "A" || name == "B", "duhamel.alphas/betas", "species must be A or B");
  positive(duhamel.R, "duhamel.R");
  nonneg(duhamel.delta, "duhamel.delta");
  positive(duhamel.t, "duhamel.t");
  need((duhamel.k + 1) * duhamel.delta < duhamel.t, "duhamel.delta", "(k + 1) delta must be below t");
  need(duhamel.samples >= 1, "duhamel.samples", "must be >= 1");
  const auto ds = static_cast<std::size_t>(duhamel.s[0] + duhamel.s[1]);
  need(duhamel.x_s.empty() || duhamel.x_s.size() == ds, "duhamel.x_s", "needs one position per particle or none");
  for (std::size_t i = 0; i < duhamel.x_s.size(); ++i)
    need(static_cast<int>(duhamel.x_s[i].size()) == d, "duhamel.x_s[" + std::to_string(i) + "]",
         "needs " + std::to_string(d) + " entries");
  need(duhamel.phi.empty() || duhamel.phi.size() == ds, "duhamel.phi", "needs one test per particle or none");
  for (std::size_t i = 0; i < duhamel.phi.size(); ++i) check_test(duhamel.phi[i], d, "duhamel.phi[" + std::to_string(i) + "]");

  need(!chaos.n2.empty(), "chaos.n2", "must not be empty");
  for (std::size_t i = 0; i < chaos.n2.size(); ++i) need(chaos.n2[i] >= 1, "chaos.n2[" + std::to_string(i) + "]", "must be >= 1");
  need(chaos.members >= 2, "chaos.members", "must be >= 2");
  nonneg(chaos.t_mft, "chaos.t_mft");
  need(chaos.probes >= 1, "chaos.probes", "must be >= 1");
  positive(chaos.probe_extent, "chaos.probe_extent");
  nonneg(chaos.sigma, "chaos.sigma");
  positive(chaos.cell_half_width, "chaos.cell_half_width");
  for (std::size_t i = 0; i < chaos.specs.size(); ++i) {
    need(chaos.specs[i].size() == 2, "chaos.specs[" + std::to_string(i) + "]", "needs an A test and a B test");
    for (std::size_t k = 0; k < 2; ++k)
      check_test(chaos.specs[i][k], d, "chaos.specs[" + std::to_string(i) + "][" + std::to_string(k) + "]");
  }
  need(chaos.covariance.empty() || chaos.covariance.size() == 2, "chaos.covariance", "needs an A test and a B test");
  for (std::size_t k = 0; k < chaos.covariance.size(); ++k)
    check_test(chaos.covariance[k], d, "chaos.covariance[" + std::to_string(k) + "]");
  positive(chaos.reference_R, "chaos.reference_R");
  need(chaos.reference_n >= 2, "chaos.reference_n", "must be >= 2");

  need(pathology.counts[0] >= 0 && pathology.counts[1] >= 0, "pathology.counts", "must be non-negative");
  need(pathology.diameters.empty() || pathology.diameters.size() == 2, "pathology.diameters", "needs 2 entries or none");
  for (std::size_t i = 0; i < pathology.diameters.size(); ++i)
    positive(pathology.diameters[i], "pathology.diameters[" + std::to_string(i) + "]");
  positive(pathology.t_mft, "pathology.t_mft");
  need(pathology.seeds >= 1, "pathology.seeds", "must be >= 1");
  need(!pathology.contact_tols.empty(), "pathology.contact_tols", "must not be empty");
  for (std::size_t i = 0; i < pathology.contact_tols.size(); ++i)
    positive(pathology.contact_tols[i], "pathology.contact_tols[" + std::to_string(i) + "]");
  need(pathology.events_max >= 1, "pathology.events_max", "must be >= 1");
}

GaussianBlob BlobConfig::blob(int d, double mass) const {
  GaussianBlob b = maxwellian_blob(d, spatial_std, gamma, mass);
  if (thermal_std > 0) b.thermal_std = thermal_std;
  if (!center.empty()) b.center = Eigen::Map<const VectorXd>(center.data(), d);
  if (!drift.empty()) b.drift = Eigen::Map<const VectorXd>(drift.data(), d);
  b.validate();
  return b;
}

std::vector<std::string> subcommands() {
  return {"simulate", "scaling", "pde-solve", "pseudo-compare", "duhamel", "chaos-test", "pathology-scan"};
}

// ---------------------------------------------------------------------------
// Subcommands.

namespace {

// Plain rows written as CSV or as one JSON object per line.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  void add(std::vector<json> row) { rows.push_back(std::move(row)); }

  static std::string cell(const json& v) {
    if (v.is_number_float()) return fmt_double(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  }

  std::string render(bool jsonl) const {
    std::ostringstream os;
    if (!jsonl) {
      for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
      os << '\n';
    }
    for (const auto& r : rows) {
      if (jsonl) {
        json o = json::object();
        for (std::size_t c = 0; c < columns.size(); ++c) o[columns[c]] = r[c];
        os << o.dump() << '\n';
      } else {
        for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << cell(r[c]);
        os << '\n';
      }
    }
    return os.str();
  }
};

struct Context {
  const RunConfig& cfg;
  std::ostream& out;
  std::ostream& err;
  fs::path dir;
  int threads = 1;
  int d = 2;
  std::array<double, 2> masses{};
  GaussianBlob g0, h0;
  std::vector<std::string> files;
  json summary = json::object();

  Context(const RunConfig& c, std::ostream& o, std::ostream& e) : cfg(c), out(o), err(e), dir(c.out) {
    threads = resolve_threads(c.threads);
    d = c.scaling.dim;
    masses = c.mixture.masses;
    g0 = c.mixture.a.blob(d, masses[0]);
    h0 = c.mixture.b.blob(d, masses[1]);
  }

  bool jsonl() const { return cfg.format == "jsonl"; }

  void write(const std::string& name, const std::string& content) {
    write_text_file(dir / name, content);
    files.push_back(name);
  }
  void write_table(const std::string& stem, const Table& t) {
    write(stem + (jsonl() ? ".jsonl" : ".csv"), t.render(jsonl()));
  }
  void write_configuration(const std::string& stem, const Configuration& z) {
    std::ostringstream os;
    if (cfg.format == "binary") {
      write_configuration_binary(os, z);
      write(stem + ".bin", os.str());
    } else if (jsonl()) {
      os << configuration_to_json(z).dump() << '\n';
      write(stem + ".jsonl", os.str());
    } else {
      write_configuration_csv(os, z);
      write(stem + ".csv", os.str());
    }
  }
  void write_summary() { write("summary.json", summary.dump(2) + "\n"); }

  ProductSampler sampler() const { return ProductSampler{g0.sampler(), h0.sampler()}; }
  double mft() const { return mean_free_time(cfg.scaling.scaling(), g0, h0); }
};

json realized_json(const RealizedScaling& r) {
  return {{"N1", r.n[0]}, {"N2", r.n[1]}, {"eps1", r.eps[0]}, {"eps2", r.eps[1]}};
}

int cmd_scaling(Context& ctx) {
  const GradScaling g = ctx.cfg.scaling.scaling();
  const RealizedScaling r = realize(g, ctx.cfg.scaling.n2);
  const LimitConstants lc = limit_constants(g);
  json j = {{"dim", g.dim}, {"c1", g.c1}, {"c2", g.c2}, {"b", g.b}};
  j["realized"] = realized_json(r);
  j["N1"] = r.n[0];
  j["N2"] = r.n[1];
  j["limit_constants"] = {{"c1", lc.c1}, {"c2", lc.c2}, {"c12", lc.c12}, {"c21", lc.c21}};
  json A = json::object();
  for (Species a : kSpecies)
    for (Species b : kSpecies)
      A[std::string(species_name(a)) + std::string(species_name(b))] = kernel_constant(g, a, b);
  j["kernel_constants"] = A;
  const double dm1 = g.dim - 1;
  j["residuals"] = {{"N1_eps1", static_cast<double>(r.n[0]) * std::pow(r.eps[0], dm1) - g.c1},
                    {"N2_eps2", static_cast<double>(r.n[1]) * std::pow(r.eps[1], dm1) - g.c2},
                    {"eps_ratio", r.eps[0] - g.b * r.eps[1]}};
  ctx.write("scaling.json", j.dump(2) + "\n");
  ctx.out << j.dump(2) << '\n';
  return kOk;
}

MixtureParams simulate_params(const Context& ctx, std::array<Index, 2>& counts) {
  const auto& sc = ctx.cfg.simulate;
  MixtureParams p;
  p.dim = ctx.d;
  p.mass = ctx.masses;
  std::optional<RealizedScaling> r;
  if (sc.counts.empty() || sc.diameters.empty()) r = realize(ctx.cfg.scaling.scaling(), ctx.cfg.scaling.n2);
  counts = sc.counts.empty() ? r->n : std::array<Index, 2>{sc.counts[0], sc.counts[1]};
  p.diameter = sc.diameters.empty() ? r->eps : std::array<double, 2>{sc.diameters[0], sc.diameters[1]};
  p.validate();
  return p;
}

int cmd_simulate(Context& ctx) {
  const auto& sc = ctx.cfg.simulate;
  std::array<Index, 2> counts{};
  const MixtureParams params = simulate_params(ctx, counts);
  Configuration z0;
  double acceptance = 1.0;
  if (!sc.initial.empty()) {
    std::ifstream in(sc.initial);
    if (!in) throw ConfigError("simulate.initial: cannot open " + sc.initial);
    z0 = read_configuration_csv(in);
    if (z0.dim() != ctx.d) throw ConfigError("simulate.initial: dimension differs from scaling.dim");
    if (!z0.in_phase_space(params, sc.contact_tol))
      throw ConfigError("simulate.initial: configuration has overlapping spheres");
  } else {
    const SampledConfiguration s = sample_configuration(ctx.sampler(), params, counts, SimBox{}, ctx.cfg.seed);
    z0 = s.z;
    acceptance = s.acceptance();
  }
  const double t = sc.t_mft > 0 ? sc.t_mft * ctx.mft() : sc.t;
  AdvanceOptions opt;
  opt.events_max = sc.events_max;
  opt.contact_tol = sc.contact_tol;
  const FlowResult res = advance(z0, t, params, opt);

  ctx.write_configuration("initial", z0);
  ctx.write_configuration("final", res.final);
  std::ostringstream ev;
  write_event_log(ev, res.events);
  ctx.write("events.jsonl", ev.str());
  ctx.summary = {{"t", t},
                 {"counts", {z0.count(Species::A), z0.count(Species::B)}},
                 {"diameters", params.diameter},
                 {"events", res.event_count},
                 {"acceptance", acceptance},
                 {"energy_initial", energy(z0, params)},
                 {"energy_final", energy(res.final, params)},
                 {"momentum_initial", to_json_vector(total_momentum(z0, params))},
                 {"momentum_final", to_json_vector(total_momentum(res.final, params))},
                 {"pathology", nullptr}};
  if (res.pathology) {
    ctx.summary["pathology"] = {{"kind", pathology_name(res.pathology->kind)}, {"time", res.pathology->time}};
    ctx.write_summary();
    ctx.err << "simulate: pathology (" << pathology_name(res.pathology->kind) << ") at t = "
            << fmt_double(res.pathology->time) << "\n";
    return kPathology;
  }
  ctx.write_summary();
  return kOk;
}

SphereQuadrature sphere_for(int d, int resolution) {
  return resolution > 0 ? SphereQuadrature::make(d, resolution) : SphereQuadrature::reference(d);
}

SolverWeights weights_of(const PdeConfig& p) { return SolverWeights{p.gamma0, p.mu0, p.lambda, p.horizon}; }

PhaseGrid pde_grid(const Context& ctx, bool homogeneous) {
  const auto& p = ctx.cfg.pde;
  return PhaseGrid{homogeneous ? SpaceGrid::homogeneous(ctx.d) : SpaceGrid::make(ctx.d, p.L, p.nx),
                   VelocityGrid::make(ctx.d, p.R, p.nv)};
}

GridDensityPair pde_data(const Context& ctx, const PhaseGrid& grid) {
  if (grid.space.is_homogeneous())
    return GridDensityPair::sample(
        grid, [&](const auto&, const auto& v) { return ctx.g0.velocity_density(v); },
        [&](const auto&, const auto& v) { return ctx.h0.velocity_density(v); });
  return GridDensityPair::sample(
      grid, [&](const auto& x, const auto& v) { return ctx.g0.density(x, v); },
      [&](const auto& x, const auto& v) { return ctx.h0.density(x, v); });
}

PdeOptions pde_options(const Context& ctx, bool homogeneous) {
  const auto& p = ctx.cfg.pde;
  PdeOptions opt;
  opt.homogeneous = homogeneous;
  opt.tolerance = p.tolerance;
  opt.max_iterations = p.max_iterations;
  opt.growth_limit = p.growth_limit;
  opt.sphere = sphere_for(ctx.d, p.sphere_resolution);
  opt.threads = ctx.threads;
  if (p.exact_free && !homogeneous) {
    const GaussianBlob g0 = ctx.g0, h0 = ctx.h0;
    opt.exact_free = [g0, h0](Species s, const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& v,
                              double t) {
      const GaussianBlob& b = s == Species::A ? g0 : h0;
      return b.density(x - t * v, v);
    };
  }
  return opt;
}

double data_horizon(const Context& ctx, const GridDensityPair& G0) {
  const SolverWeights w = weights_of(ctx.cfg.pde);
  const double norm = mixture_norm(G0, w.gamma0, w.mu0, ctx.masses);
  return horizon_heuristic(KernelConstants::from_scaling(ctx.cfg.scaling.scaling()), ctx.masses, w, norm, ctx.d);
}

int cmd_pde_solve(Context& ctx, bool homogeneous_flag) {
  const auto& p = ctx.cfg.pde;
  const bool homogeneous = homogeneous_flag || p.homogeneous;
  const PhaseGrid grid = pde_grid(ctx, homogeneous);
  const GridDensityPair G0 = pde_data(ctx, grid);
  const double heuristic = data_horizon(ctx, G0);
  if (p.t_end > heuristic)
    ctx.err << "warning: pde.t_end = " << fmt_double(p.t_end) << " exceeds the horizon heuristic "
            << fmt_double(heuristic) << "\n";
  const PdeSolution sol = solve_mixture_pde(G0, KernelConstants::from_scaling(ctx.cfg.scaling.scaling()), ctx.masses,
                                            weights_of(p), p.t_end, p.steps, pde_options(ctx, homogeneous));
  const GridDensityPair& G = sol.trajectory.back();
  std::ostringstream bin, csv;
  write_density_binary(bin, G);
  ctx.write("density.bin", bin.str());
  if (ctx.cfg.format != "binary") {
    write_density_csv(csv, G);
    ctx.write("density.csv", csv.str());
  }
  Table inc{{"iteration", "increment"}, {}};
  for (std::size_t i = 0; i < sol.increments.size(); ++i) inc.add({i + 1, sol.increments[i]});
  ctx.write_table("increments", inc);
  ctx.summary = {{"t_end", p.t_end},
                 {"steps", p.steps},
                 {"homogeneous", homogeneous},
                 {"iterations", sol.iterations},
                 {"converged", sol.converged},
                 {"negative_values", sol.negative_values},
                 {"initial_norm", sol.initial_norm},
                 {"solution_norm", sol.solution_norm},
                 {"horizon_heuristic", heuristic}};
  ctx.write_summary();
  if (!sol.converged) {
    ctx.err << "pde-solve: no convergence in " << sol.iterations << " iterations\n";
    return kNumericalFailure;
  }
  return kOk;
}

int cmd_pseudo_compare(Context& ctx) {
  const auto& pc = ctx.cfg.pseudo;
  const RealizedScaling r = realize(ctx.cfg.scaling.scaling(), ctx.cfg.scaling.n2);
  const MixtureParams params = r.params(ctx.masses);
  const std::array<Index, 2> s{pc.s[0], pc.s[1]};
  struct Trial {
    json history;
    PseudoComparison cmp;
  };
  std::vector<Trial> trials(pc.trials);
  parallel_for(pc.trials, ctx.threads, [&](std::size_t i) {
    Rng rng = make_rng(ctx.cfg.seed, i);
    Configuration z(ctx.d, s);
    for (Species sp : kSpecies)
      for (Index p = 0; p < z.count(sp); ++p) {
        z.x(sp, p) = uniform_ball(rng, ctx.d, pc.x_radius);
        z.v(sp, p) = uniform_ball(rng, ctx.d, pc.R);
      }
    const CollisionHistory h = random_history(s, pc.k, pc.t, pc.delta, pc.R, ctx.d, rng);
    const auto boltz = build_boltzmann_pseudo(z, h, ctx.masses);
    const auto bbgky = build_bbgky_pseudo(z, h, params);
    trials[i].cmp = compare_pseudo(boltz, bbgky, params.max_diameter());
    trials[i].history = {{"trial", i}, {"z_s", configuration_to_json(z)}, {"history", history_to_json(h)}};
  });
  Table t{{"trial", "stage", "particles", "max_position", "particle_bound", "total_position", "total_bound",
           "max_velocity"},
          {}};
  std::ostringstream hist;
  bool all_ok = true;
  double worst = 0.0;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    all_ok = all_ok && trials[i].cmp.ok;
    for (const auto& st : trials[i].cmp.stages) {
      t.add({i, st.stage, st.particles, st.max_position, st.particle_bound, st.total_position, st.total_bound,
             st.max_velocity});
      if (st.total_bound > 0) worst = std::max(worst, st.total_position / st.total_bound);
    }
    hist << trials[i].history.dump() << '\n';
  }
  ctx.write_table("pseudo", t);
  ctx.write("histories.jsonl", hist.str());
  ctx.summary = {{"trials", pc.trials}, {"k", pc.k}, {"realized", realized_json(r)}, {"all_within_bounds", all_ok},
                 {"max_total_ratio", worst}};
  ctx.write_summary();
  return kOk;
}

int cmd_duhamel(Context& ctx) {
  const auto& dc = ctx.cfg.duhamel;
  DuhamelSpec spec;
  spec.s = {dc.s[0], dc.s[1]};
  spec.k = dc.k;
  for (const auto& a : dc.alphas) spec.alphas.push_back(parse_species(a));
  for (const auto& b : dc.betas) spec.betas.push_back(parse_species(b));
  spec.flavor = dc.flavor == "bbgky" ? PseudoFlavor::Bbgky : PseudoFlavor::Boltzmann;
  spec.scaling = ctx.cfg.scaling.scaling();
  if (spec.flavor == PseudoFlavor::Bbgky) spec.realized = realize(spec.scaling, ctx.cfg.scaling.n2);
  spec.masses = ctx.masses;
  spec.R = dc.R;
  spec.delta = dc.delta;
  spec.t = dc.t;
  spec.samples = dc.samples;
  spec.seed = ctx.cfg.seed;
  spec.threads = ctx.threads;
  spec.x_s = Configuration(ctx.d, spec.s);
  std::vector<VelocityTest> factors;
  std::size_t p = 0;
  for (Species sp : kSpecies)
    for (Index i = 0; i < spec.x_s.count(sp); ++i, ++p) {
      if (!dc.x_s.empty()) spec.x_s.x(sp, i) = Eigen::Map<const VectorXd>(dc.x_s[p].data(), ctx.d);
      factors.push_back(dc.phi.empty() ? constant_test() : velocity_test_from_json(dc.phi[p], ctx.d));
    }
  spec.phi = [factors](const Configuration& z) {
    double v = 1.0;
    std::size_t q = 0;
    for (Species sp : kSpecies)
      for (Index i = 0; i < z.count(sp) && q < factors.size(); ++i) v *= factors[q++](z.v(sp, i));
    return v;
  };
  const GaussianBlob g0 = ctx.g0, h0 = ctx.h0;
  const ObservableFunction f0 = [g0, h0](const Configuration& z) {
    double v = 1.0;
    for (Index i = 0; i < z.count(Species::A); ++i) v *= g0.density(z.x(Species::A, i), z.v(Species::A, i));
    for (Index i = 0; i < z.count(Species::B); ++i) v *= h0.density(z.x(Species::B, i), z.v(Species::B, i));
    return v;
  };
  const DuhamelEstimate e = duhamel_iterate(f0, spec);
  ctx.summary = {{"k", dc.k},
                 {"flavor", dc.flavor},
                 {"s", dc.s},
                 {"t", dc.t},
                 {"R", dc.R},
                 {"delta", dc.delta},
                 {"mean", e.mean},
                 {"stderr", e.stderr_mean},
                 {"samples", e.samples},
                 {"rejected", e.rejected},
                 {"rejected_fraction", e.rejected_fraction}};
  ctx.write("duhamel.json", ctx.summary.dump(2) + "\n");
  return kOk;
}

int cmd_chaos_test(Context& ctx, int n_points) {
  ChaosConfig cc = ctx.cfg.chaos;
  if (n_points > 0) {
    while (static_cast<int>(cc.n2.size()) < n_points) cc.n2.push_back(2 * cc.n2.back());
    cc.n2.resize(static_cast<std::size_t>(n_points));
  }
  const GradScaling g = ctx.cfg.scaling.scaling();
  const double mft = ctx.mft();
  const double t = cc.t_mft * mft;

  std::vector<Ensemble> ensembles;
  Table et{{"N1", "N2", "eps1", "eps2", "members", "pathological", "mean_acceptance", "collisions"}, {}};
  for (std::size_t i = 0; i < cc.n2.size(); ++i) {
    const RealizedScaling r = realize(g, cc.n2[i]);
    ensembles.push_back(run_ensemble(ctx.g0, ctx.h0, r, ctx.masses, t, cc.members, ctx.cfg.seed + i, ctx.threads));
    const Ensemble& e = ensembles.back();
    et.add({r.n[0], r.n[1], r.eps[0], r.eps[1], e.members.size(), e.pathological, e.mean_acceptance, e.collisions});
  }

  std::optional<GridDensityPair> collision_part;
  json pde_info = nullptr;
  if (cc.pde_reference && t > 0) {
    const auto& p = ctx.cfg.pde;
    const PhaseGrid grid = pde_grid(ctx, false);
    PdeOptions opt = pde_options(ctx, false);
    SolverWeights w = weights_of(p);
    const PdeSolution sol =
        solve_mixture_pde(pde_data(ctx, grid), KernelConstants::from_scaling(g), ctx.masses, w, t, p.steps, opt);
    if (!sol.converged) {
      ctx.err << "chaos-test: reference PDE solve did not converge\n";
      return kNumericalFailure;
    }
    collision_part = sol.collision_part.back();
    pde_info = {{"iterations", sol.iterations}, {"negative_values", sol.negative_values}};
  }
  const TensorReference ref(ctx.g0, ctx.h0, t, VelocityGrid::make(ctx.d, cc.reference_R, cc.reference_n),
                            collision_part);

  const auto specs_json = cc.specs.empty() ? default_specs() : cc.specs;
  std::vector<ObservableSpec> specs;
  for (const auto& pair : specs_json) {
    ObservableSpec s;
    s.s = {1, 1};
    s.sigma = cc.sigma;
    s.factors = {velocity_test_from_json(pair[0], ctx.d), velocity_test_from_json(pair[1], ctx.d)};
    specs.push_back(s);
  }
  const auto cov_json = cc.covariance.empty() ? default_covariance() : cc.covariance;
  const auto probes = latin_hypercube_probes({1, 1}, ctx.d, cc.probes, cc.probe_extent, cc.sigma, cc.probe_seed);
  const ChaosTable table = chaos_metric(ensembles, ref.as_function(), specs, probes, cc.cell_half_width,
                                        velocity_test_from_json(cov_json[0], ctx.d),
                                        velocity_test_from_json(cov_json[1], ctx.d));

  if (ctx.jsonl()) {
    Table ct{{"N1", "N2", "eps1", "eps2", "spec_id", "t", "gap", "stderr"}, {}};
    for (const auto& r : table.rows) ct.add({r.N1, r.N2, r.eps1, r.eps2, r.spec_id, r.t, r.gap, r.stderr_gap});
    ctx.write_table("chaos", ct);
  } else {
    std::ostringstream os;
    write_chaos_csv(os, table);
    ctx.write("chaos.csv", os.str());
  }
  Table cov{{"N1", "N2", "cov", "stderr"}, {}};
  for (const auto& c : table.covariance) cov.add({c.N1, c.N2, c.cov, c.stderr_cov});
  ctx.write_table("covariance", cov);
  ctx.write_table("ensembles", et);

  json labels = json::array();
  for (const auto& s : specs) labels.push_back(s.label());
  int monotone = 0;
  for (bool m : table.monotone) monotone += m ? 1 : 0;
  ctx.summary = {{"t", t},
                 {"mean_free_time", mft},
                 {"specs", labels},
                 {"fitted_slopes", table.fitted_slopes},
                 {"monotone", table.monotone},
                 {"monotone_count", monotone},
                 {"covariance_monotone", table.covariance_monotone},
                 {"pde", pde_info}};
  ctx.write_summary();
  return kOk;
}

int cmd_pathology_scan(Context& ctx) {
  const auto& pc = ctx.cfg.pathology;
  EnsembleSpec ens;
  ens.density = ctx.sampler();
  ens.counts = {pc.counts[0], pc.counts[1]};
  ens.params.dim = ctx.d;
  ens.params.mass = ctx.masses;
  if (pc.diameters.empty()) {
    ens.params.diameter = realize(ctx.cfg.scaling.scaling(), pc.counts[1]).eps;
  } else {
    ens.params.diameter = {pc.diameters[0], pc.diameters[1]};
  }
  ens.params.validate();
  const double horizon = pc.t_mft * ctx.mft();
  std::vector<std::uint64_t> seeds(pc.seeds);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = ctx.cfg.seed + i;
  Table t{{"contact_tol", "trials", "pathological", "rate", "stderr", "multiple_collision", "grazing",
           "event_overflow"},
          {}};
  for (double tol : pc.contact_tols) {
    const PathologyStats st = pathology_rate(ens, seeds, horizon, tol, pc.events_max, ctx.threads);
    t.add({tol, st.trials, st.pathological, st.rate(), st.stderr_rate(), st.by_kind[0], st.by_kind[1], st.by_kind[2]});
  }
  ctx.write_table("pathology", t);
  ctx.summary = {{"horizon", horizon}, {"diameters", ens.params.diameter}, {"counts", pc.counts}};
  ctx.write_summary();
  return kOk;
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

int classify(const std::exception& e) {
  if (dynamic_cast<const PathologyError*>(&e)) return kPathology;
  if (dynamic_cast<const InvalidInput*>(&e) || dynamic_cast<const ScalingInfeasible*>(&e) ||
      dynamic_cast<const json::exception*>(&e))
    return kConfigError;
  return kNumericalFailure;
}

}  // namespace

int run(const std::string& subcommand, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return run_with(subcommand, cfg, RunFlags{}, out, err);
}

int run_with(const std::string& subcommand, const RunConfig& cfg, const RunFlags& flags, std::ostream& out,
             std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  std::unique_ptr<Context> ctx;
  int code = kOk;
  try {
    cfg.validate();
    ctx = std::make_unique<Context>(cfg, out, err);
    fs::create_directories(ctx->dir);
    if (subcommand == "scaling") code = cmd_scaling(*ctx);
    else if (subcommand == "simulate") code = cmd_simulate(*ctx);
    else if (subcommand == "pde-solve") code = cmd_pde_solve(*ctx, flags.homogeneous);
    else if (subcommand == "pseudo-compare") code = cmd_pseudo_compare(*ctx);
    else if (subcommand == "duhamel") code = cmd_duhamel(*ctx);
    else if (subcommand == "chaos-test") code = cmd_chaos_test(*ctx, flags.n_points);
    else if (subcommand == "pathology-scan") code = cmd_pathology_scan(*ctx);
    else throw ConfigError("unknown subcommand '" + subcommand + "'");
  } catch (const std::exception& e) {
    code = classify(e);
    err << subcommand << ": " << e.what() << "\n";
  }
  if (ctx) {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json manifest = {{"subcommand", subcommand},
                     {"config", to_json(cfg)},
                     {"git_describe", HSMIX_GIT_DESCRIBE},
                     {"seed", cfg.seed},
                     {"threads", ctx->threads},
                     {"started_utc", started},
                     {"wall_time_s", wall},
                     {"exit_code", code},
                     {"outputs", ctx->files}};
    try {
      write_text_file(ctx->dir / "manifest.json", manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
      err << "manifest: " << e.what() << "\n";
      if (code == kOk) code = kNumericalFailure;
    }
  }
  return code;
}

int validate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    cfg.validate();
    Context ctx(cfg, out, err);
    const GradScaling g = cfg.scaling.scaling();
    const RealizedScaling r = realize(g, cfg.scaling.n2);
    const double mft = ctx.mft();
    const GridDensityPair G0 = pde_data(ctx, pde_grid(ctx, cfg.pde.homogeneous));
    const double heuristic = data_horizon(ctx, G0);
    out << "ok\n";
    auto row = [&](const std::string& k, const std::string& v) { out << std::left << std::setw(24) << k << v << "\n"; };
    row("dim", std::to_string(cfg.scaling.dim));
    row("N1", std::to_string(r.n[0]));
    row("N2", std::to_string(r.n[1]));
    row("eps1", fmt_double(r.eps[0]));
    row("eps2", fmt_double(r.eps[1]));
    for (Species a : kSpecies)
      for (Species b : kSpecies)
        row(std::string("A^") + std::string(species_name(a)) + "_" + std::string(species_name(b)),
            fmt_double(kernel_constant(g, a, b)));
    row("mean_free_time", fmt_double(mft));
    row("chaos.t", fmt_double(cfg.chaos.t_mft * mft));
    row("pde.data_norm", fmt_double(mixture_norm(G0, cfg.pde.gamma0, cfg.pde.mu0, cfg.mixture.masses)));
    row("pde.horizon_heuristic", fmt_double(heuristic));
    row("pde.t_end", fmt_double(cfg.pde.t_end));
    if (cfg.pde.t_end > heuristic)
      err << "warning: pde.t_end = " << fmt_double(cfg.pde.t_end) << " exceeds the horizon heuristic "
          << fmt_double(heuristic) << "\n";
    return kOk;
  } catch (const std::exception& e) {
    err << "validate: " << e.what() << "\n";
    return classify(e);
  }
}

}  // namespace hsmix::app
