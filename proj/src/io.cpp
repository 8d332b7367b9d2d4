#include "hsmix/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hsmix {

std::string fmt_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

json to_json_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vector_from_json(const json& j, int expected_dim) {
  if (!j.is_array()) throw InvalidInput("expected a numeric array");
  if (expected_dim >= 0 && static_cast<int>(j.size()) != expected_dim)
    throw InvalidInput("expected an array of length " + std::to_string(expected_dim));
  Eigen::VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = j[i].get<double>();
  return v;
}

void write_configuration_csv(std::ostream& os, const Configuration& z) {
  const int d = z.dim();
  os << "species";
  for (int k = 0; k < d; ++k) os << ",x" << k + 1;
  for (int k = 0; k < d; ++k) os << ",v" << k + 1;
  os << '\n';
  for (Species s : kSpecies) {
    for (Index i = 0; i < z.count(s); ++i) {
      os << species_name(s);
      for (int k = 0; k < d; ++k) os << ',' << fmt_double(z.x(s, i)[k]);
      for (int k = 0; k < d; ++k) os << ',' << fmt_double(z.v(s, i)[k]);
      os << '\n';
    }
  }
}

Configuration read_configuration_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidInput("configuration csv: empty input");
  const auto cols = std::count(line.begin(), line.end(), ',');
  if (cols < 2 || cols % 2 != 0) throw InvalidInput("configuration csv: bad header '" + line + "'");
  const int d = static_cast<int>(cols / 2);
  std::array<std::vector<Eigen::VectorXd>, 2> xs, vs;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    const Species s = parse_species(cell);
    Eigen::VectorXd x(d), v(d);
    for (int k = 0; k < 2 * d; ++k) {
      if (!std::getline(ss, cell, ','))
        throw InvalidInput("configuration csv: line " + std::to_string(lineno) + " has too few columns");
      (k < d ? x[k] : v[k - d]) = std::stod(cell);
    }
    xs[idx(s)].push_back(x);
    vs[idx(s)].push_back(v);
  }
  Configuration z(d, static_cast<Index>(xs[0].size()), static_cast<Index>(xs[1].size()));
  for (Species s : kSpecies)
    for (std::size_t i = 0; i < xs[idx(s)].size(); ++i) {
      z.x(s, static_cast<Index>(i)) = xs[idx(s)][i];
      z.v(s, static_cast<Index>(i)) = vs[idx(s)][i];
    }
  return z;
}

void write_configuration_binary(std::ostream& os, const Configuration& z) {
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(z.dim()));
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(z.count(Species::A)));
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(z.count(Species::B)));
  for (Species s : kSpecies)
    for (Index i = 0; i < z.count(s); ++i) {
      for (int k = 0; k < z.dim(); ++k) write_le<double>(os, z.x(s, i)[k]);
      for (int k = 0; k < z.dim(); ++k) write_le<double>(os, z.v(s, i)[k]);
    }
}

Configuration read_configuration_binary(std::istream& is) {
  const auto d = read_le<std::uint64_t>(is);
  const auto na = read_le<std::uint64_t>(is);
  const auto nb = read_le<std::uint64_t>(is);
  if (d < 1 || d > 16) throw InvalidInput("configuration binary: implausible dimension");
  Configuration z(static_cast<int>(d), static_cast<Index>(na), static_cast<Index>(nb));
  for (Species s : kSpecies)
    for (Index i = 0; i < z.count(s); ++i) {
      for (int k = 0; k < z.dim(); ++k) z.x(s, i)[k] = read_le<double>(is);
      for (int k = 0; k < z.dim(); ++k) z.v(s, i)[k] = read_le<double>(is);
    }
  return z;
}

json configuration_to_json(const Configuration& z) {
  json j;
  j["dim"] = z.dim();
  for (Species s : kSpecies) {
    json parts = json::array();
    for (Index i = 0; i < z.count(s); ++i)
      parts.push_back({{"x", to_json_vector(z.x(s, i))}, {"v", to_json_vector(z.v(s, i))}});
    j[std::string(species_name(s))] = parts;
  }
  return j;
}

Configuration configuration_from_json(const json& j) {
  const int d = j.at("dim").get<int>();
  const auto& a = j.contains("A") ? j.at("A") : json::array();
  const auto& b = j.contains("B") ? j.at("B") : json::array();
  Configuration z(d, static_cast<Index>(a.size()), static_cast<Index>(b.size()));
  for (Species s : kSpecies) {
    const json& list = s == Species::A ? a : b;
    for (std::size_t i = 0; i < list.size(); ++i) {
      z.x(s, static_cast<Index>(i)) = vector_from_json(list[i].at("x"), d);
      z.v(s, static_cast<Index>(i)) = vector_from_json(list[i].at("v"), d);
    }
  }
  return z;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot open '" + path.string() + "' for writing");
  os << content;
}

}  // namespace hsmix
