#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "hsmix/errors.hpp"

namespace hsmix {

using Index = Eigen::Index;

enum class Species : std::uint8_t { A = 0, B = 1 };

inline constexpr std::array<Species, 2> kSpecies{Species::A, Species::B};

constexpr int idx(Species s) { return static_cast<int>(s); }
constexpr Species other(Species s) { return s == Species::A ? Species::B : Species::A; }

std::string_view species_name(Species s);
Species parse_species(std::string_view name);

inline constexpr double kDefaultContactTol = 1e-9;

struct MixtureParams {
  int dim = 2;
  std::array<double, 2> mass{1.0, 1.0};
  std::array<double, 2> diameter{1.0, 1.0};

  double m(Species s) const { return mass[idx(s)]; }
  double eps(Species s) const { return diameter[idx(s)]; }
  double interaction_distance(Species a, Species b) const {
    return 0.5 * (diameter[idx(a)] + diameter[idx(b)]);
  }
  double max_diameter() const { return std::max(diameter[0], diameter[1]); }

  // Throws InvalidInput naming the offending field.
  void validate() const;
};

inline double interaction_distance(const MixtureParams& p, Species a, Species b) {
  return p.interaction_distance(a, b);
}

struct ParticleRef {
  Species species = Species::A;
  Index index = 0;
  auto operator<=>(const ParticleRef&) const = default;
};

struct ParticlePair {
  ParticleRef first;
  ParticleRef second;
  bool operator==(const ParticlePair&) const = default;
};

// Phase-space point with species-segregated d x N blocks.
template <typename Scalar = double>
class BasicConfiguration {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicConfiguration() = default;
  BasicConfiguration(int dim, Index n_a, Index n_b) : dim_(dim) {
    if (dim < 1 || n_a < 0 || n_b < 0) throw InvalidInput("configuration: bad shape");
    x_[0] = Matrix::Zero(dim, n_a);
    x_[1] = Matrix::Zero(dim, n_b);
    v_[0] = Matrix::Zero(dim, n_a);
    v_[1] = Matrix::Zero(dim, n_b);
  }
  BasicConfiguration(int dim, std::array<Index, 2> counts)
      : BasicConfiguration(dim, counts[0], counts[1]) {}

  int dim() const { return dim_; }
  Index count(Species s) const { return x_[idx(s)].cols(); }
  std::array<Index, 2> counts() const { return {x_[0].cols(), x_[1].cols()}; }
  Index total() const { return x_[0].cols() + x_[1].cols(); }

  Matrix& positions(Species s) { return x_[idx(s)]; }
  const Matrix& positions(Species s) const { return x_[idx(s)]; }
  Matrix& velocities(Species s) { return v_[idx(s)]; }
  const Matrix& velocities(Species s) const { return v_[idx(s)]; }

  auto x(Species s, Index i) { return x_[idx(s)].col(i); }
  auto x(Species s, Index i) const { return x_[idx(s)].col(i); }
  auto v(Species s, Index i) { return v_[idx(s)].col(i); }
  auto v(Species s, Index i) const { return v_[idx(s)].col(i); }
  auto x(ParticleRef p) { return x(p.species, p.index); }
  auto x(ParticleRef p) const { return x(p.species, p.index); }
  auto v(ParticleRef p) { return v(p.species, p.index); }
  auto v(ParticleRef p) const { return v(p.species, p.index); }

  // New particle goes to the end of its species block.
  template <typename DX, typename DV>
  void append(Species s, const Eigen::MatrixBase<DX>& pos, const Eigen::MatrixBase<DV>& vel) {
    auto& X = x_[idx(s)];
    auto& V = v_[idx(s)];
    const Index n = X.cols();
    X.conservativeResize(dim_, n + 1);
    V.conservativeResize(dim_, n + 1);
    X.col(n) = pos;
    V.col(n) = vel;
  }

  void free_flight(Scalar t) {
    x_[0] += t * v_[0];
    x_[1] += t * v_[1];
  }

  void reverse_velocities() {
    v_[0] = -v_[0];
    v_[1] = -v_[1];
  }

  // |x_i - x_j| >= eps_(a,b) (1 - rel_tol) for all interacting pairs.
  bool in_phase_space(const MixtureParams& params, Scalar rel_tol = Scalar(kDefaultContactTol)) const {
    for (Species a : kSpecies) {
      for (Species b : kSpecies) {
        if (idx(b) < idx(a)) continue;
        const Scalar lim = Scalar(params.interaction_distance(a, b)) * (Scalar(1) - rel_tol);
        const Scalar lim2 = lim * lim;
        for (Index i = 0; i < count(a); ++i) {
          for (Index j = (a == b ? i + 1 : 0); j < count(b); ++j) {
            if ((x(a, i) - x(b, j)).squaredNorm() < lim2) return false;
          }
        }
      }
    }
    return true;
  }

  bool operator==(const BasicConfiguration& o) const {
    return dim_ == o.dim_ && counts() == o.counts() && x_[0] == o.x_[0] && x_[1] == o.x_[1] &&
           v_[0] == o.v_[0] && v_[1] == o.v_[1];
  }

 private:
  int dim_ = 2;
  std::array<Matrix, 2> x_;
  std::array<Matrix, 2> v_;
};

using Configuration = BasicConfiguration<double>;

// Visit every interacting pair once: same-species i<j, then all A-B pairs.
template <typename Scalar, typename F>
void for_each_pair(const BasicConfiguration<Scalar>& z, F&& f) {
  for (Species a : kSpecies) {
    for (Species b : kSpecies) {
      if (idx(b) < idx(a)) continue;
      for (Index i = 0; i < z.count(a); ++i)
        for (Index j = (a == b ? i + 1 : 0); j < z.count(b); ++j) f(ParticleRef{a, i}, ParticleRef{b, j});
    }
  }
}

struct Deviation {
  double position = 0.0;
  double velocity = 0.0;
};

// Largest per-particle Euclidean distance between matching particles.
template <typename Scalar>
Deviation max_deviation(const BasicConfiguration<Scalar>& a, const BasicConfiguration<Scalar>& b) {
  if (a.dim() != b.dim() || a.counts() != b.counts()) throw InvalidInput("max_deviation: shape mismatch");
  Deviation d;
  for (Species s : kSpecies) {
    for (Index i = 0; i < a.count(s); ++i) {
      d.position = std::max<double>(d.position, (a.x(s, i) - b.x(s, i)).norm());
      d.velocity = std::max<double>(d.velocity, (a.v(s, i) - b.v(s, i)).norm());
    }
  }
  return d;
}

namespace detail {

template <typename VA, typename VB, typename VN, typename Scalar>
inline void collide_in_place(VA&& va, VB&& vb, const VN& n, Scalar ma, Scalar mb) {
  const Scalar proj = (va - vb).dot(n);
  const Scalar inv = Scalar(2) / (ma + mb);
  va -= (inv * mb * proj) * n;
  vb += (inv * ma * proj) * n;
}

template <typename DN>
void check_unit(const Eigen::MatrixBase<DN>& n) {
  using std::abs;
  if (!(abs(n.norm() - typename DN::Scalar(1)) <= typename DN::Scalar(1e-12)))
    throw InvalidInput("collide: normal is not a unit vector");
}

}  // namespace detail

// Mass-weighted elastic collision with contact normal n = (x_a - x_b)/|x_a - x_b|.
template <typename DA, typename DB, typename DN>
std::pair<typename DA::PlainObject, typename DB::PlainObject> collide(const Eigen::MatrixBase<DA>& va,
                                                                       const Eigen::MatrixBase<DB>& vb,
                                                                       const Eigen::MatrixBase<DN>& n,
                                                                       typename DA::Scalar ma,
                                                                       typename DA::Scalar mb) {
  if (va.size() != vb.size() || va.size() != n.size()) throw InvalidInput("collide: dimension mismatch");
  if (!(ma > 0) || !(mb > 0)) throw InvalidInput("collide: masses must be positive");
  detail::check_unit(n);
  std::pair<typename DA::PlainObject, typename DB::PlainObject> out{va, vb};
  detail::collide_in_place(out.first, out.second, n, ma, mb);
  return out;
}

template <typename Scalar>
Scalar energy(const BasicConfiguration<Scalar>& z, const MixtureParams& params) {
  Scalar e(0);
  for (Species s : kSpecies) e += Scalar(params.m(s)) * z.velocities(s).squaredNorm();
  return e;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> total_momentum(const BasicConfiguration<Scalar>& z,
                                                        const MixtureParams& params) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> p = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(z.dim());
  for (Species s : kSpecies) p += Scalar(params.m(s)) * z.velocities(s).rowwise().sum();
  return p;
}

struct BoundaryClass {
  enum class Kind { Interior, SimplePreCollisional, SimplePostCollisional, SimpleGrazing, MultipleCollision };
  Kind kind = Kind::Interior;
  std::optional<ParticlePair> pair;
  int contacts = 0;
};

std::string_view kind_name(BoundaryClass::Kind k);

class PreconditionError : public Error {
 public:
  PreconditionError(const std::string& what, BoundaryClass cls) : Error(what), boundary(std::move(cls)) {}
  BoundaryClass boundary;
};

// Contact: |dist - eps| <= tol*eps. Grazing: |n.dv| <= tol*|dv|.
BoundaryClass classify_boundary(const Configuration& z, const MixtureParams& params,
                                double contact_tol = kDefaultContactTol);

Configuration impact_operator(const Configuration& z, const MixtureParams& params,
                              double contact_tol = kDefaultContactTol);

// Collides the given pair in place along the normalized center difference.
void apply_collision(Configuration& z, const ParticlePair& pair, const MixtureParams& params);

}  // namespace hsmix
