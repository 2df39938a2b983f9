#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "condwalk/lattice.hpp"

namespace condwalk {

/// Values of a function on the lattice disk {|x| <= radius}, stored densely.
class DiskGrid {
 public:
  DiskGrid() = default;
  explicit DiskGrid(int radius)
      : radius_(radius),
        side_(2 * static_cast<std::int64_t>(radius) + 1),
        values_(static_cast<std::size_t>(side_ * side_), 0.0) {}

  int radius() const { return radius_; }
  bool contains(const LatticeSite& s) const {
    return s.norm2() <= static_cast<std::int64_t>(radius_) * radius_;
  }
  double& at(const LatticeSite& s) { return values_[index(s)]; }
  double at(const LatticeSite& s) const { return values_[index(s)]; }

 private:
  std::size_t index(const LatticeSite& s) const {
    return static_cast<std::size_t>((s.y + radius_) * side_ + (s.x + radius_));
  }

  int radius_ = 0;
  std::int64_t side_ = 0;
  std::vector<double> values_;
};

/// Closed-form large-|x| expansion of the potential kernel:
/// (2/pi)(ln|x| + gamma + 1.5 ln 2) - cos(4 phi) / (6 pi |x|^2).
/// The second term removes the |x|^-2 part of the error, leaving O(|x|^-4).
double potential_asymptotic(const LatticeSite& x);
/// Leading logarithmic part only, (2/pi)(ln r + gamma + 1.5 ln 2).
double potential_log_part(double r);

/// Potential kernel a(x) of planar simple random walk: exact (linear solve)
/// inside the disk of radius exact_radius, asymptotic outside.
class PotentialTable {
 public:
  static constexpr int kDefaultRadius = 400;

  /// Solves "value = mean of the four neighbours" on B(0,radius) minus the
  /// origin with a(0)=0 and the asymptotic expansion as boundary data.
  static PotentialTable solve(int radius);
  /// Process-wide cached table (built on first use, then immutable).
  static std::shared_ptr<const PotentialTable> shared(
      int radius = kDefaultRadius);

  double operator()(const LatticeSite& x) const {
    return grid_.contains(x) ? grid_.at(x) : potential_asymptotic(x);
  }
  double a(const LatticeSite& x) const { return (*this)(x); }
  bool in_exact_region(const LatticeSite& x) const { return grid_.contains(x); }
  int exact_radius() const { return grid_.radius(); }
  /// max over exact sites x != 0 with all neighbours exact of |a(x) - mean|.
  double harmonicity_residual() const;
  const DiskGrid& grid() const { return grid_; }

 private:
  DiskGrid grid_;
};

/// Finite set A containing the origin together with q_A, cap(A) and the
/// harmonic measure of A seen from infinity.
class AvoidSet {
 public:
  /// Dirichlet solves on B(0,radius) minus A; q_A is pinned by requiring the
  /// total flux into A to equal that of a (which is 1). Throws
  /// std::invalid_argument if the origin is missing or A is not well inside
  /// the disk.
  static AvoidSet build(std::vector<LatticeSite> sites, int radius,
                        std::shared_ptr<const PotentialTable> potential =
                            PotentialTable::shared());
  static std::shared_ptr<const AvoidSet> origin_only(
      std::shared_ptr<const PotentialTable> potential =
          PotentialTable::shared());

  /// q_A(x). Outside the grid uses sum_y hm(y) a(x - y) - cap(A).
  double q(const LatticeSite& x) const;
  bool contains(const LatticeSite& x) const;
  double capacity() const { return capacity_; }
  /// Mean of a_asymptotic(x) - q_A(x) over the lattice ring |x| ~ radius/2.
  double ring_capacity_estimate() const { return ring_capacity_; }
  const std::vector<LatticeSite>& sites() const { return sites_; }
  const std::vector<double>& harmonic_measure() const { return hm_; }
  int radius() const { return grid_.radius(); }
  /// q_A on B(0, radius), zero on A.
  const DiskGrid& grid() const { return grid_; }
  const PotentialTable& potential() const { return *potential_; }
  std::shared_ptr<const PotentialTable> potential_ptr() const {
    return potential_;
  }

 private:
  std::vector<LatticeSite> sites_;
  std::vector<double> hm_;
  double capacity_ = 0.0;
  double ring_capacity_ = 0.0;
  DiskGrid grid_;
  std::shared_ptr<const PotentialTable> potential_;
};

enum class ChainVariant { kSrw, kHatS, kHatSA };

/// Which nearest-neighbour chain to run: plain SRW, the walk conditioned off
/// the origin, or the walk conditioned off a finite set A.
struct ChainSpec {
  ChainVariant variant = ChainVariant::kHatS;
  std::shared_ptr<const PotentialTable> potential;
  std::shared_ptr<const AvoidSet> avoid;

  static ChainSpec srw();
  static ChainSpec hat_s(std::shared_ptr<const PotentialTable> p =
                             PotentialTable::shared());
  static ChainSpec hat_s_a(std::shared_ptr<const AvoidSet> a);

  /// Harmonic function defining the transform (1 for SRW).
  double h(const LatticeSite& x) const;
  bool forbidden(const LatticeSite& x) const;
};

/// Law of the chain at its first visit to `targets`, started from `start`;
/// paths leaving B(0, domain_radius) are killed. Throws std::invalid_argument
/// if start or a target is outside the domain or forbidden, and
/// std::runtime_error if no target can be reached.
std::map<LatticeSite, double> exact_hitting_distribution(
    const LatticeSite& start, const std::vector<LatticeSite>& targets,
    int domain_radius, const ChainSpec& spec);

/// Probability that SRW started at x reaches {|y| >= radius} before `set`.
/// Exact finite-domain linear algebra.
double srw_escape_before_exit(const LatticeSite& x,
                              const std::vector<LatticeSite>& set, int radius);

}  // namespace condwalk
