#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "condwalk/lattice.hpp"
#include "condwalk/potential.hpp"

namespace condwalk {

/// Highest level for which shell bounds are tabulated (r_20 is about 1e8).
inline constexpr int kMaxLevel = 20;

/// r_m = rho e^m, with rho = rho0 unless stated.
inline double level_radius(int m, double rho) { return rho * std::exp(m); }
inline double level_radius(int m) { return level_radius(m, rho0()); }

/// Lattice shell Gamma_m as a norm^2 window: lo < |x|^2 <= hi.
/// Gamma_0 = {0}, Gamma_1 = {|x| = 1}, Gamma_2 = {1 < |x| <= 2},
/// Gamma_m = {r_m - 1 < |x| <= r_m} for m >= 3.
struct ShellBounds {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  bool contains(std::int64_t n2) const { return n2 > lo && n2 <= hi; }
};
ShellBounds shell_bounds(int m);

/// The m with x in Gamma_m, or nullopt for sites between shells.
std::optional<int> gamma_membership(const LatticeSite& x);

/// All sites of Gamma_m.
std::vector<LatticeSite> shell_sites(int m);

/// Acceptance weights pi_{m,y} = a(y) / max over Gamma_{m-1} u Gamma_{m+1} of a.
class PiWeights {
 public:
  /// Precomputes the maxima for levels 1..max_level.
  explicit PiWeights(int max_level, std::shared_ptr<const PotentialTable>
                                        potential = PotentialTable::shared());

  int max_level() const { return static_cast<int>(max_a_.size()) - 1; }
  /// Throws std::invalid_argument if y is in neither neighbouring shell.
  double pi(int m, const LatticeSite& y) const;
  /// Same without the shell check (caller guarantees membership).
  double pi_unchecked(int m, const LatticeSite& y) const {
    return (*potential_)(y) / max_a_[static_cast<std::size_t>(m)];
  }
  double max_a(int m) const { return max_a_.at(static_cast<std::size_t>(m)); }
  const PotentialTable& potential() const { return *potential_; }

 private:
  std::shared_ptr<const PotentialTable> potential_;
  std::vector<double> max_a_;
};

}  // namespace condwalk
