#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <vector>

#include "condwalk/lattice.hpp"
#include "condwalk/potential.hpp"
#include "condwalk/rng.hpp"

namespace condwalk {

/// Transition probabilities to the neighbours x + kUnitSteps[i]:
/// h(y) / (4 h(x)). Throws std::invalid_argument if x is forbidden.
std::array<double, 4> step_distribution(const LatticeSite& x,
                                        const ChainSpec& spec);

/// Single-step sampler used by every lattice simulation in the library.
///
/// Inside the exact region of the harmonic function the four weights are read
/// from the table. Outside it, with L = ln|x|^2 carried incrementally, the
/// weights are L + ln(1 + (2 x.e + 1)/|x|^2) + 2 c0 - pi cap, the log1p being
/// a five-term series (|argument| < 0.006 there). This drops the O(|x|^-2)
/// angular part of a, which moves the transition probabilities by O(|x|^-3).
class LatticeWalker {
 public:
  LatticeWalker(const ChainSpec& spec, const LatticeSite& start);

  const LatticeSite& position() const { return pos_; }
  std::int64_t norm2() const { return n2_; }

  /// One step driven by a 32-bit uniform.
  void step(std::uint32_t bits) {
    if (variant_ == ChainVariant::kSrw) {
      move(bits >> 30);
      return;
    }
    if (n2_ <= table_limit_) {
      table_step(bits);
    } else {
      far_step(bits);
    }
  }

 private:
  void move(unsigned dir) {
    pos_ = pos_ + kUnitSteps[dir];
    n2_ = pos_.norm2();
  }
  void table_step(std::uint32_t bits);
  void far_step(std::uint32_t bits);

  ChainVariant variant_;
  const DiskGrid* grid_ = nullptr;
  std::int64_t table_limit_ = -1;  // |x|^2 bound where all neighbours are exact
  double far_shift_ = 0.0;         // 2 c0 - pi cap(A)
  LatticeSite pos_;
  std::int64_t n2_ = 0;
  double log_n2_ = 0.0;
  bool log_valid_ = false;
  std::uint32_t since_refresh_ = 0;
};

struct StopRule {
  enum class Kind { kSteps, kExitRadius, kHitSet };
  Kind kind = Kind::kSteps;
  std::uint64_t steps = 0;
  double radius = 0.0;
  std::vector<LatticeSite> set;
  std::uint64_t hard_cap = 1'000'000'000ULL;

  static StopRule fixed_steps(std::uint64_t n) {
    StopRule r;
    r.kind = Kind::kSteps;
    r.steps = n;
    return r;
  }
  static StopRule exit_radius(double radius) {
    StopRule r;
    r.kind = Kind::kExitRadius;
    r.radius = radius;
    return r;
  }
  static StopRule hit_set(std::vector<LatticeSite> s) {
    StopRule r;
    r.kind = Kind::kHitSet;
    r.set = std::move(s);
    return r;
  }
};

struct LatticeTrajectory {
  std::vector<LatticeSite> sites;
  StreamId stream;
  ChainSpec spec;
};

/// Samples the chain from `start` until the stop rule fires ("exit radius R"
/// means the first time |x| >= R). Throws std::runtime_error if the hard cap
/// is reached first, std::invalid_argument if start is forbidden.
LatticeTrajectory sample_path(const ChainSpec& spec, const LatticeSite& start,
                              const StopRule& stop, const StreamId& stream);

/// Same law without storing the path; returns the stopping step count and
/// the final site.
struct StopResult {
  std::uint64_t steps = 0;
  LatticeSite final_site;
};
StopResult run_until_stop(const ChainSpec& spec, const LatticeSite& start,
                          const StopRule& stop, const StreamId& stream);

/// q_A(x) / a(x): probability that the walk conditioned off the origin never
/// hits A. Throws std::invalid_argument if x is in A.
double escape_probability(const LatticeSite& x, const AvoidSet& a);

/// Outcome of one Monte Carlo escape trial for the walk conditioned off the
/// origin: true iff it reaches |y| >= radius before visiting A.
bool escape_trial(const LatticeSite& x, const AvoidSet& a, double radius,
                  const StreamId& stream,
                  const std::shared_ptr<const PotentialTable>& potential);

struct PathIdentityReport {
  double max_discrepancy = 0.0;
  std::uint64_t paths = 0;
  std::uint64_t paths_touching_set = 0;
  double max_touching_value = 0.0;  // largest |side| on paths touching A
};

/// Enumerates every nearest-neighbour path from x of length 1..path_length and
/// compares P_x[walk conditioned off 0 follows the path | never hits A]
/// against the probability under the walk conditioned off A, both as explicit
/// products of one-step probabilities.
PathIdentityReport conditioned_equals_hSA_check(const AvoidSet& a,
                                                const LatticeSite& x,
                                                int path_length);

}  // namespace condwalk
