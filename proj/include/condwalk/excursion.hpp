#pragma once

#include <cstdint>
#include <vector>

#include "condwalk/diffusion.hpp"
#include "condwalk/lattice.hpp"
#include "condwalk/levels.hpp"
#include "condwalk/rng.hpp"

namespace condwalk {

/// One accepted excursion between neighbouring levels. Duration is real time
/// for W-hat and a step count for S-hat.
struct ExcursionRecord {
  std::uint64_t k = 0;
  int level_from = 0;
  int level_to = 0;
  double duration = 0.0;
  PlanePoint start;
  PlanePoint end;
  std::uint64_t tries = 0;  // candidates drawn, the accepted one included
};

/// Addresses the candidate families W~(k,l), S~(k,l) and U(k,l) of one
/// replica. The same U(k,l) drives both constructions.
struct ExcursionStreams {
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;

  StreamId bm_candidate(std::uint64_t k, std::uint64_t l) const {
    return {seed, StreamTag::kHatWExcursion, replica, k, l};
  }
  StreamId srw_candidate(std::uint64_t k, std::uint64_t l) const {
    return {seed, StreamTag::kHatSExcursion, replica, k, l};
  }
  double uniform(std::uint64_t k, std::uint64_t l) const {
    return CounterKey::from({seed, StreamTag::kCouplingUniform, replica, k})
        .uniforms(l)[0];
  }
};

/// Discretization of the candidate Brownian excursions between circles: the
/// step is clamp(kappa d^2, dt_min_factor r_m^2, inf) with d the distance to
/// the nearer target circle; crossings inside a step use the bridge formula.
struct BmExcursionParams {
  double rho = 0.0;
  double variance = 1.0;
  double kappa = 0.01;
  double dt_min_factor = 1e-4;
  std::uint64_t max_tries = 10'000;

  static BmExcursionParams standard() { return {rho0(), 1.0}; }
  static BmExcursionParams srw_matched() { return {rho0(), 0.5}; }
};

struct BmCandidate {
  int level_to = 0;
  double duration = 0.0;
  PlanePoint end;
  std::vector<PlanePoint> path;  // filled only when requested
};

/// Planar BM from x (|x| = r_m) stopped at the circles of levels m -/+ 1.
BmCandidate bm_candidate_excursion(const PlanePoint& x, int m,
                                   const BmExcursionParams& params,
                                   const StreamId& stream, bool record_path);

struct HatWExcursion {
  ExcursionRecord record;
  std::vector<PlanePoint> path;
};

/// Acceptance-rejection step for W-hat: outward candidates are kept, inward
/// ones iff U(k,l) <= 1 - 2/(m+1). Throws std::runtime_error after
/// params.max_tries candidates.
HatWExcursion build_hatW_excursion(const PlanePoint& x, int m, std::uint64_t k,
                                   const ExcursionStreams& streams,
                                   const BmExcursionParams& params,
                                   bool record_path = false);

struct SrwCandidate {
  int level_to = 0;
  std::uint64_t steps = 0;
  LatticeSite end;
  std::vector<LatticeSite> path;
};

/// Level window used to stop lattice excursions from Gamma_m: the walk stops
/// at the first site with |x|^2 <= inner_hi (Gamma_{m-1}) or > outer_lo
/// (Gamma_{m+1}). Nearest-neighbour steps cannot jump over a shell.
struct ShellStop {
  std::int64_t inner_hi = 0;
  std::int64_t outer_lo = 0;
  explicit ShellStop(int m)
      : inner_hi(shell_bounds(m - 1).hi), outer_lo(shell_bounds(m + 1).lo) {}
  bool stopped(std::int64_t n2) const { return n2 <= inner_hi || n2 > outer_lo; }
};

/// SRW from xi stopped on Gamma_{m-1} u Gamma_{m+1}.
SrwCandidate srw_candidate_excursion(const LatticeSite& xi, int m,
                                     const StreamId& stream, bool record_path,
                                     std::uint64_t max_steps = 4'000'000'000ULL);

struct HatSExcursion {
  ExcursionRecord record;
  LatticeSite end;
  std::vector<LatticeSite> path;
};

/// Acceptance-rejection step for S-hat: a candidate ending at y is kept iff
/// U(k,l) <= pi_{m,y}. Throws std::invalid_argument if xi is not in Gamma_m,
/// std::runtime_error after max_tries candidates.
HatSExcursion build_hatS_excursion(const LatticeSite& xi, int m,
                                   std::uint64_t k,
                                   const ExcursionStreams& streams,
                                   const PiWeights& pi,
                                   std::uint64_t max_tries = 10'000,
                                   bool record_path = false);

/// W-hat from the point of C_h at the given angle, as `excursions` chained
/// accepted excursions.
std::vector<ExcursionRecord> chain_hatW_excursions(
    int h, double start_angle, std::size_t excursions,
    const ExcursionStreams& streams, const BmExcursionParams& params);

/// S-hat from xi in Gamma_h, as chained accepted excursions. `pi` must cover
/// every level reached; the chain stops early (shorter result) when the next
/// level would exceed pi.max_level().
std::vector<ExcursionRecord> chain_hatS_excursions(
    const LatticeSite& xi, int h, std::size_t excursions,
    const ExcursionStreams& streams, const PiWeights& pi);

}  // namespace condwalk
