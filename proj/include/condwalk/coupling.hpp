#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "condwalk/excursion.hpp"
#include "condwalk/lattice.hpp"
#include "condwalk/levels.hpp"

namespace condwalk {

/// Slope of the median 1D KMT discrepancy against ln n, as measured by
/// kmt_discrepancy_study; the default D is four times this.
inline constexpr double kKmtSlopeEstimate = 0.58;

struct CouplingParams {
  int h = 6;
  double D = 4.0 * kKmtSlopeEstimate;  // KMT bound: discrepancy <= D m
  double beta = 9.0;                   // time-gap bound: |s - sigma| <= m^beta
  double alpha = 30.0;                 // ||S_t| - |W_t|| <= ln^alpha t
  double epsilon = 0.05;
  /// Runs stop once both processes reached this level; 0 means h + 1.
  int max_level = 0;
  std::uint64_t max_excursions = 100'000;
  std::uint64_t max_tries = 10'000;
  bool stop_at_catastrophe = false;
  /// Radii are sampled every path_stride time units; 0 disables sampling.
  std::uint64_t path_stride = 0;

  int level_cap() const { return max_level > 0 ? max_level : h + 1; }
  /// Throws std::invalid_argument on values the construction cannot use.
  void validate() const;
};

/// Angle theta with |xi - rotate(x, theta)| <= 1: the arguments are aligned
/// exactly and the radial gap is below 1 on Gamma_m. Throws std::logic_error
/// if the gap exceeds 1 for m >= 3; below that the shells are too coarse and
/// the aligned angle is returned as is.
double align_rotation(const PlanePoint& x, const LatticeSite& xi, int m);

enum class TryOutcome { kSuccess, kFailure, kCatastrophe };
/// Assumption whose violation caused a catastrophe; kNone otherwise.
enum class Assumption { kNone = 0, kKmt = 1, kWindow = 2, kTimeGap = 3, kDecision = 4 };

const char* to_string(TryOutcome o);
const char* to_string(Assumption a);

/// What one try observed. Exit levels are 0 and times infinite when the
/// process did not leave the annulus before the try was stopped.
struct CandidatePair {
  int m = 0;
  bool kmt_ok = true;
  bool gap_exceeded = false;  // stopped early because |s - sigma| > m^beta
  int w_to = 0;
  int s_to = 0;
  double s = 0.0;      // W exit time
  double sigma = 0.0;  // S exit time (steps)
  double pi = 0.0;     // pi_{m, xi'} for the S exit point
};

struct Classification {
  TryOutcome outcome = TryOutcome::kCatastrophe;
  Assumption cause = Assumption::kNone;
};

/// Success iff the KMT, window and time-gap bounds hold and the shared
/// uniform accepts on both sides; failure iff the bounds hold and both sides
/// reject; catastrophe otherwise. The cause is the first violated check.
Classification classify_try(const CandidatePair& c, double u,
                            const CouplingParams& params);

struct CouplingStep {
  std::uint64_t k = 0;  // excursion index, 1-based
  int level = 0;        // level the excursion started from
  TryOutcome outcome = TryOutcome::kSuccess;
  Assumption cause = Assumption::kNone;
  std::uint64_t tries = 0;
  double gap = 0.0;  // |s_k - sigma_k| of the accepted pair
};

struct CouplingTranscript {
  int h = 0;
  double beta = 0.0;
  // Level sequences and arrival times; index 0 is the common start. After a
  // catastrophe the two sides grow independently and may differ in length.
  std::vector<int> m;
  std::vector<int> mu;
  std::vector<double> t;
  std::vector<double> tau;
  std::vector<CouplingStep> steps;  // coupled constructions, in order
  std::optional<std::uint64_t> catastrophe_step;
  Assumption catastrophe_cause = Assumption::kNone;
  double time_offset_w = 0.0;  // time spent reaching the common level
  double time_offset_s = 0.0;
};

/// Radii of both processes on the grid j * stride of their own clocks, for
/// the catastrophe-free part of a run.
struct RadiusSamples {
  std::uint64_t stride = 0;
  std::vector<double> s;
  std::vector<double> w;
};

struct CouplingRun {
  CouplingTranscript transcript;
  RadiusSamples radii;
  PlanePoint w_end;
  LatticeSite s_end;
  std::uint64_t kmt_steps = 0;
  // Coupled excursion constructions and catastrophes by starting level.
  std::vector<std::uint64_t> visits;
  std::vector<std::uint64_t> catastrophes;
};

/// The paired construction from start_x on C_a and start_xi in Gamma_b. If
/// a != b the lower one first evolves alone until it reaches the other's
/// level. Each excursion k tries l = 0, 1, ... with the KMT pair
/// (seed, kCouplingPair, replica, k, l) and the uniform U(k, l) shared with
/// the standalone constructions. Throws std::runtime_error when
/// params.max_tries or max_excursions is exhausted.
CouplingRun run_coupling(const PlanePoint& start_x, const LatticeSite& start_xi,
                         const CouplingParams& params, const PiWeights& pi,
                         std::uint64_t seed, std::uint64_t replica);

/// Points (r_h, 0) and (max(1, floor r_h), 0).
std::pair<PlanePoint, LatticeSite> default_start(int h);

struct TranscriptBoundReport {
  bool hard_ok = true;
  std::vector<std::string> violations;
  std::uint64_t checked_steps = 0;
  double max_gap_ratio = 0.0;         // max |s_k - sigma_k| / m_{k-1}^beta
  double max_cumulative_ratio = 0.0;  // max |t_k - tau_k| / (k+h)^(beta+1)
  std::optional<std::uint64_t> first_growth_violation;  // k with m_k < k^(1/3)
  std::uint64_t growth_checked = 0;     // indices k >= 100
  std::uint64_t growth_violations = 0;  // among those
};

/// Verifies on the coupled prefix: m_k = mu_k, |s_k - sigma_k| <= m_{k-1}^beta,
/// |t_k - tau_k| <= (k+h)^(beta+1), t_k and tau_k >= r_{m_{k-1}}; reports
/// the statistical growth bound m_k >= k^(1/3) separately.
TranscriptBoundReport transcript_bound_check(const CouplingTranscript& tr);

struct ModulusReport {
  double burn_in = 0.0;
  std::uint64_t compared = 0;
  std::uint64_t ratio_violations = 0;  // outside |W|/2 <= |S| <= 2|W|
  std::uint64_t log_bound_violations = 0;
  double max_abs_difference = 0.0;
};

/// Compares the sampled radii past burn_in (time units).
ModulusReport modulus_comparison(const RadiusSamples& r, double alpha,
                                 double burn_in);

struct CouplingExperiment {
  CouplingParams params;
  std::uint64_t seed = 0;
  std::size_t replicas = 0;
  std::uint64_t runs_with_catastrophe = 0;
  double catastrophe_probability = 0.0;
  double catastrophe_stderr = 0.0;
  std::vector<std::uint64_t> visits;        // by level
  std::vector<std::uint64_t> catastrophes;  // by level
  std::vector<std::array<std::uint64_t, 5>> causes;  // by level and Assumption
  std::uint64_t kmt_steps = 0;
  std::uint64_t total_tries = 0;
  std::uint64_t coupled_steps = 0;
  bool bounds_ok = true;
  std::vector<CouplingRun> runs;  // kept only when requested
};

/// Independent runs from default_start(params.h).
CouplingExperiment coupling_experiment(const CouplingParams& params,
                                       const PiWeights& pi, std::size_t replicas,
                                       std::uint64_t seed, bool keep_runs);

/// Partial sums of m^2 p_m over the levels with visits.
struct LevelTailReport {
  std::vector<int> levels;
  std::vector<double> p_hat;
  std::vector<double> weighted;  // m^2 p_hat
  std::vector<double> partial;
  /// Largest increment among the top half of the levels relative to the
  /// total; small values mean the partial sums have settled.
  double tail_fraction = 0.0;
};
LevelTailReport level_tail_report(const std::vector<std::uint64_t>& visits,
                                  const std::vector<std::uint64_t>& catastrophes,
                                  int min_level = 1);

}  // namespace condwalk
