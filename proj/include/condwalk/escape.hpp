#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "condwalk/chain.hpp"
#include "condwalk/diffusion.hpp"
#include "condwalk/lattice.hpp"
#include "condwalk/potential.hpp"
#include "condwalk/rng.hpp"

namespace condwalk {

/// n_j = round(2^(j / per_doubling)) for n_j in [1, horizon], duplicates
/// removed, horizon appended if missing. per_doubling = 1 is the dyadic grid.
std::vector<double> geometric_grid(double horizon, int per_doubling);

/// Future minima M_n = inf over times >= n of |X|, on a grid.
struct FutureMinima {
  std::vector<double> n;
  std::vector<double> values;
  std::vector<double> radius;  // |X_n|
  std::vector<bool> certified;
  /// Probability that the process returns below M_n after the observed
  /// window, from the scale function ln(r / rho).
  std::vector<double> certification_error;
};

/// Trajectory given by its radii at times 0..T, stopped at the first exit of
/// B(0, r_stop). M_n is the minimum over [n, T]; certification_error at M is
/// ln(M/rho)/ln(r_stop/rho) and an index is certified when that is <=
/// tolerance. Throws std::invalid_argument unless the last radius is the
/// first one >= r_stop.
FutureMinima future_minima(const std::vector<double>& radius, double r_stop,
                           double rho, int per_doubling, double tolerance = 1e-3);

/// kWindow: M_n is the minimum over [n, horizon] of the simulated path.
/// kTailClosure: the post-horizon infimum is included through a sample from
/// the scale-function law.
enum class MinimaMode { kWindow, kTailClosure };
const char* to_string(MinimaMode m);

/// Streaming summary of one long run on a grid: radius at each grid time,
/// minimum over each segment [n_j, n_{j+1}), and a closing sample of the
/// infimum after the horizon.
struct EscapeTrajectory {
  std::vector<double> n;
  std::vector<double> radius;
  std::vector<double> segment_min;  // size n.size() - 1
  double tail_min = 0.0;
  double rho = 0.0;  // scale radius used for the tail and certification

  /// M on the grid. certification_error is ln(M/rho)/ln(|X_H|/rho), the
  /// probability that the path after the horizon goes below M; certified
  /// means error <= tolerance (and, with the closure, that M was attained
  /// before the horizon).
  FutureMinima minima(MinimaMode mode = MinimaMode::kWindow,
                      double tolerance = 1e-3) const;
};

/// Infimum after the horizon, sampled from P[inf < r] = ln(r/rho)/ln(R/rho)
/// (exact for W-hat, asymptotic for the lattice chains).
double sample_tail_minimum(double radius, double rho, double u);

/// Lattice chain run for grid.back() steps from start; walk and tail draws
/// come from stream.sub(0) and stream.sub(1).
EscapeTrajectory run_lattice_escape(const ChainSpec& spec,
                                    const LatticeSite& start,
                                    const std::vector<double>& grid,
                                    const StreamId& stream);

/// W-hat run to time grid.back(); the grid times are hit exactly.
EscapeTrajectory run_hatW_escape(const DiffusionSpec& spec,
                                 const PlanePoint& start,
                                 const std::vector<double>& grid,
                                 const StreamId& stream);

enum class EscapeProcess { kHatS, kHatSA, kHatW };
const char* to_string(EscapeProcess p);

struct EscapeRunConfig {
  EscapeProcess process = EscapeProcess::kHatS;
  double horizon = 1e6;
  int per_doubling = 1;
  std::shared_ptr<const AvoidSet> avoid;  // for kHatSA
  DiffusionSpec diffusion = DiffusionSpec::srw_matched();  // for kHatW
  LatticeSite lattice_start{2, 0};
  PlanePoint plane_start{2.0, 0.0};
};

/// Replicas r = 0..replicas-1 with streams (seed, kEscape, r).
std::vector<EscapeTrajectory> escape_trajectories(const EscapeRunConfig& config,
                                                  std::size_t replicas,
                                                  std::uint64_t seed);

/// g in the threshold e^{(ln n) g(ln ln n)}.
struct TestFunction {
  std::string name;
  std::function<double(double)> g;
  bool integral_finite = false;

  double threshold(double n) const;
  static TestFunction constant(double delta);  // n^delta, integral infinite
  static TestFunction exp_half();              // e^{-u/2}, integral finite
};

/// Checks g non-increasing and t -> (ln t) g(ln ln t) non-decreasing on
/// [e^e, horizon] (relative slack 1e-12).
bool test_function_valid(const TestFunction& tf, double horizon);

extern const char* const kFiniteHorizonCaveat;

struct CrossingReport {
  std::string name;
  MinimaMode mode = MinimaMode::kWindow;
  double horizon = 0.0;
  std::size_t replicas = 0;
  std::vector<std::uint64_t> crossings;        // per replica, whole grid
  std::vector<std::uint64_t> upper_crossings;  // n >= sqrt(horizon)
  double upper_fraction = 0.0;  // replicas with an upper-half crossing
  double mean_upper_crossings = 0.0;
  /// Replicas with a crossing in the top quarter of the log-horizon.
  double late_fraction = 0.0;
  std::string caveat = kFiniteHorizonCaveat;
};

/// Events M_n <= e^{(ln n) g(ln ln n)} on the grid points with n >= e.
CrossingReport integral_test(const TestFunction& tf,
                             const std::vector<EscapeTrajectory>& runs,
                             MinimaMode mode = MinimaMode::kWindow);
/// Events M_n >= sqrt(n) / ln^delta n on the grid points with n >= e.
CrossingReport envelope_test(double delta,
                             const std::vector<EscapeTrajectory>& runs,
                             MinimaMode mode = MinimaMode::kWindow);

/// Simulates and applies integral_test.
CrossingReport integral_test_experiment(const TestFunction& tf,
                                        const EscapeRunConfig& config,
                                        std::size_t replicas, std::uint64_t seed,
                                        MinimaMode mode = MinimaMode::kWindow);

struct LilSeries {
  std::vector<double> n;
  std::vector<double> running_max;  // of M_n / sqrt(n ln ln ln n)
  double final_value = 0.0;
  /// Max over the last dyadic window divided by the max over the one before.
  double stability = 0.0;
};

/// Evaluated on grid points n >= n_min. Throws std::invalid_argument if the
/// horizon is below 4 n_min or n_min <= e^e.
LilSeries lil_running_max(const EscapeTrajectory& run, double n_min = 1e7,
                          MinimaMode mode = MinimaMode::kWindow);

struct LilReport {
  std::vector<LilSeries> series;
  double mean_final = 0.0;
  double median_final = 0.0;
  double stderr_final = 0.0;
  double mean_stability = 0.0;
  std::string caveat =
      "the stability tolerance is an engineering choice; no rate of "
      "convergence is known";
};
LilReport lil_report(const std::vector<EscapeTrajectory>& runs,
                     double n_min = 1e7, MinimaMode mode = MinimaMode::kWindow);

/// Minimum level visited by 1-CSRW from h before it first reaches stop_level.
int level_chain_future_minimum(int h, int stop_level, const StreamId& stream);

struct CertificationStudy {
  double tolerance = 0.0;
  std::uint64_t certified = 0;
  std::uint64_t changed = 0;  // certified indices whose M_n moved
  std::uint64_t indices = 0;
};

/// Runs the lattice chain to the exits of B(0, r_stop) and B(0, factor r_stop)
/// on the same stream and compares the future minima of the first run on its
/// certified indices.
CertificationStudy certification_study(const ChainSpec& spec,
                                       const LatticeSite& start, double r_stop,
                                       double factor, double tolerance,
                                       std::size_t replicas, std::uint64_t seed,
                                       int per_doubling = 4);

}  // namespace condwalk
