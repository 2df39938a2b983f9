#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "condwalk/lattice.hpp"
#include "condwalk/rng.hpp"

namespace condwalk {

struct DiffusionSpec {
  double rho = 0.0;  // conditioning radius; rho0() is the matched value
  double dt = 0.0;   // step size at the scale of the disk
  /// 1 for standard planar BM, 1/2 for the clock matched to 2D SRW.
  double per_coordinate_variance = 1.0;
  std::uint64_t max_steps = 2'000'000'000ULL;

  static DiffusionSpec standard(double rho = rho0()) {
    return {rho, 1e-3 * rho * rho, 1.0};
  }
  static DiffusionSpec srw_matched(double rho = rho0()) {
    return {rho, 1e-3 * rho * rho, 0.5};
  }
  /// Throws std::invalid_argument unless rho > 0, 0 < dt <= 1e-3 rho^2 and
  /// the variance is positive.
  void validate() const;
};

struct TimedPath {
  std::vector<double> times;
  std::vector<PlanePoint> points;
};

struct BmStopRule {
  enum class Kind { kTime, kExitRadius };
  Kind kind = Kind::kTime;
  double value = 0.0;
  static BmStopRule at_time(double t) { return {Kind::kTime, t}; }
  static BmStopRule exit_radius(double r) { return {Kind::kExitRadius, r}; }
};

/// Euler path of planar BM on the fixed grid spec.dt. For an exit radius the
/// crossing inside a step is detected with the Brownian-bridge probability
/// and the path ends at that step, projected onto the circle. Throws
/// std::runtime_error when max_steps is exceeded.
TimedPath sample_bm_path(const PlanePoint& start, const DiffusionSpec& spec,
                         const BmStopRule& stop, const StreamId& stream);

/// Probability that a Brownian bridge of variance sigma2 * dt, at distances
/// d0 >= 0 and d1 >= 0 from a straight barrier at its ends, touches it.
inline double bridge_crossing_probability(double d0, double d1, double sigma2,
                                          double dt) {
  if (d0 <= 0.0 || d1 <= 0.0) return 1.0;
  return std::exp(-2.0 * d0 * d1 / (sigma2 * dt));
}

/// Sampled minimum of a one-dimensional Brownian bridge from v0 to v1 over a
/// step of variance sigma2 * dt, driven by the uniform u.
inline double bridge_minimum(double v0, double v1, double sigma2, double dt,
                             double u) {
  const double d = v1 - v0;
  return 0.5 * (v0 + v1 - std::sqrt(d * d - 2.0 * sigma2 * dt * std::log(u)));
}

/// The conditioned Brownian motion W-hat outside B(0, rho) as an h-transform
/// of BM with h = ln(|x|/rho): Cartesian Euler steps with drift
/// sigma^2 x / (|x|^2 ln(|x|/rho)). The local step is
/// min(dt (r/rho)^2, (r - rho)^2 / 100, time left to the caller's limit).
/// A step ending inside rho (1 + 1e-9) is reflected back and counted.
class HatWProcess {
 public:
  /// Throws std::invalid_argument if |start| <= rho or spec is invalid.
  HatWProcess(const DiffusionSpec& spec, const PlanePoint& start,
              const StreamId& stream);

  double time() const { return t_; }
  const PlanePoint& position() const { return pos_; }
  double radius() const { return r_; }
  std::uint64_t steps() const { return steps_; }
  std::uint64_t reflections() const { return reflections_; }
  double sigma2() const { return sigma2_; }

  /// One step, never past t_limit. Returns the step length.
  double step(double t_limit);
  /// Uniform from the process's own stream (for bridge decisions).
  double uniform() { return rng_.uniform(); }

 private:
  double rho_;
  double guard_;
  double base_dt_;
  double sigma2_;
  double sigma_;
  std::uint64_t max_steps_;
  Rng rng_;
  PlanePoint pos_;
  double r_;
  double t_ = 0.0;
  std::uint64_t steps_ = 0;
  std::uint64_t reflections_ = 0;
};

/// W-hat run up to time `horizon`, recorded at every step.
struct HatWRun {
  TimedPath path;
  std::uint64_t steps = 0;
  std::uint64_t reflections = 0;
  double min_radius = 0.0;
};
HatWRun sample_hatW_direct(const PlanePoint& start, const DiffusionSpec& spec,
                           double horizon, const StreamId& stream);

struct LevelExit {
  int level_to = 0;
  double duration = 0.0;
  PlanePoint point;
};

/// Runs W-hat from `start` (on the circle of radius rho e^m) to the first hit
/// of the circles of levels m - 1 and m + 1, with bridge-corrected crossing.
LevelExit hatW_level_exit(HatWProcess& process, int m, double rho);

/// Successive level exits of one W-hat path started on level m.
std::vector<LevelExit> hatW_level_exits(const DiffusionSpec& spec, int m,
                                        double start_angle,
                                        std::size_t excursions,
                                        const StreamId& stream);

/// 1-CSRW: m - 1 with probability (m - 1)/(2m), otherwise m + 1.
inline int level_chain_step(int m, double u) {
  return u < static_cast<double>(m - 1) / (2.0 * m) ? m - 1 : m + 1;
}

/// Expected number of visits to m of 1-CSRW started at h: 2m min(m/h, 1).
inline double green_1csrw(int h, int m) {
  return 2.0 * m * std::min(static_cast<double>(m) / h, 1.0);
}

/// Monte Carlo visit count to level m of 1-CSRW from h. Paths are followed up
/// to level `cap`; from there the chain returns to m with probability m/cap
/// (scale function 1/x), which keeps the count exact in law.
std::uint64_t level_chain_visits(int h, int m, int cap, const StreamId& stream);

struct BesselReport {
  int m = 0;
  double D = 0.0;
  double delta = 0.0;
  double start = 0.0;
  double inner = 0.0;  // r_{m+1} - m^{4+delta}
  double outer = 0.0;  // r_{m+1} + D m
  bool inner_reachable = true;
  std::size_t replicas = 0;
  std::size_t inner_hits = 0;
  double inner_probability = 0.0;
  double inner_stderr = 0.0;
  /// ln(outer/start) / ln(outer/inner); 0 when the inner barrier is <= 0.
  double scale_prediction = 0.0;
  double order_prediction = 0.0;  // m^{-(3+delta)}
  std::size_t long_exits = 0;     // exit time >= m^{8+3 delta}
  double long_exit_probability = 0.0;
  double long_exit_order = 0.0;   // exp(-m^delta)
  std::uint64_t total_steps = 0;
};

/// Bessel(2) process dX = dbeta + dt/(2X), simulated exactly as the modulus
/// of planar BM on an adaptive grid, started at r_{m+1} - D m - 1 and stopped
/// at the window (r_{m+1} - m^{4+delta}, r_{m+1} + D m).
BesselReport bessel_hitting_experiment(int m, double D, double delta,
                                       std::size_t replicas,
                                       const StreamId& stream);

}  // namespace condwalk
