#include "condwalk/escape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "condwalk/levels.hpp"
#include "condwalk/parallel.hpp"
#include "condwalk/stats.hpp"

namespace condwalk {

const char* const kFiniteHorizonCaveat =
    "finite-horizon proxy: the limit statements concern infinitely many "
    "events and cannot be confirmed or refuted by simulation";

std::vector<double> geometric_grid(double horizon, int per_doubling) {
  if (!(horizon >= 1.0) || per_doubling < 1) {
    throw std::invalid_argument("geometric_grid: need horizon >= 1 and per_doubling >= 1");
  }
  std::vector<double> grid;
  for (int j = 0;; ++j) {
    const double n = std::round(std::exp2(static_cast<double>(j) / per_doubling));
    if (n > horizon) break;
    if (grid.empty() || n > grid.back()) grid.push_back(n);
  }
  const double h = std::floor(horizon);
  if (grid.back() < h) grid.push_back(h);
  return grid;
}

namespace {

double scale_error(double m, double r, double rho) {
  if (m <= rho) return 1.0;
  if (r <= m) return 1.0;
  return std::clamp(std::log(m / rho) / std::log(r / rho), 0.0, 1.0);
}

double lattice_rho(const ChainSpec& spec) {
  switch (spec.variant) {
    case ChainVariant::kHatS:
      return rho0();
    case ChainVariant::kHatSA:
      // q_A ~ (2/pi) ln(|x|/rho0) - cap(A)
      return rho0() * std::exp(0.5 * std::numbers::pi * spec.avoid->capacity());
    case ChainVariant::kSrw:
      break;
  }
  throw std::invalid_argument("escape runs need a conditioned chain");
}

}  // namespace

FutureMinima future_minima(const std::vector<double>& radius, double r_stop,
                           double rho, int per_doubling, double tolerance) {
  if (radius.size() < 2 || radius.back() < r_stop) {
    throw std::invalid_argument("future_minima: trajectory does not reach r_stop");
  }
  for (std::size_t i = 0; i + 1 < radius.size(); ++i) {
    if (radius[i] >= r_stop) {
      throw std::invalid_argument("future_minima: trajectory continues past its first exit");
    }
  }
  const double T = static_cast<double>(radius.size() - 1);
  FutureMinima out;
  out.n = geometric_grid(T, per_doubling);
  out.n.pop_back();  // the exit time itself carries no information
  if (out.n.empty()) out.n.push_back(0.0);

  std::vector<double> suffix(radius.size());
  suffix.back() = radius.back();
  for (std::size_t i = radius.size() - 1; i-- > 0;) {
    suffix[i] = std::min(radius[i], suffix[i + 1]);
  }
  for (double n : out.n) {
    const auto i = static_cast<std::size_t>(n);
    const double m = suffix[i];
    const double err = scale_error(m, r_stop, rho);
    out.values.push_back(m);
    out.radius.push_back(radius[i]);
    out.certification_error.push_back(err);
    out.certified.push_back(err <= tolerance);
  }
  return out;
}

const char* to_string(MinimaMode m) {
  return m == MinimaMode::kWindow ? "window" : "tail_closure";
}

FutureMinima EscapeTrajectory::minima(MinimaMode mode, double tolerance) const {
  FutureMinima out;
  const std::size_t J = n.size();
  out.n = n;
  out.radius = radius;
  out.values.assign(J, 0.0);
  out.certified.assign(J, false);
  out.certification_error.assign(J, 1.0);
  const bool closed = mode == MinimaMode::kTailClosure;
  double running = radius.back();
  bool from_tail = false;
  if (closed && tail_min < running) {
    running = tail_min;
    from_tail = true;
  }
  for (std::size_t j = J; j-- > 0;) {
    if (j + 1 < J && segment_min[j] <= running) {
      running = segment_min[j];
      from_tail = false;
    }
    out.values[j] = running;
    const double err = from_tail ? 1.0 : scale_error(running, radius.back(), rho);
    out.certification_error[j] = err;
    out.certified[j] = err <= tolerance;
  }
  return out;
}

double sample_tail_minimum(double radius, double rho, double u) {
  // inf after the horizon <= r with probability ln(r/rho)/ln(R/rho)
  return rho * std::pow(radius / rho, u);
}

EscapeTrajectory run_lattice_escape(const ChainSpec& spec,
                                    const LatticeSite& start,
                                    const std::vector<double>& grid,
                                    const StreamId& stream) {
  if (grid.empty() || grid.front() < 1.0) {
    throw std::invalid_argument("run_lattice_escape: bad grid");
  }
  EscapeTrajectory out;
  out.rho = lattice_rho(spec);
  LatticeWalker walker(spec, start);
  Rng rng(stream.sub(0));

  std::uint64_t t = 0;
  auto advance = [&](std::uint64_t until, std::int64_t& min2) {
    for (; t < until; ++t) {
      walker.step(rng.next_u32());
      min2 = std::min(min2, walker.norm2());
    }
  };
  std::int64_t ignore = walker.norm2();
  advance(static_cast<std::uint64_t>(grid.front()), ignore);

  out.n = grid;
  out.radius.reserve(grid.size());
  out.segment_min.reserve(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const std::int64_t n2 = walker.norm2();
    out.radius.push_back(std::sqrt(static_cast<double>(n2)));
    if (j + 1 == grid.size()) break;
    std::int64_t min2 = n2;
    // the segment is [n_j, n_{j+1}); the step landing on n_{j+1} belongs to
    // the next segment
    advance(static_cast<std::uint64_t>(grid[j + 1]) - 1, min2);
    walker.step(rng.next_u32());
    ++t;
    out.segment_min.push_back(std::sqrt(static_cast<double>(min2)));
  }
  Rng tail(stream.sub(1));
  out.tail_min = sample_tail_minimum(out.radius.back(), out.rho, tail.uniform());
  return out;
}

EscapeTrajectory run_hatW_escape(const DiffusionSpec& spec,
                                 const PlanePoint& start,
                                 const std::vector<double>& grid,
                                 const StreamId& stream) {
  if (grid.empty() || grid.front() <= 0.0) {
    throw std::invalid_argument("run_hatW_escape: bad grid");
  }
  EscapeTrajectory out;
  out.rho = spec.rho;
  HatWProcess w(spec, start, stream.sub(0));
  while (w.time() < grid.front()) w.step(grid.front());

  out.n = grid;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    out.radius.push_back(w.radius());
    if (j + 1 == grid.size()) break;
    double lo = w.radius();
    while (w.time() < grid[j + 1]) {
      w.step(grid[j + 1]);
      if (w.time() < grid[j + 1]) lo = std::min(lo, w.radius());
    }
    out.segment_min.push_back(lo);
  }
  Rng tail(stream.sub(1));
  out.tail_min = sample_tail_minimum(out.radius.back(), out.rho, tail.uniform());
  return out;
}

const char* to_string(EscapeProcess p) {
  switch (p) {
    case EscapeProcess::kHatS: return "hatS";
    case EscapeProcess::kHatSA: return "hatSA";
    case EscapeProcess::kHatW: return "hatW";
  }
  return "?";
}

std::vector<EscapeTrajectory> escape_trajectories(const EscapeRunConfig& config,
                                                  std::size_t replicas,
                                                  std::uint64_t seed) {
  const auto grid = geometric_grid(config.horizon, config.per_doubling);
  if (config.process == EscapeProcess::kHatW) {
    config.diffusion.validate();
    return parallel_map<EscapeTrajectory>(replicas, [&](std::size_t r) {
      return run_hatW_escape(config.diffusion, config.plane_start, grid,
                             StreamId{seed, StreamTag::kEscape, r});
    });
  }
  ChainSpec spec;
  if (config.process == EscapeProcess::kHatSA) {
    if (!config.avoid) throw std::invalid_argument("hatSA needs an avoid set");
    spec = ChainSpec::hat_s_a(config.avoid);
  } else {
    spec = ChainSpec::hat_s();
  }
  if (spec.forbidden(config.lattice_start)) {
    throw std::invalid_argument("escape run starts on a forbidden site");
  }
  return parallel_map<EscapeTrajectory>(replicas, [&](std::size_t r) {
    return run_lattice_escape(spec, config.lattice_start, grid,
                              StreamId{seed, StreamTag::kEscape, r});
  });
}

double TestFunction::threshold(double n) const {
  const double ln = std::log(n);
  return std::exp(ln * g(std::log(ln)));
}

TestFunction TestFunction::constant(double delta) {
  return {"constant(" + std::to_string(delta) + ")",
          [delta](double) { return delta; }, false};
}

TestFunction TestFunction::exp_half() {
  return {"exp(-u/2)", [](double u) { return std::exp(-0.5 * u); }, true};
}

bool test_function_valid(const TestFunction& tf, double horizon) {
  const double lo = std::exp(std::numbers::e);
  if (!(horizon > lo)) return true;
  constexpr int kPoints = 2000;
  const double a = std::log(lo), b = std::log(horizon);
  double prev_g = 0.0, prev_f = 0.0;
  for (int i = 0; i <= kPoints; ++i) {
    const double lt = a + (b - a) * i / kPoints;
    const double g = tf.g(std::log(lt));
    const double f = lt * g;
    if (i > 0) {
      if (g > prev_g + 1e-12 * std::abs(prev_g)) return false;
      if (f < prev_f - 1e-12 * std::abs(prev_f)) return false;
    }
    prev_g = g;
    prev_f = f;
  }
  return true;
}

namespace {

template <class Event>
CrossingReport crossing_report(std::string name,
                               const std::vector<EscapeTrajectory>& runs,
                               MinimaMode mode, Event&& event) {
  CrossingReport rep;
  rep.name = std::move(name);
  rep.mode = mode;
  rep.replicas = runs.size();
  std::size_t with_upper = 0, with_late = 0;
  double up_total = 0.0;
  for (const auto& run : runs) {
    const auto fm = run.minima(mode);
    const double horizon = fm.n.back();
    rep.horizon = std::max(rep.horizon, horizon);
    const double upper = std::sqrt(horizon);
    const double late = std::pow(horizon, 0.75);
    std::uint64_t all = 0, up = 0;
    bool seen_late = false;
    for (std::size_t j = 0; j < fm.n.size(); ++j) {
      const double n = fm.n[j];
      if (n < std::numbers::e) continue;
      if (event(n, fm.values[j])) {
        ++all;
        if (n >= upper) ++up;
        if (n >= late) seen_late = true;
      }
    }
    rep.crossings.push_back(all);
    rep.upper_crossings.push_back(up);
    up_total += static_cast<double>(up);
    if (up > 0) ++with_upper;
    if (seen_late) ++with_late;
  }
  if (!runs.empty()) {
    const double r = static_cast<double>(runs.size());
    rep.upper_fraction = static_cast<double>(with_upper) / r;
    rep.late_fraction = static_cast<double>(with_late) / r;
    rep.mean_upper_crossings = up_total / r;
  }
  return rep;
}

}  // namespace

CrossingReport integral_test(const TestFunction& tf,
                             const std::vector<EscapeTrajectory>& runs,
                             MinimaMode mode) {
  return crossing_report(tf.name, runs, mode, [&](double n, double m) {
    return m <= tf.threshold(n);
  });
}

CrossingReport envelope_test(double delta,
                             const std::vector<EscapeTrajectory>& runs,
                             MinimaMode mode) {
  return crossing_report("envelope(" + std::to_string(delta) + ")", runs, mode,
                         [&](double n, double m) {
                           return m >= std::sqrt(n) / std::pow(std::log(n), delta);
                         });
}

CrossingReport integral_test_experiment(const TestFunction& tf,
                                        const EscapeRunConfig& config,
                                        std::size_t replicas, std::uint64_t seed,
                                        MinimaMode mode) {
  if (!test_function_valid(tf, config.horizon)) {
    throw std::invalid_argument("test function violates the monotonicity conditions");
  }
  return integral_test(tf, escape_trajectories(config, replicas, seed), mode);
}

LilSeries lil_running_max(const EscapeTrajectory& run, double n_min,
                          MinimaMode mode) {
  const double horizon = run.n.back();
  if (!(n_min > std::exp(std::numbers::e)) || horizon < 4.0 * n_min) {
    throw std::invalid_argument("lil_running_max: horizon too small");
  }
  const auto fm = run.minima(mode);
  LilSeries s;
  double best = 0.0, last = 0.0, before = 0.0;
  for (std::size_t j = 0; j < fm.n.size(); ++j) {
    const double n = fm.n[j];
    if (n < n_min) continue;
    const double v = fm.values[j] / std::sqrt(n * std::log(std::log(std::log(n))));
    best = std::max(best, v);
    s.n.push_back(n);
    s.running_max.push_back(best);
    if (n > horizon / 2) {
      last = std::max(last, v);
    } else if (n > horizon / 4) {
      before = std::max(before, v);
    }
  }
  s.final_value = best;
  s.stability = before > 0.0 ? last / before : 0.0;
  return s;
}

LilReport lil_report(const std::vector<EscapeTrajectory>& runs, double n_min,
                     MinimaMode mode) {
  LilReport rep;
  RunningStats fin, stab;
  std::vector<double> finals;
  for (const auto& run : runs) {
    rep.series.push_back(lil_running_max(run, n_min, mode));
    fin.add(rep.series.back().final_value);
    stab.add(rep.series.back().stability);
    finals.push_back(rep.series.back().final_value);
  }
  if (!finals.empty()) {
    rep.mean_final = fin.mean();
    rep.stderr_final = fin.stderr_mean();
    rep.median_final = median(finals);
    rep.mean_stability = stab.mean();
  }
  return rep;
}

int level_chain_future_minimum(int h, int stop_level, const StreamId& stream) {
  if (h < 1 || stop_level <= h) {
    throw std::invalid_argument("level_chain_future_minimum: need 1 <= h < stop_level");
  }
  Rng rng(stream);
  int m = h, lo = h;
  while (m < stop_level) {
    m = level_chain_step(m, rng.uniform());
    lo = std::min(lo, m);
  }
  return lo;
}

CertificationStudy certification_study(const ChainSpec& spec,
                                       const LatticeSite& start, double r_stop,
                                       double factor, double tolerance,
                                       std::size_t replicas, std::uint64_t seed,
                                       int per_doubling) {
  if (!(factor > 1.0) || !(r_stop > std::sqrt(static_cast<double>(start.norm2())))) {
    throw std::invalid_argument("certification_study: need factor > 1 and start inside r_stop");
  }
  const double rho = lattice_rho(spec);
  struct Counts {
    std::uint64_t certified = 0, changed = 0, indices = 0;
  };
  const auto counts = parallel_map<Counts>(replicas, [&](std::size_t r) {
    LatticeWalker walker(spec, start);
    Rng rng(StreamId{seed, StreamTag::kEscape, r, 2});
    const auto big2 = static_cast<std::int64_t>(std::ceil(factor * factor * r_stop * r_stop));
    const auto small2 = static_cast<std::int64_t>(std::ceil(r_stop * r_stop));
    std::vector<double> radius{std::sqrt(static_cast<double>(walker.norm2()))};
    std::size_t first_exit = 0;
    while (walker.norm2() < big2) {
      walker.step(rng.next_u32());
      radius.push_back(std::sqrt(static_cast<double>(walker.norm2())));
      if (first_exit == 0 && walker.norm2() >= small2) first_exit = radius.size() - 1;
    }
    if (first_exit == 0) first_exit = radius.size() - 1;
    const std::vector<double> prefix(radius.begin(), radius.begin() + first_exit + 1);
    const auto fm = future_minima(prefix, r_stop, rho, per_doubling, tolerance);
    // suffix minima over the longer run
    std::vector<double> suffix(radius.size());
    suffix.back() = radius.back();
    for (std::size_t i = radius.size() - 1; i-- > 0;) {
      suffix[i] = std::min(radius[i], suffix[i + 1]);
    }
    Counts c;
    for (std::size_t j = 0; j < fm.n.size(); ++j) {
      ++c.indices;
      if (!fm.certified[j]) continue;
      ++c.certified;
      if (suffix[static_cast<std::size_t>(fm.n[j])] < fm.values[j]) ++c.changed;
    }
    return c;
  });
  CertificationStudy out;
  out.tolerance = tolerance;
  for (const auto& c : counts) {
    out.certified += c.certified;
    out.changed += c.changed;
    out.indices += c.indices;
  }
  return out;
}

}  // namespace condwalk
