#include "condwalk/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "condwalk/kmt.hpp"
#include "condwalk/parallel.hpp"

namespace condwalk {

void CouplingParams::validate() const {
  if (h < 1 || h > kMaxLevel - 2) {
    throw std::invalid_argument("coupling: h must be in [1, 18]");
  }
  if (!(D > 0.0)) throw std::invalid_argument("coupling: D must be > 0");
  if (!(beta > 0.0)) throw std::invalid_argument("coupling: beta must be > 0");
  if (!(alpha > 0.0)) throw std::invalid_argument("coupling: alpha must be > 0");
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("coupling: epsilon must be in (0, 1)");
  }
  if (level_cap() <= h || level_cap() > kMaxLevel - 1) {
    throw std::invalid_argument("coupling: max_level must be in (h, 19]");
  }
  if (max_tries == 0 || max_excursions == 0) {
    throw std::invalid_argument("coupling: caps must be positive");
  }
}

double align_rotation(const PlanePoint& x, const LatticeSite& xi, int m) {
  const PlanePoint p = to_plane(xi);
  const double theta = p.arg() - x.arg();
  if (m >= 3 && distance(p, rotate(x, theta)) > 1.0 + 1e-9) {
    throw std::logic_error("align_rotation: radial gap exceeds 1");
  }
  return theta;
}

const char* to_string(TryOutcome o) {
  switch (o) {
    case TryOutcome::kSuccess: return "success";
    case TryOutcome::kFailure: return "failure";
    case TryOutcome::kCatastrophe: return "catastrophe";
  }
  return "?";
}

const char* to_string(Assumption a) {
  switch (a) {
    case Assumption::kNone: return "none";
    case Assumption::kKmt: return "kmt";
    case Assumption::kWindow: return "window";
    case Assumption::kTimeGap: return "time_gap";
    case Assumption::kDecision: return "decision";
  }
  return "?";
}

Classification classify_try(const CandidatePair& c, double u,
                            const CouplingParams& params) {
  constexpr auto cat = TryOutcome::kCatastrophe;
  if (!c.kmt_ok) return {cat, Assumption::kKmt};
  const double rm = level_radius(c.m);
  const double r3 = rm * rm * rm;
  auto in_window = [&](double v) { return v >= rm && v <= r3; };
  if ((c.w_to != 0 && !in_window(c.s)) || (c.s_to != 0 && !in_window(c.sigma))) {
    return {cat, Assumption::kWindow};
  }
  const double gap_bound = std::pow(static_cast<double>(c.m), params.beta);
  if (c.gap_exceeded ||
      (c.w_to != 0 && c.s_to != 0 && std::abs(c.s - c.sigma) > gap_bound)) {
    return {cat, Assumption::kTimeGap};
  }
  if (c.w_to == 0 || c.s_to == 0) return {cat, Assumption::kWindow};
  const double keep_inward = 1.0 - 2.0 / (c.m + 1.0);
  if (c.w_to > c.m && c.s_to > c.m) {
    if (u <= c.pi) return {TryOutcome::kSuccess, Assumption::kNone};
    return {cat, Assumption::kDecision};
  }
  if (c.w_to < c.m && c.s_to < c.m) {
    if (u <= std::min(c.pi, keep_inward)) return {TryOutcome::kSuccess, Assumption::kNone};
    if (u >= std::max(c.pi, keep_inward)) return {TryOutcome::kFailure, Assumption::kNone};
  }
  return {cat, Assumption::kDecision};
}

namespace {

// Crossing probabilities below this are treated as zero.
constexpr double kNegligible = 1e-12;
// exp(-2 d0 d1 / (sigma^2 dt)) with sigma^2 = 1/2 and dt = 1 drops below
// kNegligible once d0 d1 exceeds this.
const double kUnitCut = -std::log(kNegligible) / 4.0;
// Distance from a barrier beyond which a unit interval needs no refinement
// whatever the other end does (kUnitCut / kFar < kFar).
constexpr double kFar = 2.63;
constexpr double kSubstepScale = 2.0 / (0.5 / KmtStream2D::kSubsteps);

struct TryContext {
  int m = 0;
  PlanePoint y0;   // rotated start of W-hat
  LatticeSite xi;  // start of S-hat
  double b = 0.0;  // D m
  double inner = 0.0;
  double outer = 0.0;
  ShellStop stop{3};
  std::uint64_t n_max = 0;  // floor(r_m^3)
  double gap_bound = 0.0;
  double r_m = 0.0;
  // Radius sampling.
  std::uint64_t stride = 0;
  double t_k = 0.0;
  std::uint64_t tau_k = 0;
  std::uint64_t next_s = 0;  // next global sample times
  double next_w = 0.0;
};

struct TryResult {
  CandidatePair pair;
  PlanePoint w_end;  // in the rotated frame
  LatticeSite s_end;
  std::uint64_t steps = 0;
  std::vector<double> s_radii;
  std::vector<double> w_radii;
};

double dist2(const PlanePoint& a, const PlanePoint& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

// KMT bound on [n-1, n]: the bridge of W stays within b of S_{n-1}.
bool kmt_interval_ok(KmtStream2D& st, std::uint64_t n, const PlanePoint& sp,
                     const PlanePoint& w0, const PlanePoint& w1, double b) {
  const double d0 = std::sqrt(dist2(sp, w0));
  const double d1 = std::sqrt(dist2(sp, w1));
  if (d0 > b || d1 > b) return false;
  if ((b - d0) * (b - d1) >= kUnitCut) return true;
  const auto& br = st.bridge(n);
  double prev = d0;
  for (int j = 1; j <= KmtStream2D::kSubsteps; ++j) {
    const double d = std::sqrt(dist2(sp, br[static_cast<std::size_t>(j)]));
    if (d > b) return false;
    const double p = std::exp(-kSubstepScale * (b - prev) * (b - d));
    if (p > kNegligible && st.bridge_uniform(n) < p) return false;
    prev = d;
  }
  return true;
}

// Exit of y0 + W from the annulus inside [n-1, n]; returns the level step
// (+1, -1) or 0, with the exit time fraction and the projected exit point.
int refine_exit(KmtStream2D& st, std::uint64_t n, const TryContext& c,
                double& frac, PlanePoint& point) {
  const auto& br = st.bridge(n);
  double prev = (c.y0 + br[0]).norm();
  for (int j = 1; j <= KmtStream2D::kSubsteps; ++j) {
    const PlanePoint q = c.y0 + br[static_cast<std::size_t>(j)];
    const double r = q.norm();
    int side = 0;
    if (r >= c.outer) {
      side = 1;
    } else if (r <= c.inner) {
      side = -1;
    } else {
      const double po = std::exp(-kSubstepScale * (c.outer - prev) * (c.outer - r));
      const double pi = std::exp(-kSubstepScale * (prev - c.inner) * (r - c.inner));
      if (po > kNegligible || pi > kNegligible) {
        const double u = st.bridge_uniform(n);
        if (u < po) {
          side = 1;
        } else if (u < po + pi) {
          side = -1;
        }
      }
    }
    if (side != 0) {
      frac = static_cast<double>(j) / KmtStream2D::kSubsteps;
      point = q * ((side > 0 ? c.outer : c.inner) / r);
      return side;
    }
    prev = r;
  }
  return 0;
}

bool near_barrier(double r2, double in_far2, double out_far2) {
  return r2 <= in_far2 || r2 >= out_far2;
}

TryResult simulate_try(TryContext& c, const StreamId& id) {
  TryResult res;
  CandidatePair& p = res.pair;
  p.m = c.m;
  KmtStream2D st(id, ceil_log2(std::max<std::uint64_t>(c.n_max, 1)));
  const double a1_far = c.b - kFar;
  const double a1_far2 = a1_far > 0.0 ? a1_far * a1_far : -1.0;
  const double in_far = c.inner + kFar;
  const double out_far = c.outer - kFar;
  const bool always_refine = in_far >= out_far;
  const double in_far2 = in_far * in_far;
  const double out_far2 = out_far * out_far;
  bool w_done = false;
  bool s_done = false;
  bool prev_near = true;  // the start lies on C_m; only matters for tiny m
  const bool sample = c.stride > 0;
  std::uint64_t next_s = c.next_s;
  double next_w = c.next_w;

  while (!(w_done && s_done)) {
    if (!st.next_block()) return res;
    const LatticeSite* S = st.block_s();
    const PlanePoint* W = st.block_w();
    const std::uint64_t t0 = st.block_start();
    const std::uint64_t len = st.block_length();
    for (std::uint64_t i = 1; i <= len; ++i) {
      const std::uint64_t n = t0 + i;
      if (n > c.n_max) return res;
      ++res.steps;
      // KMT bound on [n, n+1] for n >= 1, i.e. intervals from time 1 on.
      if (n >= 2) {
        const PlanePoint sp = to_plane(S[i - 1]);
        if (std::max(dist2(sp, W[i - 1]), dist2(sp, W[i])) > a1_far2 &&
            !kmt_interval_ok(st, n, sp, W[i - 1], W[i], c.b)) {
          p.kmt_ok = false;
          return res;
        }
      }
      if (!s_done) {
        const LatticeSite site = c.xi + S[i];
        const std::int64_t n2 = site.norm2();
        if (sample && c.tau_k + n == next_s) {
          res.s_radii.push_back(std::sqrt(static_cast<double>(n2)));
          next_s += c.stride;
        }
        if (c.stop.stopped(n2)) {
          s_done = true;
          p.sigma = static_cast<double>(n);
          p.s_to = n2 <= c.stop.inner_hi ? c.m - 1 : c.m + 1;
          res.s_end = site;
          if (p.sigma < c.r_m) return res;
        }
      }
      if (!w_done) {
        const PlanePoint q = c.y0 + W[i];
        const double r2 = q.x * q.x + q.y * q.y;
        if (sample && c.t_k + static_cast<double>(n) >= next_w) {
          res.w_radii.push_back(std::sqrt(r2));
          next_w += static_cast<double>(c.stride);
        }
        const bool near = always_refine || near_barrier(r2, in_far2, out_far2);
        if (near || prev_near) {
          const double r1 = std::sqrt(r2);
          const double r0 = (c.y0 + W[i - 1]).norm();
          const double po = bridge_crossing_probability(c.outer - r0, c.outer - r1, 0.5, 1.0);
          const double pi = bridge_crossing_probability(r0 - c.inner, r1 - c.inner, 0.5, 1.0);
          if (po > kNegligible || pi > kNegligible) {
            double frac = 0.0;
            PlanePoint point;
            const int side = refine_exit(st, n, c, frac, point);
            if (side != 0) {
              w_done = true;
              p.s = static_cast<double>(n - 1) + frac;
              p.w_to = c.m + side;
              res.w_end = point;
              if (p.s < c.r_m) return res;
            }
          }
        }
        prev_near = near;
      }
      if (w_done && !s_done && static_cast<double>(n) - p.s > c.gap_bound) {
        p.gap_exceeded = true;
        return res;
      }
      if (s_done && !w_done && static_cast<double>(n) - p.sigma > c.gap_bound) {
        p.gap_exceeded = true;
        return res;
      }
      if (w_done && s_done) break;
    }
  }
  return res;
}

int circle_level(const PlanePoint& x) {
  const double v = std::log(x.norm() / rho0());
  const long m = std::lround(v);
  if (m < 1 || std::abs(v - static_cast<double>(m)) > 1e-9) {
    throw std::invalid_argument("run_coupling: start_x is not on a level circle");
  }
  return static_cast<int>(m);
}

// Independent excursions of the reduction phase use indices from here on.
constexpr std::uint64_t kReductionBase = std::uint64_t{1} << 40;

}  // namespace

std::pair<PlanePoint, LatticeSite> default_start(int h) {
  const double r = level_radius(h);
  const auto s = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(r)));
  return {{r, 0.0}, {s, 0}};
}

CouplingRun run_coupling(const PlanePoint& start_x, const LatticeSite& start_xi,
                         const CouplingParams& params, const PiWeights& pi,
                         std::uint64_t seed, std::uint64_t replica) {
  params.validate();
  const int cap = params.level_cap();
  if (pi.max_level() < cap) {
    throw std::invalid_argument("run_coupling: pi weights must cover max_level");
  }
  const auto start_s_level = gamma_membership(start_xi);
  if (!start_s_level || *start_s_level < 1) {
    throw std::invalid_argument("run_coupling: start_xi is not in a shell");
  }
  const ExcursionStreams coupled{seed, replica};
  const ExcursionStreams indep{
      splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(StreamTag::kCouplingIndependent))),
      replica};
  const BmExcursionParams bm = BmExcursionParams::srw_matched();

  CouplingRun run;
  auto& tr = run.transcript;
  tr.beta = params.beta;
  run.visits.assign(static_cast<std::size_t>(cap) + 1, 0);
  run.catastrophes.assign(static_cast<std::size_t>(cap) + 1, 0);

  PlanePoint x = start_x;
  LatticeSite xi = start_xi;
  int mw = circle_level(start_x);
  int ms = *start_s_level;
  double t = 0.0;
  double tau = 0.0;
  std::uint64_t kr = kReductionBase;
  while (mw < ms) {
    const auto e = build_hatW_excursion(x, mw, kr++, indep, bm);
    x = e.record.end;
    mw = e.record.level_to;
    t += e.record.duration;
  }
  while (ms < mw) {
    const auto e = build_hatS_excursion(xi, ms, kr++, indep, pi);
    xi = e.end;
    ms = e.record.level_to;
    tau += e.record.duration;
  }
  tr.h = mw;
  tr.time_offset_w = t;
  tr.time_offset_s = tau;
  tr.m.push_back(mw);
  tr.mu.push_back(ms);
  tr.t.push_back(t);
  tr.tau.push_back(tau);

  auto& radii = run.radii;
  radii.stride = params.path_stride;
  if (radii.stride > 0) {
    radii.s.push_back(xi.norm());
    radii.w.push_back(x.norm());
  }

  std::uint64_t k = 0;
  bool together = true;
  while (together && mw < cap) {
    if (k >= params.max_excursions) {
      throw std::runtime_error("run_coupling: excursion cap reached");
    }
    const int m = mw;
    ++run.visits[static_cast<std::size_t>(m)];
    const double theta = align_rotation(x, xi, m);
    TryContext c;
    c.m = m;
    c.y0 = rotate(x, theta);
    c.xi = xi;
    c.b = params.D * m;
    c.inner = level_radius(m - 1);
    c.outer = level_radius(m + 1);
    c.stop = ShellStop(m);
    c.r_m = level_radius(m);
    c.n_max = static_cast<std::uint64_t>(std::floor(c.r_m * c.r_m * c.r_m));
    c.gap_bound = std::pow(static_cast<double>(m), params.beta);
    c.stride = radii.stride;
    c.t_k = t - tr.time_offset_w;
    c.tau_k = static_cast<std::uint64_t>(tau - tr.time_offset_s);
    c.next_s = radii.s.size() * radii.stride;
    c.next_w = static_cast<double>(radii.w.size() * radii.stride);

    for (std::uint64_t l = 0;; ++l) {
      if (l >= params.max_tries) {
        throw std::runtime_error("run_coupling: try cap reached");
      }
      TryResult r = simulate_try(c, {seed, StreamTag::kCouplingPair, replica, k, l});
      run.kmt_steps += r.steps;
      if (r.pair.s_to != 0) r.pair.pi = pi.pi_unchecked(m, r.s_end);
      const Classification cl = classify_try(r.pair, coupled.uniform(k, l), params);
      if (cl.outcome == TryOutcome::kFailure) continue;
      CouplingStep step{k + 1, m, cl.outcome, cl.cause, l + 1, 0.0};
      if (cl.outcome == TryOutcome::kCatastrophe) {
        tr.steps.push_back(step);
        tr.catastrophe_step = k + 1;
        tr.catastrophe_cause = cl.cause;
        ++run.catastrophes[static_cast<std::size_t>(m)];
        together = false;
        break;
      }
      step.gap = std::abs(r.pair.s - r.pair.sigma);
      tr.steps.push_back(step);
      x = rotate(r.w_end, -theta);
      xi = r.s_end;
      mw = ms = r.pair.w_to;
      t += r.pair.s;
      tau += r.pair.sigma;
      tr.m.push_back(mw);
      tr.mu.push_back(ms);
      tr.t.push_back(t);
      tr.tau.push_back(tau);
      radii.s.insert(radii.s.end(), r.s_radii.begin(), r.s_radii.end());
      radii.w.insert(radii.w.end(), r.w_radii.begin(), r.w_radii.end());
      break;
    }
    ++k;
  }

  if (!together && !params.stop_at_catastrophe) {
    // Both continue on their own from t_k and tau_k.
    std::uint64_t kw = k;
    while (mw < cap) {
      if (kw >= params.max_excursions) {
        throw std::runtime_error("run_coupling: excursion cap reached");
      }
      const auto e = build_hatW_excursion(x, mw, kw++, indep, bm);
      x = e.record.end;
      mw = e.record.level_to;
      t += e.record.duration;
      tr.m.push_back(mw);
      tr.t.push_back(t);
    }
    std::uint64_t ks = k;
    while (ms < cap) {
      if (ks >= params.max_excursions) {
        throw std::runtime_error("run_coupling: excursion cap reached");
      }
      const auto e = build_hatS_excursion(xi, ms, ks++, indep, pi, params.max_tries);
      xi = e.end;
      ms = e.record.level_to;
      tau += e.record.duration;
      tr.mu.push_back(ms);
      tr.tau.push_back(tau);
    }
  }
  run.w_end = x;
  run.s_end = xi;
  return run;
}

TranscriptBoundReport transcript_bound_check(const CouplingTranscript& tr) {
  TranscriptBoundReport rep;
  auto fail = [&](std::string msg) {
    rep.hard_ok = false;
    rep.violations.push_back(std::move(msg));
  };
  if (tr.m.empty()) return rep;
  if (tr.mu.empty() || tr.m[0] != tr.mu[0]) fail("k=0: start levels differ");
  std::uint64_t coupled = 0;
  for (const auto& s : tr.steps) {
    if (s.outcome == TryOutcome::kSuccess) ++coupled;
  }
  if (coupled + 1 > tr.m.size() || coupled + 1 > tr.mu.size()) {
    fail("transcript shorter than its coupled steps");
    return rep;
  }
  const double h = tr.m[0];
  for (std::uint64_t k = 1; k <= coupled; ++k) {
    const std::string at = "k=" + std::to_string(k) + ": ";
    const int prev = tr.m[k - 1];
    if (tr.m[k] != tr.mu[k]) fail(at + "levels differ before a catastrophe");
    const auto& step = tr.steps[k - 1];
    const double gap_bound = std::pow(static_cast<double>(prev), tr.beta);
    rep.max_gap_ratio = std::max(rep.max_gap_ratio, step.gap / gap_bound);
    if (step.gap > gap_bound) fail(at + "|s_k - sigma_k| > m^beta");
    const double tk = tr.t[k] - tr.time_offset_w;
    const double tauk = tr.tau[k] - tr.time_offset_s;
    const double cum_bound =
        std::pow(static_cast<double>(k) + h, tr.beta + 1.0);
    rep.max_cumulative_ratio =
        std::max(rep.max_cumulative_ratio, std::abs(tk - tauk) / cum_bound);
    if (std::abs(tk - tauk) > cum_bound) fail(at + "|t_k - tau_k| > (k+h)^(beta+1)");
    const double r = level_radius(prev);
    if (tk < r || tauk < r) fail(at + "t_k or tau_k below r_{m_{k-1}}");
    ++rep.checked_steps;
  }
  for (std::size_t k = 1; k < tr.m.size(); ++k) {
    const bool ok = static_cast<double>(tr.m[k]) >= std::cbrt(static_cast<double>(k));
    if (!ok && !rep.first_growth_violation) rep.first_growth_violation = k;
    if (k >= 100) {
      ++rep.growth_checked;
      if (!ok) ++rep.growth_violations;
    }
  }
  return rep;
}

ModulusReport modulus_comparison(const RadiusSamples& r, double alpha,
                                 double burn_in) {
  ModulusReport rep;
  rep.burn_in = burn_in;
  if (r.stride == 0) return rep;
  const std::size_t n = std::min(r.s.size(), r.w.size());
  const double stride = static_cast<double>(r.stride);
  for (std::size_t j = 0; j < n; ++j) {
    const double time = static_cast<double>(j) * stride;
    if (time < burn_in || time <= 1.0) continue;
    ++rep.compared;
    const double s = r.s[j];
    const double w = r.w[j];
    if (s < 0.5 * w || s > 2.0 * w) ++rep.ratio_violations;
    const double diff = std::abs(s - w);
    rep.max_abs_difference = std::max(rep.max_abs_difference, diff);
    if (diff > std::pow(std::log(time), alpha)) ++rep.log_bound_violations;
  }
  return rep;
}

CouplingExperiment coupling_experiment(const CouplingParams& params,
                                       const PiWeights& pi, std::size_t replicas,
                                       std::uint64_t seed, bool keep_runs) {
  params.validate();
  const auto [x0, xi0] = default_start(params.h);
  auto runs = parallel_map<CouplingRun>(replicas, [&](std::size_t i) {
    return run_coupling(x0, xi0, params, pi, seed, i);
  });
  CouplingExperiment ex;
  ex.params = params;
  ex.seed = seed;
  ex.replicas = replicas;
  const auto levels = static_cast<std::size_t>(params.level_cap()) + 1;
  ex.visits.assign(levels, 0);
  ex.catastrophes.assign(levels, 0);
  ex.causes.assign(levels, {});
  for (const auto& run : runs) {
    const auto& tr = run.transcript;
    if (tr.catastrophe_step) ++ex.runs_with_catastrophe;
    for (std::size_t m = 0; m < levels; ++m) {
      ex.visits[m] += run.visits[m];
      ex.catastrophes[m] += run.catastrophes[m];
    }
    for (const auto& s : tr.steps) {
      ex.total_tries += s.tries;
      if (s.outcome == TryOutcome::kSuccess) ++ex.coupled_steps;
      if (s.outcome == TryOutcome::kCatastrophe) {
        ++ex.causes[static_cast<std::size_t>(s.level)][static_cast<std::size_t>(s.cause)];
      }
    }
    ex.kmt_steps += run.kmt_steps;
    ex.bounds_ok = ex.bounds_ok && transcript_bound_check(tr).hard_ok;
  }
  const double n = static_cast<double>(std::max<std::size_t>(replicas, 1));
  ex.catastrophe_probability = static_cast<double>(ex.runs_with_catastrophe) / n;
  ex.catastrophe_stderr = std::sqrt(
      ex.catastrophe_probability * (1.0 - ex.catastrophe_probability) / n);
  if (keep_runs) ex.runs = std::move(runs);
  return ex;
}

LevelTailReport level_tail_report(const std::vector<std::uint64_t>& visits,
                                  const std::vector<std::uint64_t>& catastrophes,
                                  int min_level) {
  LevelTailReport rep;
  double acc = 0.0;
  for (std::size_t m = static_cast<std::size_t>(std::max(min_level, 0));
       m < visits.size(); ++m) {
    if (visits[m] == 0) continue;
    const double p = static_cast<double>(catastrophes.at(m)) /
                     static_cast<double>(visits[m]);
    const double md = static_cast<double>(m);
    rep.levels.push_back(static_cast<int>(m));
    rep.p_hat.push_back(p);
    rep.weighted.push_back(md * md * p);
    acc += md * md * p;
    rep.partial.push_back(acc);
  }
  if (acc > 0.0) {
    const std::size_t half = rep.weighted.size() / 2;
    double top = 0.0;
    for (std::size_t i = half; i < rep.weighted.size(); ++i) {
      top = std::max(top, rep.weighted[i]);
    }
    rep.tail_fraction = top / acc;
  }
  return rep;
}

}  // namespace condwalk
