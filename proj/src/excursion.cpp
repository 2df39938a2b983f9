#include "condwalk/excursion.hpp"

#include <stdexcept>

namespace condwalk {

BmCandidate bm_candidate_excursion(const PlanePoint& x, int m,
                                   const BmExcursionParams& params,
                                   const StreamId& stream, bool record_path) {
  const double inner = level_radius(m - 1, params.rho);
  const double outer = level_radius(m + 1, params.rho);
  const double rm = level_radius(m, params.rho);
  const double dt_min = params.dt_min_factor * rm * rm;
  const double s2 = params.variance;
  Rng rng(stream);
  BmCandidate c;
  PlanePoint p = x;
  double r = p.norm();
  double t = 0.0;
  if (record_path) c.path.push_back(p);
  for (;;) {
    const double d = std::min(r - inner, outer - r);
    const double h = std::max(params.kappa * d * d, dt_min);
    const double sd = std::sqrt(s2 * h);
    PlanePoint q{p.x + sd * rng.normal(), p.y + sd * rng.normal()};
    const double r1 = q.norm();
    t += h;
    int to = 0;
    if (r1 >= outer) {
      to = m + 1;
    } else if (r1 <= inner) {
      to = m - 1;
    } else {
      const double po = bridge_crossing_probability(outer - r, outer - r1, s2, h);
      const double pi = bridge_crossing_probability(r - inner, r1 - inner, s2, h);
      if (po > 1e-300 || pi > 1e-300) {
        const double u = rng.uniform();
        if (u < po) {
          to = m + 1;
        } else if (u < po + pi) {
          to = m - 1;
        }
      }
    }
    if (to != 0) {
      c.level_to = to;
      c.duration = t;
      c.end = q * ((to > m ? outer : inner) / r1);
      if (record_path) c.path.push_back(c.end);
      return c;
    }
    p = q;
    r = r1;
    if (record_path) c.path.push_back(p);
  }
}

HatWExcursion build_hatW_excursion(const PlanePoint& x, int m, std::uint64_t k,
                                   const ExcursionStreams& streams,
                                   const BmExcursionParams& params,
                                   bool record_path) {
  if (m < 1) throw std::invalid_argument("build_hatW_excursion: m must be >= 1");
  const double keep_inward = 1.0 - 2.0 / (m + 1.0);
  for (std::uint64_t l = 0; l < params.max_tries; ++l) {
    BmCandidate c =
        bm_candidate_excursion(x, m, params, streams.bm_candidate(k, l), record_path);
    const bool keep =
        c.level_to > m || streams.uniform(k, l) <= keep_inward;
    if (!keep) continue;
    HatWExcursion e;
    e.record = {k, m, c.level_to, c.duration, x, c.end, l + 1};
    e.path = std::move(c.path);
    return e;
  }
  throw std::runtime_error("build_hatW_excursion: candidate cap reached");
}

SrwCandidate srw_candidate_excursion(const LatticeSite& xi, int m,
                                     const StreamId& stream, bool record_path,
                                     std::uint64_t max_steps) {
  const ShellStop stop(m);
  Rng rng(stream);
  SrwCandidate c;
  LatticeSite p = xi;
  if (record_path) c.path.push_back(p);
  std::int64_t n2 = p.norm2();
  do {
    if (c.steps >= max_steps) {
      throw std::runtime_error("srw_candidate_excursion: step cap reached");
    }
    p = p + kUnitSteps[rng.next_u32() >> 30];
    n2 = p.norm2();
    ++c.steps;
    if (record_path) c.path.push_back(p);
  } while (!stop.stopped(n2));
  c.end = p;
  c.level_to = n2 <= stop.inner_hi ? m - 1 : m + 1;
  return c;
}

HatSExcursion build_hatS_excursion(const LatticeSite& xi, int m,
                                   std::uint64_t k,
                                   const ExcursionStreams& streams,
                                   const PiWeights& pi,
                                   std::uint64_t max_tries, bool record_path) {
  if (m < 1 || m > pi.max_level()) {
    throw std::invalid_argument("build_hatS_excursion: level out of range");
  }
  if (!shell_bounds(m).contains(xi.norm2())) {
    throw std::invalid_argument("build_hatS_excursion: start not in Gamma_m");
  }
  for (std::uint64_t l = 0; l < max_tries; ++l) {
    SrwCandidate c =
        srw_candidate_excursion(xi, m, streams.srw_candidate(k, l), record_path);
    if (streams.uniform(k, l) > pi.pi_unchecked(m, c.end)) continue;
    HatSExcursion e;
    e.record = {k,  m, c.level_to, static_cast<double>(c.steps), to_plane(xi),
                to_plane(c.end), l + 1};
    e.end = c.end;
    e.path = std::move(c.path);
    return e;
  }
  throw std::runtime_error("build_hatS_excursion: candidate cap reached");
}

std::vector<ExcursionRecord> chain_hatW_excursions(
    int h, double start_angle, std::size_t excursions,
    const ExcursionStreams& streams, const BmExcursionParams& params) {
  const double r = level_radius(h, params.rho);
  PlanePoint x{r * std::cos(start_angle), r * std::sin(start_angle)};
  int m = h;
  std::vector<ExcursionRecord> out;
  out.reserve(excursions);
  for (std::size_t k = 0; k < excursions; ++k) {
    auto e = build_hatW_excursion(x, m, k, streams, params);
    out.push_back(e.record);
    x = e.record.end;
    m = e.record.level_to;
  }
  return out;
}

std::vector<ExcursionRecord> chain_hatS_excursions(
    const LatticeSite& xi, int h, std::size_t excursions,
    const ExcursionStreams& streams, const PiWeights& pi) {
  LatticeSite s = xi;
  int m = h;
  std::vector<ExcursionRecord> out;
  out.reserve(excursions);
  for (std::size_t k = 0; k < excursions && m <= pi.max_level(); ++k) {
    auto e = build_hatS_excursion(s, m, k, streams, pi);
    out.push_back(e.record);
    s = e.end;
    m = e.record.level_to;
  }
  return out;
}

}  // namespace condwalk
