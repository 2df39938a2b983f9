#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <vector>

#include "condwalk/coupling.hpp"
#include "condwalk/diffusion.hpp"
#include "condwalk/parallel.hpp"
#include "condwalk/stats.hpp"
#include "oracles.hpp"

using namespace condwalk;

namespace {

const PiWeights& weights() {
  static const PiWeights pi(kMaxLevel - 1);
  return pi;
}

// A pair inside the KMT, window and time-gap bounds at level m.
CandidatePair good_pair(int m, int w_to, int s_to, double pi) {
  CandidatePair c;
  c.m = m;
  c.w_to = w_to;
  c.s_to = s_to;
  c.s = 2.0 * level_radius(m);
  c.sigma = c.s + 1.0;
  c.pi = pi;
  return c;
}

int sector(const LatticeSite& s, int bins) {
  const double a = std::atan2(static_cast<double>(s.y), static_cast<double>(s.x)) + std::numbers::pi;
  return std::min(bins - 1, static_cast<int>(a / (2.0 * std::numbers::pi) * bins));
}

}  // namespace

TEST_SUITE("coupling") {

TEST_CASE("try classification") {
  const CouplingParams p;
  SUBCASE("both outward, U <= pi: success") {
    const auto c = classify_try(good_pair(5, 6, 6, 0.7), 0.5, p);
    CHECK(c.outcome == TryOutcome::kSuccess);
    CHECK(c.cause == Assumption::kNone);
  }
  SUBCASE("both outward, U > pi: catastrophe") {
    CHECK(classify_try(good_pair(5, 6, 6, 0.7), 0.8, p).cause == Assumption::kDecision);
  }
  SUBCASE("both inward, U >= max(pi, 1 - 2/(m+1)): failure") {
    // 1 - 2/6 = 2/3
    CHECK(classify_try(good_pair(5, 4, 4, 0.5), 0.9, p).outcome == TryOutcome::kFailure);
    CHECK(classify_try(good_pair(5, 4, 4, 0.5), 0.4, p).outcome == TryOutcome::kSuccess);
    CHECK(classify_try(good_pair(5, 4, 4, 0.5), 0.6, p).outcome == TryOutcome::kCatastrophe);
  }
  SUBCASE("exit sides disagree: catastrophe") {
    for (double u : {0.01, 0.5, 0.99}) {
      const auto c = classify_try(good_pair(5, 6, 4, 0.9), u, p);
      CHECK(c.outcome == TryOutcome::kCatastrophe);
      CHECK(c.cause == Assumption::kDecision);
    }
  }
  SUBCASE("assumption order") {
    auto c = good_pair(5, 6, 6, 1.0);
    c.kmt_ok = false;
    c.s = 0.0;
    CHECK(classify_try(c, 0.1, p).cause == Assumption::kKmt);
    c.kmt_ok = true;
    CHECK(classify_try(c, 0.1, p).cause == Assumption::kWindow);
    // with beta = 2 the gap bound 25 fits inside the window [r_5, r_5^3]
    CouplingParams tight;
    tight.beta = 2.0;
    c = good_pair(5, 6, 6, 1.0);
    c.sigma = c.s + 26.0;
    CHECK(classify_try(c, 0.1, tight).cause == Assumption::kTimeGap);
    c.sigma = c.s + 24.0;
    CHECK(classify_try(c, 0.1, tight).cause == Assumption::kNone);
    c = good_pair(5, 6, 6, 1.0);
    c.gap_exceeded = true;
    CHECK(classify_try(c, 0.1, p).cause == Assumption::kTimeGap);
  }
}

TEST_CASE("rotation alignment leaves a gap of at most 1") {
  CHECK(align_rotation({10.838, 0.0}, {10, 0}, 4) == 0.0);
  for (int m = 3; m <= 12; ++m) {
    const double r = level_radius(m);
    const auto sites = shell_sites(m);
    const std::size_t step = std::max<std::size_t>(1, sites.size() / 400);
    for (std::size_t i = 0; i < sites.size(); i += step) {
      for (double phi : {0.0, 1.0, -2.5}) {
        const PlanePoint x{r * std::cos(phi), r * std::sin(phi)};
        const double theta = align_rotation(x, sites[i], m);
        REQUIRE(distance(to_plane(sites[i]), rotate(x, theta)) <= 1.0 + 1e-9);
      }
    }
  }
  const LatticeSite edge{static_cast<std::int64_t>(level_radius(5)), 0};
  const PlanePoint x{level_radius(5), 0.0};
  CHECK(std::abs(align_rotation(x, edge, 5)) < 1e-12);
}

TEST_CASE("parameter validation") {
  CouplingParams p;
  CHECK_NOTHROW(p.validate());
  p.h = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = CouplingParams{};
  p.max_level = p.h;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = CouplingParams{};
  p.epsilon = 1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("transcript bounds hold on coupled prefixes") {
  CouplingParams p;
  p.h = 4;
  const auto ex = coupling_experiment(p, weights(), 60, 3, true);
  CHECK(ex.bounds_ok);
  std::uint64_t checked = 0;
  for (const auto& run : ex.runs) {
    const auto rep = transcript_bound_check(run.transcript);
    CHECK(rep.hard_ok);
    CHECK(rep.max_gap_ratio <= 1.0);
    checked += rep.checked_steps;
    CHECK(run.s_end.norm2() > shell_bounds(p.level_cap()).lo);
  }
  CHECK(checked > 0);
  CHECK(transcript_bound_check(CouplingTranscript{}).hard_ok);
}

TEST_CASE("bound check flags broken transcripts") {
  CouplingTranscript tr;
  tr.h = 5;
  tr.beta = 2.0;
  tr.m = {5, 6};
  tr.mu = {5, 6};
  tr.t = {0.0, 200.0};
  tr.tau = {0.0, 210.0};
  tr.steps = {CouplingStep{1, 5, TryOutcome::kSuccess, Assumption::kNone, 1, 10.0}};
  CHECK(transcript_bound_check(tr).hard_ok);
  tr.steps[0].gap = 26.0;  // > 5^2
  CHECK(!transcript_bound_check(tr).hard_ok);
  tr.steps[0].gap = 10.0;
  tr.mu[1] = 4;
  CHECK(!transcript_bound_check(tr).hard_ok);
  tr.mu[1] = 6;
  tr.t[1] = 20.0;  // below r_5 = 29.46
  tr.tau[1] = 20.0;
  CHECK(!transcript_bound_check(tr).hard_ok);
}

TEST_CASE("growth bound m_k >= k^(1/3) on level-chain transcripts") {
  // exact expected number of k in [100, 500] with m_k < k^(1/3), from the
  // law of the level chain started at 6
  const int steps = 500;
  std::vector<double> law(steps + 8, 0.0);
  law[6] = 1.0;
  double expected = 0.0;
  for (int k = 1; k <= steps; ++k) {
    std::vector<double> next(law.size(), 0.0);
    for (std::size_t m = 1; m + 1 < law.size(); ++m) {
      const double down = (m - 1.0) / (2.0 * m);
      next[m - 1] += law[m] * down;
      next[m + 1] += law[m] * (1.0 - down);
    }
    law = std::move(next);
    if (k >= 100) {
      for (std::size_t m = 1; m < law.size(); ++m) {
        if (static_cast<double>(m) < std::cbrt(static_cast<double>(k))) expected += law[m];
      }
    }
  }
  const std::size_t runs = 2000;
  std::uint64_t checked = 0;
  RunningStats per_run;
  for (std::uint64_t r = 0; r < runs; ++r) {
    Rng rng({4, StreamTag::kLevelChain, r});
    CouplingTranscript tr;
    tr.h = 6;
    tr.beta = 9.0;
    int m = 6;
    tr.m.push_back(m);
    for (int k = 1; k <= steps; ++k) {
      m = level_chain_step(m, rng.uniform());
      tr.m.push_back(m);
    }
    tr.mu = tr.m;
    const auto rep = transcript_bound_check(tr);
    checked += rep.growth_checked;
    per_run.add(static_cast<double>(rep.growth_violations));
  }
  CHECK(checked == runs * 401);
  CHECK(std::abs(per_run.mean() - expected) < 3.0 * per_run.stderr_mean());
}

TEST_CASE("catastrophes become rarer as the start level grows") {
  CouplingParams lo, hi;
  lo.h = 4;
  hi.h = 6;
  const auto a = coupling_experiment(lo, weights(), 300, 5, false);
  const auto b = coupling_experiment(hi, weights(), 300, 5, false);
  CHECK(a.catastrophe_probability > b.catastrophe_probability);
  CHECK(a.bounds_ok);
  CHECK(b.bounds_ok);
}

TEST_CASE("S side of the coupling has the conditioned hitting law") {
  // h = 4 starts S at (10, 0); s_end is the first visit to Gamma_5
  CouplingParams p;
  p.h = 4;
  const auto [x0, xi0] = default_start(p.h);
  REQUIRE(xi0 == LatticeSite{10, 0});
  std::set<oracle::Site> targets{{0, 0}};
  for (const auto& s : shell_sites(5)) targets.insert({s.x, s.y});
  const std::int64_t outer = shell_bounds(5).hi;
  const auto srw = oracle::srw_hitting_law(
      {10, 0}, targets,
      [&](const oracle::Site& z) { return z.first * z.first + z.second * z.second <= outer; }, 31);
  const auto& a = weights().potential();
  const int bins = 16;
  std::map<int, double> exact, emp;
  for (const auto& [y, q] : srw) {
    const LatticeSite ys{y.first, y.second};
    exact[sector(ys, bins)] += q * a(ys) / a(xi0);
  }
  const std::size_t n = 8000;
  const auto ends = parallel_map<LatticeSite>(n, [&](std::size_t r) {
    return run_coupling(x0, xi0, p, weights(), 11, r).s_end;
  });
  for (const auto& e : ends) emp[sector(e, bins)] += 1.0;
  CHECK(total_variation(emp, exact) < 0.03);
}

TEST_CASE("level tail report") {
  const std::vector<std::uint64_t> visits{0, 0, 10, 20, 0, 40};
  const std::vector<std::uint64_t> cats{0, 0, 5, 2, 0, 1};
  const auto rep = level_tail_report(visits, cats, 1);
  REQUIRE(rep.levels == std::vector<int>{2, 3, 5});
  CHECK(rep.weighted[0] == doctest::Approx(4 * 0.5));
  CHECK(rep.weighted[1] == doctest::Approx(9 * 0.1));
  CHECK(rep.weighted[2] == doctest::Approx(25 * 0.025));
  CHECK(rep.partial.back() == doctest::Approx(2.0 + 0.9 + 0.625));
}

TEST_CASE("modulus comparison") {
  RadiusSamples r;
  r.stride = 10;
  r.s = {1, 10, 20, 30};
  r.w = {1, 11, 50, 31};
  const auto rep = modulus_comparison(r, 1.0, 0.0);
  CHECK(rep.compared == 3);
  CHECK(rep.ratio_violations == 1);
  CHECK(rep.max_abs_difference == 30.0);
  CHECK(rep.log_bound_violations == 1);  // 30 > ln 20
}

}
