#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "condwalk/levels.hpp"
#include "condwalk/potential.hpp"
#include "oracles.hpp"

using namespace condwalk;

namespace {
const PotentialTable& table() { return *PotentialTable::shared(); }
}

TEST_SUITE("potential") {

TEST_CASE("closed-form values near the origin") {
  const double pi = std::numbers::pi;
  CHECK(table()({0, 0}) == 0.0);
  CHECK(std::abs(table()({1, 0}) - 1.0) < 1e-9);
  CHECK(std::abs(table()({1, 1}) - 4.0 / pi) < 1e-9);
  CHECK(std::abs(table()({2, 0}) - (4.0 - 8.0 / pi)) < 1e-9);
}

TEST_CASE("table agrees with the harmonic recursion from the diagonal") {
  const oracle::PotentialRecursion rec(8);
  for (int x = 0; x <= 8; ++x) {
    for (int y = 0; y <= x; ++y) {
      CHECK(std::abs(table()({x, y}) - static_cast<double>(rec(x, y))) < 1e-9);
    }
  }
}

TEST_CASE("diagonal values match the odd harmonic sum") {
  for (int n = 1; n <= 280; n += 7) {
    CHECK(std::abs(table()({n, n}) - static_cast<double>(oracle::potential_diagonal(n))) < 1e-9);
    CHECK(std::abs(table()({-n, n}) - table()({n, n})) < 1e-12);
  }
}

TEST_CASE("table is 8-fold symmetric and harmonic off the origin") {
  for (int x = -30; x <= 30; x += 3) {
    for (int y = -30; y <= 30; y += 5) {
      const double v = table()({x, y});
      CHECK(table()({-x, y}) == doctest::Approx(v).epsilon(1e-13));
      CHECK(table()({y, x}) == doctest::Approx(v).epsilon(1e-13));
      CHECK(table()({x, -y}) == doctest::Approx(v).epsilon(1e-13));
    }
  }
  CHECK(table().harmonicity_residual() < 1e-10);
}

TEST_CASE("small table has value 0 at the origin and the unit value") {
  const auto t = PotentialTable::solve(8);
  CHECK(t({0, 0}) == 0.0);
  CHECK(t.exact_radius() == 8);
  CHECK(std::abs(t({1, 0}) - 1.0) < 1e-3);
}

TEST_CASE("asymptotic residual scaled by |x|^2 stays bounded") {
  double worst_log = 0.0, worst_full = 0.0;
  for (int x = 0; x <= 399; ++x) {
    for (int y = 0; y <= x; ++y) {
      const LatticeSite s{x, y};
      const double r2 = static_cast<double>(s.norm2());
      if (r2 < 2500.0 || r2 > 399.0 * 399.0) continue;
      worst_log = std::max(worst_log, r2 * std::abs(table()(s) - potential_log_part(std::sqrt(r2))));
      worst_full = std::max(worst_full, r2 * std::abs(table()(s) - potential_asymptotic(s)));
    }
  }
  // the log part misses exactly cos(4 phi) / (6 pi |x|^2)
  CHECK(worst_log < 1.0 / (6.0 * std::numbers::pi) + 1e-4);
  CHECK(worst_full < 1e-4);
}

TEST_CASE("origin-only avoid set reproduces a") {
  const auto a = AvoidSet::origin_only();
  CHECK(std::abs(a->capacity()) < 1e-9);
  for (const LatticeSite s : {LatticeSite{1, 0}, {3, -2}, {17, 5}, {80, 80}, {1000, 3}}) {
    CHECK(a->q(s) == doctest::Approx(table()(s)).epsilon(1e-9));
  }
}

TEST_CASE("two-point set: q_A = (a(x) + a(x - e1)) / 2 - 1/2") {
  // harmonic measure is 1/2 at each point by symmetry, q_A(0) = 0 gives cap
  const auto a = AvoidSet::build({{0, 0}, {1, 0}}, 400);
  CHECK(std::abs(a.capacity() - 0.5) < 1e-3);
  CHECK(std::abs(a.ring_capacity_estimate() - 0.5) < 2e-2);
  for (const LatticeSite s : {LatticeSite{0, 1}, {2, 0}, {-3, 4}, {50, -7}, {600, 10}}) {
    const double expected = 0.5 * (table()(s) + table()(s - LatticeSite{1, 0})) - 0.5;
    CHECK(std::abs(a.q(s) - expected) < 1e-6);
  }
  CHECK(std::abs(a.q({0, 1}) - 2.0 / std::numbers::pi) < 1e-6);
  CHECK(a.q({0, 0}) == 0.0);
  CHECK(a.q({1, 0}) == 0.0);
}

TEST_CASE("three collinear points: capacity pi/4") {
  // hm = (pi/8, 1 - pi/4, pi/8); q_A = 0 on A forces cap = 2 hm(end)
  const auto a = AvoidSet::build({{0, 0}, {-1, 0}, {1, 0}}, 300);
  CHECK(std::abs(a.capacity() - std::numbers::pi / 4.0) < 1e-3);
  double total = 0.0;
  for (double h : a.harmonic_measure()) total += h;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("q_A is harmonic off A and non-negative") {
  const auto a = AvoidSet::build({{0, 0}, {1, 0}, {1, 1}}, 200);
  for (int x = -20; x <= 20; ++x) {
    for (int y = -20; y <= 20; ++y) {
      const LatticeSite s{x, y};
      if (a.contains(s)) continue;
      double mean = 0.0;
      for (const auto& e : kUnitSteps) mean += 0.25 * a.q(s + e);
      CHECK(std::abs(mean - a.q(s)) < 1e-9);
      CHECK(a.q(s) > 0.0);
    }
  }
}

TEST_CASE("avoid set without the origin is rejected") {
  CHECK_THROWS_AS(AvoidSet::build({{1, 0}}, 100), std::invalid_argument);
}

TEST_CASE("escape before exit matches the Dirichlet oracle") {
  const std::vector<LatticeSite> set{{0, 0}, {1, 0}};
  const auto ref = oracle::srw_escape({{0, 0}, {1, 0}}, 40 * 40);
  for (const LatticeSite s : {LatticeSite{2, 0}, {0, 1}, {-5, 7}, {20, 20}}) {
    CHECK(srw_escape_before_exit(s, set, 40) ==
          doctest::Approx(ref.at({s.x, s.y})).epsilon(1e-9));
  }
}

TEST_CASE("hitting laws") {
  SUBCASE("start on the targets gives a point mass") {
    const auto law = exact_hitting_distribution({3, 0}, {{3, 0}, {0, 3}}, 10, ChainSpec::srw());
    REQUIRE(law.size() == 1);
    CHECK(law.at({3, 0}) == 1.0);
  }
  SUBCASE("SRW from (1,0) to shells 0 and 2 sums to one") {
    std::vector<LatticeSite> t = shell_sites(2);
    t.push_back({0, 0});
    const auto law = exact_hitting_distribution({1, 0}, t, 10, ChainSpec::srw());
    double total = 0.0;
    for (const auto& [s, p] : law) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("conditioned law is the a-weighted SRW law") {
    const auto g2 = shell_sites(2);
    const auto g4 = shell_sites(4);
    std::vector<LatticeSite> t(g2);
    t.insert(t.end(), g4.begin(), g4.end());
    std::set<oracle::Site> targets;
    for (const auto& s : t) targets.insert({s.x, s.y});
    const std::int64_t outer = shell_bounds(4).hi;
    for (const LatticeSite x : shell_sites(3)) {
      const auto hat = exact_hitting_distribution(x, t, 20, ChainSpec::hat_s());
      const auto srw = oracle::srw_hitting_law(
          {x.x, x.y}, targets,
          [&](const oracle::Site& z) { return z.first * z.first + z.second * z.second <= outer; },
          12);
      double worst = 0.0;
      for (const auto& [y, p] : srw) {
        const LatticeSite ys{y.first, y.second};
        const double expected = table()(ys) / table()(x) * p;
        const auto it = hat.find(ys);
        worst = std::max(worst, std::abs((it == hat.end() ? 0.0 : it->second) - expected));
      }
      CHECK(worst < 1e-10);
    }
  }
}

}
