#include <doctest.h>

#include <cmath>
#include <numbers>

#include "condwalk/chain.hpp"
#include "condwalk/parallel.hpp"
#include "condwalk/stats.hpp"
#include "oracles.hpp"

using namespace condwalk;

namespace {
const PotentialTable& table() { return *PotentialTable::shared(); }
std::shared_ptr<const AvoidSet> two_point() {
  static const auto a = std::make_shared<const AvoidSet>(AvoidSet::build({{0, 0}, {1, 0}}, 400));
  return a;
}
}  // namespace

TEST_SUITE("chain") {

TEST_CASE("one-step probabilities") {
  const auto p = step_distribution({1, 0}, ChainSpec::hat_s());
  CHECK(p[1] == 0.0);  // towards the origin
  CHECK(p[0] == doctest::Approx((4.0 - 8.0 / std::numbers::pi) / 4.0).epsilon(1e-9));
  CHECK(p[0] == doctest::Approx(0.3633802).epsilon(1e-6));
  for (const LatticeSite x : {LatticeSite{1, 0}, {2, 3}, {-40, 7}, {500, 1}, {3000, -2000}}) {
    for (const auto& spec : {ChainSpec::srw(), ChainSpec::hat_s(), ChainSpec::hat_s_a(two_point())}) {
      if (spec.forbidden(x)) continue;
      const auto d = step_distribution(x, spec);
      CHECK(d[0] + d[1] + d[2] + d[3] == doctest::Approx(1.0).epsilon(1e-12));
      for (int i = 0; i < 4; ++i) {
        CHECK(d[i] == doctest::Approx(spec.h(x + kUnitSteps[i]) / (4.0 * spec.h(x))).epsilon(1e-12));
      }
    }
  }
  CHECK_THROWS_AS(step_distribution({0, 0}, ChainSpec::hat_s()), std::invalid_argument);
  CHECK_THROWS_AS(step_distribution({1, 0}, ChainSpec::hat_s_a(two_point())), std::invalid_argument);
}

TEST_CASE("walker frequencies match the step law in the table and far zones") {
  for (const LatticeSite x : {LatticeSite{1, 1}, {2, 0}, {1500, 700}}) {
    const auto spec = ChainSpec::hat_s_a(two_point());
    const auto d = step_distribution(x, spec);
    Rng rng({3, StreamTag::kTest, static_cast<std::uint64_t>(x.x)});
    std::vector<double> obs(4, 0.0), exp(4, 0.0);
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      LatticeWalker w(spec, x);
      w.step(rng.next_u32());
      for (int j = 0; j < 4; ++j) {
        if (w.position() == x + kUnitSteps[j]) obs[j] += 1.0;
      }
    }
    std::vector<double> o, e;
    for (int j = 0; j < 4; ++j) {
      if (d[j] > 0.0) {
        o.push_back(obs[j]);
        e.push_back(d[j] * n);
      } else {
        CHECK(obs[j] == 0.0);
      }
    }
    CHECK(chi_square_p_value(o, e) > 1e-3);
  }
}

TEST_CASE("paths: zero steps, forbidden sites, reproducibility") {
  const auto t0 = sample_path(ChainSpec::hat_s(), {1, 0}, StopRule::fixed_steps(0), {1, StreamTag::kWalk});
  CHECK(t0.sites.size() == 1);
  CHECK_THROWS_AS(sample_path(ChainSpec::hat_s(), {0, 0}, StopRule::fixed_steps(1), {1, StreamTag::kWalk}),
                  std::invalid_argument);
  for (std::uint64_t r = 0; r < 50; ++r) {
    const StreamId id{11, StreamTag::kWalk, r};
    const auto s = sample_path(ChainSpec::hat_s(), {1, 0}, StopRule::fixed_steps(3000), id);
    const auto sa = sample_path(ChainSpec::hat_s_a(two_point()), {0, 1}, StopRule::fixed_steps(3000), id);
    for (std::size_t i = 0; i < s.sites.size(); ++i) {
      REQUIRE(s.sites[i] != LatticeSite{0, 0});
      REQUIRE(!two_point()->contains(sa.sites[i]));
      if (i > 0) REQUIRE(adjacent(s.sites[i], s.sites[i - 1]));
    }
    const auto again = sample_path(ChainSpec::hat_s(), {1, 0}, StopRule::fixed_steps(3000), id);
    CHECK(again.sites == s.sites);
    const auto stop = run_until_stop(ChainSpec::hat_s(), {1, 0}, StopRule::fixed_steps(3000), id);
    CHECK(stop.final_site == s.sites.back());
  }
}

TEST_CASE("stop rules") {
  const StreamId id{5, StreamTag::kWalk};
  const auto e = sample_path(ChainSpec::srw(), {0, 0}, StopRule::exit_radius(10.0), id);
  CHECK(e.sites.back().norm() >= 10.0);
  for (std::size_t i = 0; i + 1 < e.sites.size(); ++i) CHECK(e.sites[i].norm() < 10.0);
  std::vector<LatticeSite> box;
  for (std::int64_t t = -4; t <= 4; ++t) {
    box.insert(box.end(), {{t, 4}, {t, -4}, {4, t}, {-4, t}});
  }
  const auto h = sample_path(ChainSpec::srw(), {3, 0}, StopRule::hit_set(box), id);
  CHECK(std::max(std::abs(h.sites.back().x), std::abs(h.sites.back().y)) == 4);
  for (std::size_t i = 0; i + 1 < h.sites.size(); ++i) {
    CHECK(std::max(std::abs(h.sites[i].x), std::abs(h.sites[i].y)) < 4);
  }
  StopRule capped = StopRule::exit_radius(1e6);
  capped.hard_cap = 100;
  CHECK_THROWS_AS(sample_path(ChainSpec::srw(), {0, 0}, capped, id), std::runtime_error);
}

TEST_CASE("exit time of B(0,64) from (1,0) matches the linear-solve oracle") {
  const auto oracle_t = oracle::h_transform_exit_time(
      64 * 64, [](const oracle::Site& s) { return table()({s.first, s.second}); });
  const double expected = oracle_t.at({1, 0});
  const std::size_t n = 20000;
  const auto steps = parallel_map<double>(n, [](std::size_t r) {
    return static_cast<double>(run_until_stop(ChainSpec::hat_s(), {1, 0}, StopRule::exit_radius(64.0),
                                              {21, StreamTag::kWalk, r})
                                   .steps);
  });
  RunningStats s;
  for (double v : steps) s.add(v);
  CHECK(std::abs(s.mean() - expected) < 3.0 * s.stderr_mean());
}

TEST_CASE("escape probability") {
  const auto origin = AvoidSet::origin_only();
  CHECK(escape_probability({5, 2}, *origin) == doctest::Approx(1.0).epsilon(1e-9));
  const double q = two_point()->q({0, 1});
  CHECK(escape_probability({0, 1}, *two_point()) == doctest::Approx(q / table()({0, 1})));
  CHECK_THROWS_AS(escape_probability({1, 0}, *two_point()), std::invalid_argument);
}

TEST_CASE("finite-radius escape trials match the weighted exit oracle") {
  // P = E_x[a(S_tau); tau_R < tau_A] / a(x) for the walk conditioned off 0
  const int R = 30;
  const auto ref = oracle::srw_exit_value({{0, 0}, {1, 0}}, R * R, [](const oracle::Site& z) {
    return table()({z.first, z.second});
  });
  const LatticeSite x{0, 1};
  const double expected = ref.at({0, 1}) / table()(x);
  const std::size_t n = 40000;
  const auto hits = parallel_map<int>(n, [&](std::size_t r) {
    return escape_trial(x, *two_point(), R, {31, StreamTag::kWalk, r}, PotentialTable::shared()) ? 1 : 0;
  });
  double p = 0.0;
  for (int h : hits) p += h;
  p /= static_cast<double>(n);
  CHECK(std::abs(p - expected) < 3.0 * proportion_stderr(expected, n));
}

TEST_CASE("path identity for the walk conditioned off A") {
  const auto r1 = conditioned_equals_hSA_check(*two_point(), {0, 1}, 1);
  CHECK(r1.max_discrepancy < 1e-10);
  const auto r4 = conditioned_equals_hSA_check(*two_point(), {0, 1}, 4);
  CHECK(r4.max_discrepancy < 1e-10);
  CHECK(r4.paths_touching_set > 0);
  CHECK(r4.max_touching_value == 0.0);
  const auto three = AvoidSet::build({{0, 0}, {1, 0}, {1, 1}}, 200);
  const auto r6 = conditioned_equals_hSA_check(three, {-1, 0}, 6);
  CHECK(r6.max_discrepancy < 1e-10);
}

}
