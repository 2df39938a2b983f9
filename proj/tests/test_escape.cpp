#include <doctest.h>

#include <cmath>
#include <map>

#include "condwalk/escape.hpp"
#include "condwalk/parallel.hpp"
#include "condwalk/stats.hpp"
#include "oracles.hpp"

using namespace condwalk;

namespace {

void check_minima(const FutureMinima& fm) {
  for (std::size_t j = 0; j < fm.n.size(); ++j) {
    REQUIRE(fm.values[j] <= fm.radius[j] + 1e-12);
    if (j > 0) REQUIRE(fm.values[j] >= fm.values[j - 1]);
    REQUIRE(fm.certification_error[j] >= 0.0);
    REQUIRE(fm.certification_error[j] <= 1.0);
  }
}

EscapeTrajectory stub(double r, std::size_t points) {
  EscapeTrajectory t;
  for (std::size_t j = 0; j < points; ++j) {
    t.n.push_back(std::exp2(static_cast<double>(j)));
    t.radius.push_back(r);
    if (j + 1 < points) t.segment_min.push_back(r);
  }
  t.tail_min = r;
  t.rho = rho0();
  return t;
}

}  // namespace

TEST_SUITE("escape") {

TEST_CASE("geometric grids") {
  CHECK(geometric_grid(1000, 1) == std::vector<double>{1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1000});
  CHECK(geometric_grid(8, 2) == std::vector<double>{1, 2, 3, 4, 6, 8});
  CHECK_THROWS_AS(geometric_grid(0.5, 1), std::invalid_argument);
}

TEST_CASE("window minima equal suffix minima of the stored path") {
  const auto grid = geometric_grid(20000, 2);
  const auto avoid = std::make_shared<const AvoidSet>(AvoidSet::build({{0, 0}, {1, 0}}, 200));
  for (const auto& spec : {ChainSpec::hat_s(), ChainSpec::hat_s_a(avoid)}) {
    for (std::uint64_t r = 0; r < 5; ++r) {
      const StreamId id{1, StreamTag::kEscape, r};
      const auto run = run_lattice_escape(spec, {2, 0}, grid, id);
      const auto path = sample_path(spec, {2, 0}, StopRule::fixed_steps(20000), id.sub(0));
      std::vector<double> suffix(path.sites.size());
      suffix.back() = path.sites.back().norm();
      for (std::size_t i = suffix.size() - 1; i-- > 0;) {
        suffix[i] = std::min(path.sites[i].norm(), suffix[i + 1]);
      }
      const auto fm = run.minima(MinimaMode::kWindow);
      REQUIRE(fm.n == grid);
      for (std::size_t j = 0; j < grid.size(); ++j) {
        const auto i = static_cast<std::size_t>(grid[j]);
        CHECK(fm.radius[j] == path.sites[i].norm());
        CHECK(fm.values[j] == suffix[i]);
      }
      check_minima(fm);
      const auto closed = run.minima(MinimaMode::kTailClosure);
      check_minima(closed);
      for (std::size_t j = 0; j < grid.size(); ++j) CHECK(closed.values[j] <= fm.values[j]);
    }
  }
}

TEST_CASE("origin-only avoid set reproduces the walk conditioned off the origin") {
  EscapeRunConfig s, sa;
  s.horizon = sa.horizon = 1e5;
  s.process = EscapeProcess::kHatS;
  sa.process = EscapeProcess::kHatSA;
  sa.avoid = AvoidSet::origin_only();
  const auto a = escape_trajectories(s, 20, 4);
  const auto b = escape_trajectories(sa, 20, 4);
  for (std::size_t r = 0; r < a.size(); ++r) {
    CHECK(a[r].radius == b[r].radius);
    CHECK(a[r].segment_min == b[r].segment_min);
  }
}

TEST_CASE("W-hat runs land on the grid and stay outside rho") {
  EscapeRunConfig c;
  c.process = EscapeProcess::kHatW;
  c.horizon = 1e4;
  const auto runs = escape_trajectories(c, 20, 5);
  for (const auto& run : runs) {
    CHECK(run.n == geometric_grid(1e4, 1));
    for (double m : run.segment_min) CHECK(m > c.diffusion.rho);
    check_minima(run.minima());
    check_minima(run.minima(MinimaMode::kTailClosure));
  }
}

TEST_CASE("W-hat future minima scale with the disk") {
  // rho -> 4 rho, x -> 4 x, time -> 16 time leaves M / radius unchanged in law
  const double c = 4.0;
  EscapeRunConfig a, b;
  a.process = b.process = EscapeProcess::kHatW;
  a.horizon = 4096;
  b.horizon = 4096 * c * c;
  b.diffusion = DiffusionSpec::srw_matched(c * rho0());
  b.plane_start = {2.0 * c, 0.0};
  const auto ra = escape_trajectories(a, 400, 6);
  const auto rb = escape_trajectories(b, 400, 7);
  for (double n : {64.0, 512.0, 4096.0}) {
    RunningStats sa, sb;
    for (const auto& run : ra) {
      const auto fm = run.minima();
      for (std::size_t j = 0; j < fm.n.size(); ++j) if (fm.n[j] == n) sa.add(c * fm.values[j]);
    }
    for (const auto& run : rb) {
      const auto fm = run.minima();
      for (std::size_t j = 0; j < fm.n.size(); ++j) if (fm.n[j] == n * c * c) sb.add(fm.values[j]);
    }
    REQUIRE(sa.count() == 400);
    REQUIRE(sb.count() == 400);
    const double se = std::hypot(sa.stderr_mean(), sb.stderr_mean());
    CHECK(std::abs(sa.mean() - sb.mean()) < 3.5 * se);
  }
}

TEST_CASE("future minima of a stopped trajectory") {
  const std::vector<double> r{2, 3, 2.5, 4, 3.5, 6, 5, 10};
  const auto fm = future_minima(r, 10, rho0(), 1, 0.5);
  CHECK(fm.n == std::vector<double>{1, 2, 4});
  CHECK(fm.values == std::vector<double>{2.5, 2.5, 3.5});
  for (std::size_t j = 0; j < fm.n.size(); ++j) {
    const double err = std::log(fm.values[j] / rho0()) / std::log(10 / rho0());
    CHECK(fm.certification_error[j] == doctest::Approx(err));
    CHECK(fm.certified[j] == (err <= 0.5));
  }
  CHECK_THROWS_AS(future_minima({2, 3, 4}, 10, rho0(), 1), std::invalid_argument);
  CHECK_THROWS_AS(future_minima({2, 11, 4, 12}, 10, rho0(), 1), std::invalid_argument);
}

TEST_CASE("constant stub trajectory has constant minima") {
  const auto t = stub(5.0, 8);
  for (auto mode : {MinimaMode::kWindow, MinimaMode::kTailClosure}) {
    const auto fm = t.minima(mode);
    for (double v : fm.values) CHECK(v == 5.0);
  }
}

TEST_CASE("test functions") {
  CHECK(test_function_valid(TestFunction::constant(0.45), 1e8));
  CHECK(test_function_valid(TestFunction::exp_half(), 1e8));
  CHECK(TestFunction::constant(0.45).threshold(1e4) == doctest::Approx(std::pow(1e4, 0.45)));
  CHECK(TestFunction::exp_half().threshold(1e4) ==
        doctest::Approx(std::exp(std::log(1e4) * std::exp(-0.5 * std::log(std::log(1e4))))));
  const TestFunction rising{"rising", [](double u) { return 0.1 * u; }, false};
  CHECK(!test_function_valid(rising, 1e8));
  const TestFunction falling_fast{"fast", [](double u) { return std::exp(-2.0 * u); }, true};
  CHECK(!test_function_valid(falling_fast, 1e8));
  EscapeRunConfig c;
  c.horizon = 1e3;
  CHECK_THROWS_AS(integral_test_experiment(rising, c, 2, 1), std::invalid_argument);
}

TEST_CASE("crossing reports on stubs") {
  const std::vector<EscapeTrajectory> runs{stub(2.0, 21), stub(1e9, 21)};
  const TestFunction zero{"zero", [](double) { return 0.0; }, true};
  const auto none = integral_test(zero, runs);
  CHECK(none.crossings == std::vector<std::uint64_t>{0, 0});
  CHECK(none.upper_fraction == 0.0);
  const auto env = envelope_test(0.45, runs);
  // n = 4 .. 2^20 are tested (n >= e); 1e9 exceeds every envelope value
  CHECK(env.crossings[1] == 19);
  CHECK(env.upper_crossings[1] == 11);  // n >= 2^10
  CHECK(env.upper_fraction == 0.5);
  CHECK(env.horizon == std::exp2(20.0));
  CHECK(!env.caveat.empty());
}

TEST_CASE("LIL running maximum") {
  auto t = stub(3.0, 8);
  CHECK_THROWS_AS(lil_running_max(t, 1e7), std::invalid_argument);
  CHECK_THROWS_AS(lil_running_max(t, 10.0), std::invalid_argument);
  t = stub(3.0, 30);
  const auto s = lil_running_max(t, 1e7);
  CHECK(s.n.front() >= 1e7);
  for (std::size_t j = 1; j < s.running_max.size(); ++j) CHECK(s.running_max[j] >= s.running_max[j - 1]);
  const double first = 3.0 / std::sqrt(s.n.front() * std::log(std::log(std::log(s.n.front()))));
  CHECK(s.final_value == doctest::Approx(first));
  const auto rep = lil_report({t, t}, 1e7);
  CHECK(rep.mean_final == doctest::Approx(first));
  CHECK(rep.stderr_final == doctest::Approx(0.0));
}

TEST_CASE("level-chain future minimum matches the absorbing-chain law") {
  const int h = 5, L = 40;
  std::map<int, double> exact, emp;
  double prev = 0.0;
  for (int j = 1; j <= h; ++j) {
    // P[min <= j] = P[hit j before L] = P[go below j + 1]
    const double le = j == h ? 1.0 : oracle::level_chain_below(h, j + 1, L);
    exact[j] = le - prev;
    prev = le;
  }
  const std::size_t n = 100000;
  const auto v = parallel_map<int>(n, [&](std::size_t r) {
    return level_chain_future_minimum(h, L, {8, StreamTag::kLevelChain, r});
  });
  for (int m : v) emp[m] += 1.0;
  CHECK(total_variation(emp, exact) < 0.02);
  CHECK_THROWS_AS(level_chain_future_minimum(5, 5, {}), std::invalid_argument);
}

TEST_CASE("certified future minima rarely move when the run is extended") {
  const double tau = 0.3;
  const auto st = certification_study(ChainSpec::hat_s(), {2, 0}, 60.0, 10.0, tau, 100, 9);
  REQUIRE(st.certified > 50);
  CHECK(st.certified <= st.indices);
  CHECK(static_cast<double>(st.changed) <= (tau + 0.1) * static_cast<double>(st.certified));
}

}
