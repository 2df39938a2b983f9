#include <doctest.h>

#include <set>
#include <vector>

#include "condwalk/parallel.hpp"
#include "condwalk/rng.hpp"
#include "condwalk/stats.hpp"

using namespace condwalk;

TEST_SUITE("rng") {

TEST_CASE("philox4x32-10 known answers") {
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) ==
        PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                   {0xffffffff, 0xffffffff}) ==
        PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                   {0xa4093822, 0x299f31d0}) ==
        PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("splitmix64 first output from zero state") {
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("streams are reproducible and distinct") {
  const StreamId id{42, StreamTag::kWalk, 3, 1, 4, 1};
  Rng a(id), b(id), c(id.sub(2)), d(id.with_tag(StreamTag::kKmt));
  std::set<std::uint64_t> firsts;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    if (i == 0) {
      firsts.insert(x);
      firsts.insert(c.next_u64());
      firsts.insert(d.next_u64());
    }
  }
  CHECK(firsts.size() == 3);
}

TEST_CASE("Rng restarted at a block matches the sequential stream") {
  const StreamId id{1, StreamTag::kTest, 7};
  Rng seq(id);
  for (int i = 0; i < 40; ++i) seq.next_u32();  // 10 blocks
  Rng jump(CounterKey::from(id), 10);
  for (int i = 0; i < 20; ++i) CHECK(seq.next_u32() == jump.next_u32());
}

TEST_CASE("uniforms lie in the open unit interval and pass KS") {
  Rng r({5, StreamTag::kTest});
  std::vector<double> u(20000);
  for (auto& x : u) {
    x = r.uniform();
    REQUIRE(x > 0.0);
    REQUIRE(x < 1.0);
  }
  CHECK(u64_to_open_unit(0) > 0.0);
  CHECK(u64_to_open_unit(~0ULL) < 1.0);
  CHECK(u32_to_open_unit(~0U) < 1.0);
  CHECK(ks_test(u, [](double x) { return x; }).p_value > 1e-3);
}

TEST_CASE("normal draws pass KS against the normal CDF") {
  Rng r({6, StreamTag::kTest});
  std::vector<double> z(20000);
  for (auto& x : z) x = r.normal();
  CHECK(ks_test(z, normal_cdf).p_value > 1e-3);
}

TEST_CASE("inverse normal CDF") {
  CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  for (double u : {1e-300, 1e-12, 0.01, 0.3, 0.7, 0.99, 1.0 - 1e-12}) {
    CHECK(normal_cdf(inverse_normal_cdf(u)) == doctest::Approx(u).epsilon(1e-9));
  }
}

TEST_CASE("parallel_map keeps index order and propagates exceptions") {
  const auto v = parallel_map<std::uint64_t>(
      100, [](std::size_t i) { return Rng({9, StreamTag::kTest, i}).next_u64(); });
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(v[i] == Rng({9, StreamTag::kTest, i}).next_u64());
  }
  CHECK_THROWS(parallel_for(10, [](std::size_t i) {
    if (i == 5) throw std::runtime_error("x");
  }));
}

}
