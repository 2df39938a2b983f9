#pragma once

// Counter-based random streams (Philox4x32-10). Every random quantity in the
// library is addressed by (master seed, module tag, a, b, c) so that results do
// not depend on thread count or on the order in which replicas are executed.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include <boost/random/normal_distribution.hpp>

namespace condwalk {

enum class StreamTag : std::uint64_t {
  kWalk = 1,
  kBrownian = 2,
  kHatW = 3,
  kLevelChain = 4,
  kHatWExcursion = 5,
  kHatSExcursion = 6,
  kKmt = 7,
  kCouplingPair = 8,
  kCouplingUniform = 9,
  kCouplingIndependent = 10,
  kEscape = 11,
  kBessel = 12,
  kTest = 99,
};

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

inline PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) {
  std::uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
  std::uint32_t k0 = key[0], k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c0;
    const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c2;
    c0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1 ^ k0;
    c2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ k1;
    c1 = static_cast<std::uint32_t>(p1);
    c3 = static_cast<std::uint32_t>(p0);
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  return {c0, c1, c2, c3};
}

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Identifies one independent stream.
struct StreamId {
  std::uint64_t seed = 0;
  StreamTag tag = StreamTag::kTest;
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::uint64_t c = 0;
  std::uint64_t d = 0;

  StreamId with(std::uint64_t na, std::uint64_t nb = 0, std::uint64_t nc = 0,
                std::uint64_t nd = 0) const {
    return {seed, tag, na, nb, nc, nd};
  }
  StreamId with_tag(StreamTag t) const { return {seed, t, a, b, c, d}; }
  StreamId sub(std::uint64_t nd) const { return {seed, tag, a, b, c, nd}; }
};

/// Key + high counter words derived from a StreamId. Draw i of the stream is
/// philox4x32({lo(i), hi(i), w2, w3}, key).
struct CounterKey {
  PhiloxKey key{};
  std::uint32_t w2 = 0;
  std::uint32_t w3 = 0;

  static CounterKey from(const StreamId& id);

  PhiloxCounter block(std::uint64_t index) const {
    return philox4x32({static_cast<std::uint32_t>(index),
                       static_cast<std::uint32_t>(index >> 32), w2, w3},
                      key);
  }
  /// Two independent uniforms on (0,1) with 53 bits each.
  std::array<double, 2> uniforms(std::uint64_t index) const;
};

inline double u64_to_open_unit(std::uint64_t bits) {
  // (k + 0.5) / 2^52, strictly inside (0, 1) (2^53 - 0.5 would round to 2^53)
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

inline double u32_to_open_unit(std::uint32_t bits) {
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-32;
}

/// Standard normal quantile.
double inverse_normal_cdf(double u);
/// Standard normal CDF.
inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

/// Sequential stream. Satisfies UniformRandomBitGenerator.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(const StreamId& id) : key_(CounterKey::from(id)) {}
  /// Stream of `key` starting at block `first_block`.
  Rng(const CounterKey& key, std::uint64_t first_block)
      : key_(key), counter_(first_block) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() { return next_u64(); }

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return buf_[pos_++];
  }
  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }
  /// Uniform on (0,1), 53-bit resolution.
  double uniform() { return u64_to_open_unit(next_u64()); }
  /// Uniform on (0,1), 32-bit resolution; used in hot loops.
  double uniform_fast() { return u32_to_open_unit(next_u32()); }
  /// Standard normal (ziggurat).
  double normal() { return boost::random::normal_distribution<double>()(*this); }

 private:
  void refill() {
    buf_ = key_.block(counter_++);
    pos_ = 0;
  }

  CounterKey key_;
  std::uint64_t counter_ = 0;
  PhiloxCounter buf_{};
  int pos_ = 4;
};

/// SplitMix64 sequence; cheap to seed, used for short bursts of draws whose
/// seed comes from a counter block.
class SplitMixRng {
 public:
  using result_type = std::uint64_t;
  explicit SplitMixRng(std::uint64_t seed) : state_(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() {
    const std::uint64_t r = splitmix64(state_);
    state_ += 0x9E3779B97F4A7C15ULL;
    return r;
  }
  double normal() { return boost::random::normal_distribution<double>()(*this); }

 private:
  std::uint64_t state_;
};

}  // namespace condwalk
