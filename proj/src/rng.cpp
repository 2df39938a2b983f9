#include "condwalk/rng.hpp"

#include <boost/math/special_functions/erf.hpp>

namespace condwalk {

CounterKey CounterKey::from(const StreamId& id) {
  const std::uint64_t k =
      splitmix64(id.seed ^ splitmix64(static_cast<std::uint64_t>(id.tag)));
  std::uint64_t h = splitmix64(id.a ^ 0x243F6A8885A308D3ULL);
  h = splitmix64(h ^ id.b);
  h = splitmix64(h ^ splitmix64(id.c + 0x13198A2E03707344ULL));
  h = splitmix64(h ^ splitmix64(id.d + 0xA4093822299F31D0ULL));
  CounterKey out;
  out.key = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  out.w2 = static_cast<std::uint32_t>(h);
  out.w3 = static_cast<std::uint32_t>(h >> 32);
  return out;
}

std::array<double, 2> CounterKey::uniforms(std::uint64_t index) const {
  const auto b = block(index);
  const std::uint64_t u0 = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
  const std::uint64_t u1 = (static_cast<std::uint64_t>(b[2]) << 32) | b[3];
  return {u64_to_open_unit(u0), u64_to_open_unit(u1)};
}

double inverse_normal_cdf(double u) {
  if (u < 0.5) return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (1.0 - u));
}

}  // namespace condwalk
