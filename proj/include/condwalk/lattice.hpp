#pragma once

#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>

namespace condwalk {

/// Euler-Mascheroni constant.
inline constexpr double kEulerGamma = 0.57721566490153286061;

/// gamma_EM + (3/2) ln 2, the additive constant in the logarithmic
/// asymptotics of the potential kernel.
inline constexpr double kPotentialConstant =
    kEulerGamma + 1.5 * std::numbers::ln2;

/// Radius of the disk the conditioned Brownian motion is matched to:
/// (pi/2) a(x) = ln(|x| / rho0) + O(|x|^-1).
inline double rho0() { return std::exp(-kPotentialConstant); }

struct LatticeSite {
  std::int64_t x = 0;
  std::int64_t y = 0;

  constexpr auto operator<=>(const LatticeSite&) const = default;

  constexpr std::int64_t norm2() const { return x * x + y * y; }
  double norm() const { return std::sqrt(static_cast<double>(norm2())); }
  constexpr LatticeSite operator+(const LatticeSite& o) const {
    return {x + o.x, y + o.y};
  }
  constexpr LatticeSite operator-(const LatticeSite& o) const {
    return {x - o.x, y - o.y};
  }
};

/// The four unit steps in the order used everywhere: +x, -x, +y, -y.
inline constexpr LatticeSite kUnitSteps[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};

inline constexpr bool adjacent(const LatticeSite& a, const LatticeSite& b) {
  const auto dx = a.x - b.x;
  const auto dy = a.y - b.y;
  return dx * dx + dy * dy == 1;
}

struct LatticeSiteHash {
  std::size_t operator()(const LatticeSite& s) const noexcept {
    auto h = static_cast<std::uint64_t>(s.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(s.y) + 0x7F4A7C159E3779B9ULL + (h << 6) +
         (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

struct PlanePoint {
  double x = 0.0;
  double y = 0.0;

  double norm() const { return std::hypot(x, y); }
  double arg() const { return std::atan2(y, x); }
  PlanePoint operator+(const PlanePoint& o) const { return {x + o.x, y + o.y}; }
  PlanePoint operator-(const PlanePoint& o) const { return {x - o.x, y - o.y}; }
  PlanePoint operator*(double s) const { return {x * s, y * s}; }
};

inline PlanePoint to_plane(const LatticeSite& s) {
  return {static_cast<double>(s.x), static_cast<double>(s.y)};
}

inline PlanePoint rotate(const PlanePoint& p, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

inline double distance(const PlanePoint& a, const PlanePoint& b) {
  return (a - b).norm();
}

}  // namespace condwalk
