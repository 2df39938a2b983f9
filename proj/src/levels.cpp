#include "condwalk/levels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace condwalk {

namespace {

std::array<ShellBounds, kMaxLevel + 2> make_bounds() {
  std::array<ShellBounds, kMaxLevel + 2> b{};
  b[0] = {-1, 0};
  b[1] = {0, 1};
  b[2] = {1, 4};
  for (int m = 3; m <= kMaxLevel + 1; ++m) {
    const double r = level_radius(m);
    b[static_cast<std::size_t>(m)] = {
        static_cast<std::int64_t>(std::floor((r - 1.0) * (r - 1.0))),
        static_cast<std::int64_t>(std::floor(r * r))};
  }
  return b;
}

const std::array<ShellBounds, kMaxLevel + 2>& bounds_table() {
  static const auto table = make_bounds();
  return table;
}

}  // namespace

ShellBounds shell_bounds(int m) {
  if (m < 0 || m > kMaxLevel + 1) {
    throw std::out_of_range("shell level out of range");
  }
  return bounds_table()[static_cast<std::size_t>(m)];
}

std::optional<int> gamma_membership(const LatticeSite& x) {
  const std::int64_t n2 = x.norm2();
  const auto& table = bounds_table();
  // Shell hi bounds increase with m; find the first shell reaching n2.
  const auto it = std::lower_bound(
      table.begin(), table.end(), n2,
      [](const ShellBounds& b, std::int64_t v) { return b.hi < v; });
  if (it == table.end()) return std::nullopt;
  if (!it->contains(n2)) return std::nullopt;
  return static_cast<int>(it - table.begin());
}

std::vector<LatticeSite> shell_sites(int m) {
  const ShellBounds b = shell_bounds(m);
  std::vector<LatticeSite> out;
  const auto r = static_cast<std::int64_t>(std::floor(std::sqrt(
      static_cast<double>(b.hi)))) + 1;
  for (std::int64_t x = -r; x <= r; ++x) {
    const std::int64_t rest = b.hi - x * x;
    if (rest < 0) continue;
    auto ymax = static_cast<std::int64_t>(std::sqrt(static_cast<double>(rest)));
    while (ymax * ymax > rest) --ymax;
    while ((ymax + 1) * (ymax + 1) <= rest) ++ymax;
    for (std::int64_t y = -ymax; y <= ymax; ++y) {
      if (b.contains(x * x + y * y)) out.push_back({x, y});
    }
  }
  return out;
}

namespace {

// Largest a over Gamma_m. Along a column of the shell a grows with |y|, so
// only the outermost site of each column needs evaluating; the inner window
// is still scanned for the small shells where that monotonicity is not clean.
double shell_max_a(int m, const PotentialTable& pot) {
  if (m <= 8) {
    double best = 0.0;
    for (const auto& s : shell_sites(m)) best = std::max(best, pot(s));
    return best;
  }
  const ShellBounds b = shell_bounds(m);
  double best = 0.0;
  const auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(b.hi)));
  for (std::int64_t x = 0; x <= r + 1; ++x) {
    const std::int64_t rest = b.hi - x * x;
    if (rest < 0) continue;
    auto y = static_cast<std::int64_t>(std::sqrt(static_cast<double>(rest)));
    while (y * y > rest) --y;
    while ((y + 1) * (y + 1) <= rest) ++y;
    for (std::int64_t yy = y; yy >= 0 && yy + 3 >= y; --yy) {
      if (b.contains(x * x + yy * yy)) best = std::max(best, pot({x, yy}));
    }
  }
  return best;
}

}  // namespace

PiWeights::PiWeights(int max_level,
                     std::shared_ptr<const PotentialTable> potential)
    : potential_(std::move(potential)) {
  if (max_level < 1 || max_level > kMaxLevel) {
    throw std::invalid_argument("PiWeights: max_level out of range");
  }
  std::vector<double> shell_max(static_cast<std::size_t>(max_level) + 2, 0.0);
  for (int m = 0; m <= max_level + 1; ++m) {
    shell_max[static_cast<std::size_t>(m)] = shell_max_a(m, *potential_);
  }
  max_a_.assign(static_cast<std::size_t>(max_level) + 1, 0.0);
  for (int m = 1; m <= max_level; ++m) {
    max_a_[static_cast<std::size_t>(m)] =
        std::max(shell_max[static_cast<std::size_t>(m - 1)],
                 shell_max[static_cast<std::size_t>(m + 1)]);
  }
}

double PiWeights::pi(int m, const LatticeSite& y) const {
  if (m < 1 || m > max_level()) throw std::out_of_range("pi: level out of range");
  const std::int64_t n2 = y.norm2();
  if (!shell_bounds(m - 1).contains(n2) && !shell_bounds(m + 1).contains(n2)) {
    throw std::invalid_argument("pi: site is not on a neighbouring shell");
  }
  return pi_unchecked(m, y);
}

}  // namespace condwalk
