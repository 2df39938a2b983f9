#include "condwalk/kmt.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <stdexcept>

#include "condwalk/parallel.hpp"
#include "condwalk/stats.hpp"

namespace condwalk {

int ceil_log2(std::uint64_t n) {
  int j = 0;
  while ((std::uint64_t{1} << j) < n) ++j;
  return j;
}

namespace {

constexpr std::int64_t kTableMax = 1 << 10;
constexpr std::int64_t kExactMax = 1 << 14;

// A discrete law on [lo, hi] given by its mode value and the ratio
// p(x+1)/p(x).
struct DiscreteLaw {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  double mean = 0.0;
  double sd = 0.0;
  // log p(x) via lgamma, used once to anchor the recurrence.
  double (*log_pmf)(const DiscreteLaw&, std::int64_t) = nullptr;
  double (*ratio)(const DiscreteLaw&, std::int64_t) = nullptr;  // p(x+1)/p(x)
  std::int64_t n = 0;  // trials (binomial) or bridge length
  std::int64_t k = 0;  // up-steps (bridge)
};

double lchoose(std::int64_t n, std::int64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

DiscreteLaw binomial_law(std::int64_t n) {
  DiscreteLaw d;
  d.lo = 0;
  d.hi = n;
  d.n = n;
  d.mean = 0.5 * static_cast<double>(n);
  d.sd = 0.5 * std::sqrt(static_cast<double>(n));
  d.log_pmf = [](const DiscreteLaw& l, std::int64_t x) {
    return lchoose(l.n, x) - static_cast<double>(l.n) * std::numbers::ln2;
  };
  d.ratio = [](const DiscreteLaw& l, std::int64_t x) {
    return static_cast<double>(l.n - x) / static_cast<double>(x + 1);
  };
  return d;
}

// Hypergeometric: `len` steps of which `ups` are +1, draw len/2 of them.
DiscreteLaw bridge_law(std::int64_t len, std::int64_t ups) {
  DiscreteLaw d;
  const std::int64_t draws = len / 2;
  d.n = len;
  d.k = ups;
  d.lo = std::max<std::int64_t>(0, draws - (len - ups));
  d.hi = std::min(ups, draws);
  const double p = static_cast<double>(ups) / static_cast<double>(len);
  d.mean = static_cast<double>(draws) * p;
  const double var = static_cast<double>(draws) * p * (1.0 - p) *
                     static_cast<double>(len - draws) /
                     std::max(1.0, static_cast<double>(len - 1));
  d.sd = std::sqrt(var);
  d.log_pmf = [](const DiscreteLaw& l, std::int64_t x) {
    const std::int64_t draws = l.n / 2;
    return lchoose(l.k, x) + lchoose(l.n - l.k, draws - x) - lchoose(l.n, draws);
  };
  d.ratio = [](const DiscreteLaw& l, std::int64_t x) {
    const std::int64_t draws = l.n / 2;
    return static_cast<double>((l.k - x) * (draws - x)) /
           static_cast<double>((x + 1) * (l.n - l.k - draws + x + 1));
  };
  return d;
}

// pmf on [a, b] (subset of the support), normalised by the anchor at x0.
std::vector<double> pmf_window(const DiscreteLaw& d, std::int64_t a,
                               std::int64_t b, std::int64_t x0) {
  std::vector<double> p(static_cast<std::size_t>(b - a + 1), 0.0);
  const double p0 = std::exp(d.log_pmf(d, x0));
  p[static_cast<std::size_t>(x0 - a)] = p0;
  double v = p0;
  for (std::int64_t x = x0; x < b; ++x) {
    v *= d.ratio(d, x);
    p[static_cast<std::size_t>(x + 1 - a)] = v;
  }
  v = p0;
  for (std::int64_t x = x0; x > a; --x) {
    v /= d.ratio(d, x - 1);
    p[static_cast<std::size_t>(x - 1 - a)] = v;
  }
  return p;
}

std::int64_t mode_of(const DiscreteLaw& d) {
  return std::clamp(static_cast<std::int64_t>(std::floor(d.mean)), d.lo, d.hi);
}

// Thresholds t_x = Phi^-1(F(x)) for x in [lo, hi); X = first x with z <= t_x.
std::vector<double> thresholds(const DiscreteLaw& d) {
  const auto p = pmf_window(d, d.lo, d.hi, mode_of(d));
  const std::size_t m = p.size();
  std::vector<double> cdf(m), sf(m);
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) cdf[i] = (acc += p[i]);
  acc = 0.0;
  for (std::size_t i = m; i-- > 0;) {
    sf[i] = acc;  // P[X > lo + i]
    acc += p[i];
  }
  const double total = cdf[m - 1];
  std::vector<double> t(m - 1);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const double f = cdf[i] / total;
    const double s = sf[i] / total;
    t[i] = f <= 0.5 ? inverse_normal_cdf(f) : -inverse_normal_cdf(s);
  }
  return t;
}

struct TableSet {
  // binomial[j] for n = 2^j; bridge[j][ups] for len = 2^j.
  std::vector<std::vector<double>> binomial;
  std::vector<std::vector<std::vector<double>>> bridge;
};

const TableSet& tables() {
  static TableSet set;
  static std::once_flag once;
  std::call_once(once, [] {
    const int jmax = ceil_log2(kTableMax);
    set.binomial.resize(static_cast<std::size_t>(jmax) + 1);
    set.bridge.resize(static_cast<std::size_t>(jmax) + 1);
    for (int j = 0; j <= jmax; ++j) {
      const std::int64_t n = std::int64_t{1} << j;
      set.binomial[static_cast<std::size_t>(j)] = thresholds(binomial_law(n));
      if (j == 0) continue;
      auto& row = set.bridge[static_cast<std::size_t>(j)];
      row.resize(static_cast<std::size_t>(n) + 1);
      for (std::int64_t ups = 0; ups <= n; ++ups) {
        row[static_cast<std::size_t>(ups)] = thresholds(bridge_law(n, ups));
      }
    }
  });
  return set;
}

std::int64_t table_quantile(const std::vector<double>& t, std::int64_t lo,
                            double z) {
  const auto it = std::lower_bound(t.begin(), t.end(), z);
  return lo + static_cast<std::int64_t>(it - t.begin());
}

std::int64_t exact_quantile(const DiscreteLaw& d, double z) {
  const std::int64_t x0 = mode_of(d);
  const auto w = static_cast<std::int64_t>(std::ceil(15.0 * d.sd)) + 5;
  const std::int64_t a = std::max(d.lo, x0 - w);
  const std::int64_t b = std::min(d.hi, x0 + w);
  const auto p = pmf_window(d, a, b, x0);
  if (z <= 0.0) {
    const double u = normal_cdf(z);
    double acc = 0.0;
    for (std::int64_t x = a; x < b; ++x) {
      acc += p[static_cast<std::size_t>(x - a)];
      if (acc >= u) return x;
    }
    return b;
  }
  // Search from the right on the survival function: smallest x with
  // P[X > x] <= Phi(-z).
  const double v = normal_cdf(-z);
  double tail = 0.0;
  std::int64_t x = b;
  while (x > a && tail + p[static_cast<std::size_t>(x - a)] <= v) {
    tail += p[static_cast<std::size_t>(x - a)];
    --x;
  }
  return x;
}

std::int64_t normal_quantile(const DiscreteLaw& d, double z) {
  const double x = std::ceil(d.mean + d.sd * z - 0.5);
  return std::clamp(static_cast<std::int64_t>(x), d.lo, d.hi);
}

bool is_pow2(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

std::int64_t binomial_half_quantile(std::int64_t n, double z) {
  if (n < 0) throw std::invalid_argument("binomial: n must be >= 0");
  if (n == 0) return 0;
  if (n <= kTableMax && is_pow2(n)) {
    return table_quantile(tables().binomial[static_cast<std::size_t>(ceil_log2(
                              static_cast<std::uint64_t>(n)))],
                          0, z);
  }
  const DiscreteLaw d = binomial_law(n);
  return n <= kExactMax ? exact_quantile(d, z) : normal_quantile(d, z);
}

std::int64_t bridge_half_quantile(std::int64_t len, std::int64_t ups, double z) {
  if (len < 2 || len % 2 != 0 || ups < 0 || ups > len) {
    throw std::invalid_argument("bridge quantile: invalid length or up count");
  }
  const std::int64_t draws = len / 2;
  const std::int64_t lo = std::max<std::int64_t>(0, draws - (len - ups));
  const std::int64_t hi = std::min(ups, draws);
  if (lo == hi) return lo;
  if (len <= kTableMax && is_pow2(len)) {
    const auto& t = tables().bridge[static_cast<std::size_t>(
        std::countr_zero(static_cast<std::uint64_t>(len)))][static_cast<std::size_t>(ups)];
    return table_quantile(t, lo, z);
  }
  const DiscreteLaw d = bridge_law(len, ups);
  return len <= kExactMax ? exact_quantile(d, z) : normal_quantile(d, z);
}

KmtStream1D::KmtStream1D(const StreamId& stream, int log2_n)
    : key_(CounterKey::from(stream)) {
  if (log2_n < 0 || log2_n > 56) {
    throw std::invalid_argument("KMT: log2 length out of range");
  }
  n_ = std::uint64_t{1} << log2_n;
  Rng root(key_, 0);
  const double z = root.normal();
  const auto n = static_cast<std::int64_t>(n_);
  const std::int64_t s_end = 2 * binomial_half_quantile(n, z) - n;
  const double w_end = std::sqrt(static_cast<double>(n_)) * z;
  stack_.push_back({0, n_, 0, s_end, 0.0, w_end, 1});
}

namespace {

const std::array<double, 64>& half_sqrt_table() {
  static const auto t = [] {
    std::array<double, 64> a{};
    for (int j = 0; j < 64; ++j) a[static_cast<std::size_t>(j)] = 0.5 * std::sqrt(std::ldexp(1.0, j));
    return a;
  }();
  return t;
}

}  // namespace

namespace {

// Fills s[1..len-1], w[1..len-1] of a leaf block from its ends, coarse
// midpoints first. Short threshold lists are scanned linearly.
void fill_block(SplitMixRng& rng, const TableSet& tb, std::uint64_t len,
                std::int64_t* s, double* w) {
  const auto& half_sqrt = half_sqrt_table();
  for (std::uint64_t step = len; step >= 2; step /= 2) {
    const int j = std::countr_zero(step);
    const double hs = half_sqrt[static_cast<std::size_t>(j)];
    const auto& rows = tb.bridge[static_cast<std::size_t>(j)];
    const auto l = static_cast<std::int64_t>(step);
    const std::int64_t draws = l / 2;
    for (std::uint64_t i = 0; i < len; i += step) {
      const double z = rng.normal();
      const std::int64_t ups = (l + s[i + step] - s[i]) / 2;
      std::int64_t x = std::max<std::int64_t>(0, draws - (l - ups));
      if (x < std::min(ups, draws)) {
        const auto& t = rows[static_cast<std::size_t>(ups)];
        std::size_t c = 0;
        if (t.size() <= 8) {
          while (c < t.size() && t[c] < z) ++c;
        } else {
          c = static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), z) -
                                       t.begin());
        }
        x += static_cast<std::int64_t>(c);
      }
      s[i + step / 2] = s[i] + 2 * x - draws;
      w[i + step / 2] = 0.5 * (w[i] + w[i + step]) + hs * z;
    }
  }
}

}  // namespace

bool KmtStream1D::next_block() {
  if (stack_.empty()) return false;
  const auto& half_sqrt = half_sqrt_table();
  while (stack_.back().len > kBlock) {
    const Frame f = stack_.back();
    stack_.pop_back();
    Rng rng(key_, f.id << 8);
    const double z = rng.normal();
    const auto len = static_cast<std::int64_t>(f.len);
    const std::int64_t ups = (len + f.s_hi - f.s_lo) / 2;
    const std::int64_t x = bridge_half_quantile(len, ups, z);
    const std::int64_t s_mid = f.s_lo + 2 * x - len / 2;
    const double w_mid =
        0.5 * (f.w_lo + f.w_hi) +
        half_sqrt[static_cast<std::size_t>(std::countr_zero(f.len))] * z;
    const std::uint64_t half = f.len / 2;
    stack_.push_back({f.lo + half, half, s_mid, f.s_hi, w_mid, f.w_hi, 2 * f.id + 1});
    stack_.push_back({f.lo, half, f.s_lo, s_mid, f.w_lo, w_mid, 2 * f.id});
  }
  const Frame f = stack_.back();
  stack_.pop_back();
  block_start_ = f.lo;
  block_len_ = f.len;
  buf_s_[0] = f.s_lo;
  buf_w_[0] = f.w_lo;
  buf_s_[f.len] = f.s_hi;
  buf_w_[f.len] = f.w_hi;
  // All midpoints of a block come from a fast generator seeded by one counter
  // block of its root.
  const PhiloxCounter seed = key_.block(f.id << 8);
  SplitMixRng rng(std::uint64_t{seed[0]} << 32 | seed[1]);
  fill_block(rng, tables(), f.len, buf_s_.data(), buf_w_.data());
  pos_ = 0;
  return true;
}

bool KmtStream1D::next() {
  if (pos_ == block_len_ && !next_block()) return false;
  ++pos_;
  return true;
}

KmtStream2D::KmtStream2D(const StreamId& stream, int log2_n)
    : u_(stream.sub(1), log2_n),
      v_(stream.sub(2), log2_n),
      refine_key_(CounterKey::from(stream.sub(3))),
      refine_rng_(refine_key_, 0) {}

bool KmtStream2D::next_block() {
  const bool a = u_.next_block();
  const bool b = v_.next_block();
  if (!a || !b) return false;
  const std::uint64_t len = u_.block_length();
  const std::int64_t* us = u_.block_s();
  const std::int64_t* vs = v_.block_s();
  const double* uw = u_.block_w();
  const double* vw = v_.block_w();
  for (std::uint64_t i = 0; i <= len; ++i) {
    s_[i] = {(us[i] + vs[i]) / 2, (us[i] - vs[i]) / 2};
    w_[i] = {0.5 * (uw[i] + vw[i]), 0.5 * (uw[i] - vw[i])};
  }
  pos_ = 0;
  return true;
}

bool KmtStream2D::next() {
  if (pos_ == block_length() && !next_block()) return false;
  ++pos_;
  return true;
}

const std::array<PlanePoint, KmtStream2D::kSubsteps + 1>& KmtStream2D::bridge(
    std::uint64_t k) {
  if (bridge_for_ == k) return bridge_;
  if (k <= block_start() || k > block_start() + block_length()) {
    throw std::out_of_range("KmtStream2D::bridge: interval outside the block");
  }
  bridge_for_ = k;
  refine_rng_ = Rng(refine_key_, k << 8);
  const std::size_t i = k - block_start();
  const PlanePoint p0 = w_[i - 1];
  const PlanePoint p1 = w_[i];
  // Components along the two rotated axes are independent unit-variance
  // Brownian bridges.
  const double bu_end = p1.x + p1.y;
  const double bv_end = p1.x - p1.y;
  double bu = p0.x + p0.y;
  double bv = p0.x - p0.y;
  bridge_[0] = p0;
  const double h = 1.0 / kSubsteps;
  for (int j = 1; j < kSubsteps; ++j) {
    const double left = 1.0 - (j - 1) * h;  // time remaining before the step
    const double frac = h / left;
    const double sd = std::sqrt(h * (left - h) / left);
    bu += (bu_end - bu) * frac + sd * refine_rng_.normal();
    bv += (bv_end - bv) * frac + sd * refine_rng_.normal();
    bridge_[static_cast<std::size_t>(j)] = {0.5 * (bu + bv), 0.5 * (bu - bv)};
  }
  bridge_[kSubsteps] = p1;
  return bridge_;
}

double KmtStream2D::bridge_uniform(std::uint64_t k) {
  bridge(k);
  return refine_rng_.uniform();
}

double CoupledPair1D::max_discrepancy() const {
  double m = 0.0;
  for (std::size_t k = 1; k < S.size(); ++k) {
    m = std::max(m, std::abs(static_cast<double>(S[k]) - W[k]));
  }
  return m;
}

CoupledPair1D dyadic_couple_1d(std::uint64_t n, const StreamId& stream) {
  if (!is_pow2(static_cast<std::int64_t>(n)) || n > (std::uint64_t{1} << 26)) {
    throw std::invalid_argument("dyadic_couple_1d: n must be 2^j, j <= 26");
  }
  KmtStream1D st(stream, ceil_log2(n));
  CoupledPair1D p;
  p.n = n;
  p.S.reserve(n + 1);
  p.W.reserve(n + 1);
  p.S.push_back(0);
  p.W.push_back(0.0);
  while (st.next()) {
    p.S.push_back(st.s());
    p.W.push_back(st.w());
  }
  return p;
}

CoupledPair2D lift_to_2d(const CoupledPair1D& u, const CoupledPair1D& v) {
  if (u.S.size() != v.S.size()) {
    throw std::invalid_argument("lift_to_2d: length mismatch");
  }
  CoupledPair2D out;
  out.S.reserve(u.S.size());
  out.W.reserve(u.S.size());
  for (std::size_t k = 0; k < u.S.size(); ++k) {
    out.S.push_back({(u.S[k] + v.S[k]) / 2, (u.S[k] - v.S[k]) / 2});
    out.W.push_back({0.5 * (u.W[k] + v.W[k]), 0.5 * (u.W[k] - v.W[k])});
    out.max_discrepancy =
        std::max(out.max_discrepancy, distance(to_plane(out.S.back()), out.W.back()));
  }
  return out;
}

bool controlled_between_integers_check(const CoupledPair2D& pair, double bound,
                                       const StreamId& refinement,
                                       int resolution) {
  if (std::isinf(bound)) return true;
  if (resolution < 1) throw std::invalid_argument("resolution must be >= 1");
  const CounterKey key = CounterKey::from(refinement);
  const double h = 1.0 / resolution;
  for (std::size_t n = 0; n + 1 < pair.S.size(); ++n) {
    const PlanePoint c = to_plane(pair.S[n]);
    const PlanePoint w0 = pair.W[n];
    const PlanePoint w1 = pair.W[n + 1];
    const double d0 = distance(c, w0);
    const double d1 = distance(c, w1);
    if (d0 > bound || d1 > bound) return false;
    if (disk_exit_probability(d0, d1, bound, 0.5, 1.0) <= 1e-12) continue;
    Rng rng(key, static_cast<std::uint64_t>(n) << 8);
    double bu = w0.x + w0.y;
    double bv = w0.x - w0.y;
    const double bu_end = w1.x + w1.y;
    const double bv_end = w1.x - w1.y;
    PlanePoint prev = w0;
    for (int j = 1; j <= resolution; ++j) {
      PlanePoint cur = w1;
      if (j < resolution) {
        const double left = 1.0 - (j - 1) * h;
        const double frac = h / left;
        const double sd = std::sqrt(h * (left - h) / left);
        bu += (bu_end - bu) * frac + sd * rng.normal();
        bv += (bv_end - bv) * frac + sd * rng.normal();
        cur = {0.5 * (bu + bv), 0.5 * (bu - bv)};
      }
      const double e0 = distance(c, prev);
      const double e1 = distance(c, cur);
      if (e1 > bound) return false;
      if (rng.uniform() < disk_exit_probability(e0, e1, bound, 0.5, h)) return false;
      prev = cur;
    }
  }
  return true;
}

KmtDiscrepancyReport kmt_discrepancy_study(const std::vector<int>& log2_n,
                                           std::size_t replicas,
                                           const StreamId& stream) {
  if (log2_n.size() < 2 || replicas == 0) {
    throw std::invalid_argument("kmt study needs >= 2 sizes and >= 1 replica");
  }
  KmtDiscrepancyReport rep;
  rep.log2_n = log2_n;
  std::vector<double> xs;
  for (std::size_t i = 0; i < log2_n.size(); ++i) {
    const int j = log2_n[i];
    auto maxima = parallel_map<double>(replicas, [&](std::size_t r) {
      KmtStream1D st(stream.with(static_cast<std::uint64_t>(j), r), j);
      double m = 0.0;
      while (st.next()) {
        m = std::max(m, std::abs(static_cast<double>(st.s()) - st.w()));
      }
      return m;
    });
    rep.median.push_back(median(maxima));
    rep.maxima.push_back(std::move(maxima));
    xs.push_back(static_cast<double>(j) * std::numbers::ln2);
  }
  const LinearFit fit = linear_fit(xs, rep.median);
  rep.slope = fit.slope;
  rep.intercept = fit.intercept;
  rep.r2 = fit.r2;

  std::vector<double> excess;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (double m : rep.maxima[i]) excess.push_back(m - (fit.intercept + fit.slope * xs[i]));
  }
  std::sort(excess.begin(), excess.end());
  const double total = static_cast<double>(excess.size());
  // Survival on an even grid from the median up to the level where about
  // 20 points remain above.
  const double top = excess[static_cast<std::size_t>(
      std::max(0.0, total - std::max(20.0, 0.001 * total)))];
  const double start = std::max(0.0, excess[excess.size() / 2]);
  const int cells = 12;
  std::vector<double> lx, lp;
  for (int c = 0; c < cells && top > start; ++c) {
    const double x = start + (top - start) * c / (cells - 1);
    const auto above = static_cast<double>(
        excess.end() - std::upper_bound(excess.begin(), excess.end(), x));
    if (above <= 0.0) continue;
    rep.tail_x.push_back(x);
    rep.tail_prob.push_back(above / total);
    lx.push_back(x);
    lp.push_back(std::log(above / total));
  }
  if (lx.size() >= 2) {
    const LinearFit tail = linear_fit(lx, lp);
    rep.lambda = -tail.slope;
    rep.tail_r2 = tail.r2;
  }
  return rep;
}

}  // namespace condwalk
