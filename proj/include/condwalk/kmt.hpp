#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "condwalk/lattice.hpp"
#include "condwalk/rng.hpp"

namespace condwalk {

/// Smallest j with 2^j >= n.
int ceil_log2(std::uint64_t n);

/// Quantile couplings used on the dyadic tree. Each returns the value x of
/// the discrete law with x = min{x : F(x) >= Phi(z)}. Tables of
/// Phi^-1(F(x)) are used up to 2^10 trials, exact windowed pmfs up to 2^14,
/// and the continuity-corrected normal approximation above.
std::int64_t binomial_half_quantile(std::int64_t n, double z);
/// Up-steps among the first half of a bridge of `len` steps with `ups` up-steps.
std::int64_t bridge_half_quantile(std::int64_t len, std::int64_t ups, double z);

/// Streaming dyadic coupling of a 1D SRW S with a standard BM W on [0, n],
/// n = 2^j: the endpoint is coupled by quantiles (Binomial vs Normal), then
/// each dyadic midpoint (hypergeometric vs Brownian-bridge midpoint). Points
/// are produced in time order, a block of up to kBlock steps at a time, with
/// O(j) memory; the law does not depend on how far the stream is read. The
/// midpoints inside a block come from a SplitMix64 generator seeded by the
/// block's root counter.
class KmtStream1D {
 public:
  static constexpr std::uint64_t kBlock = 64;

  KmtStream1D(const StreamId& stream, int log2_n);

  /// Moves to the next block; false once time n was reached.
  bool next_block();
  /// The block covers times block_start() + i, i in [0, block_length()];
  /// index 0 repeats the last point of the previous block.
  std::uint64_t block_start() const { return block_start_; }
  std::uint64_t block_length() const { return block_len_; }
  const std::int64_t* block_s() const { return buf_s_.data(); }
  const double* block_w() const { return buf_w_.data(); }

  /// Advances to the next integer time; false once time n was reached.
  bool next();
  std::uint64_t time() const { return block_start_ + pos_; }
  std::int64_t s() const { return buf_s_[pos_]; }
  double w() const { return buf_w_[pos_]; }
  std::uint64_t length() const { return n_; }

 private:
  struct Frame {
    std::uint64_t lo;
    std::uint64_t len;
    std::int64_t s_lo, s_hi;
    double w_lo, w_hi;
    std::uint64_t id;
  };

  CounterKey key_;
  std::uint64_t n_;
  std::vector<Frame> stack_;
  std::array<std::int64_t, kBlock + 1> buf_s_{};
  std::array<double, kBlock + 1> buf_w_{};
  std::uint64_t block_start_ = 0;
  std::uint64_t block_len_ = 0;
  std::uint64_t pos_ = 0;
};

/// Two independent 1D couplings rotated by 45 degrees:
/// S = ((U+V)/2, (U-V)/2) is a 2D SRW, W = ((B_U+B_V)/2, (B_U-B_V)/2) a planar
/// BM with variance 1/2 per coordinate. W between integer times is available
/// as a Brownian bridge sampled at resolution 1/16, generated on demand from a
/// stream keyed by the interval, so it is the same whenever it is requested.
class KmtStream2D {
 public:
  static constexpr int kSubsteps = 16;

  KmtStream2D(const StreamId& stream, int log2_n);

  bool next_block();
  std::uint64_t block_start() const { return u_.block_start(); }
  std::uint64_t block_length() const { return u_.block_length(); }
  const LatticeSite* block_s() const { return s_.data(); }
  const PlanePoint* block_w() const { return w_.data(); }

  bool next();
  std::uint64_t time() const { return block_start() + pos_; }
  LatticeSite s() const { return s_[pos_]; }
  PlanePoint w() const { return w_[pos_]; }
  LatticeSite previous_s() const { return s_[pos_ - 1]; }
  PlanePoint previous_w() const { return w_[pos_ - 1]; }
  std::uint64_t length() const { return u_.length(); }

  /// W on [k-1, k] at kSubsteps + 1 equally spaced points; k must lie in
  /// (block_start(), block_start() + block_length()].
  const std::array<PlanePoint, kSubsteps + 1>& bridge(std::uint64_t k);
  const std::array<PlanePoint, kSubsteps + 1>& bridge() { return bridge(time()); }
  /// Uniforms for decisions inside [k-1, k]; same sequence for the same
  /// interval.
  double bridge_uniform(std::uint64_t k);
  double bridge_uniform() { return bridge_uniform(time()); }

 private:
  KmtStream1D u_;
  KmtStream1D v_;
  CounterKey refine_key_;
  std::array<LatticeSite, KmtStream1D::kBlock + 1> s_{};
  std::array<PlanePoint, KmtStream1D::kBlock + 1> w_{};
  std::uint64_t pos_ = 0;
  std::array<PlanePoint, kSubsteps + 1> bridge_{};
  std::uint64_t bridge_for_ = ~0ULL;
  Rng refine_rng_;
};

struct CoupledPair1D {
  std::uint64_t n = 0;
  std::vector<std::int64_t> S;  // S[0..n]
  std::vector<double> W;        // W[0..n]
  double max_discrepancy() const;
};

/// Throws std::invalid_argument unless n is a power of two with n <= 2^26.
CoupledPair1D dyadic_couple_1d(std::uint64_t n, const StreamId& stream);

struct CoupledPair2D {
  std::vector<LatticeSite> S;
  std::vector<PlanePoint> W;
  double max_discrepancy = 0.0;
};

/// Throws std::invalid_argument on a length mismatch.
CoupledPair2D lift_to_2d(const CoupledPair1D& u, const CoupledPair1D& v);

/// Assumption-1 event: max over n and t in [n, n+1] of |S_n - W_t| <= bound,
/// with W between integer times a Brownian bridge (variance 1/2 per
/// coordinate) sampled at `resolution` points per unit and a bridge-crossing
/// draw inside each sub-interval.
bool controlled_between_integers_check(const CoupledPair2D& pair, double bound,
                                       const StreamId& refinement,
                                       int resolution = 16);

/// Half-plane bridge approximation for a planar bridge with variance
/// sigma2 * dt per coordinate leaving the disk of radius b around a point,
/// from distances d0, d1 <= b at the ends.
inline double disk_exit_probability(double d0, double d1, double b,
                                    double sigma2, double dt) {
  if (d0 >= b || d1 >= b) return 1.0;
  return std::exp(-2.0 * (b - d0) * (b - d1) / (sigma2 * dt));
}

struct KmtDiscrepancyReport {
  std::vector<int> log2_n;
  std::vector<double> median;          // median of max_k |S_k - W_k|
  std::vector<std::vector<double>> maxima;  // per n, per replica
  double slope = 0.0;                  // C-hat, fit of median on ln n
  double intercept = 0.0;
  double r2 = 0.0;
  double lambda = 0.0;                 // exponential tail rate of the excess
  double tail_r2 = 0.0;
  std::vector<double> tail_x;          // excess thresholds
  std::vector<double> tail_prob;       // P[max - C-hat ln n > x], pooled
};

/// Discrepancy growth of the 1D dyadic coupling over n = 2^j, j in log2_n.
KmtDiscrepancyReport kmt_discrepancy_study(const std::vector<int>& log2_n,
                                           std::size_t replicas,
                                           const StreamId& stream);

}  // namespace condwalk
