#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <vector>

namespace condwalk {

/// Streaming mean and variance (Welford).
class RunningStats {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  void merge(const RunningStats& o);
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const {
    return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
  }
  double stderr_mean() const {
    return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Standard error of a proportion p estimated from n trials.
inline double proportion_stderr(double p, double n) {
  return std::sqrt(std::max(p * (1.0 - p), 0.0) / n);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
/// Ordinary least squares y = intercept + slope x.
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

double median(std::vector<double> v);
double quantile(std::vector<double> v, double q);

/// One-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
struct KsResult {
  double statistic = 0.0;
  double p_value = 0.0;
};
KsResult ks_test(std::vector<double> sample,
                 const std::function<double(double)>& cdf);

/// Pearson chi-square goodness of fit; returns the p-value.
double chi_square_p_value(const std::vector<double>& observed,
                          const std::vector<double>& expected,
                          int dof_reduction = 1);

/// Total variation distance between two discrete laws (unnormalised inputs
/// are normalised first).
template <class K>
double total_variation(const std::map<K, double>& p, const std::map<K, double>& q) {
  double sp = 0.0;
  double sq = 0.0;
  for (const auto& [k, v] : p) sp += v;
  for (const auto& [k, v] : q) sq += v;
  double tv = 0.0;
  for (const auto& [k, v] : p) {
    const auto it = q.find(k);
    tv += std::abs(v / sp - (it == q.end() ? 0.0 : it->second / sq));
  }
  for (const auto& [k, v] : q) {
    if (!p.count(k)) tv += std::abs(v / sq);
  }
  return 0.5 * tv;
}

}  // namespace condwalk
