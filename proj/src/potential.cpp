#include "condwalk/potential.hpp"

#include <Eigen/CholmodSupport>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace condwalk {

double potential_log_part(double r) {
  return (2.0 / std::numbers::pi) * (std::log(r) + kPotentialConstant);
}

double potential_asymptotic(const LatticeSite& x) {
  const double n2 = static_cast<double>(x.norm2());
  if (n2 == 0.0) return 0.0;
  const double xx = static_cast<double>(x.x) * static_cast<double>(x.x);
  const double yy = static_cast<double>(x.y) * static_cast<double>(x.y);
  // cos(4 phi) = (x^4 - 6 x^2 y^2 + y^4) / |x|^4
  const double cos4 = (xx * xx - 6.0 * xx * yy + yy * yy) / (n2 * n2);
  return (1.0 / std::numbers::pi) * (std::log(n2) + 2.0 * kPotentialConstant) -
         cos4 / (6.0 * std::numbers::pi * n2);
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;

// Discrete Dirichlet problem for "value = mean of the four neighbours" on the
// sites selected by `unknown` inside the square [-bound, bound]^2.
class GridDirichlet {
 public:
  GridDirichlet(int bound, const std::function<bool(const LatticeSite&)>& unknown)
      : bound_(bound), side_(2 * static_cast<std::int64_t>(bound) + 3) {
    index_.assign(static_cast<std::size_t>(side_ * side_), -1);
    for (std::int64_t y = -bound; y <= bound; ++y) {
      for (std::int64_t x = -bound; x <= bound; ++x) {
        const LatticeSite s{x, y};
        if (!unknown(s)) continue;
        index_[slot(s)] = static_cast<std::int64_t>(sites_.size());
        sites_.push_back(s);
      }
    }
    const auto n = static_cast<Eigen::Index>(sites_.size());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(sites_.size() * 5);
    for (Eigen::Index i = 0; i < n; ++i) {
      trips.emplace_back(i, i, 4.0);
      for (const auto& e : kUnitSteps) {
        const auto j = index_of(sites_[static_cast<std::size_t>(i)] + e);
        if (j >= 0 && j < i) {
          trips.emplace_back(i, j, -1.0);
          trips.emplace_back(j, i, -1.0);
        }
      }
    }
    SpMat m(n, n);
    m.setFromTriplets(trips.begin(), trips.end());
    solver_.compute(m);
    if (solver_.info() != Eigen::Success) {
      throw std::runtime_error("sparse Cholesky factorization failed");
    }
  }

  std::int64_t index_of(const LatticeSite& s) const {
    if (std::llabs(s.x) > bound_ + 1 || std::llabs(s.y) > bound_ + 1) return -1;
    return index_[slot(s)];
  }
  const std::vector<LatticeSite>& sites() const { return sites_; }

  /// Solution with value boundary(z) at every non-unknown neighbour z.
  Eigen::VectorXd solve(
      const std::function<double(const LatticeSite&)>& boundary) const {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(
        static_cast<Eigen::Index>(sites_.size()));
    for (std::size_t i = 0; i < sites_.size(); ++i) {
      for (const auto& e : kUnitSteps) {
        const LatticeSite z = sites_[i] + e;
        if (index_of(z) < 0) rhs[static_cast<Eigen::Index>(i)] += boundary(z);
      }
    }
    Eigen::VectorXd sol = solver_.solve(rhs);
    if (solver_.info() != Eigen::Success) {
      throw std::runtime_error("sparse Cholesky solve failed");
    }
    return sol;
  }

 private:
  std::size_t slot(const LatticeSite& s) const {
    return static_cast<std::size_t>((s.y + bound_ + 1) * side_ +
                                    (s.x + bound_ + 1));
  }

  std::int64_t bound_;
  std::int64_t side_;
  std::vector<std::int64_t> index_;
  std::vector<LatticeSite> sites_;
  Eigen::CholmodSupernodalLLT<SpMat, Eigen::Lower> solver_;
};

std::int64_t r2(int radius) {
  return static_cast<std::int64_t>(radius) * radius;
}

}  // namespace

PotentialTable PotentialTable::solve(int radius) {
  if (radius < 8) throw std::invalid_argument("potential radius must be >= 8");
  const std::int64_t rr = r2(radius);
  GridDirichlet dirichlet(radius, [rr](const LatticeSite& s) {
    return s.norm2() <= rr && s.norm2() != 0;
  });
  const Eigen::VectorXd sol = dirichlet.solve(
      [](const LatticeSite& z) { return potential_asymptotic(z); });
  PotentialTable table;
  table.grid_ = DiskGrid(radius);
  table.grid_.at({0, 0}) = 0.0;
  const auto& sites = dirichlet.sites();
  for (std::size_t i = 0; i < sites.size(); ++i) {
    table.grid_.at(sites[i]) = sol[static_cast<Eigen::Index>(i)];
  }
  return table;
}

std::shared_ptr<const PotentialTable> PotentialTable::shared(int radius) {
  static std::mutex mu;
  static std::unordered_map<int, std::shared_ptr<const PotentialTable>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[radius];
  if (!slot) slot = std::make_shared<const PotentialTable>(solve(radius));
  return slot;
}

double PotentialTable::harmonicity_residual() const {
  const int r = grid_.radius() - 1;
  double worst = 0.0;
  for (std::int64_t y = -r; y <= r; ++y) {
    for (std::int64_t x = -r; x <= r; ++x) {
      const LatticeSite s{x, y};
      if (s.norm2() > r2(r) || s.norm2() == 0) continue;
      double mean = 0.0;
      for (const auto& e : kUnitSteps) mean += grid_.at(s + e);
      worst = std::max(worst, std::abs(0.25 * mean - grid_.at(s)));
    }
  }
  return worst;
}

AvoidSet AvoidSet::build(std::vector<LatticeSite> sites, int radius,
                         std::shared_ptr<const PotentialTable> potential) {
  std::sort(sites.begin(), sites.end());
  sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
  if (!std::binary_search(sites.begin(), sites.end(), LatticeSite{0, 0})) {
    throw std::invalid_argument("avoid set must contain the origin");
  }
  if (radius < 8) throw std::invalid_argument("avoid-set radius must be >= 8");
  for (const auto& s : sites) {
    if (4 * s.norm2() > r2(radius)) {
      throw std::invalid_argument(
          "avoid-set radius too small: sites must lie within radius/2");
    }
  }
  const std::int64_t rr = r2(radius);
  std::set<LatticeSite> in_a(sites.begin(), sites.end());
  GridDirichlet dirichlet(radius, [&](const LatticeSite& s) {
    return s.norm2() <= rr && !in_a.count(s);
  });
  // u: boundary a, zero on A.  w: boundary 1, zero on A.
  const Eigen::VectorXd u = dirichlet.solve([&](const LatticeSite& z) {
    return in_a.count(z) ? 0.0 : potential_asymptotic(z);
  });
  const Eigen::VectorXd w = dirichlet.solve(
      [&](const LatticeSite& z) { return in_a.count(z) ? 0.0 : 1.0; });
  auto value = [&](const Eigen::VectorXd& v, const LatticeSite& z) {
    const auto i = dirichlet.index_of(z);
    return i < 0 ? 0.0 : v[static_cast<Eigen::Index>(i)];
  };
  auto flux = [&](const Eigen::VectorXd& v, const LatticeSite& y) {
    double f = 0.0;
    for (const auto& e : kUnitSteps) f += value(v, y + e);
    return 0.25 * f;
  };
  double fu = 0.0;
  double fw = 0.0;
  for (const auto& y : sites) {
    fu += flux(u, y);
    fw += flux(w, y);
  }
  // q = u - cap w has total flux 1 into A, as a does into {0}.
  double cap = (fu - 1.0) / fw;
  std::vector<double> hm;
  for (const auto& y : sites) hm.push_back(flux(u, y) - cap * flux(w, y));
  Eigen::VectorXd q = u - cap * w;
  // Boundary data a is only right up to O(1/R); replace it by
  // sum_y hm(y) a(z - y) - cap and re-solve until the flux settles.
  for (int pass = 0; pass < 3; ++pass) {
    const Eigen::VectorXd v = dirichlet.solve([&](const LatticeSite& z) {
      if (in_a.count(z)) return 0.0;
      double g = -cap;
      for (std::size_t j = 0; j < sites.size(); ++j) {
        g += hm[j] * (*potential)(z - sites[j]);
      }
      return g;
    });
    double fv = 0.0;
    for (const auto& y : sites) fv += flux(v, y);
    const double c = (1.0 - fv) / fw;
    q = v + c * w;
    cap -= c;
    for (std::size_t j = 0; j < sites.size(); ++j) hm[j] = flux(q, sites[j]);
  }

  AvoidSet out;
  out.sites_ = sites;
  out.capacity_ = cap;
  out.potential_ = std::move(potential);
  out.grid_ = DiskGrid(radius);
  const auto& free_sites = dirichlet.sites();
  for (std::size_t i = 0; i < free_sites.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out.grid_.at(free_sites[i]) = std::max(0.0, q[k]);
  }
  out.hm_ = std::move(hm);

  const double ring = 0.5 * radius;
  double sum = 0.0;
  std::size_t count = 0;
  const auto lim = static_cast<std::int64_t>(std::ceil(ring + 1));
  for (std::int64_t y = -lim; y <= lim; ++y) {
    for (std::int64_t x = -lim; x <= lim; ++x) {
      const LatticeSite s{x, y};
      if (std::abs(s.norm() - ring) >= 0.5) continue;
      sum += potential_asymptotic(s) - out.grid_.at(s);
      ++count;
    }
  }
  out.ring_capacity_ = sum / static_cast<double>(count);
  return out;
}

std::shared_ptr<const AvoidSet> AvoidSet::origin_only(
    std::shared_ptr<const PotentialTable> potential) {
  static std::mutex mu;
  static std::map<const PotentialTable*, std::shared_ptr<const AvoidSet>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[potential.get()];
  if (!slot) {
    const int radius = potential->exact_radius();
    slot = std::make_shared<const AvoidSet>(
        build({{0, 0}}, radius, std::move(potential)));
  }
  return slot;
}

bool AvoidSet::contains(const LatticeSite& x) const {
  return std::binary_search(sites_.begin(), sites_.end(), x);
}

double AvoidSet::q(const LatticeSite& x) const {
  if (grid_.contains(x)) return contains(x) ? 0.0 : grid_.at(x);
  double v = -capacity_;
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    v += hm_[i] * (*potential_)(x - sites_[i]);
  }
  return v;
}

ChainSpec ChainSpec::srw() { return {ChainVariant::kSrw, nullptr, nullptr}; }

ChainSpec ChainSpec::hat_s(std::shared_ptr<const PotentialTable> p) {
  return {ChainVariant::kHatS, std::move(p), nullptr};
}

ChainSpec ChainSpec::hat_s_a(std::shared_ptr<const AvoidSet> a) {
  if (!a) throw std::invalid_argument("conditioned-off-A chain needs a set");
  auto p = a->potential_ptr();
  return {ChainVariant::kHatSA, std::move(p), std::move(a)};
}

double ChainSpec::h(const LatticeSite& x) const {
  switch (variant) {
    case ChainVariant::kSrw:
      return 1.0;
    case ChainVariant::kHatS:
      return (*potential)(x);
    case ChainVariant::kHatSA:
      return avoid->q(x);
  }
  return 0.0;
}

bool ChainSpec::forbidden(const LatticeSite& x) const {
  switch (variant) {
    case ChainVariant::kSrw:
      return false;
    case ChainVariant::kHatS:
      return x.norm2() == 0;
    case ChainVariant::kHatSA:
      return avoid->contains(x);
  }
  return false;
}

std::map<LatticeSite, double> exact_hitting_distribution(
    const LatticeSite& start, const std::vector<LatticeSite>& targets,
    int domain_radius, const ChainSpec& spec) {
  const std::int64_t rr = r2(domain_radius);
  const std::set<LatticeSite> target_set(targets.begin(), targets.end());
  for (const auto& t : target_set) {
    if (t.norm2() > rr) throw std::invalid_argument("target outside domain");
  }
  if (start.norm2() > rr) throw std::invalid_argument("start outside domain");
  if (spec.forbidden(start)) throw std::invalid_argument("start is forbidden");
  std::map<LatticeSite, double> out;
  if (target_set.count(start)) {
    out[start] = 1.0;
    return out;
  }

  std::vector<LatticeSite> states;
  std::map<LatticeSite, Eigen::Index> index;
  for (std::int64_t y = -domain_radius; y <= domain_radius; ++y) {
    for (std::int64_t x = -domain_radius; x <= domain_radius; ++x) {
      const LatticeSite s{x, y};
      if (s.norm2() > rr || target_set.count(s) || spec.forbidden(s)) continue;
      index[s] = static_cast<Eigen::Index>(states.size());
      states.push_back(s);
    }
  }
  auto prob = [&](const LatticeSite& from, const LatticeSite& to) {
    if (spec.forbidden(to)) return 0.0;
    return 0.25 * spec.h(to) / spec.h(from);
  };
  // Green row g of the killed chain from `start`: (I - Q)^T g = e_start.
  const auto n = static_cast<Eigen::Index>(states.size());
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index i = 0; i < n; ++i) {
    trips.emplace_back(i, i, 1.0);
    const auto& s = states[static_cast<std::size_t>(i)];
    for (const auto& e : kUnitSteps) {
      const auto it = index.find(s + e);
      if (it != index.end()) trips.emplace_back(it->second, i, -prob(s, s + e));
    }
  }
  SpMat m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<SpMat> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) {
    throw std::runtime_error("hitting-distribution factorization failed");
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs[index.at(start)] = 1.0;
  const Eigen::VectorXd g = lu.solve(rhs);

  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = states[static_cast<std::size_t>(i)];
    for (const auto& e : kUnitSteps) {
      const LatticeSite y = s + e;
      if (!target_set.count(y)) continue;
      const double p = g[i] * prob(s, y);
      if (p == 0.0) continue;
      out[y] += p;
      total += p;
    }
  }
  if (!(total > 0.0)) {
    throw std::runtime_error("targets unreachable from start");
  }
  return out;
}

double srw_escape_before_exit(const LatticeSite& x,
                              const std::vector<LatticeSite>& set, int radius) {
  const std::int64_t rr = r2(radius);
  const std::set<LatticeSite> blocked(set.begin(), set.end());
  if (blocked.count(x)) return 0.0;
  if (x.norm2() >= rr) return 1.0;
  GridDirichlet dirichlet(radius, [&](const LatticeSite& s) {
    return s.norm2() < rr && !blocked.count(s);
  });
  const Eigen::VectorXd h = dirichlet.solve([&](const LatticeSite& z) {
    return z.norm2() >= rr ? 1.0 : 0.0;
  });
  return h[static_cast<Eigen::Index>(dirichlet.index_of(x))];
}

}  // namespace condwalk
