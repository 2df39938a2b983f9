#include "condwalk/chain.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace condwalk {

std::array<double, 4> step_distribution(const LatticeSite& x,
                                        const ChainSpec& spec) {
  if (spec.forbidden(x)) {
    throw std::invalid_argument("step_distribution: site is forbidden");
  }
  std::array<double, 4> w{};
  if (spec.variant == ChainVariant::kSrw) {
    w.fill(0.25);
    return w;
  }
  const double hx = spec.h(x);
  for (int i = 0; i < 4; ++i) {
    const LatticeSite y = x + kUnitSteps[i];
    w[i] = spec.forbidden(y) ? 0.0 : spec.h(y) / (4.0 * hx);
  }
  return w;
}

LatticeWalker::LatticeWalker(const ChainSpec& spec, const LatticeSite& start)
    : variant_(spec.variant), pos_(start), n2_(start.norm2()) {
  if (spec.forbidden(start)) {
    throw std::invalid_argument("walker start is forbidden");
  }
  if (variant_ == ChainVariant::kHatS) {
    grid_ = &spec.potential->grid();
    far_shift_ = 2.0 * kPotentialConstant;
  } else if (variant_ == ChainVariant::kHatSA) {
    grid_ = &spec.avoid->grid();
    far_shift_ = 2.0 * kPotentialConstant - std::numbers::pi * spec.avoid->capacity();
  }
  if (grid_) {
    const std::int64_t r = grid_->radius() - 1;
    table_limit_ = r * r;
  }
}

void LatticeWalker::table_step(std::uint32_t bits) {
  const double w0 = grid_->at(pos_ + kUnitSteps[0]);
  const double w1 = grid_->at(pos_ + kUnitSteps[1]);
  const double w2 = grid_->at(pos_ + kUnitSteps[2]);
  const double w3 = grid_->at(pos_ + kUnitSteps[3]);
  const double u = u32_to_open_unit(bits) * (w0 + w1 + w2 + w3);
  unsigned dir;
  if (u < w0) {
    dir = 0;
  } else if (u < w0 + w1) {
    dir = 1;
  } else if (u < w0 + w1 + w2) {
    dir = 2;
  } else {
    dir = 3;
  }
  log_valid_ = false;
  move(dir);
}

namespace {
inline double log1p_series(double z) {
  return z * (1.0 - z * (0.5 - z * (1.0 / 3.0 - z * (0.25 - z * 0.2))));
}
}  // namespace

void LatticeWalker::far_step(std::uint32_t bits) {
  if (!log_valid_ || ++since_refresh_ >= 4096) {
    log_n2_ = std::log(static_cast<double>(n2_));
    log_valid_ = true;
    since_refresh_ = 0;
  }
  const double inv = 1.0 / static_cast<double>(n2_);
  const double tx = 2.0 * static_cast<double>(pos_.x);
  const double ty = 2.0 * static_cast<double>(pos_.y);
  const double l0 = log1p_series((tx + 1.0) * inv);
  const double l1 = log1p_series((1.0 - tx) * inv);
  const double l2 = log1p_series((ty + 1.0) * inv);
  const double l3 = log1p_series((1.0 - ty) * inv);
  const double base = log_n2_ + far_shift_;
  const double c0 = base + l0;
  const double c1 = c0 + base + l1;
  const double c2 = c1 + base + l2;
  const double u = u32_to_open_unit(bits) * (c2 + base + l3);
  // branch-free choice; the four directions are close to equally likely
  const unsigned dir = static_cast<unsigned>(u >= c0) +
                       static_cast<unsigned>(u >= c1) +
                       static_cast<unsigned>(u >= c2);
  const double l[4] = {l0, l1, l2, l3};
  log_n2_ += l[dir];
  move(dir);
}

namespace {

template <class OnStep>
std::uint64_t drive(const ChainSpec& spec, const LatticeSite& start,
                    const StopRule& stop, const StreamId& stream,
                    OnStep&& on_step, LatticeSite& final_site) {
  LatticeWalker walker(spec, start);
  Rng rng(stream);
  std::set<LatticeSite> targets(stop.set.begin(), stop.set.end());
  const double r2 = stop.radius * stop.radius;
  auto done = [&](std::uint64_t n) {
    switch (stop.kind) {
      case StopRule::Kind::kSteps:
        return n >= stop.steps;
      case StopRule::Kind::kExitRadius:
        return static_cast<double>(walker.norm2()) >= r2;
      case StopRule::Kind::kHitSet:
        return targets.count(walker.position()) > 0;
    }
    return true;
  };
  std::uint64_t n = 0;
  while (!done(n)) {
    if (n >= stop.hard_cap) {
      throw std::runtime_error("sample_path: hard step cap reached");
    }
    walker.step(rng.next_u32());
    ++n;
    on_step(walker.position());
  }
  final_site = walker.position();
  return n;
}

}  // namespace

LatticeTrajectory sample_path(const ChainSpec& spec, const LatticeSite& start,
                              const StopRule& stop, const StreamId& stream) {
  LatticeTrajectory traj;
  traj.stream = stream;
  traj.spec = spec;
  traj.sites.push_back(start);
  LatticeSite last;
  drive(spec, start, stop, stream,
        [&](const LatticeSite& s) { traj.sites.push_back(s); }, last);
  return traj;
}

StopResult run_until_stop(const ChainSpec& spec, const LatticeSite& start,
                          const StopRule& stop, const StreamId& stream) {
  StopResult r;
  r.steps = drive(spec, start, stop, stream, [](const LatticeSite&) {},
                  r.final_site);
  return r;
}

double escape_probability(const LatticeSite& x, const AvoidSet& a) {
  if (a.contains(x)) {
    throw std::invalid_argument("escape_probability: start lies in A");
  }
  return a.q(x) / a.potential()(x);
}

bool escape_trial(const LatticeSite& x, const AvoidSet& a, double radius,
                  const StreamId& stream,
                  const std::shared_ptr<const PotentialTable>& potential) {
  std::int64_t reach = 0;
  for (const auto& s : a.sites()) reach = std::max(reach, s.norm2());
  LatticeWalker walker(ChainSpec::hat_s(potential), x);
  Rng rng(stream);
  const double r2 = radius * radius;
  while (static_cast<double>(walker.norm2()) < r2) {
    walker.step(rng.next_u32());
    if (walker.norm2() <= reach && a.contains(walker.position())) return false;
  }
  return true;
}

PathIdentityReport conditioned_equals_hSA_check(const AvoidSet& a,
                                                const LatticeSite& x,
                                                int path_length) {
  if (a.contains(x)) throw std::invalid_argument("path start lies in A");
  const auto& pot = a.potential();
  PathIdentityReport report;
  const double escape_x = a.q(x) / pot(x);

  // Depth-first over prefixes; each node carries both path probabilities.
  struct Frame {
    LatticeSite site;
    int depth;
    double p_hat;   // product of a(y)/(4 a(x)) along the prefix
    double p_hsa;   // product of q(y)/(4 q(x)) along the prefix
    bool touched;
  };
  std::vector<Frame> stack{{x, 0, 1.0, 1.0, false}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    if (f.depth > 0) {
      double lhs = 0.0;
      if (!f.touched) {
        const double escape_y = a.q(f.site) / pot(f.site);
        lhs = f.p_hat * escape_y / escape_x;
      }
      const double rhs = f.p_hsa;
      ++report.paths;
      if (f.touched) {
        ++report.paths_touching_set;
        report.max_touching_value =
            std::max({report.max_touching_value, std::abs(lhs), std::abs(rhs)});
      }
      report.max_discrepancy = std::max(report.max_discrepancy, std::abs(lhs - rhs));
    }
    if (f.depth == path_length) continue;
    for (const auto& e : kUnitSteps) {
      const LatticeSite y = f.site + e;
      Frame g;
      g.site = y;
      g.depth = f.depth + 1;
      g.touched = f.touched || a.contains(y);
      // A path that has touched A has probability 0 on both sides; the
      // Doob-transform factor a(y)/a(x) is undefined at the origin.
      g.p_hat = f.touched || y.norm2() == 0
                    ? 0.0
                    : f.p_hat * pot(y) / (4.0 * pot(f.site));
      g.p_hsa = f.touched ? 0.0 : f.p_hsa * a.q(y) / (4.0 * a.q(f.site));
      stack.push_back(g);
    }
  }
  return report;
}

}  // namespace condwalk
