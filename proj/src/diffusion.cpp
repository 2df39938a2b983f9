#include "condwalk/diffusion.hpp"

#include <limits>
#include <stdexcept>

#include "condwalk/levels.hpp"
#include "condwalk/parallel.hpp"

namespace condwalk {

void DiffusionSpec::validate() const {
  if (!(rho > 0.0)) throw std::invalid_argument("diffusion: rho must be > 0");
  if (!(dt > 0.0) || dt > 1e-3 * rho * rho * (1.0 + 1e-12)) {
    throw std::invalid_argument("diffusion: need 0 < dt <= 1e-3 rho^2");
  }
  if (!(per_coordinate_variance > 0.0)) {
    throw std::invalid_argument("diffusion: variance must be > 0");
  }
}

TimedPath sample_bm_path(const PlanePoint& start, const DiffusionSpec& spec,
                         const BmStopRule& stop, const StreamId& stream) {
  if (!(spec.dt > 0.0) || !(spec.per_coordinate_variance > 0.0)) {
    throw std::invalid_argument("sample_bm_path: invalid dt or variance");
  }
  const double s2 = spec.per_coordinate_variance;
  Rng rng(stream);
  TimedPath path;
  path.times.push_back(0.0);
  path.points.push_back(start);
  PlanePoint p = start;
  double t = 0.0;
  const bool by_time = stop.kind == BmStopRule::Kind::kTime;
  const double R = stop.value;
  if (!by_time && p.norm() >= R) return path;
  for (std::uint64_t n = 0;; ++n) {
    if (by_time && t >= stop.value) break;
    if (n >= spec.max_steps) {
      throw std::runtime_error("sample_bm_path: step cap exceeded");
    }
    const double h = by_time ? std::min(spec.dt, stop.value - t) : spec.dt;
    const double sd = std::sqrt(s2 * h);
    const double r0 = p.norm();
    PlanePoint q{p.x + sd * rng.normal(), p.y + sd * rng.normal()};
    t = by_time && h < spec.dt ? stop.value : t + h;
    if (!by_time) {
      const double r1 = q.norm();
      const bool out =
          r1 >= R || rng.uniform() < bridge_crossing_probability(R - r0, R - r1, s2, h);
      if (out) {
        q = q * (R / r1);
        path.times.push_back(t);
        path.points.push_back(q);
        break;
      }
    }
    p = q;
    path.times.push_back(t);
    path.points.push_back(p);
  }
  return path;
}

HatWProcess::HatWProcess(const DiffusionSpec& spec, const PlanePoint& start,
                         const StreamId& stream)
    : rho_(spec.rho),
      guard_(spec.rho * (1.0 + 1e-9)),
      base_dt_(spec.dt / (spec.rho * spec.rho)),
      sigma2_(spec.per_coordinate_variance),
      sigma_(std::sqrt(spec.per_coordinate_variance)),
      max_steps_(spec.max_steps),
      rng_(stream),
      pos_(start),
      r_(start.norm()) {
  spec.validate();
  if (!(r_ > spec.rho)) {
    throw std::invalid_argument("W-hat start must lie outside the disk");
  }
}

double HatWProcess::step(double t_limit) {
  if (steps_ >= max_steps_) {
    throw std::runtime_error("W-hat: step cap exceeded");
  }
  const double gap = r_ - rho_;
  double h = std::min(base_dt_ * r_ * r_, 0.01 * gap * gap);
  h = std::min(h, t_limit - t_);
  if (!(h > 0.0)) return 0.0;
  const double sd = sigma_ * std::sqrt(h);
  const double c = sigma2_ * h / (r_ * r_ * std::log(r_ / rho_));
  PlanePoint q{pos_.x * (1.0 + c) + sd * rng_.normal(),
               pos_.y * (1.0 + c) + sd * rng_.normal()};
  double r = q.norm();
  if (r < guard_) {
    ++reflections_;
    const double target = std::max(2.0 * guard_ - r, guard_);
    q = r > 0.0 ? q * (target / r) : PlanePoint{target, 0.0};
    r = target;
  }
  pos_ = q;
  r_ = r;
  t_ += h;
  ++steps_;
  return h;
}

HatWRun sample_hatW_direct(const PlanePoint& start, const DiffusionSpec& spec,
                           double horizon, const StreamId& stream) {
  HatWProcess w(spec, start, stream);
  HatWRun run;
  run.path.times.push_back(0.0);
  run.path.points.push_back(start);
  run.min_radius = w.radius();
  while (w.time() < horizon) {
    if (w.step(horizon) <= 0.0) break;
    run.path.times.push_back(w.time());
    run.path.points.push_back(w.position());
    run.min_radius = std::min(run.min_radius, w.radius());
  }
  run.steps = w.steps();
  run.reflections = w.reflections();
  return run;
}

LevelExit hatW_level_exit(HatWProcess& w, int m, double rho) {
  const double inner = level_radius(m - 1, rho);
  const double outer = level_radius(m + 1, rho);
  // summed locally: the absolute clock can be too large to resolve h
  double duration = 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  for (;;) {
    const double r0 = w.radius();
    const double h = w.step(inf);
    duration += h;
    const double r1 = w.radius();
    int to = 0;
    if (r1 >= outer) {
      to = m + 1;
    } else if (r1 <= inner) {
      to = m - 1;
    } else {
      const double po = bridge_crossing_probability(outer - r0, outer - r1,
                                                    w.sigma2(), h);
      const double pi =
          m >= 2 ? bridge_crossing_probability(r0 - inner, r1 - inner, w.sigma2(), h)
                 : 0.0;
      if (po > 1e-300 || pi > 1e-300) {
        const double u = w.uniform();
        if (u < po) {
          to = m + 1;
        } else if (u < po + pi) {
          to = m - 1;
        }
      }
    }
    if (to != 0) {
      const double target = to > m ? outer : inner;
      return {to, duration, w.position() * (target / r1)};
    }
  }
}

std::vector<LevelExit> hatW_level_exits(const DiffusionSpec& spec, int m,
                                        double start_angle,
                                        std::size_t excursions,
                                        const StreamId& stream) {
  if (m < 1) throw std::invalid_argument("level must be >= 1");
  const double r = level_radius(m, spec.rho);
  HatWProcess w(spec, {r * std::cos(start_angle), r * std::sin(start_angle)},
                stream);
  std::vector<LevelExit> out;
  out.reserve(excursions);
  int level = m;
  for (std::size_t k = 0; k < excursions; ++k) {
    out.push_back(hatW_level_exit(w, level, spec.rho));
    level = out.back().level_to;
  }
  return out;
}

std::uint64_t level_chain_visits(int h, int m, int cap, const StreamId& stream) {
  if (h < 1 || m < 1 || cap <= std::max(h, m)) {
    throw std::invalid_argument("level_chain_visits: need cap > max(h, m) >= 1");
  }
  Rng rng(stream);
  std::uint64_t visits = 0;
  int level = h;
  for (;;) {
    if (level == m) ++visits;
    if (level >= cap) {
      if (rng.uniform() < static_cast<double>(m) / cap) {
        level = m;
        continue;
      }
      return visits;
    }
    level = level_chain_step(level, rng.uniform());
  }
}

BesselReport bessel_hitting_experiment(int m, double D, double delta,
                                       std::size_t replicas,
                                       const StreamId& stream) {
  if (m < 3) throw std::invalid_argument("bessel experiment needs m >= 3");
  BesselReport rep;
  rep.m = m;
  rep.D = D;
  rep.delta = delta;
  rep.replicas = replicas;
  const double r = level_radius(m + 1);
  const double md = static_cast<double>(m);
  rep.start = r - D * md - 1.0;
  rep.inner = r - std::pow(md, 4.0 + delta);
  rep.outer = r + D * md;
  rep.inner_reachable = rep.inner > 0.0;
  rep.order_prediction = std::pow(md, -(3.0 + delta));
  rep.long_exit_order = std::exp(-std::pow(md, delta));
  if (rep.start <= 0.0) throw std::invalid_argument("bessel start must be > 0");
  rep.scale_prediction =
      rep.inner_reachable
          ? std::log(rep.outer / rep.start) / std::log(rep.outer / rep.inner)
          : 0.0;
  const double long_time = std::pow(md, 8.0 + 3.0 * delta);
  const double inner = rep.inner_reachable ? rep.inner : -1.0;
  const double outer = rep.outer;
  const double start = rep.start;

  struct Outcome {
    bool inner_hit = false;
    bool long_exit = false;
    std::uint64_t steps = 0;
  };
  const auto outcomes = parallel_map<Outcome>(replicas, [&](std::size_t i) {
    Rng rng(stream.sub(i));
    double x = start;
    double y = 0.0;
    double R = start;
    double t = 0.0;
    Outcome o;
    for (;;) {
      const double d = inner > 0.0 ? std::min(R - inner, outer - R) : outer - R;
      const double h = std::max(0.01 * d * d, 0.01);
      const double sd = std::sqrt(h);
      x += sd * rng.normal();
      y += sd * rng.normal();
      t += h;
      ++o.steps;
      const double R1 = std::hypot(x, y);
      bool hit_in = inner > 0.0 && R1 <= inner;
      bool hit_out = R1 >= outer;
      if (!hit_in && !hit_out) {
        const double po = bridge_crossing_probability(outer - R, outer - R1, 1.0, h);
        const double pi = inner > 0.0
                              ? bridge_crossing_probability(R - inner, R1 - inner, 1.0, h)
                              : 0.0;
        if (po > 1e-300 || pi > 1e-300) {
          const double u = rng.uniform();
          hit_out = u < po;
          hit_in = !hit_out && u < po + pi;
        }
      }
      R = R1;
      if (hit_in || hit_out) {
        o.inner_hit = hit_in;
        o.long_exit = t >= long_time;
        return o;
      }
    }
  });
  for (const auto& o : outcomes) {
    rep.inner_hits += o.inner_hit ? 1 : 0;
    rep.long_exits += o.long_exit ? 1 : 0;
    rep.total_steps += o.steps;
  }
  const double n = static_cast<double>(std::max<std::size_t>(replicas, 1));
  rep.inner_probability = static_cast<double>(rep.inner_hits) / n;
  rep.inner_stderr = std::sqrt(
      std::max(rep.inner_probability * (1.0 - rep.inner_probability), 1.0 / n) / n);
  rep.long_exit_probability = static_cast<double>(rep.long_exits) / n;
  return rep;
}

}  // namespace condwalk
