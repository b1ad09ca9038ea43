#include "geomap/world.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/LU>

#include "geomap/errors.hpp"

namespace geomap::world {

Pose Pose::from_euler_degrees(double yaw, double pitch, double roll, const Vec3& translation) {
  const double k = std::numbers::pi / 180.0;
  Pose p;
  p.rotation = (Eigen::AngleAxisd(yaw * k, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch * k, Vec3::UnitY()) *
                Eigen::AngleAxisd(roll * k, Vec3::UnitX()))
                   .toRotationMatrix();
  p.translation = translation;
  return p;
}

SurfacePatch SurfacePatch::cylinder(double radius, Pose pose) {
  if (!(radius > 0.0)) throw PreconditionError("cylinder: radius must be positive");
  SurfacePatch s;
  s.kind = SurfaceKind::cylinder;
  s.radius = radius;
  s.pose = std::move(pose);
  return s;
}

SurfacePatch SurfacePatch::plane(Pose pose) {
  SurfacePatch s;
  s.kind = SurfaceKind::plane;
  s.pose = std::move(pose);
  return s;
}

bool SurfacePatch::inside(const Vec2& p) const {
  return p[0] >= lower[0] && p[0] <= upper[0] && p[1] >= lower[1] && p[1] <= upper[1];
}

bool SurfacePatch::within_margin(const Vec2& p) const {
  return p[0] >= lower[0] - margin && p[0] <= upper[0] + margin && p[1] >= lower[1] - margin &&
         p[1] <= upper[1] + margin;
}

Vec3 lab_position(const SurfacePatch& surface, const Vec2& p) {
  if (!p.allFinite() || !surface.within_margin(p)) throw DomainError("lab_position: point is off the patch");
  Vec3 local;
  if (surface.kind == SurfaceKind::cylinder) {
    const double r = surface.radius;
    local = Vec3(r * std::cos(p[1] / r), r * std::sin(p[1] / r), p[0]);
  } else {
    local = Vec3(p[0], p[1], 0.0);
  }
  return surface.pose.apply(local);
}

Vec3 lab_position(const SurfacePatch& surface, const ChartPoint& p) {
  if (p.dim() != 2) throw PreconditionError("lab_position: intrinsic points are two-dimensional");
  return lab_position(surface, Vec2(p.coords[0], p.coords[1]));
}

long WorldSegment::first_step() const { return std::lround(t0 / dt); }

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

// seed_seq costs about 12 us per stream, which dominates large runs.
std::mt19937_64 segment_stream(std::uint64_t seed, long id) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(id)));
}

namespace {

struct Flight {
  double reach = 0.0;  // largest plausible travel over the segment
  std::function<Vec2(std::mt19937_64&)> velocity;
};

Flight flight_model(const MotionSpec& motion, double duration) {
  Flight f;
  if (const auto* b = std::get_if<BoltzmannSpec>(&motion)) {
    if (!(b->kT > 0.0) || !(b->mass > 0.0)) throw PreconditionError("boltzmann: kT and mass must be positive");
    if (b->potential) throw PreconditionError("boltzmann: only the zero potential is supported");
    const double sigma = std::sqrt(b->kT / b->mass);
    f.reach = 8.0 * sigma * duration;
    f.velocity = [sigma](std::mt19937_64& rng) {
      std::normal_distribution<double> n(0.0, sigma);
      const double vx = n(rng);
      const double vy = n(rng);
      return Vec2(vx, vy);
    };
  } else {
    const double speed = std::get<ConstantSpeedSpec>(motion).speed;
    if (!(speed > 0.0)) throw PreconditionError("constant speed: speed must be positive");
    f.reach = speed * duration;
    f.velocity = [speed](std::mt19937_64& rng) {
      std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
      const double a = angle(rng);
      return Vec2(speed * std::cos(a), speed * std::sin(a));
    };
  }
  return f;
}

bool sample_with(const SurfacePatch& surface, const Flight& flight, int steps, double dt, std::mt19937_64& rng,
                 WorldSegment& out, std::size_t& rejected, const SamplingOptions& options) {
  std::uniform_real_distribution<double> ux(surface.lower[0] - flight.reach, surface.upper[0] + flight.reach);
  std::uniform_real_distribution<double> uy(surface.lower[1] - flight.reach, surface.upper[1] + flight.reach);
  for (int attempt = 0; attempt < options.max_retries; ++attempt) {
    const double x = ux(rng);
    const double y = uy(rng);
    const Vec2 start(x, y);
    const Vec2 v = flight.velocity(rng);
    int first = -1, last = -1;
    for (int j = 0; j < steps; ++j) {
      if (surface.inside(start + v * (j * dt))) {
        if (first < 0) first = j;
        last = j;
      }
    }
    if (first < 0 || std::max(first, 1) > std::min(last, steps - 2)) {
      ++rejected;
      continue;
    }
    const int a = std::max(first - 1, 0);
    const int b = std::min(last + 1, steps - 1);
    out.dt = dt;
    out.t0 = a * dt;
    out.velocity = v;
    out.intrinsic.clear();
    out.lab.clear();
    for (int j = a; j <= b; ++j) {
      out.intrinsic.push_back(start + v * (j * dt));
      if (options.lab) out.lab.push_back(lab_position(surface, out.intrinsic.back()));
    }
    return true;
  }
  return false;
}

int step_count(double duration, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw PreconditionError("sampling: dt must be positive");
  if (!(duration >= 2.0 * dt)) throw PreconditionError("sampling: duration must be at least 2 dt");
  return static_cast<int>(std::floor(duration / dt + 1e-9)) + 1;
}

}  // namespace

bool sample_segment(const SurfacePatch& surface, const MotionSpec& motion, double duration, double dt,
                    std::mt19937_64& rng, WorldSegment& out, std::size_t& rejected, const SamplingOptions& options) {
  const int steps = step_count(duration, dt);
  return sample_with(surface, flight_model(motion, duration), steps, dt, rng, out, rejected, options);
}

SamplingStats for_each_segment(const SurfacePatch& surface, const MotionSpec& motion, std::size_t n_segments,
                               double duration, double dt, std::uint64_t seed,
                               const std::function<void(const WorldSegment&)>& sink, long first_id,
                               const SamplingOptions& options) {
  const int steps = step_count(duration, dt);
  const Flight flight = flight_model(motion, duration);
  SamplingStats stats;
  WorldSegment seg;
  for (std::size_t i = 0; i < n_segments; ++i) {
    const long id = first_id + static_cast<long>(i);
    auto rng = segment_stream(seed, id);
    seg.id = id;
    if (sample_with(surface, flight, steps, dt, rng, seg, stats.rejected_launches, options))
      sink(seg);
    else
      ++stats.dropped;
  }
  return stats;
}

WorldTrajectory sample_trajectory(const SurfacePatch& surface, const MotionSpec& motion, std::size_t n_segments,
                                  double duration, double dt, std::uint64_t seed, long first_id,
                                  const SamplingOptions& options) {
  if (n_segments < 1) throw PreconditionError("sample_trajectory: need at least one segment");
  WorldTrajectory traj;
  traj.segments.reserve(n_segments);
  const auto stats = for_each_segment(
      surface, motion, n_segments, duration, dt, seed, [&](const WorldSegment& s) { traj.segments.push_back(s); },
      first_id, options);
  traj.rejected_launches = stats.rejected_launches;
  traj.dropped = stats.dropped;
  return traj;
}

statistics::TrajectorySegment intrinsic_segment(const WorldSegment& seg) {
  statistics::TrajectorySegment out;
  out.dt = seg.dt;
  out.t0 = seg.t0;
  out.segment_id = seg.id;
  out.points.reserve(seg.intrinsic.size());
  for (const auto& p : seg.intrinsic) out.points.emplace_back(Vec(p));
  return out;
}

CovarianceOracle analytic_covariance(const SurfacePatch&, const MotionSpec& motion, const Mat2& chart_jacobian) {
  Mat2 c;
  if (const auto* b = std::get_if<BoltzmannSpec>(&motion)) {
    if (!(b->kT > 0.0) || !(b->mass > 0.0)) throw PreconditionError("boltzmann: kT and mass must be positive");
    if (b->potential) throw PreconditionError("boltzmann: only the zero potential is supported");
    // Isometric chart: the mass tensor is mass * identity.
    c = (b->kT / b->mass) * Mat2::Identity();
  } else {
    const double v = std::get<ConstantSpeedSpec>(motion).speed;
    c = 0.5 * v * v * Mat2::Identity();
  }
  CovarianceOracle out;
  out.c = chart_jacobian * c * chart_jacobian.transpose();
  out.g = out.c.inverse();
  return out;
}

}  // namespace geomap::world
