#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <variant>
#include <vector>

#include <Eigen/Geometry>

#include "geomap/statistics.hpp"
#include "geomap/types.hpp"

namespace geomap::world {

enum class SurfaceKind { cylinder, plane };

struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  /// Rotation Rz(yaw) * Ry(pitch) * Rx(roll), angles in degrees.
  static Pose from_euler_degrees(double yaw, double pitch, double roll, const Vec3& translation);
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

/// Intrinsic chart (u, w): u along the axis, w arc length around it. The
/// chart is isometric. Points within `margin` of the patch are still mapped,
/// so segment ends that step just past the boundary can be observed.
struct SurfacePatch {
  SurfaceKind kind = SurfaceKind::cylinder;
  double radius = 1.0;
  Vec2 lower = Vec2(0.0, 0.0);
  Vec2 upper = Vec2(1.0, 1.0);
  Pose pose;
  double margin = 0.25;

  static SurfacePatch cylinder(double radius = 1.0, Pose pose = {});
  static SurfacePatch plane(Pose pose = {});

  Vec2 extent() const { return upper - lower; }
  Vec2 center() const { return 0.5 * (lower + upper); }
  bool inside(const Vec2& p) const;
  bool within_margin(const Vec2& p) const;
};

/// Throws DomainError for points farther than the margin from the patch.
Vec3 lab_position(const SurfacePatch& surface, const Vec2& p);
Vec3 lab_position(const SurfacePatch& surface, const ChartPoint& p);

struct BoltzmannSpec {
  double kT = 0.01;
  double mass = 1.0;
  std::function<double(const Vec2&)> potential;  // only the zero potential is supported
};

/// Fixed speed, uniformly random direction.
struct ConstantSpeedSpec {
  double speed = 1.0;
};

using MotionSpec = std::variant<BoltzmannSpec, ConstantSpeedSpec>;

struct WorldSegment {
  long id = 0;
  double dt = 0.0;
  double t0 = 0.0;  // time of the first kept point since launch
  Vec2 velocity = Vec2::Zero();
  std::vector<Vec2> intrinsic;
  std::vector<Vec3> lab;

  long first_step() const;
};

struct WorldTrajectory {
  std::vector<WorldSegment> segments;
  std::size_t rejected_launches = 0;
  std::size_t dropped = 0;
};

struct SamplingOptions {
  int max_retries = 10000;
  bool lab = true;
};

/// Per-segment random stream derived from (seed, id).
std::mt19937_64 segment_stream(std::uint64_t seed, long id);

/// One free flight. The launch point is uniform over the patch dilated by the
/// largest plausible travel distance, so every in-patch point of the flight
/// carries the equilibrium density. The kept part is the run of in-patch
/// points plus one neighbor on each side; flights without an interior
/// in-patch point are relaunched. Returns false when retries run out.
bool sample_segment(const SurfacePatch& surface, const MotionSpec& motion, double duration, double dt,
                    std::mt19937_64& rng, WorldSegment& out, std::size_t& rejected,
                    const SamplingOptions& options = {});

WorldTrajectory sample_trajectory(const SurfacePatch& surface, const MotionSpec& motion, std::size_t n_segments,
                                  double duration, double dt, std::uint64_t seed, long first_id = 0,
                                  const SamplingOptions& options = {});

struct SamplingStats {
  std::size_t rejected_launches = 0;
  std::size_t dropped = 0;
};

/// Streaming form for runs too large to hold in memory.
SamplingStats for_each_segment(const SurfacePatch& surface, const MotionSpec& motion, std::size_t n_segments,
                             double duration, double dt, std::uint64_t seed,
                             const std::function<void(const WorldSegment&)>& sink, long first_id = 0,
                             const SamplingOptions& options = {});

/// Intrinsic-chart segments for the statistics module.
statistics::TrajectorySegment intrinsic_segment(const WorldSegment& seg);

struct CovarianceOracle {
  Mat2 c;
  Mat2 g;
};

/// Closed-form velocity second moment and metric in the chart x = J * (u, w).
CovarianceOracle analytic_covariance(const SurfacePatch& surface, const MotionSpec& motion,
                                     const Mat2& chart_jacobian = Mat2::Identity());

}  // namespace geomap::world
