#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "geomap/measurement.hpp"
#include "geomap/types.hpp"
#include "geomap/world.hpp"

namespace geomap::sensors {

/// Rows of `orientation` are the camera x, y and viewing axes in the lab.
struct PinholeCamera {
  Vec3 position = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();
  double focal = 1.0;

  /// Camera at `position` looking at `target`, rolled by `roll` radians.
  static PinholeCamera look_at(const Vec3& position, const Vec3& target, double roll = 0.0, double focal = 1.0);
};

/// Throws BehindCameraError for non-positive depth.
Vec2 project(const PinholeCamera& cam, const Vec3& world);

/// Two second-order bivariate polynomials. Per output o the coefficients
/// 6o..6o+5 multiply [1, y1, y2, y1^2, y1 y2, y2^2].
struct QuadraticDistortion {
  std::array<double, 12> coeffs{};

  static QuadraticDistortion identity();
  static QuadraticDistortion from_parts(const Vec2& translation, const Mat2& linear, const std::array<double, 6>& quad);

  Vec2 translation() const { return Vec2(coeffs[0], coeffs[6]); }
  Mat2 linear() const;
  Mat2 jacobian(const Vec2& y) const;
};

Vec2 distort(const QuadraticDistortion& dist, const Vec2& y);

struct FourierProbe {
  Vec2 k1 = Vec2(1.0, 0.0);
  Vec2 k2 = Vec2(0.0, 1.0);
};

/// (cos k1.y, sin k2.y)
Vec2 fourier_measure(const FourierProbe& probe, const Vec2& y);

using Readout = std::variant<QuadraticDistortion, FourierProbe>;

/// Camera plus readout. The readout sees normalized image coordinates
/// (y - image_center) / image_scale.
struct Channel {
  PinholeCamera camera;
  Readout readout = QuadraticDistortion::identity();
  Vec2 image_center = Vec2::Zero();
  double image_scale = 1.0;
};

struct SensorSuite {
  std::vector<Channel> channels;

  Eigen::Index width() const { return 2 * static_cast<Eigen::Index>(channels.size()); }
};

/// Concatenated channel outputs. A failing channel raises MeasurementError
/// carrying its index.
MeasurementVector measure(const SensorSuite& suite, const Vec3& world);
Vec2 measure_channel(const Channel& channel, const Vec3& world);

/// Failed points cut their segment; pieces of two or more points are kept.
MeasurementSeries measure_trajectory(const SensorSuite& suite, const world::WorldTrajectory& traj,
                                     TruncationReport* report = nullptr);

enum class ReadoutKind { distorted, fourier };

/// Random suite generation. Angles in degrees.
struct SuiteSpec {
  ReadoutKind kind = ReadoutKind::distorted;
  int cameras = 3;
  std::uint64_t seed = 1;
  double distance_min = 3.0;
  double distance_max = 5.0;
  double view_cone = 50.0;  // camera directions around the patch normal
  double aim_jitter = 15.0;
  double rotation = 30.0;
  double scale_min = 0.8;
  double scale_max = 1.25;
  double skew = 0.2;
  double translation = 0.3;
  double quadratic = 0.3;
  double wave_min = 2.0;
  double wave_max = 6.0;
  // Whole suites are redrawn while the smallest local stretch of the patch ->
  // measurement map falls below this fraction of its median. 0 disables.
  double min_stretch = 0.35;

  static SuiteSpec near_identity(int cameras, std::uint64_t seed);
  static SuiteSpec warped(int cameras, std::uint64_t seed);
  static SuiteSpec fourier(int cameras, std::uint64_t seed);
};

std::string to_string(ReadoutKind kind);
ReadoutKind readout_kind_from_string(const std::string& s);

/// Smallest singular value of the patch -> measurement Jacobian over a grid
/// on the patch, relative to the median geometric-mean stretch.
double stretch_ratio(const SensorSuite& suite, const world::SurfacePatch& surface, int grid = 40);

/// Draws cameras viewing the patch and their readouts. Distortions that fold
/// the unit image disc are redrawn.
SensorSuite make_suite(const SuiteSpec& spec, const world::SurfacePatch& surface);

}  // namespace geomap::sensors
