#include "geomap/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "geomap/errors.hpp"

namespace geomap::sensors {

PinholeCamera PinholeCamera::look_at(const Vec3& position, const Vec3& target, double roll, double focal) {
  if (!(focal > 0.0)) throw PreconditionError("camera: focal length must be positive");
  const Vec3 z = (target - position).normalized();
  if (!z.allFinite()) throw PreconditionError("camera: target coincides with position");
  Vec3 helper = std::abs(z[2]) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  Vec3 x = helper.cross(z).normalized();
  Vec3 y = z.cross(x);
  const double c = std::cos(roll), s = std::sin(roll);
  const Vec3 xr = c * x + s * y;
  const Vec3 yr = -s * x + c * y;
  PinholeCamera cam;
  cam.position = position;
  cam.orientation.row(0) = xr.transpose();
  cam.orientation.row(1) = yr.transpose();
  cam.orientation.row(2) = z.transpose();
  cam.focal = focal;
  return cam;
}

Vec2 project(const PinholeCamera& cam, const Vec3& world) {
  const Vec3 q = cam.orientation * (world - cam.position);
  if (!(q[2] > 0.0)) throw BehindCameraError("project: point is not in front of the camera");
  return cam.focal * Vec2(q[0] / q[2], q[1] / q[2]);
}

QuadraticDistortion QuadraticDistortion::identity() {
  QuadraticDistortion d;
  d.coeffs[1] = 1.0;
  d.coeffs[8] = 1.0;
  return d;
}

QuadraticDistortion QuadraticDistortion::from_parts(const Vec2& translation, const Mat2& linear,
                                                    const std::array<double, 6>& quad) {
  QuadraticDistortion d;
  for (int o = 0; o < 2; ++o) {
    d.coeffs[6 * o + 0] = translation[o];
    d.coeffs[6 * o + 1] = linear(o, 0);
    d.coeffs[6 * o + 2] = linear(o, 1);
    for (int q = 0; q < 3; ++q) d.coeffs[6 * o + 3 + q] = quad[3 * o + q];
  }
  return d;
}

Mat2 QuadraticDistortion::linear() const {
  Mat2 l;
  l << coeffs[1], coeffs[2], coeffs[7], coeffs[8];
  return l;
}

Mat2 QuadraticDistortion::jacobian(const Vec2& y) const {
  Mat2 j;
  for (int o = 0; o < 2; ++o) {
    const double* c = coeffs.data() + 6 * o;
    j(o, 0) = c[1] + 2.0 * c[3] * y[0] + c[4] * y[1];
    j(o, 1) = c[2] + c[4] * y[0] + 2.0 * c[5] * y[1];
  }
  return j;
}

Vec2 distort(const QuadraticDistortion& dist, const Vec2& y) {
  Vec2 out;
  for (int o = 0; o < 2; ++o) {
    const double* c = dist.coeffs.data() + 6 * o;
    out[o] = c[0] + c[1] * y[0] + c[2] * y[1] + c[3] * y[0] * y[0] + c[4] * y[0] * y[1] + c[5] * y[1] * y[1];
  }
  return out;
}

Vec2 fourier_measure(const FourierProbe& probe, const Vec2& y) {
  return Vec2(std::cos(probe.k1.dot(y)), std::sin(probe.k2.dot(y)));
}

Vec2 measure_channel(const Channel& channel, const Vec3& world) {
  const Vec2 y = (project(channel.camera, world) - channel.image_center) / channel.image_scale;
  if (const auto* d = std::get_if<QuadraticDistortion>(&channel.readout)) return distort(*d, y);
  return fourier_measure(std::get<FourierProbe>(channel.readout), y);
}

MeasurementVector measure(const SensorSuite& suite, const Vec3& world) {
  MeasurementVector out(suite.width());
  for (std::size_t c = 0; c < suite.channels.size(); ++c) {
    Vec2 v;
    try {
      v = measure_channel(suite.channels[c], world);
    } catch (const Error& e) {
      throw MeasurementError("channel " + std::to_string(c) + ": " + e.what(), c);
    }
    if (!v.allFinite()) throw MeasurementError("channel " + std::to_string(c) + ": non-finite output", c);
    out.segment(2 * static_cast<Eigen::Index>(c), 2) = v;
  }
  return out;
}

MeasurementSeries measure_trajectory(const SensorSuite& suite, const world::WorldTrajectory& traj,
                                     TruncationReport* report) {
  MeasurementSeries series;
  TruncationReport local;
  for (const auto& seg : traj.segments) {
    if (series.dt == 0.0) series.dt = seg.dt;
    if (seg.lab.size() != seg.intrinsic.size())
      throw PreconditionError("measure_trajectory: laboratory positions missing");
    std::vector<MeasurementVector> values(seg.lab.size());
    std::vector<bool> ok(seg.lab.size(), true);
    for (std::size_t i = 0; i < seg.lab.size(); ++i) {
      try {
        values[i] = measure(suite, seg.lab[i]);
      } catch (const MeasurementError&) {
        ok[i] = false;
      }
    }
    split_runs(ok, local, [&](std::size_t a, std::size_t b) {
      MeasurementSegment out;
      out.id = seg.id;
      out.t0 = seg.t0 + static_cast<double>(a) * seg.dt;
      out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(a),
                        values.begin() + static_cast<std::ptrdiff_t>(b) + 1);
      series.segments.push_back(std::move(out));
    });
  }
  if (report) *report = local;
  return series;
}

SuiteSpec SuiteSpec::near_identity(int cameras, std::uint64_t seed) {
  SuiteSpec s;
  s.kind = ReadoutKind::distorted;
  s.cameras = cameras;
  s.seed = seed;
  s.view_cone = 10.0;
  s.aim_jitter = 2.0;
  s.rotation = 5.0;
  s.scale_min = 0.95;
  s.scale_max = 1.05;
  s.skew = 0.02;
  s.translation = 0.05;
  s.quadratic = 0.01;
  return s;
}

SuiteSpec SuiteSpec::warped(int cameras, std::uint64_t seed) {
  SuiteSpec s;
  s.kind = ReadoutKind::distorted;
  s.cameras = cameras;
  s.seed = seed;
  s.quadratic = 0.6;
  return s;
}

SuiteSpec SuiteSpec::fourier(int cameras, std::uint64_t seed) {
  SuiteSpec s;
  s.kind = ReadoutKind::fourier;
  s.cameras = cameras;
  s.seed = seed;
  return s;
}

std::string to_string(ReadoutKind kind) { return kind == ReadoutKind::distorted ? "distorted" : "fourier"; }

ReadoutKind readout_kind_from_string(const std::string& s) {
  if (s == "distorted") return ReadoutKind::distorted;
  if (s == "fourier") return ReadoutKind::fourier;
  throw ConfigError("unknown readout kind '" + s + "'");
}

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Vec3 surface_normal(const world::SurfacePatch& surface) {
  const Vec2 c = surface.center();
  Vec3 local = surface.kind == world::SurfaceKind::cylinder
                   ? Vec3(std::cos(c[1] / surface.radius), std::sin(c[1] / surface.radius), 0.0)
                   : Vec3::UnitZ();
  return surface.pose.rotation * local;
}

Vec3 any_perpendicular(const Vec3& n) {
  const Vec3 helper = std::abs(n[0]) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return n.cross(helper).normalized();
}

// Uniform direction within `half_angle` radians of axis.
Vec3 cone_direction(const Vec3& axis, double half_angle, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> cz(std::cos(half_angle), 1.0), phi(0.0, 2.0 * std::numbers::pi);
  const double z = cz(rng);
  const double p = phi(rng);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const Vec3 e1 = any_perpendicular(axis);
  const Vec3 e2 = axis.cross(e1);
  return (z * axis + r * std::cos(p) * e1 + r * std::sin(p) * e2).normalized();
}

std::vector<Vec3> patch_samples(const world::SurfacePatch& surface, int n) {
  std::vector<Vec3> out;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const Vec2 p = surface.lower + Vec2(surface.extent()[0] * i / n, surface.extent()[1] * j / n);
      out.push_back(world::lab_position(surface, p));
    }
  return out;
}

bool folds_disc(const QuadraticDistortion& d) {
  const double base = d.linear().determinant();
  for (int i = -10; i <= 10; ++i)
    for (int j = -10; j <= 10; ++j) {
      const Vec2 y(i * 0.105, j * 0.105);
      if (y.norm() > 1.05) continue;
      if (d.jacobian(y).determinant() / base < 0.2) return true;
    }
  return false;
}

QuadraticDistortion draw_distortion(const SuiteSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> rot(-spec.rotation * kDeg, spec.rotation * kDeg);
  std::uniform_real_distribution<double> scale(spec.scale_min, spec.scale_max);
  std::uniform_real_distribution<double> skew(-spec.skew, spec.skew);
  std::uniform_real_distribution<double> shift(-spec.translation, spec.translation);
  std::uniform_real_distribution<double> quad(-spec.quadratic, spec.quadratic);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double a = rot(rng);
    Mat2 r;
    r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    const double sx = scale(rng), sy = scale(rng);
    Mat2 k = Mat2::Identity();
    k(0, 1) = skew(rng);
    const Mat2 linear = r * Vec2(sx, sy).asDiagonal() * k;
    const double tx = shift(rng), ty = shift(rng);
    std::array<double, 6> q{};
    for (auto& c : q) c = quad(rng);
    auto d = QuadraticDistortion::from_parts(Vec2(tx, ty), linear, q);
    if (!folds_disc(d)) return d;
  }
  throw PreconditionError("make_suite: could not draw a non-folding distortion");
}

FourierProbe draw_probe(const SuiteSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(spec.wave_min, spec.wave_max), ang(0.0, 2.0 * std::numbers::pi);
  while (true) {
    const double m1 = mag(rng), a1 = ang(rng), m2 = mag(rng), a2 = ang(rng);
    if (std::abs(std::sin(a1 - a2)) < 0.3) continue;
    return FourierProbe{Vec2(m1 * std::cos(a1), m1 * std::sin(a1)), Vec2(m2 * std::cos(a2), m2 * std::sin(a2))};
  }
}

}  // namespace

double stretch_ratio(const SensorSuite& suite, const world::SurfacePatch& surface, int grid) {
  const double h = 1e-5 * std::max(surface.extent()[0], surface.extent()[1]);
  std::vector<double> smallest, typical;
  for (int i = 0; i <= grid; ++i)
    for (int j = 0; j <= grid; ++j) {
      const Vec2 p = surface.lower + Vec2(surface.extent()[0] * i / grid, surface.extent()[1] * j / grid);
      Mat jac(suite.width(), 2);
      for (int a = 0; a < 2; ++a) {
        Vec2 e = Vec2::Zero();
        e[a] = h;
        jac.col(a) = (measure(suite, world::lab_position(surface, Vec2(p + e))) -
                      measure(suite, world::lab_position(surface, Vec2(p - e)))) /
                     (2.0 * h);
      }
      const Vec s = Eigen::JacobiSVD<Mat>(jac).singularValues();
      smallest.push_back(s[1]);
      typical.push_back(std::sqrt(s[0] * s[1]));
    }
  auto mid = typical.begin() + static_cast<std::ptrdiff_t>(typical.size() / 2);
  std::nth_element(typical.begin(), mid, typical.end());
  return *std::min_element(smallest.begin(), smallest.end()) / *mid;
}

namespace {

SensorSuite draw_suite(const SuiteSpec& spec, const world::SurfacePatch& surface, std::mt19937_64& rng) {
  const Vec3 centroid = world::lab_position(surface, surface.center());
  const Vec3 normal = surface_normal(surface);
  const auto samples = patch_samples(surface, 8);
  std::uniform_real_distribution<double> dist(spec.distance_min, spec.distance_max);
  std::uniform_real_distribution<double> jitter(0.0, spec.aim_jitter * kDeg), turn(0.0, 2.0 * std::numbers::pi);

  SensorSuite suite;
  while (static_cast<int>(suite.channels.size()) < spec.cameras) {
    const Vec3 dir = cone_direction(normal, spec.view_cone * kDeg, rng);
    const Vec3 position = centroid + dist(rng) * dir;
    // Aim at the centroid, then tilt the viewing axis by the jitter angle.
    const Vec3 toward = (centroid - position).normalized();
    const Vec3 axis = Eigen::AngleAxisd(turn(rng), toward) * any_perpendicular(toward);
    const Vec3 view = Eigen::AngleAxisd(jitter(rng), axis) * toward;
    Channel ch;
    ch.camera = PinholeCamera::look_at(position, position + view, turn(rng));
    try {
      ch.image_center = project(ch.camera, centroid);
      double radius = 0.0;
      for (const auto& p : samples) radius = std::max(radius, (project(ch.camera, p) - ch.image_center).norm());
      ch.image_scale = radius;
    } catch (const BehindCameraError&) {
      continue;
    }
    if (spec.kind == ReadoutKind::distorted)
      ch.readout = draw_distortion(spec, rng);
    else
      ch.readout = draw_probe(spec, rng);
    suite.channels.push_back(std::move(ch));
  }
  return suite;
}

}  // namespace

SensorSuite make_suite(const SuiteSpec& spec, const world::SurfacePatch& surface) {
  if (spec.cameras < 1) throw PreconditionError("make_suite: need at least one camera");
  if (!(spec.distance_min > 0.0) || spec.distance_max < spec.distance_min)
    throw PreconditionError("make_suite: bad distance range");
  std::mt19937_64 rng(spec.seed);
  for (int attempt = 0; attempt < 200; ++attempt) {
    auto suite = draw_suite(spec, surface, rng);
    if (spec.min_stretch <= 0.0 || stretch_ratio(suite, surface) >= spec.min_stretch) return suite;
  }
  throw PreconditionError("make_suite: no well-conditioned suite found");
}

}  // namespace geomap::sensors
