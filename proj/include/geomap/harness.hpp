#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geomap/embedding.hpp"
#include "geomap/geometry.hpp"
#include "geomap/sensors.hpp"
#include "geomap/statistics.hpp"
#include "geomap/world.hpp"

namespace geomap::harness {

struct WorldConfig {
  world::SurfaceKind surface = world::SurfaceKind::cylinder;
  double radius = 1.0;
  Vec2 lower = Vec2(0.0, 0.0);
  Vec2 upper = Vec2(1.0, 1.0);
  Vec3 pose_degrees = Vec3(30.0, 20.0, 10.0);  // yaw, pitch, roll
  Vec3 translation = Vec3::Zero();
  bool constant_speed = false;
  double kT = 0.01;
  double mass = 1.0;
  double speed = 1.0;
  double duration = 0.5;
  double dt = 0.05;

  world::SurfacePatch patch() const;
  world::MotionSpec motion() const;
};

struct MachineConfig {
  std::string name = "machine";
  std::size_t segments = 18274;
  sensors::SuiteSpec suite;
  embedding::EmbeddingParams embedding;
  statistics::StatisticsParams statistics;
  geometry::GeometryParams geometry;
};

/// Anchors and test points in the intrinsic chart of the patch.
struct LayoutConfig {
  int grid = 7;
  double coverage = 0.8;             // fraction of the patch spanned by the test grid
  double anchor_length = 1.0 / 30.0;  // |AB| = |AC| as a fraction of the patch extent
  Vec2 extra = Vec2(0.064, 0.4);      // E - A, intrinsic units
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  WorldConfig world;
  LayoutConfig layout;
  std::vector<MachineConfig> machines;
};

/// Built-in defaults; identical to configs/default.jsonc.
ExperimentConfig default_config();
/// Seed of machine `index`'s trajectory, derived from the experiment seed.
std::uint64_t trajectory_seed(std::uint64_t seed, std::size_t index);

struct Layout {
  Vec2 a, b, c;
  std::vector<Vec2> tests;  // grid row by row, then E
};

Layout make_layout(const world::SurfacePatch& surface, const LayoutConfig& cfg);

/// Laboratory positions of the anchors (A, B, C) and the tests.
struct Probes {
  std::vector<Vec3> anchors;
  std::vector<Vec3> tests;
};

Probes probe_points(const ExperimentConfig& cfg);

/// Throws ConfigError for unknown names.
const MachineConfig& find_machine(const ExperimentConfig& cfg, const std::string& name);
std::size_t machine_index(const ExperimentConfig& cfg, const std::string& name);

struct Diagnostics {
  std::size_t input_segments = 0;
  std::size_t input_points = 0;
  TruncationReport measurement;  // not stored in model files
  TruncationReport embedding;
  std::size_t training_points = 0;
  int k = 0;  // neighbours used by the fit; widened for very small runs
  int dimension = 0;
  std::size_t velocity_samples = 0;
  std::size_t outside_grid = 0;
  std::size_t visited_cells = 0;
  std::size_t supported_cells = 0;  // visited cells that are supported, possibly by filling
  std::size_t filled_cells = 0;
  std::vector<std::size_t> support_histogram;  // cells with 0, 1-19, 20-99, 100-999, >= 1000 samples
  bool sparse = false;                         // fewer than 90% of visited cells supported

  double support_fraction() const;
};

struct MachineArtifacts {
  embedding::EmbeddingModel model;
  statistics::CovarianceField covariance;
  geometry::MetricField metric;
  Diagnostics diagnostics;
};

world::WorldTrajectory simulate(const WorldConfig& world, std::size_t segments, std::uint64_t seed);

/// Everything after measurement: embedding, velocity statistics, metric.
/// Errors come back as StageError labelled with the failing stage.
MachineArtifacts fit_machine(const MachineConfig& cfg, const MeasurementSeries& series);
MachineArtifacts run_machine(const MachineConfig& cfg, const world::SurfacePatch& surface,
                             const world::WorldTrajectory& traj);

struct MapEntry {
  long test_id = 0;
  std::optional<geometry::RelativeLocation> location;
  double residual = 0.0;
  std::string error;
};

using Map = std::vector<MapEntry>;

/// Measures, embeds and locates every test against the embedded anchors.
/// Test failures are recorded per entry; anchor failures throw StageError.
Map locate_tests(const MachineArtifacts& art, const MachineConfig& cfg, const sensors::SensorSuite& suite,
                 const std::vector<Vec3>& anchors, const std::vector<Vec3>& tests);

struct AgreementRow {
  long test_id = 0;
  std::optional<geometry::RelativeLocation> a;
  std::optional<geometry::RelativeLocation> b;
};

struct AgreementReport {
  std::vector<AgreementRow> rows;
  std::size_t compared = 0;
  std::size_t failed_a = 0;
  std::size_t failed_b = 0;
  double rms_ds1 = 0.0;
  double rms_ds2 = 0.0;
  double rms_point = 0.0;  // RMS of per-point Euclidean deviation
  double max_ds1 = 0.0;
  double max_ds2 = 0.0;
  double span1 = 0.0;  // coordinate span over both maps' compared points
  double span2 = 0.0;

  /// Largest per-component RMS relative to that component's span.
  double relative_rms() const;
};

/// Throws PreconditionError when the maps list different tests.
AgreementReport compare_maps(const Map& a, const Map& b);

struct MachineRun {
  std::string name;
  world::WorldTrajectory trajectory;
  MeasurementSeries series;
  MachineArtifacts artifacts;
  Map map;
};

struct ExperimentResult {
  std::vector<MachineRun> machines;
  AgreementReport report;
};

/// Two machines on independent trajectories of one world, run concurrently.
/// With an output directory every artifact is written there.
ExperimentResult experiment(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out = std::nullopt);

}  // namespace geomap::harness
